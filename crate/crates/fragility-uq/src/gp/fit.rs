//! Hyperparameter estimation by seeded multi-start Nelder-Mead on the
//! (negative) marginal log-likelihood, optionally penalized by the
//! jointly robust log-prior (MAP).

use super::{Dataset, FitConfig, GpModel, NuggetModel, Standardizer};
use crate::error::{Error, Result};
use crate::kernel::{self, KernelParams, SQRT5};
use crate::linalg;
use crate::rng;
use ndarray::Array2;
use rand::Rng;
use rayon::prelude::*;

/// Outcome of the optimization, kept on the fitted model for diagnostics.
#[derive(Debug, Clone)]
pub struct FitInfo {
    /// Negative log-likelihood (or posterior) at the optimum.
    pub best_objective: f64,
    /// Objective at each restart's initial point.
    pub init_objectives: Vec<f64>,
    /// Objective at each restart's final point.
    pub final_objectives: Vec<f64>,
    pub map_prior: bool,
    pub evaluations: usize,
}

/// Negative log marginal likelihood of the data under explicit
/// hyperparameters. Assembles and factors the training covariance from
/// scratch; the responses are centered by `prior_mean`.
pub fn neg_log_marginal_likelihood(
    data: &Dataset,
    standardizer: &Standardizer,
    kernel_params: &KernelParams,
    nugget: &NuggetModel,
    prior_mean: f64,
) -> Result<f64> {
    let rows = standardizer.apply_points(data.points());
    let nugget_vars: Vec<f64> = data.points().iter().map(|p| nugget.var_at(p.im)).collect();
    let (chol, _) = kernel::factor_cov_rows(rows.view(), kernel_params, &nugget_vars)?;
    let mut alpha: Vec<f64> = data.responses().iter().map(|y| y - prior_mean).collect();
    let yc = alpha.clone();
    linalg::solve_spd(&chol, &mut alpha);
    let quad = linalg::dot(&yc, &alpha);
    let n = data.n() as f64;
    Ok(0.5 * quad
        + 0.5 * linalg::log_det_from_chol(&chol)
        + 0.5 * n * (2.0 * std::f64::consts::PI).ln())
}

/// Fit the homoskedastic surrogate.
pub fn fit_homoskedastic(data: &Dataset, config: &FitConfig) -> Result<GpModel> {
    fit(data, config, NuggetKind::Homoskedastic)
}

/// Fit the heteroskedastic surrogate: the ramp parameters are treated as
/// hyperparameters in one joint optimization with the kernel.
pub fn fit_heteroskedastic(data: &Dataset, config: &FitConfig) -> Result<GpModel> {
    fit(data, config, NuggetKind::Heteroskedastic)
}

#[derive(Clone, Copy, PartialEq)]
enum NuggetKind {
    Homoskedastic,
    Heteroskedastic,
}

/// Hot-loop state shared by all objective evaluations of one fit: packed
/// per-dimension coordinate distances, centered responses and bounds.
struct Workspace {
    n: usize,
    dim: usize,
    /// Packed |z_ik - z_jk| for the strict lower triangle, one vec per
    /// dimension, iteration order (i, j<i).
    diffs: Vec<Vec<f64>>,
    raw_ims: Vec<f64>,
    yc: Vec<f64>,
    sd_y: f64,
    im_range: f64,
    kind: NuggetKind,
    config: FitConfig,
}

/// Optimization vector layout:
///   [ln sigma, ln rho_1..rho_D, <nugget block>]
/// nugget block: homoskedastic [ln sigma_eps] (absent when pinned),
/// heteroskedastic [u0, u1, ln theta2] with theta0 = u0 sd_y and
/// theta1 = u1 sd_y / im_range.
impl Workspace {
    fn n_params(&self) -> usize {
        1 + self.dim
            + match self.kind {
                NuggetKind::Homoskedastic => {
                    if self.config.pinned_nugget_sd.is_some() {
                        0
                    } else {
                        1
                    }
                }
                NuggetKind::Heteroskedastic => 3,
            }
    }

    fn decode(&self, x: &[f64]) -> (KernelParams, NuggetModel) {
        let sigma = x[0].exp();
        let lengthscales: Vec<f64> = x[1..1 + self.dim].iter().map(|v| v.exp()).collect();
        let nugget = match self.kind {
            NuggetKind::Homoskedastic => {
                let sigma_eps = match self.config.pinned_nugget_sd {
                    Some(pin) => pin,
                    None => x[1 + self.dim].exp(),
                };
                NuggetModel::Homoskedastic { sigma_eps }
            }
            NuggetKind::Heteroskedastic => NuggetModel::Heteroskedastic {
                theta0: x[1 + self.dim] * self.sd_y,
                theta1: x[2 + self.dim] * self.sd_y / self.im_range,
                theta2: x[3 + self.dim].exp(),
            },
        };
        (
            KernelParams {
                intensity: sigma,
                lengthscales,
            },
            nugget,
        )
    }

    fn bounds(&self) -> Vec<(f64, f64)> {
        let cfg = &self.config;
        let mut b = Vec::with_capacity(self.n_params());
        let (slo, shi) = cfg.sigma_bounds_rel;
        b.push(((slo * self.sd_y).ln(), (shi * self.sd_y).ln()));
        let (llo, lhi) = cfg.lengthscale_bounds;
        for _ in 0..self.dim {
            b.push((llo.ln(), lhi.ln()));
        }
        let (nlo, nhi) = cfg.nugget_sd_bounds_rel;
        match self.kind {
            NuggetKind::Homoskedastic => {
                if cfg.pinned_nugget_sd.is_none() {
                    b.push(((nlo * self.sd_y).ln(), (nhi * self.sd_y).ln()));
                }
            }
            NuggetKind::Heteroskedastic => {
                b.push((-1.0, 1.0)); // u0
                b.push((-1.0, 1.0)); // u1
                b.push(((nlo * self.sd_y).ln(), (nhi * self.sd_y).ln()));
            }
        }
        b
    }

    /// Negative log-likelihood (plus optional log-prior and out-of-bounds
    /// penalty). Non-finite or non-factorizable parameter sets get a
    /// large finite value so the simplex can recover.
    fn objective(&self, x: &[f64]) -> f64 {
        const BIG: f64 = 1e12;
        let mut penalty = 0.0;
        for (v, (lo, hi)) in x.iter().zip(self.bounds()) {
            if *v < lo {
                penalty += 1e6 * (lo - v) * (lo - v);
            } else if *v > hi {
                penalty += 1e6 * (v - hi) * (v - hi);
            }
        }
        let (kp, nugget) = self.decode(x);
        if !kp.intensity.is_finite() || kp.lengthscales.iter().any(|l| !l.is_finite()) {
            return BIG;
        }
        let sigma2 = kp.intensity * kp.intensity;
        let inv_ls: Vec<f64> = kp.lengthscales.iter().map(|l| 1.0 / l).collect();
        let nugget_vars: Vec<f64> = self.raw_ims.iter().map(|a| nugget.var_at(*a)).collect();

        let n = self.n;
        let mut jitter = kernel::JITTER_START_REL * sigma2;
        let max_jitter = kernel::JITTER_MAX_REL * sigma2;
        let chol = loop {
            let mut k = Array2::<f64>::zeros((n, n));
            {
                let kd = k.as_slice_mut().unwrap();
                let mut idx = 0;
                for i in 0..n {
                    let row = &mut kd[i * n..(i + 1) * n];
                    for (j, slot) in row[..i].iter_mut().enumerate() {
                        let _ = j;
                        let mut poly = 1.0;
                        let mut expo = 0.0;
                        for (d, diffs) in self.diffs.iter().enumerate() {
                            let h = diffs[idx] * inv_ls[d];
                            let s = SQRT5 * h;
                            poly *= 1.0 + s + 5.0 / 3.0 * h * h;
                            expo += s;
                        }
                        *slot = sigma2 * poly * (-expo).exp();
                        idx += 1;
                    }
                    row[i] = sigma2 + nugget_vars[i] + jitter;
                }
            }
            match linalg::cholesky_in_place(&mut k) {
                Ok(()) => break Some(k),
                Err(()) => {
                    if jitter >= max_jitter {
                        break None;
                    }
                    jitter = (jitter * 10.0).min(max_jitter);
                }
            }
        };
        let Some(chol) = chol else {
            return BIG;
        };
        let mut alpha = self.yc.clone();
        linalg::solve_spd(&chol, &mut alpha);
        let quad = linalg::dot(&self.yc, &alpha);
        let mut nll = 0.5 * quad
            + 0.5 * linalg::log_det_from_chol(&chol)
            + 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
        if self.config.map_prior {
            let eta = nugget_vars.iter().sum::<f64>() / (n as f64 * sigma2);
            nll -= jr_log_prior(&kp.lengthscales, eta, n, self.dim);
        }
        if !nll.is_finite() {
            return BIG;
        }
        nll + penalty
    }
}

/// Jointly robust log-prior on inverse lengthscales and the
/// nugget-variance ratio, with the reference defaults a = 0.2,
/// b = n^{-1/p} (a + p), C_l = n^{-1/p} (unit standardized ranges).
fn jr_log_prior(lengthscales: &[f64], eta: f64, n: usize, p: usize) -> f64 {
    let a = 0.2;
    let pf = p as f64;
    let scale = (n as f64).powf(-1.0 / pf);
    let b = scale * (a + pf);
    let t = lengthscales.iter().map(|rho| scale / rho).sum::<f64>() + eta;
    if t <= 0.0 {
        return f64::NEG_INFINITY;
    }
    a * t.ln() - b * t
}

fn fit(data: &Dataset, config: &FitConfig, kind: NuggetKind) -> Result<GpModel> {
    let sd_y = data.response_sd();
    if !(sd_y > 0.0) {
        return Err(Error::DegenerateData(
            "constant responses, nothing to fit".into(),
        ));
    }
    let standardizer = Standardizer::fit(data.points());
    let rows = standardizer.apply_points(data.points());
    let n = data.n();
    let dim = data.dim();

    let raw_ims: Vec<f64> = data.points().iter().map(|p| p.im).collect();
    let im_min = raw_ims.iter().cloned().fold(f64::INFINITY, f64::min);
    let im_max = raw_ims.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let im_range = if im_max > im_min { im_max - im_min } else { 1.0 };

    let prior_mean = data.response_mean();
    let yc: Vec<f64> = data.responses().iter().map(|y| y - prior_mean).collect();

    let m = n * (n - 1) / 2;
    let rd = rows.as_slice().unwrap();
    let mut diffs: Vec<Vec<f64>> = vec![Vec::with_capacity(m); dim];
    for i in 0..n {
        for j in 0..i {
            for (k, dv) in diffs.iter_mut().enumerate() {
                dv.push((rd[i * dim + k] - rd[j * dim + k]).abs());
            }
        }
    }

    let ws = Workspace {
        n,
        dim,
        diffs,
        raw_ims,
        yc,
        sd_y,
        im_range,
        kind,
        config: config.clone(),
    };

    let n_free = ws.n_params();
    if n < n_free.max(2) {
        return Err(Error::InvalidInput(format!(
            "need at least {} observations for {} hyperparameters, got {}",
            n_free.max(2),
            n_free,
            n
        )));
    }

    let inits: Vec<Vec<f64>> = (0..config.restarts.max(1))
        .map(|r| initial_point(&ws, config.seed, r as u64))
        .collect();

    let runs: Vec<(usize, NmResult, f64)> = inits
        .par_iter()
        .enumerate()
        .map(|(r, x0)| {
            let f0 = ws.objective(x0);
            let res = nelder_mead(|x| ws.objective(x), x0, 0.4, config.max_evals);
            (r, res, f0)
        })
        .collect();

    let best = runs
        .iter()
        .filter(|(_, res, _)| res.f_best < 1e11)
        .min_by(|a, b| {
            a.1.f_best
                .partial_cmp(&b.1.f_best)
                .unwrap()
                .then(a.0.cmp(&b.0))
        });
    let Some((_, best_res, _)) = best else {
        let incumbent = runs
            .iter()
            .map(|(_, res, _)| res.f_best)
            .fold(f64::INFINITY, f64::min);
        return Err(Error::FitFailed(format!(
            "no restart reached a finite likelihood (best incumbent objective {incumbent:.3e})"
        )));
    };

    let (kernel_params, nugget) = ws.decode(&best_res.x_best);
    let info = FitInfo {
        best_objective: best_res.f_best,
        init_objectives: runs.iter().map(|(_, _, f0)| *f0).collect(),
        final_objectives: runs.iter().map(|(_, res, _)| res.f_best).collect(),
        map_prior: config.map_prior,
        evaluations: runs.iter().map(|(_, res, _)| res.evals).sum(),
    };
    let mut model = GpModel::assemble(kernel_params, nugget, standardizer, prior_mean, data.clone())?;
    model.fit_info = Some(info);
    Ok(model)
}

fn initial_point(ws: &Workspace, seed: u64, restart: u64) -> Vec<f64> {
    let mut x = Vec::with_capacity(ws.n_params());
    if restart == 0 {
        // deterministic heuristic start
        x.push(ws.sd_y.ln());
        for _ in 0..ws.dim {
            x.push(0.5f64.ln());
        }
        match ws.kind {
            NuggetKind::Homoskedastic => {
                if ws.config.pinned_nugget_sd.is_none() {
                    x.push((0.3 * ws.sd_y).ln());
                }
            }
            NuggetKind::Heteroskedastic => {
                x.push(0.05);
                x.push(0.1);
                x.push((0.15 * ws.sd_y).ln());
            }
        }
        return x;
    }
    let mut rng = rng::stream(seed, "fit", restart);
    fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
        let u: f64 = rng.random();
        lo.ln() + u * (hi.ln() - lo.ln())
    }
    x.push(log_uniform(&mut rng, 0.3 * ws.sd_y, 3.0 * ws.sd_y));
    for _ in 0..ws.dim {
        x.push(log_uniform(&mut rng, 0.1, 10.0));
    }
    match ws.kind {
        NuggetKind::Homoskedastic => {
            if ws.config.pinned_nugget_sd.is_none() {
                x.push(log_uniform(&mut rng, 0.05 * ws.sd_y, 0.8 * ws.sd_y));
            }
        }
        NuggetKind::Heteroskedastic => {
            let u0: f64 = rng.random::<f64>() * 0.6 - 0.2;
            let u1: f64 = rng.random::<f64>() * 0.6 - 0.1;
            x.push(u0);
            x.push(u1);
            x.push(log_uniform(&mut rng, 0.05 * ws.sd_y, 0.5 * ws.sd_y));
        }
    }
    x
}

struct NmResult {
    x_best: Vec<f64>,
    f_best: f64,
    evals: usize,
}

/// Standard Nelder-Mead simplex (reflection 1, expansion 2, contraction
/// 0.5, shrink 0.5) with an evaluation budget and a flatness stop.
fn nelder_mead<F: Fn(&[f64]) -> f64>(f: F, x0: &[f64], step: f64, max_evals: usize) -> NmResult {
    let dim = x0.len();
    let mut evals = 0usize;
    let eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        f(x)
    };
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(dim + 1);
    simplex.push(x0.to_vec());
    for i in 0..dim {
        let mut xi = x0.to_vec();
        xi[i] += step;
        simplex.push(xi);
    }
    let mut values: Vec<f64> = simplex.iter().map(|x| eval(x, &mut evals)).collect();

    while evals < max_evals {
        let mut order: Vec<usize> = (0..=dim).collect();
        order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
        let best = order[0];
        let worst = order[dim];
        let second_worst = order[dim - 1];
        if (values[worst] - values[best]).abs() <= 1e-9 * (values[best].abs() + 1.0) {
            break;
        }
        // centroid of all but worst
        let mut centroid = vec![0.0; dim];
        for (i, x) in simplex.iter().enumerate() {
            if i != worst {
                for k in 0..dim {
                    centroid[k] += x[k];
                }
            }
        }
        for c in centroid.iter_mut() {
            *c /= dim as f64;
        }
        let reflect: Vec<f64> = (0..dim)
            .map(|k| centroid[k] + (centroid[k] - simplex[worst][k]))
            .collect();
        let f_reflect = eval(&reflect, &mut evals);
        if f_reflect < values[best] {
            let expand: Vec<f64> = (0..dim)
                .map(|k| centroid[k] + 2.0 * (centroid[k] - simplex[worst][k]))
                .collect();
            let f_expand = eval(&expand, &mut evals);
            if f_expand < f_reflect {
                simplex[worst] = expand;
                values[worst] = f_expand;
            } else {
                simplex[worst] = reflect;
                values[worst] = f_reflect;
            }
        } else if f_reflect < values[second_worst] {
            simplex[worst] = reflect;
            values[worst] = f_reflect;
        } else {
            let contract_point: Vec<f64> = if f_reflect < values[worst] {
                (0..dim)
                    .map(|k| centroid[k] + 0.5 * (reflect[k] - centroid[k]))
                    .collect()
            } else {
                (0..dim)
                    .map(|k| centroid[k] + 0.5 * (simplex[worst][k] - centroid[k]))
                    .collect()
            };
            let f_contract = eval(&contract_point, &mut evals);
            if f_contract < values[worst].min(f_reflect) {
                simplex[worst] = contract_point;
                values[worst] = f_contract;
            } else {
                // shrink toward best
                let best_x = simplex[best].clone();
                for i in 0..=dim {
                    if i == best {
                        continue;
                    }
                    for k in 0..dim {
                        simplex[i][k] = best_x[k] + 0.5 * (simplex[i][k] - best_x[k]);
                    }
                    values[i] = eval(&simplex[i].clone(), &mut evals);
                }
            }
        }
    }
    let (ibest, fbest) = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, v)| (i, *v))
        .unwrap();
    NmResult {
        x_best: simplex[ibest].clone(),
        f_best: fbest,
        evals,
    }
}
