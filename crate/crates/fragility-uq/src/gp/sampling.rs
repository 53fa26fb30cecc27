//! Posterior sampling of the latent process.
//!
//! Two entry points:
//!
//! * [`sample_posterior`] draws jointly at an arbitrary query list; exact
//!   Cholesky below a size threshold, anchor-projected (Nyström) above it.
//! * [`GridSampler`] draws jointly over a product design (IM grid x
//!   parameter rows), the layout used by fragility ensembles and
//!   pick-freeze designs. Large designs use conditional simulation: an
//!   approximate prior draw from per-factor anchor features is corrected
//!   by kriging on simulated observations, which keeps the cost per draw
//!   at two matrix products instead of a joint factorization.

use super::GpModel;
use crate::error::{Error, Result};
use crate::kernel::{self, InputPoint};
use crate::linalg;
use crate::rng;
use ndarray::{s, Array2, ArrayView2};
use rand::Rng;

#[derive(Debug, Clone)]
pub struct SampleConfig {
    /// Joint query counts up to this size use the exact Cholesky path.
    pub exact_threshold: usize,
    /// Anchor count for the approximate path. Defaults to
    /// min(1000, queries/2) for scattered queries; for grid designs this
    /// is the parameter-factor rank on top of the training anchors.
    pub nystrom_rank: Option<usize>,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            exact_threshold: 4000,
            nystrom_rank: None,
        }
    }
}

fn chol_with_jitter(c: Array2<f64>, scale: f64) -> Result<Array2<f64>> {
    let mut jitter = kernel::JITTER_START_REL * scale;
    let max = kernel::JITTER_MAX_REL * scale;
    loop {
        let mut attempt = c.clone();
        for i in 0..attempt.nrows() {
            attempt[[i, i]] += jitter;
        }
        if linalg::cholesky_in_place(&mut attempt).is_ok() {
            return Ok(attempt);
        }
        if jitter >= max {
            return Err(Error::FactorizationFailed { jitter });
        }
        jitter = (jitter * 10.0).min(max);
    }
}

/// sigma^2-scaled cross-covariance between standardized row sets.
fn cross_cov(model: &GpModel, a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Array2<f64> {
    let inv_ls: Vec<f64> = model
        .kernel_params()
        .lengthscales
        .iter()
        .map(|l| 1.0 / l)
        .collect();
    let sigma2 = model.kernel_params().intensity * model.kernel_params().intensity;
    let mut c = kernel::cross_corr(a, b, &inv_ls);
    c.mapv_inplace(|v| v * sigma2);
    c
}

/// Posterior mean and the L^{-1}-whitened training cross block for a set
/// of standardized query rows.
fn posterior_parts(model: &GpModel, q_rows: ArrayView2<'_, f64>) -> (Vec<f64>, Array2<f64>) {
    let cross = cross_cov(model, model.train_rows().view(), q_rows); // n x Q
    let mut means = vec![model.prior_mean(); q_rows.nrows()];
    for (i, w) in model.weights().iter().enumerate() {
        let row = cross.row(i);
        let row = row.as_slice().unwrap();
        for (m, c) in means.iter_mut().zip(row) {
            *m += w * c;
        }
    }
    let mut v = cross;
    linalg::solve_lower_mat(model.chol(), &mut v); // n x Q whitened
    (means, v)
}

/// Joint posterior draws of the latent process at arbitrary queries.
/// Returns a (count x queries) matrix; draw p is deterministic given
/// (seed, p) regardless of scheduling.
pub fn sample_posterior(
    model: &GpModel,
    queries: &[InputPoint],
    count: usize,
    seed: u64,
    config: &SampleConfig,
) -> Result<Array2<f64>> {
    if count == 0 {
        return Err(Error::InvalidInput("need at least one draw".into()));
    }
    if queries.is_empty() {
        return Err(Error::EmptySample("posterior queries".into()));
    }
    let dim = model.training().dim();
    if let Some(bad) = queries.iter().position(|q| q.dim() != dim) {
        return Err(Error::DimensionMismatch {
            what: "posterior query dimension",
            expected: dim,
            got: queries[bad].dim(),
        });
    }
    let q = queries.len();
    let q_rows = model.standardizer().apply_points(queries);
    let sigma2 = model.kernel_params().intensity * model.kernel_params().intensity;
    let (means, v) = posterior_parts(model, q_rows.view());

    if q <= config.exact_threshold {
        if let Some(r) = config.nystrom_rank {
            if r > q {
                return Err(Error::InvalidInput(format!(
                    "Nystrom rank {r} exceeds query count {q}"
                )));
            }
        }
        let mut cpost = cross_cov(model, q_rows.view(), q_rows.view());
        let vt_v = v.t().dot(&v);
        cpost -= &vt_v;
        let lpost = chol_with_jitter(cpost, sigma2)?;
        let mut out = Array2::<f64>::zeros((count, q));
        for p in 0..count {
            let xi = rng::normal_vec(seed, "posterior", p as u64, q);
            let row = out.row_mut(p);
            let row = row.into_slice().unwrap();
            let ld = lpost.as_slice().unwrap();
            for i in 0..q {
                row[i] = means[i] + linalg::dot(&ld[i * q..i * q + i + 1], &xi[..i + 1]);
            }
        }
        return Ok(out);
    }

    // Anchor-projected path: exact posterior draw at r anchor queries,
    // extended to the rest by posterior-covariance regression.
    let r = config.nystrom_rank.unwrap_or_else(|| 1000.min(q / 2)).max(1);
    if r > q {
        return Err(Error::InvalidInput(format!(
            "Nystrom rank {r} exceeds query count {q}"
        )));
    }
    let anchors = sample_without_replacement(q, r, seed);
    let a_rows = select_rows(q_rows.view(), &anchors);
    let va = select_cols(v.view(), &anchors); // n x r
    let mut c_w = cross_cov(model, a_rows.view(), a_rows.view());
    c_w -= &va.t().dot(&va);
    let l_w = chol_with_jitter(c_w, sigma2)?;
    // cross posterior covariance C(q, W) = sigma^2 corr - v^T va
    let mut cross = cross_cov(model, q_rows.view(), a_rows.view()); // q x r
    cross -= &v.t().dot(&va);
    // B = C(q,W) L_W^{-T}: solve L_W B^T = C^T
    let mut bt = Array2::<f64>::zeros((r, q)); // r x q
    bt.assign(&cross.t());
    linalg::solve_lower_mat(&l_w, &mut bt);
    let mut b = Array2::<f64>::zeros((q, r)); // q x r
    b.assign(&bt.t());
    let mut out = Array2::<f64>::zeros((count, q));
    for p in 0..count {
        let xi = rng::normal_vec(seed, "posterior", p as u64, r);
        let row = out.row_mut(p);
        let row = row.into_slice().unwrap();
        let bd = b.as_slice().unwrap();
        for i in 0..q {
            row[i] = means[i] + linalg::dot(&bd[i * r..(i + 1) * r], &xi);
        }
    }
    Ok(out)
}

/// Analytic per-query marginal sd of the two paths, used to validate the
/// anchor projection against the exact posterior.
pub fn posterior_marginal_sd(
    model: &GpModel,
    queries: &[InputPoint],
    seed: u64,
    config: &SampleConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let q = queries.len();
    let q_rows = model.standardizer().apply_points(queries);
    let sigma2 = model.kernel_params().intensity * model.kernel_params().intensity;
    let (_, v) = posterior_parts(model, q_rows.view());
    let exact: Vec<f64> = (0..q)
        .map(|i| {
            let col: Vec<f64> = v.column(i).to_vec();
            (sigma2 - linalg::dot(&col, &col)).max(0.0).sqrt()
        })
        .collect();
    let r = config.nystrom_rank.unwrap_or_else(|| 1000.min(q / 2)).max(1);
    let anchors = sample_without_replacement(q, r, seed);
    let a_rows = select_rows(q_rows.view(), &anchors);
    let va = select_cols(v.view(), &anchors);
    let mut c_w = cross_cov(model, a_rows.view(), a_rows.view());
    c_w -= &va.t().dot(&va);
    let l_w = chol_with_jitter(c_w, sigma2)?;
    let mut cross = cross_cov(model, q_rows.view(), a_rows.view());
    cross -= &v.t().dot(&va);
    let mut bt = Array2::<f64>::zeros((r, queries.len()));
    bt.assign(&cross.t());
    linalg::solve_lower_mat(&l_w, &mut bt);
    let approx: Vec<f64> = (0..q)
        .map(|i| {
            let col: Vec<f64> = bt.column(i).to_vec();
            linalg::dot(&col, &col).sqrt()
        })
        .collect();
    Ok((exact, approx))
}

fn sample_without_replacement(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = rng::stream(seed, "nystrom-anchors", 0);
    for i in 0..k.min(n) {
        let j = i + (rng.random::<f64>() * (n - i) as f64) as usize;
        let j = j.min(n - 1);
        idx.swap(i, j);
    }
    let mut chosen = idx[..k].to_vec();
    chosen.sort_unstable();
    chosen
}

fn select_rows(m: ArrayView2<'_, f64>, rows: &[usize]) -> Array2<f64> {
    let mut out = Array2::<f64>::zeros((rows.len(), m.ncols()));
    for (i, &r) in rows.iter().enumerate() {
        out.row_mut(i).assign(&m.row(r));
    }
    out
}

fn select_cols(m: ArrayView2<'_, f64>, cols: &[usize]) -> Array2<f64> {
    let mut out = Array2::<f64>::zeros((m.nrows(), cols.len()));
    for (j, &c) in cols.iter().enumerate() {
        out.column_mut(j).assign(&m.column(c));
    }
    out
}

/// Joint posterior draws over a product design: IM grid values crossed
/// with parameter rows. `draw(p)` returns the latent field as a T x N
/// matrix indexed (grid value, parameter row).
pub struct GridSampler {
    t: usize,
    nq: usize,
    seed: u64,
    mode: GridMode,
}

enum GridMode {
    Exact {
        means: Vec<f64>, // flattened t * nq + u
        lpost: Array2<f64>,
    },
    Conditioned(Box<Conditioned>),
}

struct Conditioned {
    sigma: f64,
    prior_mean: f64,
    r_a: usize,
    r_x: usize,
    n: usize,
    /// inverse anchor Cholesky factors per factor
    linv_a: Array2<f64>,
    linv_x: Array2<f64>,
    /// correlations of grid / design / training against the anchors
    ca_grid: Array2<f64>,  // T x r_a
    cx_design: Array2<f64>, // N x r_x
    ca_train: Array2<f64>, // n x r_a
    cx_train: Array2<f64>, // n x r_x
    /// direct correlations against training points (for the kriging term)
    a_corr: Array2<f64>, // T x n
    x_corr: Array2<f64>, // N x n
    train_chol: Array2<f64>,
    weights: Vec<f64>,
    nugget_sds: Vec<f64>,
}

impl GridSampler {
    pub fn new(
        model: &GpModel,
        grid_ims: &[f64],
        xs: ArrayView2<'_, f64>,
        seed: u64,
        config: &SampleConfig,
    ) -> Result<Self> {
        let t = grid_ims.len();
        let nq = xs.nrows();
        if t == 0 || nq == 0 {
            return Err(Error::EmptySample("grid sampler design".into()));
        }
        if xs.ncols() + 1 != model.training().dim() {
            return Err(Error::DimensionMismatch {
                what: "grid sampler parameter block",
                expected: model.training().dim() - 1,
                got: xs.ncols(),
            });
        }
        let total = t * nq;
        if total <= config.exact_threshold {
            // exact joint draw over the flattened product design
            let (ims_std, x_rows) = model.standardizer().apply_split(grid_ims, xs);
            let dim = model.training().dim();
            let mut rows = Array2::<f64>::zeros((total, dim));
            for (ti, &a) in ims_std.iter().enumerate() {
                for u in 0..nq {
                    rows[[ti * nq + u, 0]] = a;
                    for k in 0..dim - 1 {
                        rows[[ti * nq + u, k + 1]] = x_rows[[u, k]];
                    }
                }
            }
            let sigma2 = model.kernel_params().intensity * model.kernel_params().intensity;
            let (means, v) = posterior_parts(model, rows.view());
            let mut cpost = cross_cov(model, rows.view(), rows.view());
            cpost -= &v.t().dot(&v);
            let lpost = chol_with_jitter(cpost, sigma2)?;
            return Ok(Self {
                t,
                nq,
                seed,
                mode: GridMode::Exact { means, lpost },
            });
        }

        let (ims_std, x_rows) = model.standardizer().apply_split(grid_ims, xs);
        let inv_ls: Vec<f64> = model
            .kernel_params()
            .lengthscales
            .iter()
            .map(|l| 1.0 / l)
            .collect();
        let n = model.training().n();
        let dim = model.training().dim();
        let train = model.train_rows();
        let train_ims: Vec<f64> = (0..n).map(|i| train[[i, 0]]).collect();
        let train_xs = train.slice(s![.., 1..]).to_owned();

        // IM-factor anchors: the grid itself plus spread training IMs.
        let mut a_anchors: Vec<f64> = ims_std.clone();
        for &a in &train_ims {
            if a_anchors.len() >= t + 64 {
                break;
            }
            if a_anchors.iter().all(|&b| (a - b).abs() > 1e-6) {
                a_anchors.push(a);
            }
        }
        let r_a = a_anchors.len();

        // Parameter-factor anchors: all training rows plus a seeded
        // subsample of the design rows.
        let extra = config.nystrom_rank.unwrap_or(512);
        let mut seen = std::collections::HashSet::<Vec<u64>>::new();
        let keyer = |row: &[f64]| -> Vec<u64> { row.iter().map(|v| v.to_bits()).collect() };
        let mut x_anchors: Vec<Vec<f64>> = Vec::new();
        for i in 0..n {
            let row = train_xs.row(i).to_vec();
            if seen.insert(keyer(&row)) {
                x_anchors.push(row);
            }
        }
        let order = sample_without_replacement(nq, nq.min(extra * 2), seed);
        for &u in &order {
            if x_anchors.len() >= n + extra {
                break;
            }
            let row = x_rows.row(u).to_vec();
            if seen.insert(keyer(&row)) {
                x_anchors.push(row);
            }
        }
        let r_x = x_anchors.len();
        let d = dim - 1;
        let mut xa = Array2::<f64>::zeros((r_x, d));
        for (i, row) in x_anchors.iter().enumerate() {
            xa.row_mut(i).assign(&ndarray::ArrayView1::from(&row[..]));
        }
        let aa = Array2::from_shape_vec((r_a, 1), a_anchors.clone()).unwrap();

        // anchor correlation factors and their inverse Cholesky factors
        let ca_anchor = kernel::cross_corr(aa.view(), aa.view(), &inv_ls[..1]);
        let la = chol_with_jitter(ca_anchor, 1.0)?;
        let mut linv_a = Array2::<f64>::eye(r_a);
        linalg::solve_lower_mat(&la, &mut linv_a);
        let cx_anchor = kernel::cross_corr(xa.view(), xa.view(), &inv_ls[1..]);
        let lx = chol_with_jitter(cx_anchor, 1.0)?;
        let mut linv_x = Array2::<f64>::eye(r_x);
        linalg::solve_lower_mat(&lx, &mut linv_x);

        let grid_col = Array2::from_shape_vec((t, 1), ims_std.clone()).unwrap();
        let train_im_col = Array2::from_shape_vec((n, 1), train_ims).unwrap();
        let ca_grid = kernel::cross_corr(grid_col.view(), aa.view(), &inv_ls[..1]);
        let ca_train = kernel::cross_corr(train_im_col.view(), aa.view(), &inv_ls[..1]);
        let cx_design = kernel::cross_corr(x_rows.view(), xa.view(), &inv_ls[1..]);
        let cx_train = kernel::cross_corr(train_xs.view(), xa.view(), &inv_ls[1..]);
        let a_corr = kernel::cross_corr(grid_col.view(), train_im_col.view(), &inv_ls[..1]);
        let x_corr = kernel::cross_corr(x_rows.view(), train_xs.view(), &inv_ls[1..]);

        let nugget_sds: Vec<f64> = model
            .training()
            .points()
            .iter()
            .map(|p| model.nugget().sd_at(p.im))
            .collect();

        Ok(Self {
            t,
            nq,
            seed,
            mode: GridMode::Conditioned(Box::new(Conditioned {
                sigma: model.kernel_params().intensity,
                prior_mean: model.prior_mean(),
                r_a,
                r_x,
                n,
                linv_a,
                linv_x,
                ca_grid,
                cx_design,
                ca_train,
                cx_train,
                a_corr,
                x_corr,
                train_chol: model.chol().clone(),
                weights: model.weights().to_vec(),
                nugget_sds,
            })),
        })
    }

    pub fn grid_len(&self) -> usize {
        self.t
    }

    pub fn design_len(&self) -> usize {
        self.nq
    }

    /// Latent posterior draw p over the whole product design (T x N).
    pub fn draw(&self, p: u64) -> Array2<f64> {
        match &self.mode {
            GridMode::Exact { means, lpost } => {
                let q = means.len();
                let xi = rng::normal_vec(self.seed, "posterior", p, q);
                let mut flat = vec![0.0; q];
                let ld = lpost.as_slice().unwrap();
                for i in 0..q {
                    flat[i] = means[i] + linalg::dot(&ld[i * q..i * q + i + 1], &xi[..i + 1]);
                }
                Array2::from_shape_vec((self.t, self.nq), flat).unwrap()
            }
            GridMode::Conditioned(c) => {
                let sigma2 = c.sigma * c.sigma;
                // prior weights in anchor-feature space
                let xi = Array2::from_shape_vec(
                    (c.r_a, c.r_x),
                    rng::normal_vec(self.seed, "posterior-prior", p, c.r_a * c.r_x),
                )
                .unwrap();
                let w = c.linv_a.t().dot(&xi).dot(&c.linv_x); // r_a x r_x

                // simulated prior at the training points, plus noise
                let mtr = c.ca_train.dot(&w); // n x r_x
                let noise = rng::normal_vec(self.seed, "posterior-noise", p, c.n);
                let mut ysim = vec![0.0; c.n];
                for i in 0..c.n {
                    let prior = c.sigma
                        * linalg::dot(
                            mtr.row(i).as_slice().unwrap(),
                            c.cx_train.row(i).as_slice().unwrap(),
                        );
                    ysim[i] = prior + c.nugget_sds[i] * noise[i];
                }
                // kriging correction weights: delta = alpha - K^{-1} ysim
                linalg::solve_spd(&c.train_chol, &mut ysim);
                let delta: Vec<f64> = c
                    .weights
                    .iter()
                    .zip(&ysim)
                    .map(|(a, s)| sigma2 * (a - s))
                    .collect();

                // field = prior_mean + sigma * (ca_grid w) cx^T + (a_corr .delta) x_corr^T
                let mut left = Array2::<f64>::zeros((self.t, c.r_x + c.n));
                {
                    let m1 = c.ca_grid.dot(&w); // T x r_x
                    let mut block = left.slice_mut(s![.., ..c.r_x]);
                    block.assign(&m1);
                    block.mapv_inplace(|v| v * c.sigma);
                    for ti in 0..self.t {
                        for i in 0..c.n {
                            left[[ti, c.r_x + i]] = c.a_corr[[ti, i]] * delta[i];
                        }
                    }
                }
                let mut right = Array2::<f64>::zeros((c.r_x + c.n, self.nq));
                right.slice_mut(s![..c.r_x, ..]).assign(&c.cx_design.t());
                right.slice_mut(s![c.r_x.., ..]).assign(&c.x_corr.t());
                let mut out = left.dot(&right);
                out.mapv_inplace(|v| v + c.prior_mean);
                out
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::{Dataset, GpModel, NuggetModel, Standardizer};
    use crate::kernel::KernelParams;

    fn toy_model(n: usize, seed: u64) -> GpModel {
        let mut rng = rng::stream(seed, "toy", 0);
        let points: Vec<InputPoint> = (0..n)
            .map(|_| InputPoint {
                im: 0.5 + 4.0 * rng.random::<f64>(),
                params: vec![rng.random::<f64>()],
            })
            .collect();
        let responses: Vec<f64> = points
            .iter()
            .map(|p| p.im.ln() + 0.5 * p.params[0] + 0.05 * rng.random::<f64>())
            .collect();
        let data = Dataset::new(points, responses).unwrap();
        let std = Standardizer::fit(data.points());
        GpModel::assemble(
            KernelParams::new(1.0, vec![0.4, 0.6]).unwrap(),
            NuggetModel::Homoskedastic { sigma_eps: 0.1 },
            std,
            data.response_mean(),
            data,
        )
        .unwrap()
    }

    #[test]
    fn exact_draws_match_moments() {
        let model = toy_model(25, 1);
        let queries: Vec<InputPoint> = (0..6)
            .map(|i| InputPoint {
                im: 1.0 + 0.6 * i as f64,
                params: vec![0.3 + 0.1 * i as f64],
            })
            .collect();
        let p = 4000;
        let draws = sample_posterior(&model, &queries, p, 7, &SampleConfig::default()).unwrap();
        for (qi, q) in queries.iter().enumerate() {
            let moments = model.predict(q).unwrap();
            let col: Vec<f64> = draws.column(qi).to_vec();
            let mean = crate::stats::mean(&col);
            let sd = crate::stats::variance(&col).sqrt();
            let tol = 4.0 * moments.latent_sd / (p as f64).sqrt();
            assert!(
                (mean - moments.mean).abs() <= tol.max(1e-9),
                "query {qi}: {mean} vs {} (tol {tol})",
                moments.mean
            );
            if moments.latent_sd > 1e-6 {
                assert!(
                    (sd - moments.latent_sd).abs() / moments.latent_sd < 0.2,
                    "query {qi}: sd {sd} vs {}",
                    moments.latent_sd
                );
            }
        }
    }

    #[test]
    fn anchor_path_marginal_sd_close_to_exact() {
        let model = toy_model(12, 3);
        // 300 queries spread over the domain, anchors at half of them
        let queries: Vec<InputPoint> = (0..300)
            .map(|i| {
                let f = i as f64 / 299.0;
                InputPoint {
                    im: 0.6 + 3.6 * f,
                    params: vec![(i % 17) as f64 / 16.0],
                }
            })
            .collect();
        let cfg = SampleConfig {
            exact_threshold: 4000,
            nystrom_rank: Some(150),
        };
        let (exact, approx) = posterior_marginal_sd(&model, &queries, 11, &cfg).unwrap();
        for i in 0..queries.len() {
            assert!(
                (exact[i] - approx[i]).abs() <= 0.05 * exact[i].max(1e-12),
                "query {i}: exact {} approx {}",
                exact[i],
                approx[i]
            );
        }
    }

    #[test]
    fn nystrom_rank_above_query_count_is_rejected() {
        let model = toy_model(10, 5);
        let queries: Vec<InputPoint> = (0..5)
            .map(|i| InputPoint {
                im: 1.0 + i as f64,
                params: vec![0.5],
            })
            .collect();
        let cfg = SampleConfig {
            exact_threshold: 2,
            nystrom_rank: Some(9),
        };
        assert!(sample_posterior(&model, &queries, 2, 0, &cfg).is_err());
    }

    #[test]
    fn grid_sampler_conditioned_matches_exact_moments() {
        let model = toy_model(30, 9);
        let grid: Vec<f64> = (0..5).map(|i| 1.0 + i as f64 * 0.8).collect();
        let xs = Array2::from_shape_fn((6, 1), |(i, _)| 0.1 + 0.15 * i as f64);

        let exact = GridSampler::new(
            &model,
            &grid,
            xs.view(),
            21,
            &SampleConfig {
                exact_threshold: 10_000,
                nystrom_rank: None,
            },
        )
        .unwrap();
        let approx = GridSampler::new(
            &model,
            &grid,
            xs.view(),
            21,
            &SampleConfig {
                exact_threshold: 1,
                nystrom_rank: Some(6),
            },
        )
        .unwrap();

        let p = 3000;
        let mut mean_a = Array2::<f64>::zeros((5, 6));
        let mut mean_e = Array2::<f64>::zeros((5, 6));
        let mut m2_a = Array2::<f64>::zeros((5, 6));
        let mut m2_e = Array2::<f64>::zeros((5, 6));
        for pi in 0..p {
            let da = approx.draw(pi as u64);
            let de = exact.draw(pi as u64);
            mean_a += &da;
            mean_e += &de;
            m2_a += &da.mapv(|v| v * v);
            m2_e += &de.mapv(|v| v * v);
        }
        let pf = p as f64;
        for t in 0..5 {
            for u in 0..6 {
                let ma = mean_a[[t, u]] / pf;
                let me = mean_e[[t, u]] / pf;
                let sa = (m2_a[[t, u]] / pf - ma * ma).max(0.0).sqrt();
                let se = (m2_e[[t, u]] / pf - me * me).max(0.0).sqrt();
                assert!((ma - me).abs() < 0.05, "mean mismatch at ({t},{u}): {ma} vs {me}");
                assert!(
                    (sa - se).abs() <= 0.07 * se.max(0.05),
                    "sd mismatch at ({t},{u}): {sa} vs {se}"
                );
            }
        }
    }
}
