//! The individual acceptance checks. Each returns (passed, detail); all
//! numbers in the detail strings are deterministic given the seed.

use super::{CriterionResult, Profile};
use crate::fragility::{
    bilevel_quantile_curve, mean_curve, psi1_curves, psi2_samples, psi_from_moments, quantile_curve,
    ImGrid,
};
use crate::gp::{
    fit_heteroskedastic, Dataset, FitConfig, GpModel, NuggetModel, SampleConfig, Standardizer,
};
use crate::gsa::{
    aggregated_sobol, aggregated_sobol_posterior, bandwidth_heuristic_matrix, betak, mmd2,
    CurveKernel, GsaConfig, PickFreezeDesign,
};
use crate::kernel::{InputPoint, KernelParams};
use crate::rng;
use crate::stats;
use crate::testbed::{
    self, additive_interaction_spec, additive_linear_spec, default_linear_spec, make_dataset,
    ImLaw, SyntheticModelSpec,
};
use ndarray::Array2;
use rand::Rng;
use std::cell::OnceCell;

/// Double-loop reference values for the aggregated Sobol indices of the
/// additive-regime linear benchmark (grid [0.1, 25], T = 25), computed
/// by nested quadrature (`testbed::linear_sobol_quadrature`, exact to
/// ~1e-8) and cross-checked against the Monte-Carlo double loop
/// (`testbed::oracle_aggregated_sobol`) within its batch standard
/// errors. Regenerate with `cargo run --example freeze_oracle`.
pub const SOBOL_ORACLE_FIRST: [f64; 6] =
    [0.2766133, 0.0143496, 0.0504946, 0.2028129, 0.3621388, 0.0898624];
pub const SOBOL_ORACLE_TOTAL: [f64; 6] =
    [0.2787013, 0.0144989, 0.0510029, 0.2045127, 0.3645438, 0.0907292];

/// IM law used by the acceptance datasets: uniform coverage of the
/// reporting interval avoids sparse tails when checking sup-norm errors.
fn acceptance_im_law() -> ImLaw {
    ImLaw::Uniform { a0: 0.1, a1: 30.0 }
}

pub struct Ctx {
    pub profile: Profile,
    pub seed: u64,
    pub spec: SyntheticModelSpec,
    data_big: OnceCell<Dataset>,
    model_big: OnceCell<GpModel>,
    data_small: OnceCell<Dataset>,
    model_small: OnceCell<GpModel>,
}

impl Ctx {
    pub fn new(profile: Profile, seed: u64) -> Self {
        Self {
            profile,
            seed,
            spec: default_linear_spec(),
            data_big: OnceCell::new(),
            model_big: OnceCell::new(),
            data_small: OnceCell::new(),
            model_small: OnceCell::new(),
        }
    }

    fn full(&self) -> bool {
        self.profile == Profile::Full
    }

    fn pick(&self, full: usize, quick: usize) -> usize {
        if self.full() {
            full
        } else {
            quick
        }
    }

    fn n_big(&self) -> usize {
        self.pick(500, 160)
    }

    fn n_small(&self) -> usize {
        self.pick(200, 90)
    }

    fn fit_config(&self) -> FitConfig {
        let mut fc = FitConfig::with_seed(self.seed);
        if !self.full() {
            fc.restarts = 5;
            fc.max_evals = 250;
        }
        fc
    }

    pub fn data_big(&self) -> &Dataset {
        self.data_big.get_or_init(|| {
            make_dataset(&self.spec, acceptance_im_law(), self.n_big(), self.seed).unwrap()
        })
    }

    pub fn model_big(&self) -> &GpModel {
        self.model_big
            .get_or_init(|| fit_heteroskedastic(self.data_big(), &self.fit_config()).unwrap())
    }

    pub fn data_small(&self) -> &Dataset {
        self.data_small.get_or_init(|| {
            make_dataset(&self.spec, acceptance_im_law(), self.n_small(), self.seed + 1).unwrap()
        })
    }

    pub fn model_small(&self) -> &GpModel {
        self.model_small
            .get_or_init(|| fit_heteroskedastic(self.data_small(), &self.fit_config()).unwrap())
    }

    fn report_grid(&self) -> ImGrid {
        ImGrid::regular(0.1, 25.0, self.pick(100, 25)).unwrap()
    }

    fn gsa_grid(&self) -> ImGrid {
        ImGrid::regular(0.1, 25.0, 25).unwrap()
    }
}

fn result(id: usize, name: &'static str, passed: bool, detail: String) -> CriterionResult {
    CriterionResult {
        id,
        name,
        passed,
        detail,
    }
}

/// Criterion 1: kriging moments against an independent dense-solve
/// oracle, and the exact variance identity.
pub fn gp_correctness(ctx: &Ctx) -> CriterionResult {
    // 5-point toy data in one dimension (IM only)
    let ims = [0.5, 1.0, 2.0, 3.5, 5.0];
    let ys = [-0.3, 0.1, 0.4, 0.9, 1.1];
    let points: Vec<InputPoint> = ims
        .iter()
        .map(|&a| InputPoint::new(a, vec![]).unwrap())
        .collect();
    let data = Dataset::new(points, ys.to_vec()).unwrap();
    let std = Standardizer::fit(data.points());
    let (sigma, rho, sigma_eps) = (0.8, 0.4, 0.15);
    let prior_mean = data.response_mean();
    let model = GpModel::assemble(
        KernelParams::new(sigma, vec![rho]).unwrap(),
        NuggetModel::Homoskedastic { sigma_eps },
        std,
        prior_mean,
        data,
    )
    .unwrap();

    // Independent oracle: standardize, assemble and solve from scratch
    // with Gauss-Jordan elimination.
    let lo = 0.5;
    let span = 5.0 - 0.5;
    let z: Vec<f64> = ims.iter().map(|a| (a - lo) / span).collect();
    let m52 = |h: f64| {
        let s = 5f64.sqrt() * h;
        (1.0 + s + 5.0 / 3.0 * h * h) * (-s).exp()
    };
    let n = 5;
    let mut k = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            k[i][j] = sigma * sigma * m52((z[i] - z[j]).abs() / rho);
            if i == j {
                k[i][j] += sigma_eps * sigma_eps + model.jitter();
            }
        }
    }
    // invert by Gauss-Jordan
    let mut aug: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row = k[i].clone();
            row.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            row
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&a, &b| aug[a][col].abs().partial_cmp(&aug[b][col].abs()).unwrap())
            .unwrap();
        aug.swap(col, pivot);
        let pv = aug[col][col];
        for v in aug[col].iter_mut() {
            *v /= pv;
        }
        for r in 0..n {
            if r != col {
                let f = aug[r][col];
                for c in 0..2 * n {
                    aug[r][c] -= f * aug[col][c];
                }
            }
        }
    }
    let kinv: Vec<Vec<f64>> = aug.iter().map(|r| r[n..].to_vec()).collect();
    let yc: Vec<f64> = ys.iter().map(|y| y - prior_mean).collect();

    let mut max_err = 0.0f64;
    for qi in 0..=20 {
        let a = 0.4 + 0.25 * qi as f64;
        let zq = (a - lo) / span;
        let kstar: Vec<f64> = z
            .iter()
            .map(|&zi| sigma * sigma * m52((zq - zi).abs() / rho))
            .collect();
        let mut kiy = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                kiy[i] += kinv[i][j] * yc[j];
            }
        }
        let mean = prior_mean + kstar.iter().zip(&kiy).map(|(a, b)| a * b).sum::<f64>();
        let mut quad = 0.0;
        for i in 0..n {
            for j in 0..n {
                quad += kstar[i] * kinv[i][j] * kstar[j];
            }
        }
        let latent_var = (sigma * sigma - quad).max(0.0);
        let obs_var = latent_var + sigma_eps * sigma_eps;

        let got = model.predict(&InputPoint::new(a, vec![]).unwrap()).unwrap();
        max_err = max_err
            .max((got.mean - mean).abs())
            .max((got.latent_sd - latent_var.sqrt()).abs())
            .max((got.observation_sd - obs_var.sqrt()).abs());
    }

    // variance identity on random queries of a heteroskedastic model
    let mut rng = rng::stream(ctx.seed, "acceptance-c1", 0);
    let points: Vec<InputPoint> = (0..40)
        .map(|_| {
            InputPoint::new(
                0.2 + 9.8 * rng.random::<f64>(),
                vec![rng.random::<f64>(), rng.random::<f64>()],
            )
            .unwrap()
        })
        .collect();
    let responses: Vec<f64> = points.iter().map(|p| p.im.ln() + 0.4 * p.params[0]).collect();
    let data = Dataset::new(points, responses).unwrap();
    let std = Standardizer::fit(data.points());
    let nugget = NuggetModel::Heteroskedastic {
        theta0: 0.05,
        theta1: 0.02,
        theta2: 0.12,
    };
    let het = GpModel::assemble(
        KernelParams::new(1.1, vec![0.5, 0.8, 0.8]).unwrap(),
        nugget.clone(),
        std,
        data.response_mean(),
        data,
    )
    .unwrap();
    let mut max_identity = 0.0f64;
    for _ in 0..10_000 {
        let q = InputPoint::new(
            0.2 + 9.8 * rng.random::<f64>(),
            vec![rng.random::<f64>(), rng.random::<f64>()],
        )
        .unwrap();
        let m = het.predict(&q).unwrap();
        let lhs = m.observation_sd * m.observation_sd;
        let rhs = m.latent_sd * m.latent_sd + nugget.var_at(q.im);
        max_identity = max_identity.max((lhs - rhs).abs() / lhs.max(1e-300));
    }

    let passed = max_err <= 1e-10 && max_identity <= 1e-14;
    result(
        1,
        "gp-correctness",
        passed,
        format!("dense-solve max err {max_err:.2e} (<=1e-10), variance identity max rel {max_identity:.2e} (<=1e-14)"),
    )
}

/// Criterion 2: heteroskedastic surrogate quality on the testbed.
pub fn surrogate_quality(ctx: &Ctx) -> CriterionResult {
    // Q2 ceiling of the data-generating process
    let probe = make_dataset(&ctx.spec, acceptance_im_law(), 30_000, ctx.seed + 90).unwrap();
    let var_y = stats::variance(probe.responses());
    let mean_noise_var = probe
        .points()
        .iter()
        .map(|p| {
            let s = ctx.spec.noise_sd(p.im);
            s * s
        })
        .sum::<f64>()
        / probe.n() as f64;
    let ceiling = 1.0 - mean_noise_var / var_y;

    let model = ctx.model_big();
    let data = ctx.data_big();
    let q2 = model.loo_q2(data).unwrap();
    let alphas: Vec<f64> = (1..=9).map(|k| k as f64 / 10.0).collect();
    let coverage = model.coverage_curve(data, &alphas).unwrap();
    let max_cov_err = alphas
        .iter()
        .zip(&coverage)
        .map(|(a, e)| (a - e).abs())
        .fold(0.0f64, f64::max);

    let passed = ceiling >= 0.9 && q2 >= 0.85 && max_cov_err <= 0.07;
    result(
        2,
        "surrogate-quality",
        passed,
        format!(
            "Q2 ceiling {ceiling:.3} (>=0.9), LOO Q2 {q2:.3} (>=0.85), max coverage err {max_cov_err:.3} (<=0.07), n={}",
            data.n()
        ),
    )
}

/// Criterion 3: plug-in fragility identity with the true model injected,
/// and mean-curve convergence of the fitted surrogate.
pub fn fragility_convergence(ctx: &Ctx) -> CriterionResult {
    // exact identity: the plug-in transform fed with the true (g, phi)
    // reproduces the closed-form curve
    let mut rng = rng::stream(ctx.seed, "acceptance-c3", 0);
    let mut max_exact = 0.0f64;
    for _ in 0..2000 {
        let a = 0.1 + 24.9 * rng.random::<f64>();
        let x: Vec<f64> = ctx
            .spec
            .dist
            .inputs
            .iter()
            .map(|i| {
                let half = i.cov * 3f64.sqrt() * i.mean;
                i.mean - half + 2.0 * half * rng.random::<f64>()
            })
            .collect();
        let moments = crate::gp::PredictionMoments {
            mean: ctx.spec.g(a, &x),
            latent_sd: 0.0,
            observation_sd: ctx.spec.noise_sd(a),
        };
        let via_plugin = psi_from_moments(&moments, ctx.spec.threshold_c);
        let truth = testbed::true_fragility(&ctx.spec, a, &x).unwrap();
        max_exact = max_exact.max((via_plugin - truth).abs());
    }

    // fitted-surrogate mean curve vs the quadrature oracle
    let grid = ctx.report_grid();
    let oracle = testbed::mean_curve_oracle(&ctx.spec, &grid).unwrap();
    let m = ctx.pick(5000, 1200);
    let xs = testbed::sample_inputs(&ctx.spec.dist, m, ctx.seed + 70).unwrap();
    let curves = psi1_curves(ctx.model_big(), &grid, xs.view(), ctx.spec.threshold_c).unwrap();
    let mean = mean_curve(&grid, curves.view()).unwrap();
    let sup = mean
        .probabilities
        .iter()
        .zip(&oracle)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);

    let passed = max_exact <= 1e-12 && sup <= 0.05;
    result(
        3,
        "fragility-convergence",
        passed,
        format!("exact-injection max err {max_exact:.2e} (<=1e-12), mean-curve sup err {sup:.3} (<=0.05)"),
    )
}

/// Criterion 4: the posterior fragility draws average to the plug-in
/// curve, with the Monte-Carlo error shrinking in P.
pub fn psi2_consistency(ctx: &Ctx) -> CriterionResult {
    let model = ctx.model_big();
    let c = ctx.spec.threshold_c;
    let mut rng = rng::stream(ctx.seed, "acceptance-c4", 0);
    let grid_vals: Vec<f64> = {
        let mut v: Vec<f64> = (0..5).map(|_| 0.5 + 20.0 * rng.random::<f64>()).collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v
    };
    let grid = ImGrid::new(grid_vals).unwrap();
    let xs = testbed::sample_inputs(&ctx.spec.dist, 4, ctx.seed + 71).unwrap();
    let psi1 = psi1_curves(model, &grid, xs.view(), c).unwrap(); // 5 x 4

    let p_levels = [100usize, 400, 1600];
    let batches = ctx.pick(40, 12);
    let cfg = SampleConfig::default();
    // rms error of the P-draw mean around psi1, per point and level
    let mut rms = vec![Array2::<f64>::zeros((5, 4)); 3];
    for (li, &p) in p_levels.iter().enumerate() {
        for batch in 0..batches {
            let seed = ctx.seed * 7919 + 131 * batch as u64 + li as u64;
            let ens = psi2_samples(model, &grid, xs.view(), c, p, seed, &cfg).unwrap();
            let mut acc = Array2::<f64>::zeros((5, 4));
            for draw in &ens.draws {
                acc += draw;
            }
            acc /= p as f64;
            for t in 0..5 {
                for j in 0..4 {
                    let e = acc[[t, j]] - psi1[[t, j]];
                    rms[li][[t, j]] += e * e;
                }
            }
        }
        rms[li].mapv_inplace(|v| (v / batches as f64).sqrt());
    }

    // mean over a single P=1600 batch within 0.02 of psi1 at every point
    let ens = psi2_samples(model, &grid, xs.view(), c, 1600, ctx.seed * 7919, &cfg).unwrap();
    let mut acc = Array2::<f64>::zeros((5, 4));
    for draw in &ens.draws {
        acc += draw;
    }
    acc /= 1600.0;
    let mut max_gap = 0.0f64;
    for t in 0..5 {
        for j in 0..4 {
            max_gap = max_gap.max((acc[[t, j]] - psi1[[t, j]]).abs());
        }
    }

    let mut monotone = 0;
    for t in 0..5 {
        for j in 0..4 {
            if rms[0][[t, j]] >= rms[1][[t, j]] && rms[1][[t, j]] >= rms[2][[t, j]] {
                monotone += 1;
            }
        }
    }

    let passed = max_gap <= 0.02 && monotone >= 18;
    result(
        4,
        "psi2-consistency",
        passed,
        format!("P=1600 max |mean - psi1| {max_gap:.4} (<=0.02), rms monotone at {monotone}/20 points (>=18)"),
    )
}

/// Criterion 5: bi-level bands contain the plug-in bands and tighten
/// with more training data.
pub fn bilevel_bands(ctx: &Ctx) -> CriterionResult {
    let c = ctx.spec.threshold_c;
    let t = ctx.pick(50, 15);
    let grid = ImGrid::regular(0.1, 25.0, t).unwrap();
    let m = ctx.pick(500, 200);
    let p_draws = ctx.pick(300, 60);
    let xs = testbed::sample_inputs(&ctx.spec.dist, m, ctx.seed + 72).unwrap();
    let cfg = SampleConfig::default();

    let band = |model: &GpModel| -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
        let curves1 = psi1_curves(model, &grid, xs.view(), c).unwrap();
        let q10 = quantile_curve(&grid, curves1.view(), 0.1).unwrap();
        let q90 = quantile_curve(&grid, curves1.view(), 0.9).unwrap();
        let ens = psi2_samples(model, &grid, xs.view(), c, p_draws, ctx.seed + 73, &cfg).unwrap();
        let bl10 = bilevel_quantile_curve(&ens, 0.1, 0.1).unwrap();
        let bl90 = bilevel_quantile_curve(&ens, 0.9, 0.9).unwrap();
        (
            q10.probabilities,
            q90.probabilities,
            bl10.probabilities,
            bl90.probabilities,
        )
    };

    let (q10s, q90s, bl10s, bl90s) = band(ctx.model_small());
    let contained = (0..t)
        .filter(|&ti| bl10s[ti] <= q10s[ti] + 1e-12 && bl90s[ti] >= q90s[ti] - 1e-12)
        .count();
    let frac = contained as f64 / t as f64;

    let width_small: Vec<f64> = (0..t).map(|ti| bl90s[ti] - bl10s[ti]).collect();
    let (_, _, bl10b, bl90b) = band(ctx.model_big());
    let width_big: Vec<f64> = (0..t).map(|ti| bl90b[ti] - bl10b[ti]).collect();
    let med_small = stats::lower_quantile(&width_small, 0.5);
    let med_big = stats::lower_quantile(&width_big, 0.5);

    let passed = frac >= 0.9 && med_big < med_small;
    result(
        5,
        "bilevel-bands",
        passed,
        format!(
            "containment {frac:.2} (>=0.90), median band width n={}: {med_small:.4} -> n={}: {med_big:.4} (must shrink)",
            ctx.n_small(),
            ctx.n_big()
        ),
    )
}

/// Criterion 6: pick-freeze aggregated Sobol estimates against the frozen
/// double-loop oracle on the linear benchmark.
pub fn sobol_oracle_agreement(ctx: &Ctx) -> CriterionResult {
    let spec = additive_linear_spec();
    let grid = ctx.gsa_grid();
    let m = 20_000;
    let design = PickFreezeDesign::sample(m, &spec.dist.marginals().unwrap(), ctx.seed + 40).unwrap();
    let d = spec.dist.d();
    let base = testbed::true_fragility_matrix(&spec, &grid, design.base().view()).unwrap();
    let frozen: Vec<Array2<f64>> = (0..d)
        .map(|i| testbed::true_fragility_matrix(&spec, &grid, design.frozen(i).view()).unwrap())
        .collect();
    let complement: Vec<Array2<f64>> = (0..d)
        .map(|i| testbed::true_fragility_matrix(&spec, &grid, design.complement(i).view()).unwrap())
        .collect();
    let fv: Vec<_> = frozen.iter().map(|x| x.view()).collect();
    let cv: Vec<_> = complement.iter().map(|x| x.view()).collect();
    let (first, total) = aggregated_sobol(&grid, base.view(), &fv, &cv).unwrap();

    let mut max_gap = 0.0f64;
    for i in 0..d {
        max_gap = max_gap
            .max((first.point_estimate[i] - SOBOL_ORACLE_FIRST[i]).abs())
            .max((total.point_estimate[i] - SOBOL_ORACLE_TOTAL[i]).abs());
    }
    let sum_s: f64 = first.point_estimate.iter().sum();
    let sum_s_exact: f64 = SOBOL_ORACLE_FIRST.iter().sum();

    let passed = max_gap <= 0.03
        && (0.95..=1.05).contains(&sum_s)
        && (0.95..=1.05).contains(&sum_s_exact);
    result(
        6,
        "sobol-oracle-agreement",
        passed,
        format!("max |pick-freeze - oracle| {max_gap:.4} (<=0.03), sum of first-order {sum_s:.3} (oracle {sum_s_exact:.3}, both in [0.95,1.05]), m={m}"),
    )
}

/// Criterion 7: the beta-k totals separate interactions that the
/// aggregated Sobol gap barely registers.
pub fn interaction_contrast(ctx: &Ctx) -> CriterionResult {
    let spec = additive_interaction_spec(0.2);
    let grid = ctx.gsa_grid();
    let m = 15_000;
    let design = PickFreezeDesign::sample(m, &spec.dist.marginals().unwrap(), ctx.seed + 41).unwrap();
    let d = spec.dist.d();
    let base = testbed::true_fragility_matrix(&spec, &grid, design.base().view()).unwrap();
    let copy = testbed::true_fragility_matrix(&spec, &grid, design.copy().view()).unwrap();
    let frozen: Vec<Array2<f64>> = (0..d)
        .map(|i| testbed::true_fragility_matrix(&spec, &grid, design.frozen(i).view()).unwrap())
        .collect();
    let complement: Vec<Array2<f64>> = (0..d)
        .map(|i| testbed::true_fragility_matrix(&spec, &grid, design.complement(i).view()).unwrap())
        .collect();
    let fv: Vec<_> = frozen.iter().map(|x| x.view()).collect();
    let cv: Vec<_> = complement.iter().map(|x| x.view()).collect();

    let (s_first, s_total) = aggregated_sobol(&grid, base.view(), &fv, &cv).unwrap();
    let bandwidth = bandwidth_heuristic_matrix(&grid, base.view()).unwrap();
    let kernel = CurveKernel::new(bandwidth, grid.clone()).unwrap();
    let (b_first, b_total) = betak(&grid, base.view(), copy.view(), &fv, &cv, &kernel).unwrap();

    let mut passed = true;
    let mut details = Vec::new();
    for i in 0..2 {
        let beta_gap = b_total.point_estimate[i] - b_first.point_estimate[i];
        let sobol_gap = (s_total.point_estimate[i] - s_first.point_estimate[i]).abs();
        details.push(format!(
            "input {}: beta gap {beta_gap:.3}, sobol gap {sobol_gap:.3}",
            i + 1
        ));
        if !(beta_gap > 0.05 && sobol_gap < beta_gap) {
            passed = false;
        }
    }
    result(
        7,
        "interaction-contrast",
        passed,
        format!("{} (need beta gap > 0.05 and sobol gap below it)", details.join("; ")),
    )
}

/// Criterion 8: metamodel-vs-Monte-Carlo variance split on the full
/// pipeline, with the 1/m scaling of the bootstrap share.
pub fn variance_split(ctx: &Ctx) -> CriterionResult {
    let model = ctx.model_big();
    let grid = ctx.gsa_grid();
    let c = ctx.spec.threshold_c;
    let marginals = ctx.spec.dist.marginals().unwrap();
    let d = ctx.spec.dist.d();

    let cfg = GsaConfig {
        p_draws: ctx.pick(200, 40),
        bootstrap: ctx.pick(150, 40),
        sample: SampleConfig {
            exact_threshold: 4000,
            nystrom_rank: Some(ctx.pick(256, 128)),
        },
        bootstrap_counts_override: None,
    };
    let m_large = ctx.pick(20_000, 2000);
    let m_small = m_large / 4;

    let run = |m: usize, seed: u64| {
        let design = PickFreezeDesign::sample(m, &marginals, seed).unwrap();
        aggregated_sobol_posterior(model, &design, &grid, c, seed, &cfg).unwrap()
    };
    let (first_l, _total_l) = run(m_large, ctx.seed + 50);
    let (first_s, _total_s) = run(m_small, ctx.seed + 51);

    // dominant inputs by point estimate
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        first_l.point_estimate[b]
            .partial_cmp(&first_l.point_estimate[a])
            .unwrap()
    });
    let top = order[0];
    let second = order[1];
    let ratio_top = first_l.sigma_gp[top] / first_l.sigma_mc[top].max(1e-300);
    let mc_less_than_gp =
        first_l.sigma_mc[top] < first_l.sigma_gp[top] && first_l.sigma_mc[second] < first_l.sigma_gp[second];

    // median variance shrink over inputs when m is quadrupled
    let mut shrink: Vec<f64> = (0..d)
        .map(|i| {
            let v_small = first_s.sigma_mc[i] * first_s.sigma_mc[i];
            let v_large = first_l.sigma_mc[i] * first_l.sigma_mc[i];
            v_small / v_large.max(1e-300)
        })
        .collect();
    shrink.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let med_shrink = shrink[d / 2];

    let passed = mc_less_than_gp && ratio_top >= 3.0 && (2.5..=6.0).contains(&med_shrink);
    result(
        8,
        "variance-split",
        passed,
        format!(
            "top input sigma_gp/sigma_mc {ratio_top:.1} (>=3), mc<gp on top-2 {mc_less_than_gp}, median MC-variance shrink x{med_shrink:.2} (in [2.5,6]), m={m_large}"
        ),
    )
}

/// Criterion 9: structural beta-k checks and the identical-sample MMD.
pub fn betak_structure(ctx: &Ctx) -> CriterionResult {
    let grid = ctx.gsa_grid();
    let m = 15_000;

    // dummy input: coefficient zero on input 2
    let mut dummy_spec = additive_linear_spec();
    dummy_spec.betas = vec![0.40, 0.0, 0.20, 0.30, 0.45, 0.15];
    let (b_first_dummy, _) = betak_on_truth(&dummy_spec, &grid, m, ctx.seed + 60);
    let dummy_val = b_first_dummy[1];

    // single active input
    let mut single_spec = default_linear_spec();
    single_spec.betas = vec![0.6, 0.0, 0.0, 0.0, 0.0, 0.0];
    single_spec.noise = crate::gp::NuggetModel::Homoskedastic { sigma_eps: 0.4 };
    let (b_first_single, _) = betak_on_truth(&single_spec, &grid, m, ctx.seed + 61);
    let single_val = b_first_single[0];

    // identical-sample MMD
    let m_curves = 500;
    let xs = testbed::sample_inputs(&default_linear_spec().dist, m_curves, ctx.seed + 62).unwrap();
    let spec = default_linear_spec();
    let mat = testbed::true_fragility_matrix(&spec, &grid, xs.view()).unwrap();
    let curves: Vec<crate::fragility::FragilityCurve> = (0..m_curves)
        .map(|j| {
            crate::fragility::FragilityCurve::new(grid.clone(), mat.column(j).to_vec()).unwrap()
        })
        .collect();
    let bandwidth = bandwidth_heuristic_matrix(&grid, mat.view()).unwrap();
    let kernel = CurveKernel::new(bandwidth, grid.clone()).unwrap();
    let mmd_same = mmd2(&curves, &curves, &kernel).unwrap();
    let mmd_bound = 2.0 / (m_curves as f64).sqrt();

    let passed =
        dummy_val.abs() <= 0.03 && (single_val - 1.0).abs() <= 0.05 && mmd_same.abs() <= mmd_bound;
    result(
        9,
        "betak-structure",
        passed,
        format!(
            "dummy beta {dummy_val:.4} (|.|<=0.03), single-input beta {single_val:.4} (within 0.05 of 1), same-sample MMD2 {mmd_same:.2e} (|.|<={mmd_bound:.2e})"
        ),
    )
}

fn betak_on_truth(
    spec: &SyntheticModelSpec,
    grid: &ImGrid,
    m: usize,
    seed: u64,
) -> (Vec<f64>, Vec<f64>) {
    let design = PickFreezeDesign::sample(m, &spec.dist.marginals().unwrap(), seed).unwrap();
    let d = spec.dist.d();
    let base = testbed::true_fragility_matrix(spec, grid, design.base().view()).unwrap();
    let copy = testbed::true_fragility_matrix(spec, grid, design.copy().view()).unwrap();
    let frozen: Vec<Array2<f64>> = (0..d)
        .map(|i| testbed::true_fragility_matrix(spec, grid, design.frozen(i).view()).unwrap())
        .collect();
    let complement: Vec<Array2<f64>> = (0..d)
        .map(|i| testbed::true_fragility_matrix(spec, grid, design.complement(i).view()).unwrap())
        .collect();
    let fv: Vec<_> = frozen.iter().map(|x| x.view()).collect();
    let cv: Vec<_> = complement.iter().map(|x| x.view()).collect();
    let bandwidth = bandwidth_heuristic_matrix(grid, base.view()).unwrap();
    let kernel = CurveKernel::new(bandwidth, grid.clone()).unwrap();
    let (first, total) = betak(grid, base.view(), copy.view(), &fv, &cv, &kernel).unwrap();
    (first.point_estimate, total.point_estimate)
}
