//! Pick-freeze estimators against brute-force oracles and their
//! structural invariants.

use fragility_uq::fragility::ImGrid;
use fragility_uq::gp::{Dataset, GpModel, NuggetModel, Standardizer};
use fragility_uq::gsa::{
    aggregated_sobol, aggregated_sobol_posterior, bandwidth_heuristic_matrix, betak,
    CurveKernel, GsaConfig, InputMarginal, PickFreezeDesign,
};
use fragility_uq::kernel::{InputPoint, KernelParams};
use fragility_uq::rng;
use fragility_uq::stats;
use fragility_uq::testbed::{
    self, additive_interaction_spec, additive_linear_spec, oracle_betak, SyntheticModelSpec,
};
use ndarray::Array2;
use rand::Rng;

fn curve_blocks(
    spec: &SyntheticModelSpec,
    grid: &ImGrid,
    design: &PickFreezeDesign,
) -> (Array2<f64>, Array2<f64>, Vec<Array2<f64>>, Vec<Array2<f64>>) {
    let d = design.d();
    let base = testbed::true_fragility_matrix(spec, grid, design.base().view()).unwrap();
    let copy = testbed::true_fragility_matrix(spec, grid, design.copy().view()).unwrap();
    let frozen: Vec<Array2<f64>> = (0..d)
        .map(|i| testbed::true_fragility_matrix(spec, grid, design.frozen(i).view()).unwrap())
        .collect();
    let complement: Vec<Array2<f64>> = (0..d)
        .map(|i| testbed::true_fragility_matrix(spec, grid, design.complement(i).view()).unwrap())
        .collect();
    (base, copy, frozen, complement)
}

/// The pick-freeze identity, checked per grid point on a two-input
/// model: the design covariance matches the double-loop conditional
/// variance within three combined standard errors.
#[test]
fn pickfreeze_identity_per_grid_point() {
    let mut spec = additive_linear_spec();
    spec.dist.inputs.truncate(2);
    spec.betas = vec![0.5, 0.3];
    let grid = ImGrid::new(vec![1.0, 4.0, 10.0, 20.0]).unwrap();

    // design-side covariance with batch standard errors
    let m = 20_000;
    let batches = 10;
    let mut cov_est = vec![vec![0.0; batches]; grid.len()];
    for b in 0..batches {
        let design = PickFreezeDesign::sample(m / batches, &spec.dist.marginals().unwrap(), 50 + b as u64).unwrap();
        let base = testbed::true_fragility_matrix(&spec, &grid, design.base().view()).unwrap();
        let frozen = testbed::true_fragility_matrix(&spec, &grid, design.frozen(0).view()).unwrap();
        for t in 0..grid.len() {
            let xb = base.row(t);
            let xf = frozen.row(t);
            let mb = xb.sum() / xb.len() as f64;
            let mf = xf.sum() / xf.len() as f64;
            let cross: f64 = xb.iter().zip(xf.iter()).map(|(a, c)| a * c).sum::<f64>() / xb.len() as f64;
            cov_est[t][b] = cross - mb * mf;
        }
    }

    // double-loop oracle per grid point, batched as well
    let mut oracle = vec![vec![0.0; batches]; grid.len()];
    let sqrt3 = 3f64.sqrt();
    for b in 0..batches {
        let mut rng = rng::stream(777 + b as u64, "pf-identity", 0);
        let outer = 200;
        let inner = 200;
        for t in 0..grid.len() {
            let a = grid.values()[t];
            let c0 = spec.beta0 + spec.beta_a * a.ln() - spec.threshold_c.ln();
            let inv = 1.0 / spec.noise_sd(a);
            let mut cond_means = Vec::with_capacity(outer);
            for _ in 0..outer {
                let x1 = sqrt3 * (2.0 * rng.random::<f64>() - 1.0);
                let mut acc = 0.0;
                for _ in 0..inner {
                    let x2 = sqrt3 * (2.0 * rng.random::<f64>() - 1.0);
                    acc += stats::norm_cdf((c0 + spec.betas[0] * x1 + spec.betas[1] * x2) * inv);
                }
                cond_means.push(acc / inner as f64);
            }
            // inner-noise correction on the variance of conditional means
            let v = stats::variance(&cond_means);
            oracle[t][b] = v - v / inner as f64;
        }
    }

    for t in 0..grid.len() {
        let ce = stats::mean(&cov_est[t]);
        let ce_se = (stats::variance(&cov_est[t]) / batches as f64).sqrt();
        let or = stats::mean(&oracle[t]);
        let or_se = (stats::variance(&oracle[t]) / batches as f64).sqrt();
        let combined = (ce_se * ce_se + or_se * or_se).sqrt();
        assert!(
            (ce - or).abs() <= 3.0 * combined,
            "grid {t}: cov {ce:.5} vs oracle {or:.5} (3 se = {:.5})",
            3.0 * combined
        );
    }
}

#[test]
fn anova_closure_on_additive_testbed() {
    let spec = additive_linear_spec();
    let grid = ImGrid::regular(0.1, 25.0, 25).unwrap();
    let design = PickFreezeDesign::sample(20_000, &spec.dist.marginals().unwrap(), 41).unwrap();
    let (base, _, frozen, complement) = curve_blocks(&spec, &grid, &design);
    let fv: Vec<_> = frozen.iter().map(|x| x.view()).collect();
    let cv: Vec<_> = complement.iter().map(|x| x.view()).collect();
    let (first, total) = aggregated_sobol(&grid, base.view(), &fv, &cv).unwrap();
    let sum_s: f64 = first.point_estimate.iter().sum();
    assert!((0.95..=1.05).contains(&sum_s), "sum S = {sum_s}");
    for i in 0..design.d() {
        let gap = total.point_estimate[i] - first.point_estimate[i];
        assert!(
            (-0.05..=0.05).contains(&gap),
            "input {i}: T - S = {gap}"
        );
    }
}

#[test]
fn interaction_detected_by_both_families() {
    let spec = additive_interaction_spec(0.2);
    let grid = ImGrid::regular(0.1, 25.0, 25).unwrap();
    let design = PickFreezeDesign::sample(20_000, &spec.dist.marginals().unwrap(), 13).unwrap();
    let (base, copy, frozen, complement) = curve_blocks(&spec, &grid, &design);
    let fv: Vec<_> = frozen.iter().map(|x| x.view()).collect();
    let cv: Vec<_> = complement.iter().map(|x| x.view()).collect();
    let (s_first, s_total) = aggregated_sobol(&grid, base.view(), &fv, &cv).unwrap();
    assert!(
        s_total.point_estimate[0] - s_first.point_estimate[0] > 0.05,
        "sobol total-first gap {}",
        s_total.point_estimate[0] - s_first.point_estimate[0]
    );
    let bw = bandwidth_heuristic_matrix(&grid, base.view()).unwrap();
    let kernel = CurveKernel::new(bw, grid.clone()).unwrap();
    let (b_first, b_total) = betak(&grid, base.view(), copy.view(), &fv, &cv, &kernel).unwrap();
    assert!(
        b_total.point_estimate[0] - b_first.point_estimate[0] > 0.05,
        "betak total-first gap {}",
        b_total.point_estimate[0] - b_first.point_estimate[0]
    );
    // totals dominate firsts up to estimator noise for every input
    for i in 0..design.d() {
        assert!(b_total.point_estimate[i] >= b_first.point_estimate[i] - 0.05);
    }
}

#[test]
fn betak_pickfreeze_agrees_with_bruteforce_oracle() {
    let spec = additive_linear_spec();
    let grid = ImGrid::regular(0.5, 20.0, 15).unwrap();
    // shared kernel for both estimators
    let probe = PickFreezeDesign::sample(2000, &spec.dist.marginals().unwrap(), 3).unwrap();
    let probe_base = testbed::true_fragility_matrix(&spec, &grid, probe.base().view()).unwrap();
    let bw = bandwidth_heuristic_matrix(&grid, probe_base.view()).unwrap();
    let kernel = CurveKernel::new(bw, grid.clone()).unwrap();

    // pick-freeze side: replicate seeds give a standard error
    let runs = 4;
    let d = spec.dist.d();
    let mut first_runs = vec![Vec::with_capacity(runs); d];
    let mut total_runs = vec![Vec::with_capacity(runs); d];
    for r in 0..runs {
        let design =
            PickFreezeDesign::sample(15_000, &spec.dist.marginals().unwrap(), 600 + r as u64).unwrap();
        let (base, copy, frozen, complement) = curve_blocks(&spec, &grid, &design);
        let fv: Vec<_> = frozen.iter().map(|x| x.view()).collect();
        let cv: Vec<_> = complement.iter().map(|x| x.view()).collect();
        let (f, t) = betak(&grid, base.view(), copy.view(), &fv, &cv, &kernel).unwrap();
        for i in 0..d {
            first_runs[i].push(f.point_estimate[i]);
            total_runs[i].push(t.point_estimate[i]);
        }
    }

    let oracle = oracle_betak(&spec, &grid, &kernel, 300, 300, 17).unwrap();
    for i in 0..d {
        let pf = stats::mean(&first_runs[i]);
        let pf_se = (stats::variance(&first_runs[i]) / runs as f64).sqrt();
        let comb = (pf_se * pf_se + oracle.first_se[i] * oracle.first_se[i]).sqrt();
        assert!(
            (pf - oracle.first[i]).abs() <= 3.0 * comb.max(0.01),
            "first {i}: pick-freeze {pf:.4} vs oracle {:.4} (3se {:.4})",
            oracle.first[i],
            3.0 * comb.max(0.01)
        );
        let pt = stats::mean(&total_runs[i]);
        let pt_se = (stats::variance(&total_runs[i]) / runs as f64).sqrt();
        let comb = (pt_se * pt_se + oracle.total_se[i] * oracle.total_se[i]).sqrt();
        assert!(
            (pt - oracle.total[i]).abs() <= 3.0 * comb.max(0.01),
            "total {i}: pick-freeze {pt:.4} vs oracle {:.4} (3se {:.4})",
            oracle.total[i],
            3.0 * comb.max(0.01)
        );
    }
}

#[test]
fn sobol_oracle_structural_cases() {
    // single active input
    let mut spec = additive_linear_spec();
    spec.dist.inputs.truncate(3);
    spec.betas = vec![0.6, 0.0, 0.0];
    spec.noise = NuggetModel::Homoskedastic { sigma_eps: 0.8 };
    let grid = ImGrid::regular(0.5, 15.0, 10).unwrap();
    let oracle = testbed::oracle_aggregated_sobol(&spec, &grid, 400, 400, 5).unwrap();
    assert!((oracle.first[0] - 1.0).abs() <= 3.0 * oracle.first_se[0].max(0.01));
    assert!((oracle.total[0] - 1.0).abs() <= 3.0 * oracle.total_se[0].max(0.01));
    for i in 1..3 {
        assert!(oracle.first[i].abs() <= 3.0 * oracle.first_se[i].max(0.005));
        assert!(oracle.total[i].abs() <= 3.0 * oracle.total_se[i].max(0.02));
    }

    // additive model: no total-first gaps beyond noise
    let spec = additive_linear_spec();
    let grid = ImGrid::regular(0.1, 25.0, 10).unwrap();
    let oracle = testbed::oracle_aggregated_sobol(&spec, &grid, 300, 300, 6).unwrap();
    for i in 0..spec.dist.d() {
        let gap = oracle.total[i] - oracle.first[i];
        let se = (oracle.first_se[i].powi(2) + oracle.total_se[i].powi(2)).sqrt();
        assert!(gap.abs() <= 3.0 * se.max(0.01), "input {i}: gap {gap}");
    }

    // interaction model: positive gap beyond noise for the first input
    let spec = additive_interaction_spec(0.3);
    let oracle = testbed::oracle_aggregated_sobol(&spec, &grid, 400, 400, 7).unwrap();
    let gap = oracle.total[0] - oracle.first[0];
    let se = (oracle.first_se[0].powi(2) + oracle.total_se[0].powi(2)).sqrt();
    assert!(gap > 2.0 * se, "interaction gap {gap} vs se {se}");

    // standard errors shrink like 1/sqrt(n_outer)
    let small = testbed::oracle_aggregated_sobol(&spec, &grid, 200, 200, 8).unwrap();
    let large = testbed::oracle_aggregated_sobol(&spec, &grid, 800, 200, 8).unwrap();
    let se_small: f64 = small.first_se.iter().sum();
    let se_large: f64 = large.first_se.iter().sum();
    assert!(
        se_large < se_small,
        "summed SE should shrink: {se_small} -> {se_large}"
    );
}

#[test]
fn betak_oracle_structural_cases() {
    let mut spec = additive_linear_spec();
    spec.dist.inputs.truncate(3);
    spec.betas = vec![0.6, 0.0, 0.3];
    spec.noise = NuggetModel::Homoskedastic { sigma_eps: 0.8 };
    let grid = ImGrid::regular(0.5, 15.0, 10).unwrap();
    let probe = PickFreezeDesign::sample(1000, &spec.dist.marginals().unwrap(), 3).unwrap();
    let probe_base = testbed::true_fragility_matrix(&spec, &grid, probe.base().view()).unwrap();
    let bw = bandwidth_heuristic_matrix(&grid, probe_base.view()).unwrap();
    let kernel = CurveKernel::new(bw, grid.clone()).unwrap();
    let oracle = oracle_betak(&spec, &grid, &kernel, 250, 250, 9).unwrap();
    // dummy input stays near zero
    assert!(
        oracle.first[1].abs() <= 2.0 * oracle.first_se[1].max(0.01),
        "dummy beta {} (se {})",
        oracle.first[1],
        oracle.first_se[1]
    );

    // single active input drives the index to one
    let mut solo = spec.clone();
    solo.betas = vec![0.6, 0.0, 0.0];
    let probe_base = testbed::true_fragility_matrix(&solo, &grid, probe.base().view()).unwrap();
    let bw = bandwidth_heuristic_matrix(&grid, probe_base.view()).unwrap();
    let kernel = CurveKernel::new(bw, grid.clone()).unwrap();
    let oracle = oracle_betak(&solo, &grid, &kernel, 250, 250, 10).unwrap();
    assert!(
        (oracle.first[0] - 1.0).abs() <= 2.0 * oracle.first_se[0].max(0.02),
        "solo beta {} (se {})",
        oracle.first[0],
        oracle.first_se[0]
    );
}

#[test]
fn betak_invariant_to_copy_relabeling_on_single_input_model() {
    // psi depends on input 0 only; m = 3 with every joint permutation
    let mut spec = additive_linear_spec();
    spec.dist.inputs.truncate(2);
    spec.betas = vec![0.7, 0.0];
    let grid = ImGrid::new(vec![1.0, 5.0, 12.0]).unwrap();
    let marginals = spec.dist.marginals().unwrap();
    let design = PickFreezeDesign::sample(3, &marginals, 99).unwrap();
    let kernel = CurveKernel::new(0.4, grid.clone()).unwrap();

    let eval = |base_x: &Array2<f64>, copy_x: &Array2<f64>| {
        let design = PickFreezeDesign::new(base_x.clone(), copy_x.clone()).unwrap();
        let (base, copy, frozen, complement) = curve_blocks(&spec, &grid, &design);
        let fv: Vec<_> = frozen.iter().map(|x| x.view()).collect();
        let cv: Vec<_> = complement.iter().map(|x| x.view()).collect();
        let (f, _) = betak(&grid, base.view(), copy.view(), &fv, &cv, &kernel).unwrap();
        f.point_estimate
    };

    let forward = eval(design.base(), design.copy());
    let relabeled = eval(design.copy(), design.base());
    assert_eq!(forward[0], relabeled[0]);

    // permutation of the joint sample leaves estimates bit-identical
    let perms: [[usize; 3]; 6] = [
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ];
    for perm in perms {
        let permute = |m: &Array2<f64>| {
            let mut out = m.clone();
            for (new_j, &old_j) in perm.iter().enumerate() {
                out.row_mut(new_j).assign(&m.row(old_j));
            }
            out
        };
        let got = eval(&permute(design.base()), &permute(design.copy()));
        assert_eq!(got, forward);
    }
}

#[test]
fn mc_variance_shrinks_with_design_size() {
    // small surrogate; the bootstrap share of the split scales like 1/m
    let mut rng = rng::stream(31, "gsa-mscale", 0);
    let points: Vec<InputPoint> = (0..50)
        .map(|_| {
            InputPoint::new(
                0.4 + 9.6 * rng.random::<f64>(),
                vec![rng.random::<f64>(), rng.random::<f64>()],
            )
            .unwrap()
        })
        .collect();
    let responses: Vec<f64> = points
        .iter()
        .map(|p| {
            let e: f64 = rng.sample(rand_distr::StandardNormal);
            p.im.ln() + 0.9 * p.params[0] + 0.4 * p.params[1] + 0.2 * e
        })
        .collect();
    let data = Dataset::new(points, responses).unwrap();
    let model = GpModel::assemble(
        KernelParams::new(1.0, vec![0.4, 0.8, 0.8]).unwrap(),
        NuggetModel::Homoskedastic { sigma_eps: 0.2 },
        Standardizer::fit(data.points()),
        data.response_mean(),
        data,
    )
    .unwrap();
    let grid = ImGrid::regular(0.5, 9.0, 10).unwrap();
    let dists = vec![InputMarginal::Uniform { lo: 0.0, hi: 1.0 }; 2];
    let config = GsaConfig::new(6, 60);

    let mut factors = Vec::new();
    for seed in 0..3 {
        let run = |m: usize| {
            let design = PickFreezeDesign::sample(m, &dists, 100 + seed).unwrap();
            let (first, _) =
                aggregated_sobol_posterior(&model, &design, &grid, 2.0, 100 + seed, &config)
                    .unwrap();
            first.sigma_mc.iter().map(|s| s * s).sum::<f64>()
        };
        factors.push(run(1000) / run(4000));
    }
    factors.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = factors[1];
    assert!(
        (2.0..=8.0).contains(&median),
        "median MC-variance factor {median} (factors {factors:?})"
    );
}
