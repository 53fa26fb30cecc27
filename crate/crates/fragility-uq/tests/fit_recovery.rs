//! Hyperparameter recovery on synthetic data with known truth. These are
//! the slowest oracle checks: multi-seed averages of fitted noise
//! parameters.

use fragility_uq::gp::{fit_heteroskedastic, fit_homoskedastic, Dataset, FitConfig, NuggetModel};
use fragility_uq::kernel::{cov_matrix_rows, InputPoint, KernelParams};
use fragility_uq::linalg;
use fragility_uq::rng;
use fragility_uq::stats;
use fragility_uq::testbed::{self, default_linear_spec, ImLaw};
use rand::Rng;

/// Draw a dataset whose latent part is an exact GP sample.
fn gp_draw_dataset(n: usize, seed: u64, sigma_eps: f64) -> Dataset {
    let mut rng = rng::stream(seed, "gp-recovery", 0);
    let points: Vec<InputPoint> = (0..n)
        .map(|_| {
            InputPoint::new(
                0.5 + 9.5 * rng.random::<f64>(),
                vec![rng.random::<f64>(), rng.random::<f64>()],
            )
            .unwrap()
        })
        .collect();
    let std = fragility_uq::gp::Standardizer::fit(&points);
    let rows = std.apply_points(&points);
    let kp = KernelParams::new(1.0, vec![0.4, 0.6, 0.6]).unwrap();
    let mut l = cov_matrix_rows(rows.view(), &kp, &vec![0.0; n], 1e-10);
    linalg::cholesky_in_place(&mut l).unwrap();
    let xi: Vec<f64> = (0..n).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
    let responses: Vec<f64> = (0..n)
        .map(|i| {
            let mut g = 0.0;
            for j in 0..=i {
                g += l[[i, j]] * xi[j];
            }
            let e: f64 = rng.sample(rand_distr::StandardNormal);
            g + sigma_eps * e
        })
        .collect();
    Dataset::new(points, responses).unwrap()
}

#[test]
fn homoskedastic_noise_recovery_over_seeds() {
    let truth = 0.3;
    let mut estimates = Vec::new();
    for seed in 0..10 {
        let data = gp_draw_dataset(400, seed, truth);
        let config = FitConfig {
            restarts: 4,
            max_evals: 300,
            ..FitConfig::with_seed(seed)
        };
        let model = fit_homoskedastic(&data, &config).unwrap();
        match model.nugget() {
            NuggetModel::Homoskedastic { sigma_eps } => estimates.push(*sigma_eps),
            other => panic!("unexpected nugget {other:?}"),
        }
    }
    let mean = stats::mean(&estimates);
    assert!(
        (mean - truth).abs() <= 0.1,
        "mean fitted noise sd {mean:.3} vs truth {truth} ({estimates:?})"
    );
}

#[test]
fn heteroskedastic_ramp_recovery_at_median_im() {
    let spec = default_linear_spec();
    let law = ImLaw::Uniform { a0: 0.1, a1: 30.0 };
    let data = testbed::make_dataset(&spec, law, 500, 42).unwrap();
    let config = FitConfig::with_seed(42);
    let model = fit_heteroskedastic(&data, &config).unwrap();
    let mut ims: Vec<f64> = data.points().iter().map(|p| p.im).collect();
    ims.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median_im = ims[ims.len() / 2];
    let fitted = model.nugget().sd_at(median_im);
    let truth = spec.noise_sd(median_im);
    assert!(
        (fitted - truth).abs() / truth <= 0.30,
        "phi at median IM {median_im:.2}: fitted {fitted:.3} vs truth {truth:.3}"
    );
}

#[test]
fn flat_noise_data_yields_flat_ramp() {
    let mut flat = 0;
    let mut details = Vec::new();
    for seed in 0..10 {
        let data = gp_draw_dataset(260, 100 + seed, 0.35);
        let config = FitConfig {
            restarts: 5,
            max_evals: 300,
            ..FitConfig::with_seed(seed)
        };
        let model = fit_heteroskedastic(&data, &config).unwrap();
        if let NuggetModel::Heteroskedastic { theta1, theta2, .. } = model.nugget() {
            let ims: Vec<f64> = data.points().iter().map(|p| p.im).collect();
            let range = ims.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                - ims.iter().cloned().fold(f64::INFINITY, f64::min);
            details.push((theta1 * range, *theta2));
            if (theta1 * range).abs() < *theta2 {
                flat += 1;
            }
        }
    }
    assert!(flat >= 8, "ramp flat in {flat}/10 fits: {details:?}");
}

#[test]
fn noiseless_data_pins_ramp_at_floor() {
    let data = gp_draw_dataset(120, 77, 0.0);
    let sd_y = data.response_sd();
    let config = FitConfig {
        restarts: 5,
        max_evals: 400,
        ..FitConfig::with_seed(7)
    };
    let model = fit_heteroskedastic(&data, &config).unwrap();
    // the fitted noise level collapses to the configured floor
    // (1e-4 sd(y)) over the whole IM range, within optimizer slack
    let floor = 1e-4 * sd_y;
    let ims: Vec<f64> = data.points().iter().map(|p| p.im).collect();
    let max_phi = ims
        .iter()
        .map(|&a| model.nugget().sd_at(a))
        .fold(0.0f64, f64::max);
    assert!(
        max_phi <= 40.0 * floor,
        "max fitted phi {max_phi:.2e} vs floor {floor:.2e}"
    );
}
