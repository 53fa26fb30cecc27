// Scratch harness used during development to time fits and check
// surrogate quality; not part of the deliverable surface.

use fragility_uq::fragility::ImGrid;
use fragility_uq::gp::{fit_heteroskedastic, FitConfig};
use fragility_uq::testbed::{self, default_linear_spec, ImLaw};
use std::time::Instant;

fn main() {
    let spec = default_linear_spec();
    let law = ImLaw::Uniform { a0: 0.1, a1: 30.0 };
    let n = 500;
    let data = testbed::make_dataset(&spec, law, n, 0).unwrap();
    println!("n = {}, sd(y) = {:.3}", data.n(), data.response_sd());

    let t0 = Instant::now();
    let config = FitConfig::with_seed(0);
    let model = fit_heteroskedastic(&data, &config).unwrap();
    println!("fit took {:.1}s", t0.elapsed().as_secs_f64());
    let info = model.fit_info.as_ref().unwrap();
    println!(
        "objective {:.3}, evals {}, finals {:?}",
        info.best_objective, info.evaluations,
        info.final_objectives.iter().map(|v| (v * 10.0).round() / 10.0).collect::<Vec<_>>()
    );
    println!("kernel: {:?}", model.kernel_params());
    println!("nugget: {:?}  (truth ramp: 0.05 + 0.016 a, floor 0.10)", model.nugget());

    let t1 = Instant::now();
    let q2 = model.loo_q2(&data).unwrap();
    let alphas: Vec<f64> = (1..=9).map(|k| k as f64 / 10.0).collect();
    let cov = model.coverage_curve(&data, &alphas).unwrap();
    println!("loo took {:.2}s, Q2 = {:.4}", t1.elapsed().as_secs_f64(), q2);
    println!("coverage: {:?}", cov.iter().map(|v| (v * 1000.0).round() / 1000.0).collect::<Vec<_>>());

    // fitted phi vs truth at a few IMs
    for a in [1.0, 5.0, 10.0, 20.0] {
        println!(
            "phi({a:5.1}): fitted {:.3}, truth {:.3}",
            model.nugget().sd_at(a),
            spec.noise_sd(a)
        );
    }

    // mean-curve sup error vs oracle
    let grid = ImGrid::regular(0.1, 25.0, 50).unwrap();
    let oracle = testbed::mean_curve_oracle(&spec, &grid).unwrap();
    let xs = testbed::sample_inputs(&spec.dist, 3000, 7).unwrap();
    let t2 = Instant::now();
    let curves = fragility_uq::fragility::psi1_curves(&model, &grid, xs.view(), 1.0).unwrap();
    let mean = fragility_uq::fragility::mean_curve(&grid, curves.view()).unwrap();
    let sup = mean
        .probabilities
        .iter()
        .zip(&oracle)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    println!(
        "psi1_curves(50x3000) took {:.2}s, mean-curve sup err {:.4}",
        t2.elapsed().as_secs_f64(),
        sup
    );
}
