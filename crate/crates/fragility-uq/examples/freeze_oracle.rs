// Regenerates the frozen double-loop reference values used by the
// acceptance suite (run: cargo run --release -p fragility-uq --example
// freeze_oracle). Also prints the interaction-contrast diagnostics used
// to choose the benchmark's interaction strength.

use fragility_uq::fragility::ImGrid;
use fragility_uq::gsa::{
    aggregated_sobol, bandwidth_heuristic_matrix, betak, CurveKernel, PickFreezeDesign,
};
use fragility_uq::testbed::{
    self, additive_interaction_spec, additive_linear_spec, oracle_aggregated_sobol,
};
use ndarray::Array2;
use std::time::Instant;

fn pickfreeze_exact(
    spec: &fragility_uq::testbed::SyntheticModelSpec,
    grid: &ImGrid,
    m: usize,
    seed: u64,
) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
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
    let (s_first, s_total) = aggregated_sobol(grid, base.view(), &fv, &cv).unwrap();
    let bw = bandwidth_heuristic_matrix(grid, base.view()).unwrap();
    let kernel = CurveKernel::new(bw, grid.clone()).unwrap();
    let (b_first, b_total) = betak(grid, base.view(), copy.view(), &fv, &cv, &kernel).unwrap();
    (
        s_first.point_estimate,
        s_total.point_estimate,
        b_first.point_estimate,
        b_total.point_estimate,
    )
}

fn main() {
    let grid = ImGrid::regular(0.1, 25.0, 25).unwrap();
    let spec = additive_linear_spec();

    let t0 = Instant::now();
    let (exact_first, exact_total) = testbed::linear_sobol_quadrature(&spec, &grid).unwrap();
    println!("quadrature oracle took {:.1}s", t0.elapsed().as_secs_f64());
    println!("EXACT FIRST: {exact_first:?}");
    println!("EXACT TOTAL: {exact_total:?}");
    println!("sum S exact: {:.4}", exact_first.iter().sum::<f64>());

    let t0 = Instant::now();
    let oracle = oracle_aggregated_sobol(&spec, &grid, 2000, 2000, 2024).unwrap();
    println!("double-loop MC oracle took {:.0}s", t0.elapsed().as_secs_f64());
    println!("mc first: {:?}", oracle.first);
    println!("  first SE: {:?}", oracle.first_se);
    println!("mc total: {:?}", oracle.total);
    println!("  total SE: {:?}", oracle.total_se);

    // cross-check with independent pick-freeze runs at the criterion size
    for seed in [11u64, 40, 41, 42, 43, 44, 45, 140, 1040, 2040] {
        let (s, t, _, _) = pickfreeze_exact(&spec, &grid, 20_000, seed);
        let gap = s
            .iter()
            .zip(&exact_first)
            .chain(t.iter().zip(&exact_total))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        let sum_s: f64 = s.iter().sum();
        println!("pick-freeze m=20k seed {seed}: max|est-exact| {gap:.4}, sum S {sum_s:.3}");
    }

    // interaction contrast diagnostics for candidate kappa values
    for kappa in [0.2] {
        let ispec = additive_interaction_spec(kappa);
        let (s, t, bf, bt) = pickfreeze_exact(&ispec, &grid, 60_000, 5);
        println!("kappa {kappa}:");
        for i in 0..2 {
            println!(
                "  input {}: sobol gap {:+.4} (S {:.3} T {:.3}), beta gap {:+.4} (b {:.3} B {:.3})",
                i + 1,
                t[i] - s[i],
                s[i],
                t[i],
                bt[i] - bf[i],
                bf[i],
                bt[i]
            );
        }
    }
}
