//! MMD-based beta-k indices on fragility curves.
//!
//! The kernel is Gaussian on the squared L2 distance between curves; the
//! pick-freeze estimators use the paired averaged forms (index j with
//! index j), so the denominator's first term is k(Psi_X, Psi_X) = 1.

use super::sobol::stable_mean;
use super::{CurveKernel, IndexKind, SensitivityResult};
use crate::error::{Error, Result};
use crate::fragility::{FragilityCurve, ImGrid};
use crate::stats;
use ndarray::ArrayView2;

/// Unbiased U-statistic estimate of MMD^2 between two curve samples:
/// within-sample terms exclude the diagonal, the cross term keeps all
/// pairs.
pub fn mmd2(
    sample_u: &[FragilityCurve],
    sample_v: &[FragilityCurve],
    kernel: &CurveKernel,
) -> Result<f64> {
    if sample_u.is_empty() || sample_v.is_empty() {
        return Err(Error::EmptySample("mmd2 sample".into()));
    }
    if sample_u.len() < 2 || sample_v.len() < 2 {
        return Err(Error::InvalidInput(
            "within-sample MMD term needs at least 2 curves".into(),
        ));
    }
    for c in sample_u.iter().chain(sample_v.iter()) {
        if c.grid != kernel.grid {
            return Err(Error::GridMismatch("curve grid differs from kernel grid".into()));
        }
    }
    let within = |s: &[FragilityCurve]| -> f64 {
        let n = s.len();
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    acc += kernel.eval_slices(&s[i].probabilities, &s[j].probabilities);
                }
            }
        }
        acc / (n * (n - 1)) as f64
    };
    let mut cross = 0.0;
    for u in sample_u {
        for v in sample_v {
            cross += kernel.eval_slices(&u.probabilities, &v.probabilities);
        }
    }
    cross /= (sample_u.len() * sample_v.len()) as f64;
    Ok(within(sample_u) + within(sample_v) - 2.0 * cross)
}

/// First and total beta-k indices from curve values at the pick-freeze
/// blocks (all T x m on the kernel's grid).
pub fn betak(
    grid: &ImGrid,
    base: ArrayView2<'_, f64>,
    copy: ArrayView2<'_, f64>,
    frozen: &[ArrayView2<'_, f64>],
    complement: &[ArrayView2<'_, f64>],
    kernel: &CurveKernel,
) -> Result<(SensitivityResult, SensitivityResult)> {
    let t = grid.len();
    let m = base.ncols();
    if m < 2 {
        return Err(Error::InvalidInput("beta-k needs m >= 2".into()));
    }
    if *grid != kernel.grid {
        return Err(Error::GridMismatch("kernel grid differs from curve grid".into()));
    }
    for block in [&base, &copy]
        .into_iter()
        .chain(frozen.iter())
        .chain(complement.iter())
    {
        if block.nrows() != t || block.ncols() != m {
            return Err(Error::GridMismatch(
                "pick-freeze blocks must share the grid and sample size".into(),
            ));
        }
    }
    let d = frozen.len();
    let ell2 = 2.0 * kernel.bandwidth * kernel.bandwidth;
    let w = kernel.weights();

    let col_kernel = |a: &ArrayView2<'_, f64>, b: &ArrayView2<'_, f64>, j: usize| -> f64 {
        let mut acc = 0.0;
        for ti in 0..t {
            let diff = a[[ti, j]] - b[[ti, j]];
            acc += w[ti] * diff * diff;
        }
        (-acc / ell2).exp()
    };

    let mut k0: Vec<f64> = (0..m).map(|j| col_kernel(&base, &copy, j)).collect();
    let mean_k0 = stable_mean(&mut k0);
    let den = 1.0 - mean_k0;
    if den <= 1e-12 {
        return Err(Error::NonInformativeOutput);
    }

    let mut first = vec![0.0; d];
    let mut total = vec![0.0; d];
    for i in 0..d {
        let mut ki: Vec<f64> = (0..m).map(|j| col_kernel(&base, &frozen[i], j)).collect();
        let mut kc: Vec<f64> = (0..m).map(|j| col_kernel(&base, &complement[i], j)).collect();
        first[i] = (stable_mean(&mut ki) - mean_k0) / den;
        total[i] = 1.0 - (stable_mean(&mut kc) - mean_k0) / den;
    }
    Ok((
        SensitivityResult::point_only(IndexKind::BetaKFirst, first),
        SensitivityResult::point_only(IndexKind::BetaKTotal, total),
    ))
}

/// Median heuristic for the curve-kernel bandwidth: the median pairwise
/// L2 distance over a deterministic subsample of min(500, m) curves,
/// divided by sqrt(2).
pub fn bandwidth_heuristic(curves: &[FragilityCurve]) -> Result<f64> {
    if curves.len() < 2 {
        return Err(Error::InvalidInput(
            "bandwidth heuristic needs at least 2 curves".into(),
        ));
    }
    let grid = &curves[0].grid;
    for c in curves {
        if c.grid != *grid {
            return Err(Error::GridMismatch("curves live on different grids".into()));
        }
    }
    let m = curves.len();
    let t = grid.len();
    let mut values = ndarray::Array2::<f64>::zeros((t, m));
    for (j, c) in curves.iter().enumerate() {
        for ti in 0..t {
            values[[ti, j]] = c.probabilities[ti];
        }
    }
    bandwidth_heuristic_matrix(grid, values.view())
}

/// Matrix form of [`bandwidth_heuristic`] on T x m curve values.
pub fn bandwidth_heuristic_matrix(grid: &ImGrid, values: ArrayView2<'_, f64>) -> Result<f64> {
    let m = values.ncols();
    if m < 2 {
        return Err(Error::InvalidInput(
            "bandwidth heuristic needs at least 2 curves".into(),
        ));
    }
    let w = grid.trapezoid_weights();
    let s = 500.min(m);
    // evenly spaced deterministic subsample
    let idx: Vec<usize> = (0..s).map(|k| k * m / s).collect();
    let t = values.nrows();
    let mut dists = Vec::with_capacity(s * (s - 1) / 2);
    for a in 0..s {
        for b in 0..a {
            let (ja, jb) = (idx[a], idx[b]);
            let mut acc = 0.0;
            for ti in 0..t {
                let diff = values[[ti, ja]] - values[[ti, jb]];
                acc += w[ti] * diff * diff;
            }
            dists.push(acc.sqrt());
        }
    }
    if dists.iter().all(|d| *d == 0.0) {
        return Err(Error::DegenerateData("degenerate bandwidth: all curves identical".into()));
    }
    let med = stats::lower_quantile(&dists, 0.5);
    let ell = if med > 0.0 {
        med / std::f64::consts::SQRT_2
    } else {
        let min_pos = dists.iter().copied().filter(|d| *d > 0.0).fold(f64::INFINITY, f64::min);
        min_pos / std::f64::consts::SQRT_2
    };
    Ok(ell)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn grid() -> ImGrid {
        ImGrid::regular(1.0, 3.0, 9).unwrap()
    }

    fn const_curve(v: f64) -> FragilityCurve {
        FragilityCurve::new(grid(), vec![v; 9]).unwrap()
    }

    #[test]
    fn mmd_identical_samples_is_small_nonpositive() {
        let mut rng = crate::rng::stream(4, "mmd-test", 0);
        let sample: Vec<FragilityCurve> = (0..100)
            .map(|_| {
                let v: f64 = rng.random();
                const_curve(v)
            })
            .collect();
        let kernel = CurveKernel::new(0.5, grid()).unwrap();
        let v = mmd2(&sample, &sample, &kernel).unwrap();
        assert!(v <= 1e-12, "same-sample mmd2 {v}");
        assert!(v.abs() < 2.0 / (sample.len() as f64).sqrt());
    }

    #[test]
    fn mmd_two_point_masses_closed_form() {
        let u = vec![const_curve(0.0), const_curve(0.0), const_curve(0.0)];
        let v = vec![const_curve(1.0), const_curve(1.0)];
        let kernel = CurveKernel::new(0.8, grid()).unwrap();
        let k01 = kernel.eval(&u[0], &v[0]).unwrap();
        let got = mmd2(&u, &v, &kernel).unwrap();
        assert_abs_diff_eq!(got, 2.0 - 2.0 * k01, epsilon = 1e-14);
    }

    #[test]
    fn mmd_needs_two_curves_per_sample() {
        let u = vec![const_curve(0.2)];
        let v = vec![const_curve(0.4), const_curve(0.5)];
        let kernel = CurveKernel::new(0.8, grid()).unwrap();
        assert!(mmd2(&u, &v, &kernel).is_err());
    }

    #[test]
    fn mmd_gaussian_families_match_paired_reference() {
        // Constant curves with Gaussian-perturbed levels: the U-statistic
        // at moderate m is checked against a large paired-sample estimate
        // of each expectation.
        let ell = 0.6;
        let kernel = CurveKernel::new(ell, grid()).unwrap();
        let (mu1, s1) = (0.4, 0.05);
        let (mu2, s2) = (0.55, 0.08);
        let mut rng = crate::rng::stream(9, "mmd-gauss", 0);
        let mut normal = |mu: f64, s: f64| -> f64 {
            let z: f64 = rng.sample(rand_distr::StandardNormal);
            (mu + s * z).clamp(0.0, 1.0)
        };
        let m = 1500;
        let u: Vec<FragilityCurve> = (0..m).map(|_| const_curve(normal(mu1, s1))).collect();
        let v: Vec<FragilityCurve> = (0..m).map(|_| const_curve(normal(mu2, s2))).collect();
        let got = mmd2(&u, &v, &kernel).unwrap();

        // paired large-sample reference of E k(U,U') + E k(V,V') - 2 E k(U,V)
        let pairs = 100_000;
        let mut acc = 0.0;
        for _ in 0..pairs {
            let (a, b) = (const_curve(normal(mu1, s1)), const_curve(normal(mu1, s1)));
            let (c, d) = (const_curve(normal(mu2, s2)), const_curve(normal(mu2, s2)));
            acc += kernel.eval(&a, &b).unwrap() + kernel.eval(&c, &d).unwrap()
                - 2.0 * kernel.eval(&a, &d).unwrap();
        }
        let reference = acc / pairs as f64;
        assert!(
            (got - reference).abs() / reference.abs() < 0.10,
            "mmd2 {got} vs reference {reference}"
        );
    }

    #[test]
    fn bandwidth_single_pair_and_homogeneity() {
        let c1 = const_curve(0.2);
        let c2 = const_curve(0.6);
        let d = crate::gsa::l2_distance_sq(&c1, &c2).unwrap().sqrt();
        let ell = bandwidth_heuristic(&[c1.clone(), c2.clone()]).unwrap();
        assert_abs_diff_eq!(ell, d / std::f64::consts::SQRT_2, epsilon = 1e-14);

        // scaling all differences by lambda scales the bandwidth by lambda
        let lambda = 0.25; // keep values inside [0,1]
        let scale = |c: &FragilityCurve| {
            let base = 0.4;
            FragilityCurve::new(
                grid(),
                c.probabilities.iter().map(|v| base + lambda * (v - base)).collect(),
            )
            .unwrap()
        };
        let mut rng = crate::rng::stream(11, "bw-test", 0);
        let curves: Vec<FragilityCurve> = (0..40).map(|_| const_curve(rng.random())).collect();
        let scaled: Vec<FragilityCurve> = curves.iter().map(&scale).collect();
        let e1 = bandwidth_heuristic(&curves).unwrap();
        let e2 = bandwidth_heuristic(&scaled).unwrap();
        assert_abs_diff_eq!(e2, lambda * e1, epsilon = 1e-12);
    }

    #[test]
    fn bandwidth_rejects_identical_curves() {
        let curves = vec![const_curve(0.5); 10];
        match bandwidth_heuristic(&curves) {
            Err(Error::DegenerateData(msg)) => assert!(msg.contains("degenerate bandwidth")),
            other => panic!("expected degenerate bandwidth, got {other:?}"),
        }
    }

    #[test]
    fn bandwidth_subsample_close_to_full_median() {
        let mut rng = crate::rng::stream(13, "bw-sub", 0);
        let curves: Vec<FragilityCurve> = (0..1000).map(|_| const_curve(rng.random())).collect();
        let sub = bandwidth_heuristic(&curves).unwrap();
        // full pairwise median oracle
        let mut dists = Vec::new();
        for a in 0..curves.len() {
            for b in 0..a {
                dists.push(
                    crate::gsa::l2_distance_sq(&curves[a], &curves[b])
                        .unwrap()
                        .sqrt(),
                );
            }
        }
        let full = stats::lower_quantile(&dists, 0.5) / std::f64::consts::SQRT_2;
        assert!((sub - full).abs() / full < 0.10, "sub {sub} vs full {full}");
    }
}
