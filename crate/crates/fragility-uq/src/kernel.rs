//! Matérn 5/2 covariance and Gram-matrix assembly.
//!
//! The covariance is tensorized and anisotropic: one lengthscale per
//! input dimension (the IM plus each mechanical parameter), one global
//! intensity. Inputs are expected in standardized units (see
//! [`crate::gp::Standardizer`]); lengthscales live in those units.

use crate::error::{Error, Result};
use crate::linalg;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

pub const SQRT5: f64 = 2.23606797749979;

/// Kernel hyperparameters: intensity sigma and per-dimension lengthscales.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelParams {
    pub intensity: f64,
    pub lengthscales: Vec<f64>,
}

impl KernelParams {
    pub fn new(intensity: f64, lengthscales: Vec<f64>) -> Result<Self> {
        if !(intensity > 0.0 && intensity.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "kernel intensity must be positive, got {intensity}"
            )));
        }
        if lengthscales.is_empty() || lengthscales.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(Error::InvalidInput(
                "every lengthscale must be positive and finite".into(),
            ));
        }
        Ok(Self {
            intensity,
            lengthscales,
        })
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }
}

/// One input location: intensity measure plus mechanical parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputPoint {
    pub im: f64,
    pub params: Vec<f64>,
}

impl InputPoint {
    pub fn new(im: f64, params: Vec<f64>) -> Result<Self> {
        if !(im > 0.0 && im.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "intensity measure must be positive, got {im}"
            )));
        }
        Ok(Self { im, params })
    }

    /// Total input dimension (IM counts as dimension 0).
    pub fn dim(&self) -> usize {
        1 + self.params.len()
    }

    #[inline]
    pub fn coord(&self, k: usize) -> f64 {
        if k == 0 {
            self.im
        } else {
            self.params[k - 1]
        }
    }
}

/// Matérn 5/2 correlation factor for a nonnegative scaled distance h.
#[inline]
pub fn matern52_corr(h: f64) -> f64 {
    let s = SQRT5 * h;
    (1.0 + s + 5.0 / 3.0 * h * h) * (-s).exp()
}

/// Tensorized Matérn 5/2 correlation between coordinate slices, with
/// precomputed inverse lengthscales. Folds the per-dimension exponentials
/// into a single `exp` call; this is the hot kernel of likelihood
/// evaluation and batched prediction.
#[inline]
pub fn matern52_corr_slice(u: &[f64], v: &[f64], inv_lengthscales: &[f64]) -> f64 {
    debug_assert_eq!(u.len(), inv_lengthscales.len());
    debug_assert_eq!(v.len(), inv_lengthscales.len());
    let mut poly = 1.0;
    let mut expo = 0.0;
    for k in 0..inv_lengthscales.len() {
        let h = (u[k] - v[k]).abs() * inv_lengthscales[k];
        let s = SQRT5 * h;
        poly *= 1.0 + s + 5.0 / 3.0 * h * h;
        expo += s;
    }
    poly * (-expo).exp()
}

/// Gram matrix over standardized coordinate rows (row-major n x dim),
/// K_ij = sigma^2 corr + (nugget_i + jitter) 1{i=j}.
pub fn cov_matrix_rows(
    rows: ndarray::ArrayView2<'_, f64>,
    params: &KernelParams,
    nugget_variances: &[f64],
    jitter: f64,
) -> Array2<f64> {
    let n = rows.nrows();
    assert_eq!(nugget_variances.len(), n);
    assert_eq!(rows.ncols(), params.dim());
    let sigma2 = params.intensity * params.intensity;
    let inv_ls: Vec<f64> = params.lengthscales.iter().map(|l| 1.0 / l).collect();
    let data = rows.as_slice().expect("contiguous rows");
    let dim = params.dim();
    let mut k = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        let ri = &data[i * dim..(i + 1) * dim];
        for j in 0..i {
            let rj = &data[j * dim..(j + 1) * dim];
            let v = sigma2 * matern52_corr_slice(ri, rj, &inv_ls);
            k[[i, j]] = v;
            k[[j, i]] = v;
        }
        k[[i, i]] = sigma2 + nugget_variances[i] + jitter;
    }
    k
}

/// Factor a Gram matrix over standardized rows with the jitter ladder.
pub fn factor_cov_rows(
    rows: ndarray::ArrayView2<'_, f64>,
    params: &KernelParams,
    nugget_variances: &[f64],
) -> Result<(Array2<f64>, f64)> {
    let sigma2 = params.intensity * params.intensity;
    let mut jitter = JITTER_START_REL * sigma2;
    let max = JITTER_MAX_REL * sigma2;
    loop {
        let mut k = cov_matrix_rows(rows, params, nugget_variances, jitter);
        if linalg::cholesky_in_place(&mut k).is_ok() {
            return Ok((k, jitter));
        }
        if jitter >= max {
            return Err(Error::FactorizationFailed { jitter });
        }
        jitter = (jitter * 10.0).min(max);
    }
}

/// Cross-correlation matrix between two sets of standardized rows
/// (no intensity factor).
pub fn cross_corr(
    a: ndarray::ArrayView2<'_, f64>,
    b: ndarray::ArrayView2<'_, f64>,
    inv_lengthscales: &[f64],
) -> Array2<f64> {
    assert_eq!(a.ncols(), b.ncols());
    let dim = a.ncols();
    let ad = a.as_slice().expect("contiguous rows");
    let bd = b.as_slice().expect("contiguous rows");
    let mut out = Array2::<f64>::zeros((a.nrows(), b.nrows()));
    let od = out.as_slice_mut().unwrap();
    let nb = b.nrows();
    for i in 0..a.nrows() {
        let ri = &ad[i * dim..(i + 1) * dim];
        let row = &mut od[i * nb..(i + 1) * nb];
        for (j, slot) in row.iter_mut().enumerate() {
            let rj = &bd[j * dim..(j + 1) * dim];
            *slot = matern52_corr_slice(ri, rj, inv_lengthscales);
        }
    }
    out
}

/// Tensorized anisotropic Matérn 5/2 covariance between two points.
pub fn matern52(u: &InputPoint, v: &InputPoint, params: &KernelParams) -> Result<f64> {
    if u.dim() != params.dim() {
        return Err(Error::DimensionMismatch {
            what: "kernel input u vs lengthscales",
            expected: params.dim(),
            got: u.dim(),
        });
    }
    if v.dim() != params.dim() {
        return Err(Error::DimensionMismatch {
            what: "kernel input v vs lengthscales",
            expected: params.dim(),
            got: v.dim(),
        });
    }
    let mut corr = 1.0;
    for (k, rho) in params.lengthscales.iter().enumerate() {
        let h = (u.coord(k) - v.coord(k)).abs() / rho;
        corr *= matern52_corr(h);
    }
    Ok(params.intensity * params.intensity * corr)
}

/// Assemble the Gram matrix K_ij = k(p_i, p_j) + (nugget_i + jitter) 1{i=j}.
///
/// The result is exactly symmetric (the upper triangle is mirrored, not
/// recomputed).
pub fn cov_matrix(
    points: &[InputPoint],
    params: &KernelParams,
    nugget_variances: &[f64],
    jitter: f64,
) -> Result<Array2<f64>> {
    let n = points.len();
    if nugget_variances.len() != n {
        return Err(Error::DimensionMismatch {
            what: "nugget variances vs points",
            expected: n,
            got: nugget_variances.len(),
        });
    }
    let sigma2 = params.intensity * params.intensity;
    let mut k = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..i {
            let v = matern52(&points[i], &points[j], params)?;
            k[[i, j]] = v;
            k[[j, i]] = v;
        }
        k[[i, i]] = sigma2 + nugget_variances[i] + jitter;
    }
    Ok(k)
}

/// Jitter escalation ladder: relative levels applied as `level * sigma^2`.
pub const JITTER_START_REL: f64 = 1e-10;
pub const JITTER_MAX_REL: f64 = 1e-4;

/// Assemble the Gram matrix and factor it, escalating jitter tenfold from
/// `1e-10 sigma^2` up to `1e-4 sigma^2` before giving up. Returns the
/// factor together with the jitter that succeeded.
pub fn factor_cov_matrix(
    points: &[InputPoint],
    params: &KernelParams,
    nugget_variances: &[f64],
) -> Result<(Array2<f64>, f64)> {
    let sigma2 = params.intensity * params.intensity;
    let mut jitter = JITTER_START_REL * sigma2;
    let max = JITTER_MAX_REL * sigma2;
    loop {
        let mut k = cov_matrix(points, params, nugget_variances, jitter)?;
        if linalg::cholesky_in_place(&mut k).is_ok() {
            return Ok((k, jitter));
        }
        if jitter >= max {
            return Err(Error::FactorizationFailed { jitter });
        }
        jitter = (jitter * 10.0).min(max);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn pt(coords: &[f64]) -> InputPoint {
        InputPoint {
            im: coords[0],
            params: coords[1..].to_vec(),
        }
    }

    #[test]
    fn self_covariance_is_sigma_squared() {
        let p = pt(&[1.0, 2.0, 3.0]);
        let params = KernelParams::new(2.0, vec![1.0, 1.0, 1.0]).unwrap();
        assert_abs_diff_eq!(matern52(&p, &p, &params).unwrap(), 4.0, epsilon = 1e-15);
    }

    #[test]
    fn one_dimensional_closed_form() {
        // (1 + sqrt5 + 5/3) exp(-sqrt5) at unit distance and lengthscale
        let expected = (1.0 + SQRT5 + 5.0 / 3.0) * (-SQRT5).exp();
        let params = KernelParams::new(1.0, vec![1.0]).unwrap();
        let u = pt(&[1.0]);
        let v = pt(&[2.0]);
        let got = matern52(&u, &v, &params).unwrap();
        assert_abs_diff_eq!(got, expected, epsilon = 1e-15);
        assert_abs_diff_eq!(got, 0.5240, epsilon = 5e-5);
    }

    #[test]
    fn far_field_decays_below_1e20() {
        let params = KernelParams::new(1.0, vec![1.0]).unwrap();
        let u = pt(&[1.0]);
        let v = pt(&[51.0]); // h = 50
        assert!(matern52(&u, &v, &params).unwrap() < 1e-20);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let params = KernelParams::new(1.0, vec![1.0, 1.0]).unwrap();
        let u = pt(&[1.0]);
        let v = pt(&[1.0, 2.0]);
        match matern52(&u, &v, &params) {
            Err(Error::DimensionMismatch { expected, got, .. }) => {
                assert_eq!((expected, got), (2, 1));
            }
            other => panic!("expected dimension mismatch, got {other:?}"),
        }
    }

    #[test]
    fn single_point_matrix() {
        let params = KernelParams::new(1.0, vec![1.0]).unwrap();
        let k = cov_matrix(&[pt(&[1.0])], &params, &[0.0], 0.0).unwrap();
        assert_eq!(k[[0, 0]], 1.0);
    }

    #[test]
    fn duplicate_points_resolved_by_jitter() {
        let params = KernelParams::new(1.0, vec![1.0]).unwrap();
        let pts = vec![pt(&[1.0]), pt(&[1.0])];
        let k = cov_matrix(&pts, &params, &[0.0, 0.0], 1e-8).unwrap();
        assert_abs_diff_eq!(k[[0, 0]], 1.0 + 1e-8, epsilon = 1e-18);
        assert_abs_diff_eq!(k[[0, 1]], 1.0, epsilon = 1e-18);
        let mut l = k.clone();
        assert!(linalg::cholesky_in_place(&mut l).is_ok());
    }

    #[test]
    fn matrix_matches_elementwise_oracle() {
        use rand::Rng;
        let mut rng = crate::rng::stream(7, "kernel-test", 0);
        let pts: Vec<InputPoint> = (0..3)
            .map(|_| pt(&[rng.random::<f64>() + 0.1, rng.random::<f64>()]))
            .collect();
        let params = KernelParams::new(1.3, vec![0.7, 0.4]).unwrap();
        let nug = [0.1, 0.2, 0.3];
        let k = cov_matrix(&pts, &params, &nug, 0.0).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let mut expected = matern52(&pts[i], &pts[j], &params).unwrap();
                if i == j {
                    expected += nug[i];
                }
                assert_eq!(k[[i, j]], expected, "entry ({i},{j})");
            }
        }
    }

    #[test]
    fn jitter_escalation_factors_clustered_design() {
        let params = KernelParams::new(2.0, vec![0.5]).unwrap();
        // 30 near-duplicate points, numerically rank deficient without jitter
        let pts: Vec<InputPoint> = (0..30).map(|i| pt(&[1.0 + 1e-13 * i as f64])).collect();
        let nug = vec![0.0; 30];
        let (l, jitter) = factor_cov_matrix(&pts, &params, &nug).unwrap();
        assert!(jitter >= JITTER_START_REL * 4.0);
        assert!(jitter <= JITTER_MAX_REL * 4.0);
        assert_eq!(l.nrows(), 30);
    }

    proptest! {
        #[test]
        fn symmetry_is_bit_exact(seed in 0u64..200) {
            use rand::Rng;
            let mut rng = crate::rng::stream(seed, "kernel-sym", 0);
            let n = 1 + (rng.random::<f64>() * 8.0) as usize;
            let pts: Vec<InputPoint> = (0..n)
                .map(|_| pt(&[rng.random::<f64>() + 0.05, rng.random::<f64>(), rng.random::<f64>()]))
                .collect();
            let params = KernelParams::new(1.0 + rng.random::<f64>(),
                vec![0.2 + rng.random::<f64>(), 0.2 + rng.random::<f64>(), 0.2 + rng.random::<f64>()]).unwrap();
            let nug: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 0.1).collect();
            let k = cov_matrix(&pts, &params, &nug, 1e-9).unwrap();
            for i in 0..n {
                for j in 0..n {
                    prop_assert_eq!(k[[i, j]], k[[j, i]]);
                }
            }
        }

        #[test]
        fn stationarity_under_translation(offset in -5.0f64..5.0, d in 0.01f64..3.0) {
            let params = KernelParams::new(1.5, vec![0.8, 1.2]).unwrap();
            let u = pt(&[1.0, 0.3]);
            let v = pt(&[1.0 + d, 0.3 - d]);
            let us = pt(&[1.0 + offset, 0.3 + offset]);
            let vs = pt(&[1.0 + d + offset, 0.3 - d + offset]);
            let a = matern52(&u, &v, &params).unwrap();
            let b = matern52(&us, &vs, &params).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }

        #[test]
        fn correlation_non_increasing_in_h(h in 0.0f64..20.0, dh in 0.0f64..1.0) {
            prop_assert!(matern52_corr(h + dh) <= matern52_corr(h) + 1e-15);
        }

        #[test]
        fn random_designs_stay_psd(seed in 0u64..50) {
            use rand::Rng;
            let mut rng = crate::rng::stream(seed, "kernel-psd", 0);
            let n = 2 + (rng.random::<f64>() * 48.0) as usize;
            let pts: Vec<InputPoint> = (0..n)
                .map(|_| pt(&[rng.random::<f64>() + 0.01, rng.random::<f64>()]))
                .collect();
            let sigma: f64 = 0.5 + rng.random::<f64>();
            let params = KernelParams::new(sigma, vec![0.3, 0.3]).unwrap();
            let nug = vec![0.0; n];
            let mut k = cov_matrix(&pts, &params, &nug, 1e-10 * sigma * sigma).unwrap();
            prop_assert!(linalg::cholesky_in_place(&mut k).is_ok());
        }
    }
}
