//! Dense linear algebra on row-major `ndarray` matrices: Cholesky
//! factorization, triangular solves and SPD inverses sized for the
//! n <= 2000 training sets this crate targets.

use ndarray::Array2;

/// Unrolled dot product; the hot kernel of the factorization.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (mut s0, mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0, 0.0);
    let chunks = n / 4;
    for c in 0..chunks {
        let i = 4 * c;
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    let mut s = s0 + s1 + s2 + s3;
    for i in 4 * chunks..n {
        s += a[i] * b[i];
    }
    s
}

/// In-place lower Cholesky factorization. The strict upper triangle is
/// zeroed. Returns `Err(())` on a non-positive pivot.
pub fn cholesky_in_place(a: &mut Array2<f64>) -> Result<(), ()> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "cholesky needs a square matrix");
    let data = a.as_slice_mut().expect("contiguous row-major matrix");
    for i in 0..n {
        let (done, rest) = data.split_at_mut(i * n);
        let row_i = &mut rest[..n];
        for j in 0..i {
            let row_j = &done[j * n..j * n + n];
            let s = row_i[j] - dot(&row_i[..j], &row_j[..j]);
            row_i[j] = s / row_j[j];
        }
        let s = row_i[i] - dot(&row_i[..i], &row_i[..i]);
        if !(s.is_finite() && s > 0.0) {
            return Err(());
        }
        row_i[i] = s.sqrt();
        for v in row_i[i + 1..n].iter_mut() {
            *v = 0.0;
        }
    }
    Ok(())
}

/// Solve L y = b in place (forward substitution).
pub fn solve_lower(l: &Array2<f64>, b: &mut [f64]) {
    let n = l.nrows();
    assert_eq!(b.len(), n);
    let ld = l.as_slice().expect("contiguous");
    for i in 0..n {
        let row = &ld[i * n..i * n + i];
        let s = b[i] - dot(row, &b[..i]);
        b[i] = s / ld[i * n + i];
    }
}

/// Solve L^T x = b in place (backward substitution).
pub fn solve_lower_t(l: &Array2<f64>, b: &mut [f64]) {
    let n = l.nrows();
    assert_eq!(b.len(), n);
    let ld = l.as_slice().expect("contiguous");
    for i in (0..n).rev() {
        let mut s = b[i];
        for j in i + 1..n {
            s -= ld[j * n + i] * b[j];
        }
        b[i] = s / ld[i * n + i];
    }
}

/// Solve (L L^T) x = b in place.
pub fn solve_spd(l: &Array2<f64>, b: &mut [f64]) {
    solve_lower(l, b);
    solve_lower_t(l, b);
}

/// Solve L Y = B in place for a row-major (n x k) right-hand side.
/// Vectorizes across the k columns.
pub fn solve_lower_mat(l: &Array2<f64>, b: &mut Array2<f64>) {
    let n = l.nrows();
    assert_eq!(b.nrows(), n);
    let k = b.ncols();
    let ld = l.as_slice().expect("contiguous");
    let bd = b.as_slice_mut().expect("contiguous");
    for i in 0..n {
        let (done, rest) = bd.split_at_mut(i * k);
        let row_i = &mut rest[..k];
        for j in 0..i {
            let lij = ld[i * n + j];
            if lij != 0.0 {
                let row_j = &done[j * k..j * k + k];
                for (x, y) in row_i.iter_mut().zip(row_j) {
                    *x -= lij * y;
                }
            }
        }
        let inv = 1.0 / ld[i * n + i];
        for x in row_i.iter_mut() {
            *x *= inv;
        }
    }
}

/// log det(L L^T) = 2 sum ln L_ii.
pub fn log_det_from_chol(l: &Array2<f64>) -> f64 {
    (0..l.nrows()).map(|i| l[[i, i]].ln()).sum::<f64>() * 2.0
}

/// Inverse of the SPD matrix given its lower Cholesky factor:
/// (L L^T)^{-1} = L^{-T} L^{-1}.
pub fn spd_inverse_from_chol(l: &Array2<f64>) -> Array2<f64> {
    let n = l.nrows();
    let mut linv = Array2::<f64>::eye(n);
    solve_lower_mat(l, &mut linv);
    // K^{-1} = linv^T linv, accumulated over rows of linv to stay
    // cache-friendly in row-major layout.
    let mut kinv = Array2::<f64>::zeros((n, n));
    {
        let src = linv.as_slice().unwrap();
        let dst = kinv.as_slice_mut().unwrap();
        for r in 0..n {
            let row = &src[r * n..r * n + n];
            // linv is lower triangular: row r has support 0..=r.
            for i in 0..=r {
                let v = row[i];
                if v != 0.0 {
                    let out = &mut dst[i * n..i * n + n];
                    for j in 0..=r {
                        out[j] += v * row[j];
                    }
                }
            }
        }
    }
    kinv
}
