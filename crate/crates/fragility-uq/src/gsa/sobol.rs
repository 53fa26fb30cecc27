//! Aggregated Sobol indices by pick-freeze on curve values.
//!
//! The estimators are ratio forms: the numerator integrates empirical
//! covariances between curve values at the base sample and at the frozen
//! (first order) or complement (total order) recombinations over the IM
//! grid; the denominator integrates the empirical variance of the base
//! curve values. The grid integral uses trapezoid weights.

use super::{IndexKind, SensitivityResult};
use crate::error::{Error, Result};
use crate::fragility::ImGrid;
use ndarray::ArrayView2;

/// Order-invariant sum: accumulating in sorted order makes the point
/// estimators bit-identical under permutations of the sample index.
pub(crate) fn stable_mean(values: &mut [f64]) -> f64 {
    values.sort_unstable_by(f64::total_cmp);
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sufficient statistics of one pick-freeze block pair at one grid row:
/// permutation-invariant averages over the sample index.
fn row_stats(a: &[f64], b: &[f64], scratch: &mut Vec<f64>) -> (f64, f64, f64) {
    scratch.clear();
    scratch.extend_from_slice(a);
    let mu_a = stable_mean(scratch);
    scratch.clear();
    scratch.extend_from_slice(b);
    let mu_b = stable_mean(scratch);
    scratch.clear();
    scratch.extend(a.iter().zip(b).map(|(x, y)| x * y));
    let mu_ab = stable_mean(scratch);
    (mu_a, mu_b, mu_ab)
}

/// First and total aggregated Sobol indices from curve values on a shared
/// grid: `base` is T x m, `frozen[i]` and `complement[i]` are the T x m
/// curve values at the i-th recombinations.
pub fn aggregated_sobol(
    grid: &ImGrid,
    base: ArrayView2<'_, f64>,
    frozen: &[ArrayView2<'_, f64>],
    complement: &[ArrayView2<'_, f64>],
) -> Result<(SensitivityResult, SensitivityResult)> {
    let t = grid.len();
    let m = base.ncols();
    if base.nrows() != t {
        return Err(Error::GridMismatch(format!(
            "base curve rows {} vs grid {}",
            base.nrows(),
            t
        )));
    }
    if frozen.len() != complement.len() {
        return Err(Error::DimensionMismatch {
            what: "frozen vs complement block count",
            expected: frozen.len(),
            got: complement.len(),
        });
    }
    for block in frozen.iter().chain(complement.iter()) {
        if block.nrows() != t || block.ncols() != m {
            return Err(Error::GridMismatch(
                "pick-freeze blocks must share the grid and sample size".into(),
            ));
        }
    }
    let w = grid.trapezoid_weights();
    let mut scratch = Vec::with_capacity(m);

    let mut denom = 0.0;
    for ti in 0..t {
        let row = base.row(ti);
        let row = row.as_slice().unwrap();
        let (mu, _, sq) = row_stats(row, row, &mut scratch);
        denom += w[ti] * (sq - mu * mu);
    }
    if denom <= 1e-12 * (grid.a1() - grid.a0()) {
        return Err(Error::NonInformativeOutput);
    }

    let d = frozen.len();
    let mut first = vec![0.0; d];
    let mut total = vec![0.0; d];
    for i in 0..d {
        let mut num_first = 0.0;
        let mut num_total = 0.0;
        for ti in 0..t {
            let rb = base.row(ti);
            let rb = rb.as_slice().unwrap();
            let rf = frozen[i].row(ti);
            let rf = rf.as_slice().unwrap();
            let (mu_b, mu_f, cross_f) = row_stats(rb, rf, &mut scratch);
            num_first += w[ti] * (cross_f - mu_b * mu_f);
            let rc = complement[i].row(ti);
            let rc = rc.as_slice().unwrap();
            let (_, mu_c, cross_c) = row_stats(rb, rc, &mut scratch);
            num_total += w[ti] * (cross_c - mu_b * mu_c);
        }
        first[i] = num_first / denom;
        total[i] = 1.0 - num_total / denom;
    }
    Ok((
        SensitivityResult::point_only(IndexKind::SobolFirst, first),
        SensitivityResult::point_only(IndexKind::SobolTotal, total),
    ))
}
