//! Global sensitivity analysis of fragility curves: aggregated Sobol
//! indices and MMD-based beta-k indices, estimated by pick-freeze on
//! curve values, with posterior-draw and bootstrap replication.

mod betak;
mod posterior;
mod sobol;

pub use betak::{bandwidth_heuristic, bandwidth_heuristic_matrix, betak, mmd2};
pub use posterior::{aggregated_sobol_posterior, betak_posterior, GsaConfig};
pub use sobol::aggregated_sobol;

use crate::error::{Error, Result};
use crate::fragility::{FragilityCurve, ImGrid};
use crate::rng;
use crate::stats;
use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Marginal input distribution for design sampling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law")]
pub enum InputMarginal {
    Uniform { lo: f64, hi: f64 },
}

impl InputMarginal {
    /// Uniform marginal from a mean and coefficient of variation:
    /// support [mu(1 - c sqrt3), mu(1 + c sqrt3)].
    pub fn uniform_mean_cov(mean: f64, cov: f64) -> Result<Self> {
        if !(mean.is_finite() && cov.is_finite() && cov >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "invalid uniform spec: mean {mean}, cov {cov}"
            )));
        }
        let half = cov * 3f64.sqrt() * mean.abs();
        let (lo, hi) = (mean - half, mean + half);
        if !(lo <= hi) {
            return Err(Error::InvalidInput("unordered uniform bounds".into()));
        }
        Ok(Self::Uniform { lo, hi })
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Uniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                    return Err(Error::InvalidInput(format!(
                        "invalid uniform bounds [{lo}, {hi}]"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        match self {
            Self::Uniform { lo, hi } => 0.5 * (lo + hi),
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            Self::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
        }
    }
}

/// Paired independent samples (X_j) and (X~_j) with per-variable frozen
/// recombinations.
#[derive(Debug, Clone)]
pub struct PickFreezeDesign {
    base: Array2<f64>,
    copy: Array2<f64>,
}

impl PickFreezeDesign {
    pub fn new(base: Array2<f64>, copy: Array2<f64>) -> Result<Self> {
        if base.dim() != copy.dim() {
            return Err(Error::DimensionMismatch {
                what: "pick-freeze base vs copy",
                expected: base.nrows(),
                got: copy.nrows(),
            });
        }
        if base.nrows() < 2 {
            return Err(Error::InvalidInput("pick-freeze needs m >= 2".into()));
        }
        Ok(Self { base, copy })
    }

    /// Draw 2m iid samples from the product distribution, split into the
    /// base sample and its independent copy.
    pub fn sample(m: usize, dists: &[InputMarginal], seed: u64) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidInput("pick-freeze needs m >= 2".into()));
        }
        for d in dists {
            d.validate()?;
        }
        let d = dists.len();
        let mut base = Array2::<f64>::zeros((m, d));
        let mut copy = Array2::<f64>::zeros((m, d));
        let mut rng_base = rng::stream(seed, "design", 0);
        let mut rng_copy = rng::stream(seed, "design", 1);
        for j in 0..m {
            for (k, dist) in dists.iter().enumerate() {
                base[[j, k]] = dist.sample(&mut rng_base);
                copy[[j, k]] = dist.sample(&mut rng_copy);
            }
        }
        Self::new(base, copy)
    }

    pub fn m(&self) -> usize {
        self.base.nrows()
    }

    pub fn d(&self) -> usize {
        self.base.ncols()
    }

    pub fn base(&self) -> &Array2<f64> {
        &self.base
    }

    pub fn copy(&self) -> &Array2<f64> {
        &self.copy
    }

    /// Copy sample with coordinate i taken from the base: agrees with the
    /// base on coordinate i and with the copy elsewhere.
    pub fn frozen(&self, i: usize) -> Array2<f64> {
        let mut f = self.copy.clone();
        f.column_mut(i).assign(&self.base.column(i));
        f
    }

    /// Base sample with coordinate i replaced from the copy.
    pub fn complement(&self, i: usize) -> Array2<f64> {
        let mut f = self.base.clone();
        f.column_mut(i).assign(&self.copy.column(i));
        f
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IndexKind {
    SobolFirst,
    SobolTotal,
    BetaKFirst,
    BetaKTotal,
}

impl IndexKind {
    pub fn label(&self) -> &'static str {
        match self {
            IndexKind::SobolFirst => "sobol_first",
            IndexKind::SobolTotal => "sobol_total",
            IndexKind::BetaKFirst => "betak_first",
            IndexKind::BetaKTotal => "betak_total",
        }
    }
}

/// Estimates for one index kind over all inputs, with optional
/// posterior/bootstrap replicates and the variance split.
#[derive(Debug, Clone)]
pub struct SensitivityResult {
    pub kind: IndexKind,
    /// Point estimate per input (not clamped; small negative values are
    /// reported as-is).
    pub point_estimate: Vec<f64>,
    /// Replicates per input: a P x B matrix (empty for point-only runs).
    /// Dropped replicates hold NaN.
    pub replicates: Vec<Array2<f64>>,
    /// Metamodel sd per input: mean over b of the variance over p.
    pub sigma_gp: Vec<f64>,
    /// Monte-Carlo sd per input: mean over p of the variance over b.
    pub sigma_mc: Vec<f64>,
    /// Number of dropped (degenerate-denominator) replicates per input.
    pub dropped_replicates: Vec<usize>,
}

impl SensitivityResult {
    pub fn point_only(kind: IndexKind, point_estimate: Vec<f64>) -> Self {
        let d = point_estimate.len();
        Self {
            kind,
            point_estimate,
            replicates: vec![Array2::zeros((0, 0)); d],
            sigma_gp: vec![0.0; d],
            sigma_mc: vec![0.0; d],
            dropped_replicates: vec![0; d],
        }
    }

    /// Empirical quantile of the replicate cloud for one input, ignoring
    /// dropped cells.
    pub fn replicate_quantile(&self, input: usize, gamma: f64) -> Option<f64> {
        let reps = &self.replicates[input];
        let vals: Vec<f64> = reps.iter().copied().filter(|v| v.is_finite()).collect();
        if vals.is_empty() {
            None
        } else {
            Some(stats::lower_quantile(&vals, gamma))
        }
    }
}

/// Populate the variance split from a replicate matrix (P x B): the
/// metamodel part averages the variance across posterior draws at fixed
/// bootstrap redraw, the Monte-Carlo part the converse.
pub(crate) fn variance_split(reps: &Array2<f64>) -> (f64, f64) {
    let p = reps.nrows();
    let b = reps.ncols();
    let mut var_gp = 0.0;
    if p > 1 {
        let mut used = 0usize;
        for bi in 0..b {
            let col: Vec<f64> = reps.column(bi).iter().copied().filter(|v| v.is_finite()).collect();
            if col.len() > 1 {
                var_gp += stats::variance(&col);
                used += 1;
            }
        }
        var_gp = if used > 0 { var_gp / used as f64 } else { 0.0 };
    }
    let mut var_mc = 0.0;
    if b > 1 {
        let mut used = 0usize;
        for pi in 0..p {
            let row: Vec<f64> = reps.row(pi).iter().copied().filter(|v| v.is_finite()).collect();
            if row.len() > 1 {
                var_mc += stats::variance(&row);
                used += 1;
            }
        }
        var_mc = if used > 0 { var_mc / used as f64 } else { 0.0 };
    }
    (var_gp.sqrt(), var_mc.sqrt())
}

/// Gaussian kernel on curves with the squared L2 semi-metric.
#[derive(Debug, Clone)]
pub struct CurveKernel {
    pub bandwidth: f64,
    pub grid: ImGrid,
    weights: Vec<f64>,
}

impl CurveKernel {
    pub fn new(bandwidth: f64, grid: ImGrid) -> Result<Self> {
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "kernel bandwidth must be positive, got {bandwidth}"
            )));
        }
        let weights = grid.trapezoid_weights();
        Ok(Self {
            bandwidth,
            grid,
            weights,
        })
    }

    pub(crate) fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// k(c1, c2) = exp(-||c1 - c2||^2_{L2} / (2 l^2)) on value slices.
    pub fn eval_slices(&self, c1: &[f64], c2: &[f64]) -> f64 {
        let d2 = l2_sq_weighted(c1, c2, &self.weights);
        (-d2 / (2.0 * self.bandwidth * self.bandwidth)).exp()
    }

    pub fn eval(&self, c1: &FragilityCurve, c2: &FragilityCurve) -> Result<f64> {
        if c1.grid != self.grid || c2.grid != self.grid {
            return Err(Error::GridMismatch("curve grids differ from kernel grid".into()));
        }
        Ok(self.eval_slices(&c1.probabilities, &c2.probabilities))
    }
}

pub(crate) fn l2_sq_weighted(c1: &[f64], c2: &[f64], w: &[f64]) -> f64 {
    let mut acc = 0.0;
    for ((a, b), wt) in c1.iter().zip(c2).zip(w) {
        let d = a - b;
        acc += wt * d * d;
    }
    acc
}

/// Squared L2 distance between two curves by trapezoid quadrature over
/// their (shared) grid.
pub fn l2_distance_sq(c1: &FragilityCurve, c2: &FragilityCurve) -> Result<f64> {
    if c1.grid != c2.grid {
        return Err(Error::GridMismatch("curves live on different grids".into()));
    }
    let w = c1.grid.trapezoid_weights();
    Ok(l2_sq_weighted(&c1.probabilities, &c2.probabilities, &w))
}
