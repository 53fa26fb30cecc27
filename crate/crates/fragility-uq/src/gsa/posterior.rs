//! Posterior-draw and bootstrap replication of the pick-freeze indices.
//!
//! For each posterior draw p the latent field is sampled jointly over the
//! union design (base, copy, frozen and complement blocks crossed with
//! the IM grid), pushed through the noise cdf, and the index estimators
//! are re-evaluated on B bootstrap redraws of the sample index (shared
//! across draws). The replicate cloud yields the metamodel / Monte-Carlo
//! variance split.

use super::{
    variance_split, CurveKernel, IndexKind, PickFreezeDesign, SensitivityResult,
};
use crate::error::{Error, Result};
use crate::fragility::{psi1_curves, ImGrid};
use crate::gp::{GpModel, GridSampler, SampleConfig};
use crate::rng;
use ndarray::{s, Array2, ArrayView2};
use rand::Rng;
use rayon::prelude::*;

#[derive(Debug, Clone, Default)]
pub struct GsaConfig {
    /// Posterior draws P.
    pub p_draws: usize,
    /// Bootstrap redraws B.
    pub bootstrap: usize,
    pub sample: SampleConfig,
    /// Test hook: replace the bootstrap count matrix (m x B). Columns are
    /// multinomial counts summing to m.
    pub bootstrap_counts_override: Option<Array2<f64>>,
}

impl GsaConfig {
    pub fn new(p_draws: usize, bootstrap: usize) -> Self {
        Self {
            p_draws,
            bootstrap,
            sample: SampleConfig::default(),
            bootstrap_counts_override: None,
        }
    }
}

struct BlockLayout {
    m: usize,
    d: usize,
    with_copy: bool,
}

impl BlockLayout {
    fn n_blocks(&self) -> usize {
        (if self.with_copy { 2 } else { 1 }) + 2 * self.d
    }

    fn total(&self) -> usize {
        self.n_blocks() * self.m
    }

    fn base(&self) -> usize {
        0
    }

    fn copy(&self) -> usize {
        debug_assert!(self.with_copy);
        self.m
    }

    fn frozen(&self, i: usize) -> usize {
        (if self.with_copy { 2 } else { 1 }) * self.m + i * self.m
    }

    fn complement(&self, i: usize) -> usize {
        (if self.with_copy { 2 } else { 1 }) * self.m + (self.d + i) * self.m
    }
}

fn stacked_design(design: &PickFreezeDesign, with_copy: bool) -> (Array2<f64>, BlockLayout) {
    let m = design.m();
    let d = design.d();
    let layout = BlockLayout { m, d, with_copy };
    let mut rows = Array2::<f64>::zeros((layout.total(), d));
    rows.slice_mut(s![..m, ..]).assign(design.base());
    if with_copy {
        rows.slice_mut(s![m..2 * m, ..]).assign(design.copy());
    }
    for i in 0..d {
        let f = design.frozen(i);
        let c = design.complement(i);
        let fo = layout.frozen(i);
        let co = layout.complement(i);
        rows.slice_mut(s![fo..fo + m, ..]).assign(&f);
        rows.slice_mut(s![co..co + m, ..]).assign(&c);
    }
    (rows, layout)
}

fn block_view<'a>(field: &'a Array2<f64>, offset: usize, m: usize) -> ArrayView2<'a, f64> {
    field.slice(s![.., offset..offset + m])
}

fn block_owned(field: &Array2<f64>, offset: usize, m: usize) -> Array2<f64> {
    block_view(field, offset, m).to_owned()
}

/// Multinomial bootstrap counts, one column per redraw, drawn once and
/// shared across posterior draws.
fn bootstrap_counts(m: usize, b: usize, seed: u64) -> Array2<f64> {
    let mut counts = Array2::<f64>::zeros((m, b));
    for bi in 0..b {
        let mut rng = rng::stream(seed, "bootstrap", bi as u64);
        for _ in 0..m {
            let j = ((rng.random::<f64>() * m as f64) as usize).min(m - 1);
            counts[[j, bi]] += 1.0;
        }
    }
    counts
}

/// Convert a latent field draw into fragility values in place:
/// Phi((g - log c) / phi(a_t)) row by row.
fn field_to_psi2(field: &mut Array2<f64>, model: &GpModel, grid: &ImGrid, log_c: f64) {
    for (ti, mut row) in field.rows_mut().into_iter().enumerate() {
        let inv = 1.0 / model.nugget().sd_at(grid.values()[ti]);
        let row = row.as_slice_mut().unwrap();
        for v in row.iter_mut() {
            *v = crate::stats::norm_cdf((*v - log_c) * inv);
        }
    }
}

/// Shared replicate post-processing: assemble per-input P x B matrices,
/// count drops, compute the variance split.
fn finish(
    kind_first: IndexKind,
    kind_total: IndexKind,
    point_first: Vec<f64>,
    point_total: Vec<f64>,
    per_p: Vec<(Array2<f64>, Array2<f64>, usize)>,
    d: usize,
    b: usize,
) -> (SensitivityResult, SensitivityResult) {
    let p = per_p.len();
    let mut first_reps: Vec<Array2<f64>> = (0..d).map(|_| Array2::zeros((p, b))).collect();
    let mut total_reps: Vec<Array2<f64>> = (0..d).map(|_| Array2::zeros((p, b))).collect();
    let mut dropped = 0usize;
    for (pi, (f, t, drops)) in per_p.iter().enumerate() {
        dropped += drops;
        for i in 0..d {
            for bi in 0..b {
                first_reps[i][[pi, bi]] = f[[i, bi]];
                total_reps[i][[pi, bi]] = t[[i, bi]];
            }
        }
    }
    let mk = |kind: IndexKind, point: Vec<f64>, reps: Vec<Array2<f64>>| {
        let mut sigma_gp = vec![0.0; d];
        let mut sigma_mc = vec![0.0; d];
        for i in 0..d {
            let (gp, mc) = variance_split(&reps[i]);
            sigma_gp[i] = gp;
            sigma_mc[i] = mc;
        }
        SensitivityResult {
            kind,
            point_estimate: point,
            replicates: reps,
            sigma_gp,
            sigma_mc,
            dropped_replicates: vec![dropped; d],
        }
    };
    (
        mk(kind_first, point_first, first_reps),
        mk(kind_total, point_total, total_reps),
    )
}

/// Aggregated Sobol indices with posterior and bootstrap replication.
pub fn aggregated_sobol_posterior(
    model: &GpModel,
    design: &PickFreezeDesign,
    grid: &ImGrid,
    c: f64,
    seed: u64,
    config: &GsaConfig,
) -> Result<(SensitivityResult, SensitivityResult)> {
    if config.p_draws < 1 || config.bootstrap < 1 {
        return Err(Error::InvalidInput("need P >= 1 and B >= 1".into()));
    }
    let (stacked, layout) = stacked_design(design, false);
    let m = layout.m;
    let d = layout.d;
    let t = grid.len();
    let w = grid.trapezoid_weights();

    // Point estimates from the plug-in curves.
    let psi1 = psi1_curves(model, grid, stacked.view(), c)?;
    let base1 = block_owned(&psi1, layout.base(), m);
    let frozen1: Vec<Array2<f64>> = (0..d).map(|i| block_owned(&psi1, layout.frozen(i), m)).collect();
    let comp1: Vec<Array2<f64>> = (0..d)
        .map(|i| block_owned(&psi1, layout.complement(i), m))
        .collect();
    let fviews: Vec<_> = frozen1.iter().map(|x| x.view()).collect();
    let cviews: Vec<_> = comp1.iter().map(|x| x.view()).collect();
    let (point_first, point_total) = super::aggregated_sobol(grid, base1.view(), &fviews, &cviews)?;
    drop((base1, frozen1, comp1, psi1));

    let counts = match &config.bootstrap_counts_override {
        Some(c) => c.clone(),
        None => bootstrap_counts(m, config.bootstrap, seed),
    };
    if counts.nrows() != m || counts.ncols() != config.bootstrap {
        return Err(Error::DimensionMismatch {
            what: "bootstrap counts",
            expected: m,
            got: counts.nrows(),
        });
    }

    let sampler = GridSampler::new(model, grid.values(), stacked.view(), seed, &config.sample)?;
    let log_c = c.ln();
    let b = config.bootstrap;
    let mf = m as f64;
    let drop_tol = 1e-12 * (grid.a1() - grid.a0());

    let per_p: Vec<(Array2<f64>, Array2<f64>, usize)> = (0..config.p_draws)
        .into_par_iter()
        .map(|p| {
            let mut field = sampler.draw(p as u64);
            field_to_psi2(&mut field, model, grid, log_c);

            // per-sample statistics collapsed over the grid
            let mut q_den = vec![0.0; m];
            let mut q_first = vec![vec![0.0; m]; d];
            let mut q_total = vec![vec![0.0; m]; d];
            for ti in 0..t {
                let row = field.row(ti);
                let row = row.as_slice().unwrap();
                let wt = w[ti];
                let base = &row[layout.base()..layout.base() + m];
                for (acc, v) in q_den.iter_mut().zip(base) {
                    *acc += wt * v * v;
                }
                for i in 0..d {
                    let fo = layout.frozen(i);
                    let frozen = &row[fo..fo + m];
                    for ((acc, x), y) in q_first[i].iter_mut().zip(base).zip(frozen) {
                        *acc += wt * x * y;
                    }
                    let co = layout.complement(i);
                    let comp = &row[co..co + m];
                    for ((acc, x), y) in q_total[i].iter_mut().zip(base).zip(comp) {
                        *acc += wt * x * y;
                    }
                }
            }

            // bootstrap means per block and grid value: (T x B) each
            let mu_base = block_view(&field, layout.base(), m).dot(&counts) / mf;
            let mu_frozen: Vec<Array2<f64>> = (0..d)
                .map(|i| block_view(&field, layout.frozen(i), m).dot(&counts) / mf)
                .collect();
            let mu_comp: Vec<Array2<f64>> = (0..d)
                .map(|i| block_view(&field, layout.complement(i), m).dot(&counts) / mf)
                .collect();

            let mut first = Array2::<f64>::zeros((d, b));
            let mut total = Array2::<f64>::zeros((d, b));
            let mut drops = 0usize;
            for bi in 0..b {
                let cb = counts.column(bi);
                let boot_mean = |q: &[f64]| -> f64 {
                    let mut acc = 0.0;
                    for (cnt, v) in cb.iter().zip(q) {
                        acc += cnt * v;
                    }
                    acc / mf
                };
                let mut den = boot_mean(&q_den);
                for ti in 0..t {
                    den -= w[ti] * mu_base[[ti, bi]] * mu_base[[ti, bi]];
                }
                if den <= drop_tol {
                    drops += 1;
                    for i in 0..d {
                        first[[i, bi]] = f64::NAN;
                        total[[i, bi]] = f64::NAN;
                    }
                    continue;
                }
                for i in 0..d {
                    let mut numf = boot_mean(&q_first[i]);
                    let mut numt = boot_mean(&q_total[i]);
                    for ti in 0..t {
                        numf -= w[ti] * mu_base[[ti, bi]] * mu_frozen[i][[ti, bi]];
                        numt -= w[ti] * mu_base[[ti, bi]] * mu_comp[i][[ti, bi]];
                    }
                    first[[i, bi]] = numf / den;
                    total[[i, bi]] = 1.0 - numt / den;
                }
            }
            (first, total, drops)
        })
        .collect();

    Ok(finish(
        IndexKind::SobolFirst,
        IndexKind::SobolTotal,
        point_first.point_estimate,
        point_total.point_estimate,
        per_p,
        d,
        b,
    ))
}

/// Beta-k indices with posterior and bootstrap replication.
pub fn betak_posterior(
    model: &GpModel,
    design: &PickFreezeDesign,
    grid: &ImGrid,
    c: f64,
    kernel: &CurveKernel,
    seed: u64,
    config: &GsaConfig,
) -> Result<(SensitivityResult, SensitivityResult)> {
    if config.p_draws < 1 || config.bootstrap < 1 {
        return Err(Error::InvalidInput("need P >= 1 and B >= 1".into()));
    }
    if kernel.grid != *grid {
        return Err(Error::GridMismatch("kernel grid differs from run grid".into()));
    }
    let (stacked, layout) = stacked_design(design, true);
    let m = layout.m;
    let d = layout.d;
    let t = grid.len();
    let w = kernel.weights().to_vec();
    let ell2 = 2.0 * kernel.bandwidth * kernel.bandwidth;

    let psi1 = psi1_curves(model, grid, stacked.view(), c)?;
    let base1 = block_owned(&psi1, layout.base(), m);
    let copy1 = block_owned(&psi1, layout.copy(), m);
    let frozen1: Vec<Array2<f64>> = (0..d).map(|i| block_owned(&psi1, layout.frozen(i), m)).collect();
    let comp1: Vec<Array2<f64>> = (0..d)
        .map(|i| block_owned(&psi1, layout.complement(i), m))
        .collect();
    let fviews: Vec<_> = frozen1.iter().map(|x| x.view()).collect();
    let cviews: Vec<_> = comp1.iter().map(|x| x.view()).collect();
    let (point_first, point_total) =
        super::betak(grid, base1.view(), copy1.view(), &fviews, &cviews, kernel)?;
    drop((base1, copy1, frozen1, comp1, psi1));

    let counts = match &config.bootstrap_counts_override {
        Some(c) => c.clone(),
        None => bootstrap_counts(m, config.bootstrap, seed),
    };

    let sampler = GridSampler::new(model, grid.values(), stacked.view(), seed, &config.sample)?;
    let log_c = c.ln();
    let b = config.bootstrap;
    let mf = m as f64;

    let per_p: Vec<(Array2<f64>, Array2<f64>, usize)> = (0..config.p_draws)
        .into_par_iter()
        .map(|p| {
            let mut field = sampler.draw(p as u64);
            field_to_psi2(&mut field, model, grid, log_c);

            // paired kernel values per sample index: k0, k_i, k_{-i}
            let mut kmat = Array2::<f64>::zeros((1 + 2 * d, m));
            {
                let mut dist = vec![0.0; (1 + 2 * d) * m];
                for ti in 0..t {
                    let row = field.row(ti);
                    let row = row.as_slice().unwrap();
                    let wt = w[ti];
                    let base = &row[layout.base()..layout.base() + m];
                    let copy = &row[layout.copy()..layout.copy() + m];
                    for j in 0..m {
                        let dv = base[j] - copy[j];
                        dist[j] += wt * dv * dv;
                    }
                    for i in 0..d {
                        let fo = layout.frozen(i);
                        let frozen = &row[fo..fo + m];
                        let off = (1 + i) * m;
                        for j in 0..m {
                            let dv = base[j] - frozen[j];
                            dist[off + j] += wt * dv * dv;
                        }
                        let co = layout.complement(i);
                        let comp = &row[co..co + m];
                        let off = (1 + d + i) * m;
                        for j in 0..m {
                            let dv = base[j] - comp[j];
                            dist[off + j] += wt * dv * dv;
                        }
                    }
                }
                let km = kmat.as_slice_mut().unwrap();
                for (slot, dv) in km.iter_mut().zip(&dist) {
                    *slot = (-dv / ell2).exp();
                }
            }
            // bootstrap means of each kernel row: (1+2d) x B
            let kmeans = kmat.dot(&counts) / mf;

            let mut first = Array2::<f64>::zeros((d, b));
            let mut total = Array2::<f64>::zeros((d, b));
            let mut drops = 0usize;
            for bi in 0..b {
                let mean_k0 = kmeans[[0, bi]];
                let den = 1.0 - mean_k0;
                if den <= 1e-12 {
                    drops += 1;
                    for i in 0..d {
                        first[[i, bi]] = f64::NAN;
                        total[[i, bi]] = f64::NAN;
                    }
                    continue;
                }
                for i in 0..d {
                    first[[i, bi]] = (kmeans[[1 + i, bi]] - mean_k0) / den;
                    total[[i, bi]] = 1.0 - (kmeans[[1 + d + i, bi]] - mean_k0) / den;
                }
            }
            (first, total, drops)
        })
        .collect();

    Ok(finish(
        IndexKind::BetaKFirst,
        IndexKind::BetaKTotal,
        point_first.point_estimate,
        point_total.point_estimate,
        per_p,
        d,
        b,
    ))
}
