//! Fragility curves from a fitted surrogate: plug-in curves, posterior
//! curve ensembles, quantile and bi-level quantile curves, and a
//! surrogate-free binned Monte-Carlo reference.

use crate::error::{Error, Result};
use crate::gp::{Dataset, GpModel, GridSampler, SampleConfig};
use crate::rng;
use crate::stats;
use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Strictly increasing positive IM grid (a_t), t = 1..T.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImGrid {
    values: Vec<f64>,
}

impl ImGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidInput("IM grid needs at least 2 points".into()));
        }
        if values[0] <= 0.0 {
            return Err(Error::InvalidInput("IM grid must be positive".into()));
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput("IM grid must be strictly increasing".into()));
        }
        Ok(Self { values })
    }

    /// Regular grid with T points spanning [a0, a1].
    pub fn regular(a0: f64, a1: f64, t: usize) -> Result<Self> {
        if !(a0 > 0.0 && a1 > a0) || t < 2 {
            return Err(Error::InvalidInput(format!(
                "invalid grid spec a0={a0}, a1={a1}, T={t}"
            )));
        }
        let step = (a1 - a0) / (t - 1) as f64;
        Self::new((0..t).map(|i| a0 + step * i as f64).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn a0(&self) -> f64 {
        self.values[0]
    }

    pub fn a1(&self) -> f64 {
        *self.values.last().unwrap()
    }

    pub fn trapezoid_weights(&self) -> Vec<f64> {
        stats::trapezoid_weights(&self.values)
    }
}

/// Probability-of-failure values on an IM grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FragilityCurve {
    pub grid: ImGrid,
    pub probabilities: Vec<f64>,
}

impl FragilityCurve {
    pub fn new(grid: ImGrid, probabilities: Vec<f64>) -> Result<Self> {
        if probabilities.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                what: "fragility curve values vs grid",
                expected: grid.len(),
                got: probabilities.len(),
            });
        }
        if probabilities.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidInput(
                "fragility probabilities must lie in [0,1]".into(),
            ));
        }
        Ok(Self {
            grid,
            probabilities,
        })
    }
}

/// Posterior fragility ensemble: per posterior draw p, a T x m matrix of
/// curve values over the parameter sample.
#[derive(Debug, Clone)]
pub struct CurveEnsemble {
    pub grid: ImGrid,
    /// P entries, each T x m.
    pub draws: Vec<Array2<f64>>,
}

impl CurveEnsemble {
    pub fn p(&self) -> usize {
        self.draws.len()
    }

    pub fn m(&self) -> usize {
        self.draws.first().map_or(0, |d| d.ncols())
    }
}

/// Core plug-in transform: exceedance probability of log c under the
/// predictive normal. Shared by every curve estimator.
pub fn psi_from_moments(moments: &crate::gp::PredictionMoments, c: f64) -> f64 {
    stats::norm_cdf((moments.mean - c.ln()) / moments.observation_sd)
}

/// Plug-in fragility estimate at one (a, x), using the full observation
/// sd so that metamodel variance is folded into the curve.
pub fn psi1(model: &GpModel, a: f64, x: &[f64], c: f64) -> Result<f64> {
    if !(c > 0.0) {
        return Err(Error::InvalidInput(format!(
            "failure threshold must be positive, got {c}"
        )));
    }
    let q = crate::kernel::InputPoint::new(a, x.to_vec())?;
    let m = model.predict(&q)?;
    Ok(psi_from_moments(&m, c))
}

/// Plug-in curve values over a product design: T x m matrix.
pub fn psi1_curves(
    model: &GpModel,
    grid: &ImGrid,
    xs: ArrayView2<'_, f64>,
    c: f64,
) -> Result<Array2<f64>> {
    if !(c > 0.0) {
        return Err(Error::InvalidInput(format!(
            "failure threshold must be positive, got {c}"
        )));
    }
    let (means, vars) = model.predict_grid(grid.values(), xs)?;
    let log_c = c.ln();
    let mut out = means;
    for (ti, &a) in grid.values().iter().enumerate() {
        let nug = model.nugget().var_at(a);
        let mut row = out.row_mut(ti);
        let row = row.as_slice_mut().unwrap();
        let vrow = vars.row(ti);
        let vrow = vrow.as_slice().unwrap();
        for (v, var) in row.iter_mut().zip(vrow) {
            *v = stats::norm_cdf((*v - log_c) / (var + nug).sqrt());
        }
    }
    Ok(out)
}

/// Posterior fragility draws: latent field draws over the product design
/// pushed through the noise cdf, Phi((G - log c) / phi(a_t)).
pub fn psi2_samples(
    model: &GpModel,
    grid: &ImGrid,
    xs: ArrayView2<'_, f64>,
    c: f64,
    p_draws: usize,
    seed: u64,
    config: &SampleConfig,
) -> Result<CurveEnsemble> {
    if p_draws < 1 {
        return Err(Error::InvalidInput("need P >= 1 posterior draws".into()));
    }
    if xs.nrows() < 1 {
        return Err(Error::EmptySample("parameter sample".into()));
    }
    if !(c > 0.0) {
        return Err(Error::InvalidInput(format!(
            "failure threshold must be positive, got {c}"
        )));
    }
    let sampler = GridSampler::new(model, grid.values(), xs, seed, config)?;
    let log_c = c.ln();
    let nugget_sds: Vec<f64> = grid.values().iter().map(|a| model.nugget().sd_at(*a)).collect();
    let draws: Vec<Array2<f64>> = (0..p_draws)
        .map(|p| {
            let mut field = sampler.draw(p as u64);
            for (ti, mut row) in field.rows_mut().into_iter().enumerate() {
                let inv = 1.0 / nugget_sds[ti];
                for v in row.iter_mut() {
                    *v = stats::norm_cdf((*v - log_c) * inv);
                }
            }
            field
        })
        .collect();
    Ok(CurveEnsemble {
        grid: grid.clone(),
        draws,
    })
}

/// Pointwise average of curve values over the parameter sample.
pub fn mean_curve(grid: &ImGrid, curves: ArrayView2<'_, f64>) -> Result<FragilityCurve> {
    if curves.ncols() == 0 {
        return Err(Error::EmptySample("mean curve over empty sample".into()));
    }
    if curves.nrows() != grid.len() {
        return Err(Error::GridMismatch(format!(
            "curve rows {} vs grid {}",
            curves.nrows(),
            grid.len()
        )));
    }
    let m = curves.ncols() as f64;
    let probs: Vec<f64> = curves
        .rows()
        .into_iter()
        .map(|row| row.sum() / m)
        .collect();
    FragilityCurve::new(grid.clone(), probs)
}

/// Pointwise average over posterior draws and parameter samples.
pub fn mean_curve_ensemble(ensemble: &CurveEnsemble) -> Result<FragilityCurve> {
    if ensemble.draws.is_empty() {
        return Err(Error::EmptySample("mean curve over empty ensemble".into()));
    }
    let t = ensemble.grid.len();
    let mut acc = vec![0.0; t];
    let denom = (ensemble.p() * ensemble.m()) as f64;
    for draw in &ensemble.draws {
        for (ti, row) in draw.rows().into_iter().enumerate() {
            acc[ti] += row.sum();
        }
    }
    for v in acc.iter_mut() {
        *v /= denom;
    }
    FragilityCurve::new(ensemble.grid.clone(), acc)
}

/// Pointwise lower empirical gamma-quantile over the parameter sample.
pub fn quantile_curve(
    grid: &ImGrid,
    curves: ArrayView2<'_, f64>,
    gamma: f64,
) -> Result<FragilityCurve> {
    if curves.ncols() == 0 {
        return Err(Error::EmptySample("quantile over empty sample".into()));
    }
    if !(0.0 < gamma && gamma <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "quantile level must be in (0,1], got {gamma}"
        )));
    }
    if curves.nrows() != grid.len() {
        return Err(Error::GridMismatch(format!(
            "curve rows {} vs grid {}",
            curves.nrows(),
            grid.len()
        )));
    }
    let mut scratch = vec![0.0; curves.ncols()];
    let probs: Vec<f64> = curves
        .rows()
        .into_iter()
        .map(|row| {
            scratch.copy_from_slice(row.as_slice().unwrap());
            stats::lower_quantile_mut(&mut scratch, gamma)
        })
        .collect();
    FragilityCurve::new(grid.clone(), probs)
}

/// Bi-level quantile curve: per (a_t, X_j) the gamma_G-quantile over
/// posterior draws, then per a_t the gamma_X-quantile over the sample.
pub fn bilevel_quantile_curve(
    ensemble: &CurveEnsemble,
    gamma_g: f64,
    gamma_x: f64,
) -> Result<FragilityCurve> {
    let p = ensemble.p();
    let m = ensemble.m();
    if p == 0 || m == 0 {
        return Err(Error::EmptySample("bi-level quantile over empty ensemble".into()));
    }
    for (lvl, name) in [(gamma_g, "gamma_G"), (gamma_x, "gamma_X")] {
        if !(0.0 < lvl && lvl <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "{name} must be in (0,1], got {lvl}"
            )));
        }
    }
    let t = ensemble.grid.len();
    let mut over_p = vec![0.0; p];
    let mut inner = vec![0.0; m];
    let mut probs = vec![0.0; t];
    for ti in 0..t {
        for j in 0..m {
            for (pi, draw) in ensemble.draws.iter().enumerate() {
                over_p[pi] = draw[[ti, j]];
            }
            inner[j] = stats::lower_quantile_mut(&mut over_p, gamma_g);
        }
        probs[ti] = stats::lower_quantile_mut(&mut inner, gamma_x);
    }
    FragilityCurve::new(ensemble.grid.clone(), probs)
}

/// Pool-adjacent-violators projection onto non-decreasing curves.
/// Optional post-processing, off by default: surrogate curves may be
/// locally non-monotone and are reported as-is.
pub fn isotonic_non_decreasing(curve: &FragilityCurve) -> FragilityCurve {
    let y = &curve.probabilities;
    let n = y.len();
    let mut level: Vec<f64> = Vec::with_capacity(n);
    let mut weight: Vec<f64> = Vec::with_capacity(n);
    for &v in y {
        level.push(v);
        weight.push(1.0);
        while level.len() > 1 && level[level.len() - 2] > level[level.len() - 1] {
            let (l1, w1) = (level.pop().unwrap(), weight.pop().unwrap());
            let k = level.len() - 1;
            let merged_w = weight[k] + w1;
            level[k] = (level[k] * weight[k] + l1 * w1) / merged_w;
            weight[k] = merged_w;
        }
    }
    let mut out = Vec::with_capacity(n);
    for (l, w) in level.iter().zip(&weight) {
        for _ in 0..*w as usize {
            out.push(*l);
        }
    }
    FragilityCurve::new(curve.grid.clone(), out).unwrap()
}

/// Binned Monte-Carlo reference estimate from raw data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BinnedReference {
    /// Cluster centers, ascending.
    pub centers: Vec<f64>,
    /// Empirical exceedance proportion per cluster.
    pub probabilities: Vec<f64>,
    /// 1.3 x sd of the empirical exceedance estimator per cluster.
    pub halfwidths: Vec<f64>,
    pub counts: Vec<usize>,
    /// Number of empty clusters merged into their nearest neighbor.
    pub merged_clusters: usize,
}

/// Surrogate-free reference: 1-D k-means on the IM values (seeded, 20
/// restarts) and per-cluster exceedance proportions of y > log c.
pub fn binned_mc_reference(
    data: &Dataset,
    c: f64,
    clusters: usize,
    seed: u64,
) -> Result<BinnedReference> {
    if clusters < 2 {
        return Err(Error::InvalidInput("need at least 2 clusters".into()));
    }
    if !(c > 0.0) {
        return Err(Error::InvalidInput("threshold must be positive".into()));
    }
    let ims: Vec<f64> = data.points().iter().map(|p| p.im).collect();
    let n = ims.len();
    if clusters > n {
        return Err(Error::InvalidInput(format!(
            "more clusters ({clusters}) than observations ({n})"
        )));
    }

    let mut best: Option<(f64, Vec<f64>)> = None;
    for restart in 0..20u64 {
        let mut rng = rng::stream(seed, "kmeans", restart);
        // Seeded init on distinct values
        let mut centers: Vec<f64> = Vec::with_capacity(clusters);
        let mut guard = 0;
        while centers.len() < clusters && guard < 100 * clusters {
            let cand = ims[(rng.random::<f64>() * n as f64) as usize % n];
            if centers.iter().all(|&ce| (ce - cand).abs() > 0.0) {
                centers.push(cand);
            }
            guard += 1;
        }
        while centers.len() < clusters {
            // fewer distinct IMs than clusters: pad with jittered copies
            let base = centers[centers.len() % centers.len().max(1)];
            centers.push(base * (1.0 + 1e-9 * centers.len() as f64));
        }
        let mut assign = vec![0usize; n];
        for _ in 0..200 {
            let mut changed = false;
            for (i, &a) in ims.iter().enumerate() {
                let mut kbest = 0;
                let mut dbest = f64::INFINITY;
                for (k, &ce) in centers.iter().enumerate() {
                    let d = (a - ce).abs();
                    if d < dbest {
                        dbest = d;
                        kbest = k;
                    }
                }
                if assign[i] != kbest {
                    assign[i] = kbest;
                    changed = true;
                }
            }
            let mut sums = vec![0.0; clusters];
            let mut cnts = vec![0usize; clusters];
            for (i, &a) in ims.iter().enumerate() {
                sums[assign[i]] += a;
                cnts[assign[i]] += 1;
            }
            for k in 0..clusters {
                if cnts[k] > 0 {
                    centers[k] = sums[k] / cnts[k] as f64;
                }
            }
            if !changed {
                break;
            }
        }
        let ss: f64 = ims
            .iter()
            .zip(&assign)
            .map(|(a, &k)| (a - centers[k]) * (a - centers[k]))
            .sum();
        if best.as_ref().is_none_or(|(b, _)| ss < *b) {
            best = Some((ss, centers));
        }
    }
    let (_, mut centers) = best.unwrap();
    centers.sort_by(|a, b| a.partial_cmp(b).unwrap());

    // Final assignment on sorted centers.
    let log_c = c.ln();
    let mut counts = vec![0usize; clusters];
    let mut exceed = vec![0usize; clusters];
    for (p, &y) in data.points().iter().zip(data.responses()) {
        let mut kbest = 0;
        let mut dbest = f64::INFINITY;
        for (k, &ce) in centers.iter().enumerate() {
            let d = (p.im - ce).abs();
            if d < dbest {
                dbest = d;
                kbest = k;
            }
        }
        counts[kbest] += 1;
        if y > log_c {
            exceed[kbest] += 1;
        }
    }

    // Merge empty clusters into the nearest non-empty neighbor.
    let mut merged = 0usize;
    let keep: Vec<usize> = (0..clusters).filter(|&k| counts[k] > 0).collect();
    if keep.is_empty() {
        return Err(Error::DegenerateData("all clusters empty".into()));
    }
    if keep.len() < clusters {
        merged = clusters - keep.len();
    }
    let mut out_centers = Vec::with_capacity(keep.len());
    let mut out_probs = Vec::with_capacity(keep.len());
    let mut out_half = Vec::with_capacity(keep.len());
    let mut out_counts = Vec::with_capacity(keep.len());
    for &k in &keep {
        let nk = counts[k] as f64;
        let p_hat = exceed[k] as f64 / nk;
        out_centers.push(centers[k]);
        out_probs.push(p_hat);
        out_half.push(1.3 * (p_hat * (1.0 - p_hat) / nk).sqrt());
        out_counts.push(counts[k]);
    }
    Ok(BinnedReference {
        centers: out_centers,
        probabilities: out_probs,
        halfwidths: out_half,
        counts: out_counts,
        merged_clusters: merged,
    })
}

/// Write a curve as CSV `a,value[,lo,hi]`.
pub fn write_curve_csv(
    path: &std::path::Path,
    curve: &FragilityCurve,
    bands: Option<(&[f64], &[f64])>,
) -> Result<()> {
    let mut out = String::new();
    match bands {
        None => {
            out.push_str("a,value\n");
            for (a, v) in curve.grid.values().iter().zip(&curve.probabilities) {
                out.push_str(&format!("{a},{v}\n"));
            }
        }
        Some((lo, hi)) => {
            out.push_str("a,value,lo,hi\n");
            for (i, (a, v)) in curve
                .grid
                .values()
                .iter()
                .zip(&curve.probabilities)
                .enumerate()
            {
                out.push_str(&format!("{a},{v},{},{}\n", lo[i], hi[i]));
            }
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Long-format audit export of an ensemble: `p,j,a,value`.
pub fn write_ensemble_csv(path: &std::path::Path, ensemble: &CurveEnsemble) -> Result<()> {
    let mut out = String::from("p,j,a,value\n");
    for (p, draw) in ensemble.draws.iter().enumerate() {
        for j in 0..draw.ncols() {
            for (ti, a) in ensemble.grid.values().iter().enumerate() {
                out.push_str(&format!("{p},{j},{a},{}\n", draw[[ti, j]]));
            }
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::{GpModel, NuggetModel, Standardizer};
    use crate::kernel::{InputPoint, KernelParams};
    use approx::assert_abs_diff_eq;

    fn grid3() -> ImGrid {
        ImGrid::new(vec![1.0, 2.0, 3.0]).unwrap()
    }

    fn tiny_model(sigma_eps: f64) -> GpModel {
        let points = vec![
            InputPoint::new(1.0, vec![0.2]).unwrap(),
            InputPoint::new(2.0, vec![0.5]).unwrap(),
            InputPoint::new(3.0, vec![0.8]).unwrap(),
            InputPoint::new(4.0, vec![0.1]).unwrap(),
        ];
        let responses = vec![-0.5, 0.1, 0.4, 0.9];
        let data = crate::gp::Dataset::new(points, responses).unwrap();
        let std = Standardizer::fit(data.points());
        GpModel::assemble(
            KernelParams::new(1.0, vec![0.5, 0.5]).unwrap(),
            NuggetModel::Homoskedastic { sigma_eps },
            std,
            data.response_mean(),
            data,
        )
        .unwrap()
    }

    #[test]
    fn grid_rejects_bad_inputs() {
        assert!(ImGrid::new(vec![1.0]).is_err());
        assert!(ImGrid::new(vec![-1.0, 2.0]).is_err());
        assert!(ImGrid::new(vec![1.0, 1.0]).is_err());
        assert!(ImGrid::regular(0.1, 25.0, 100).is_ok());
    }

    #[test]
    fn psi1_median_crossing_is_half() {
        // with c = exp(prediction mean), Phi(0) = 0.5
        let model = tiny_model(0.3);
        let q = InputPoint::new(2.5, vec![0.4]).unwrap();
        let m = model.predict(&q).unwrap();
        let c = m.mean.exp();
        let v = psi1(&model, 2.5, &[0.4], c).unwrap();
        assert_abs_diff_eq!(v, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn psi1_standard_quantile() {
        let model = tiny_model(0.3);
        let q = InputPoint::new(2.5, vec![0.4]).unwrap();
        let m = model.predict(&q).unwrap();
        // log c placed 1.6449 sd below the mean
        let c = (m.mean - 1.6448536269514722 * m.observation_sd).exp();
        let v = psi1(&model, 2.5, &[0.4], c).unwrap();
        assert_abs_diff_eq!(v, 0.95, epsilon = 1e-10);
    }

    #[test]
    fn psi1_monotone_in_threshold() {
        let model = tiny_model(0.3);
        let lo = psi1(&model, 2.0, &[0.4], 0.5).unwrap();
        let hi = psi1(&model, 2.0, &[0.4], 2.0).unwrap();
        assert!(lo >= hi);
    }

    #[test]
    fn mean_curve_trivial_cases() {
        let g = grid3();
        let same = Array2::from_shape_fn((3, 4), |(t, _)| 0.2 + 0.1 * t as f64);
        let mc = mean_curve(&g, same.view()).unwrap();
        for (t, v) in mc.probabilities.iter().enumerate() {
            assert_abs_diff_eq!(*v, 0.2 + 0.1 * t as f64, epsilon = 1e-15);
        }
        let two = Array2::from_shape_fn((3, 2), |(_, j)| if j == 0 { 0.2 } else { 0.6 });
        let mc = mean_curve(&g, two.view()).unwrap();
        assert!(mc.probabilities.iter().all(|v| (v - 0.4).abs() < 1e-15));
    }

    #[test]
    fn quantile_curve_is_order_statistic() {
        let g = grid3();
        let members = Array2::from_shape_fn((3, 10), |(_, j)| (j + 1) as f64 / 10.0);
        let q = quantile_curve(&g, members.view(), 0.5).unwrap();
        assert!(q.probabilities.iter().all(|v| (*v - 0.5).abs() < 1e-15));
        let qmax = quantile_curve(&g, members.view(), 1.0).unwrap();
        assert!(qmax.probabilities.iter().all(|v| (*v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn bilevel_reduces_to_quantile_for_single_draw() {
        let g = grid3();
        let draw = Array2::from_shape_fn((3, 5), |(t, j)| (t as f64 + j as f64) / 10.0);
        let ens = CurveEnsemble {
            grid: g.clone(),
            draws: vec![draw.clone()],
        };
        for gamma in [0.2, 0.5, 0.9] {
            let bl = bilevel_quantile_curve(&ens, 0.7, gamma).unwrap();
            let q = quantile_curve(&g, draw.view(), gamma).unwrap();
            assert_eq!(bl.probabilities, q.probabilities);
        }
    }

    #[test]
    fn bilevel_quantiles_are_ordered() {
        let g = grid3();
        let mut rng = crate::rng::stream(3, "bilevel-test", 0);
        let draws: Vec<Array2<f64>> = (0..7)
            .map(|_| Array2::from_shape_fn((3, 9), |_| rng.random::<f64>()))
            .collect();
        let ens = CurveEnsemble { grid: g, draws };
        let lo = bilevel_quantile_curve(&ens, 0.1, 0.1).unwrap();
        let hi = bilevel_quantile_curve(&ens, 0.9, 0.9).unwrap();
        for (l, h) in lo.probabilities.iter().zip(&hi.probabilities) {
            assert!(l <= h);
        }
    }

    #[test]
    fn isotonic_projection_sorts_violations() {
        let g = grid3();
        let c = FragilityCurve::new(g, vec![0.3, 0.2, 0.9]).unwrap();
        let iso = isotonic_non_decreasing(&c);
        assert_eq!(iso.probabilities, vec![0.25, 0.25, 0.9]);
    }

    #[test]
    fn binned_reference_all_exceed() {
        let points: Vec<InputPoint> = (0..40)
            .map(|i| InputPoint::new(0.5 + i as f64 * 0.1, vec![]).unwrap())
            .collect();
        let responses = vec![5.0; 40];
        let data = crate::gp::Dataset::new(points, responses).unwrap();
        let b = binned_mc_reference(&data, 1.0, 4, 0).unwrap();
        assert_eq!(b.centers.len(), 4);
        assert!(b.probabilities.iter().all(|p| *p == 1.0));
        assert!(b.halfwidths.iter().all(|h| *h == 0.0));
        assert!(b.centers.windows(2).all(|w| w[0] < w[1]));
    }
}
