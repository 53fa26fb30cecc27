//! Gaussian process surrogates of the log-EDP.
//!
//! Two nugget models are supported: a constant observation noise and a
//! heteroskedastic ramp `phi(a; theta) = max(theta0 + theta1 a, theta2)`
//! in raw IM units. Fitting maximizes the marginal likelihood (optionally
//! plus a jointly robust log-prior) by seeded multi-start Nelder-Mead on
//! log-transformed hyperparameters; the fitted model caches the Cholesky
//! factor of the training covariance and the kriging weights.

mod fit;
mod sampling;

pub use fit::{fit_heteroskedastic, fit_homoskedastic, neg_log_marginal_likelihood, FitInfo};
pub use sampling::{posterior_marginal_sd, sample_posterior, GridSampler, SampleConfig};

use crate::error::{Error, Result};
use crate::kernel::{self, InputPoint, KernelParams};
use crate::linalg;
use crate::stats;
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Training data: input points and log-EDP responses.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dataset {
    points: Vec<InputPoint>,
    responses: Vec<f64>,
}

impl Dataset {
    pub fn new(points: Vec<InputPoint>, responses: Vec<f64>) -> Result<Self> {
        if points.len() != responses.len() {
            return Err(Error::DimensionMismatch {
                what: "dataset points vs responses",
                expected: points.len(),
                got: responses.len(),
            });
        }
        if points.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "dataset needs at least 2 observations, got {}",
                points.len()
            )));
        }
        if responses.iter().any(|y| !y.is_finite()) {
            return Err(Error::InvalidInput("non-finite response".into()));
        }
        let dim = points[0].dim();
        if let Some(bad) = points.iter().position(|p| p.dim() != dim) {
            return Err(Error::DimensionMismatch {
                what: "dataset point dimension",
                expected: dim,
                got: points[bad].dim(),
            });
        }
        Ok(Self { points, responses })
    }

    pub fn n(&self) -> usize {
        self.points.len()
    }

    /// Full input dimension d+1 (IM plus mechanical parameters).
    pub fn dim(&self) -> usize {
        self.points[0].dim()
    }

    pub fn points(&self) -> &[InputPoint] {
        &self.points
    }

    pub fn responses(&self) -> &[f64] {
        &self.responses
    }

    pub fn response_mean(&self) -> f64 {
        stats::mean(&self.responses)
    }

    pub fn response_sd(&self) -> f64 {
        stats::variance(&self.responses).sqrt()
    }
}

/// Observation-noise model entering the Gram diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant")]
pub enum NuggetModel {
    Homoskedastic {
        sigma_eps: f64,
    },
    /// Ramp in the raw IM: phi(a) = max(theta0 + theta1 a, theta2).
    Heteroskedastic {
        theta0: f64,
        theta1: f64,
        theta2: f64,
    },
}

impl NuggetModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            NuggetModel::Homoskedastic { sigma_eps } => {
                if !(sigma_eps.is_finite() && *sigma_eps > 0.0) {
                    return Err(Error::InvalidInput(format!(
                        "homoskedastic nugget sd must be positive, got {sigma_eps}"
                    )));
                }
            }
            NuggetModel::Heteroskedastic {
                theta0,
                theta1,
                theta2,
            } => {
                if !(theta0.is_finite() && theta1.is_finite()) {
                    return Err(Error::InvalidInput("non-finite ramp parameters".into()));
                }
                if !(theta2.is_finite() && *theta2 > 0.0) {
                    return Err(Error::InvalidInput(format!(
                        "ramp floor theta2 must be positive, got {theta2}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Noise standard deviation at a raw IM value.
    pub fn sd_at(&self, im: f64) -> f64 {
        match self {
            NuggetModel::Homoskedastic { sigma_eps } => *sigma_eps,
            NuggetModel::Heteroskedastic {
                theta0,
                theta1,
                theta2,
            } => (theta0 + theta1 * im).max(*theta2),
        }
    }

    pub fn var_at(&self, im: f64) -> f64 {
        let s = self.sd_at(im);
        s * s
    }
}

/// Per-dimension affine map of the inputs onto [0,1], fitted on the
/// training ranges. Lengthscales live in these units.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Standardizer {
    lo: Vec<f64>,
    inv_span: Vec<f64>,
}

impl Standardizer {
    pub fn fit(points: &[InputPoint]) -> Self {
        let dim = points[0].dim();
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for p in points {
            for k in 0..dim {
                let v = p.coord(k);
                lo[k] = lo[k].min(v);
                hi[k] = hi[k].max(v);
            }
        }
        let inv_span = lo
            .iter()
            .zip(&hi)
            .map(|(l, h)| if h > l { 1.0 / (h - l) } else { 1.0 })
            .collect();
        Self { lo, inv_span }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    #[inline]
    pub fn apply_coord(&self, k: usize, v: f64) -> f64 {
        (v - self.lo[k]) * self.inv_span[k]
    }

    pub fn apply_point(&self, p: &InputPoint, out: &mut [f64]) {
        for k in 0..self.dim() {
            out[k] = self.apply_coord(k, p.coord(k));
        }
    }

    /// Standardize a batch of points into an n x dim row-major matrix.
    pub fn apply_points(&self, points: &[InputPoint]) -> Array2<f64> {
        let dim = self.dim();
        let mut rows = Array2::<f64>::zeros((points.len(), dim));
        for (i, p) in points.iter().enumerate() {
            self.apply_point(p, rows.row_mut(i).as_slice_mut().unwrap());
        }
        rows
    }

    /// Standardize raw (im, params) pairs given as separate grid and
    /// parameter-row inputs; returns (standardized ims, standardized rows
    /// of the parameter block only).
    pub fn apply_split(
        &self,
        ims: &[f64],
        xs: ndarray::ArrayView2<'_, f64>,
    ) -> (Vec<f64>, Array2<f64>) {
        let d = self.dim() - 1;
        assert_eq!(xs.ncols(), d, "parameter block width");
        let ims_std: Vec<f64> = ims.iter().map(|a| self.apply_coord(0, *a)).collect();
        let mut rows = Array2::<f64>::zeros((xs.nrows(), d));
        for i in 0..xs.nrows() {
            for k in 0..d {
                rows[[i, k]] = self.apply_coord(k + 1, xs[[i, k]]);
            }
        }
        (ims_std, rows)
    }
}

/// Kriging prediction moments at one query point.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionMoments {
    /// Posterior mean of the latent process (and of the observation).
    pub mean: f64,
    /// Posterior sd of the latent process G.
    pub latent_sd: f64,
    /// Posterior sd of a new observation: sqrt(latent_sd^2 + nugget var).
    pub observation_sd: f64,
}

/// Configuration of the fitting procedure.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitConfig {
    pub seed: u64,
    /// Number of seeded multi-start restarts.
    pub restarts: usize,
    /// Nelder-Mead evaluation budget per restart.
    pub max_evals: usize,
    /// Add the jointly robust log-prior to the objective (MAP estimate).
    pub map_prior: bool,
    /// Bounds for lengthscales in standardized units.
    pub lengthscale_bounds: (f64, f64),
    /// Bounds for the kernel intensity, relative to sd(y).
    pub sigma_bounds_rel: (f64, f64),
    /// Bounds for nugget sd values, relative to sd(y).
    pub nugget_sd_bounds_rel: (f64, f64),
    /// Fix the homoskedastic nugget sd at an absolute value instead of
    /// estimating it.
    pub pinned_nugget_sd: Option<f64>,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            restarts: 10,
            max_evals: 500,
            map_prior: false,
            lengthscale_bounds: (1e-2, 1e2),
            sigma_bounds_rel: (1e-3, 1e3),
            nugget_sd_bounds_rel: (1e-4, 1.0),
            pinned_nugget_sd: None,
        }
    }
}

impl FitConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }
}

/// A fitted Gaussian process surrogate.
///
/// Immutable once built; prediction and sampling are read-only and safe
/// to share across threads.
#[derive(Debug, Clone)]
pub struct GpModel {
    kernel_params: KernelParams,
    nugget: NuggetModel,
    standardizer: Standardizer,
    prior_mean: f64,
    training: Dataset,
    /// Standardized training coordinates, n x (d+1).
    train_rows: Array2<f64>,
    /// Lower Cholesky factor of the training covariance.
    chol: Array2<f64>,
    /// K^{-1} (y - prior_mean).
    weights: Vec<f64>,
    jitter: f64,
    pub fit_info: Option<FitInfo>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    kernel_params: KernelParams,
    nugget: NuggetModel,
    prior_mean: f64,
    standardizer: Standardizer,
    points: Vec<InputPoint>,
    responses: Vec<f64>,
}

impl GpModel {
    /// Assemble a model from explicit hyperparameters: factor the training
    /// covariance and cache the kriging weights.
    pub fn assemble(
        kernel_params: KernelParams,
        nugget: NuggetModel,
        standardizer: Standardizer,
        prior_mean: f64,
        training: Dataset,
    ) -> Result<Self> {
        nugget.validate()?;
        if kernel_params.dim() != training.dim() {
            return Err(Error::DimensionMismatch {
                what: "kernel lengthscales vs training dimension",
                expected: training.dim(),
                got: kernel_params.dim(),
            });
        }
        let train_rows = standardizer.apply_points(training.points());
        let nugget_vars: Vec<f64> = training
            .points()
            .iter()
            .map(|p| nugget.var_at(p.im))
            .collect();
        let (chol, jitter) =
            kernel::factor_cov_rows(train_rows.view(), &kernel_params, &nugget_vars)?;
        let mut weights: Vec<f64> = training.responses().iter().map(|y| y - prior_mean).collect();
        linalg::solve_spd(&chol, &mut weights);
        Ok(Self {
            kernel_params,
            nugget,
            standardizer,
            prior_mean,
            training,
            train_rows,
            chol,
            weights,
            jitter,
            fit_info: None,
        })
    }

    pub fn kernel_params(&self) -> &KernelParams {
        &self.kernel_params
    }

    pub fn nugget(&self) -> &NuggetModel {
        &self.nugget
    }

    pub fn standardizer(&self) -> &Standardizer {
        &self.standardizer
    }

    pub fn prior_mean(&self) -> f64 {
        self.prior_mean
    }

    pub fn training(&self) -> &Dataset {
        &self.training
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub(crate) fn chol(&self) -> &Array2<f64> {
        &self.chol
    }

    pub(crate) fn train_rows(&self) -> &Array2<f64> {
        &self.train_rows
    }

    pub(crate) fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn inv_lengthscales(&self) -> Vec<f64> {
        self.kernel_params
            .lengthscales
            .iter()
            .map(|l| 1.0 / l)
            .collect()
    }

    /// Kriging moments at one query point.
    pub fn predict(&self, query: &InputPoint) -> Result<PredictionMoments> {
        if query.dim() != self.training.dim() {
            return Err(Error::DimensionMismatch {
                what: "query dimension vs training",
                expected: self.training.dim(),
                got: query.dim(),
            });
        }
        let n = self.training.n();
        let dim = self.training.dim();
        let mut zq = vec![0.0; dim];
        self.standardizer.apply_point(query, &mut zq);
        let inv_ls = self.inv_lengthscales();
        let sigma2 = self.kernel_params.intensity * self.kernel_params.intensity;
        let rows = self.train_rows.as_slice().unwrap();
        let mut kstar = vec![0.0; n];
        for i in 0..n {
            let ri = &rows[i * dim..(i + 1) * dim];
            kstar[i] = sigma2 * kernel::matern52_corr_slice(&zq, ri, &inv_ls);
        }
        let mean = self.prior_mean + linalg::dot(&kstar, &self.weights);
        linalg::solve_lower(&self.chol, &mut kstar);
        let latent_var = (sigma2 - linalg::dot(&kstar, &kstar)).max(0.0);
        let nug_var = self.nugget.var_at(query.im);
        Ok(PredictionMoments {
            mean,
            latent_sd: latent_var.sqrt(),
            observation_sd: (latent_var + nug_var).sqrt(),
        })
    }

    /// Batched kriging moments over the product design grid x parameter
    /// rows: returns (means, latent variances), each T x N.
    ///
    /// Exploits the tensorized kernel: per-factor correlation blocks are
    /// combined by matrix products instead of per-point solves.
    pub fn predict_grid(
        &self,
        grid_ims: &[f64],
        xs: ndarray::ArrayView2<'_, f64>,
    ) -> Result<(Array2<f64>, Array2<f64>)> {
        let n = self.training.n();
        let t = grid_ims.len();
        let nq = xs.nrows();
        if xs.ncols() + 1 != self.training.dim() {
            return Err(Error::DimensionMismatch {
                what: "parameter block vs training dimension",
                expected: self.training.dim() - 1,
                got: xs.ncols(),
            });
        }
        let inv_ls = self.inv_lengthscales();
        let sigma2 = self.kernel_params.intensity * self.kernel_params.intensity;
        let (ims_std, x_rows) = self.standardizer.apply_split(grid_ims, xs);

        // Factor correlations against training points.
        let train = self.train_rows.as_slice().unwrap();
        let dim = self.training.dim();
        let mut a_corr = Array2::<f64>::zeros((t, n)); // IM factor
        for (ti, &a) in ims_std.iter().enumerate() {
            let row = a_corr.row_mut(ti);
            let row = row.into_slice().unwrap();
            for (i, slot) in row.iter_mut().enumerate() {
                let h = (a - train[i * dim]).abs() * inv_ls[0];
                *slot = kernel::matern52_corr(h);
            }
        }
        let mut x_corr = Array2::<f64>::zeros((nq, n)); // parameter factor
        {
            let xd = x_rows.as_slice().unwrap();
            let xc = x_corr.as_slice_mut().unwrap();
            let d = dim - 1;
            for u in 0..nq {
                let ru = &xd[u * d..(u + 1) * d];
                let out = &mut xc[u * n..(u + 1) * n];
                for (i, slot) in out.iter_mut().enumerate() {
                    let ri = &train[i * dim + 1..(i + 1) * dim];
                    *slot = kernel::matern52_corr_slice(ru, ri, &inv_ls[1..]);
                }
            }
        }

        // Means: prior + A_w X^T with A_w[t,i] = sigma^2 A[t,i] w_i.
        let mut a_w = a_corr.clone();
        for mut row in a_w.rows_mut() {
            let row = row.as_slice_mut().unwrap();
            for (v, w) in row.iter_mut().zip(&self.weights) {
                *v *= sigma2 * w;
            }
        }
        let mut means = a_w.dot(&x_corr.t());
        means.mapv_inplace(|v| v + self.prior_mean);

        // Latent variances: sigma^2 - sigma^4 x_u G_t x_u^T with
        // G_t = K^{-1} .* (a_t a_t^T), evaluated per grid value through
        // chunked matrix products.
        let kinv = linalg::spd_inverse_from_chol(&self.chol);
        let mut vars = Array2::<f64>::zeros((t, nq));
        let sigma4 = sigma2 * sigma2;
        let chunk = 8192.max(1);
        let mut g_t = Array2::<f64>::zeros((n, n));
        for ti in 0..t {
            let at = a_corr.row(ti);
            let at = at.as_slice().unwrap();
            {
                let g = g_t.as_slice_mut().unwrap();
                let ki = kinv.as_slice().unwrap();
                for i in 0..n {
                    let gi = &mut g[i * n..(i + 1) * n];
                    let kii = &ki[i * n..(i + 1) * n];
                    let ai = at[i];
                    for j in 0..n {
                        gi[j] = kii[j] * ai * at[j];
                    }
                }
            }
            let mut start = 0;
            while start < nq {
                let stop = (start + chunk).min(nq);
                let block = x_corr.slice(ndarray::s![start..stop, ..]);
                let h = block.dot(&g_t); // (chunk x n)
                for (local, u) in (start..stop).enumerate() {
                    let hrow = h.row(local);
                    let xrow = block.row(local);
                    let q = linalg::dot(hrow.as_slice().unwrap(), xrow.as_slice().unwrap());
                    vars[[ti, u]] = (sigma2 - sigma4 * q).max(0.0);
                }
                start = stop;
            }
        }
        Ok((means, vars))
    }

    /// Leave-one-out predictive moments with fixed hyperparameters, from
    /// the closed-form identities on K^{-1}. Returns per-observation
    /// (loo mean, loo observation variance).
    pub fn loo_moments(&self, data: &Dataset) -> Result<(Vec<f64>, Vec<f64>)> {
        if data.dim() != self.training.dim() {
            return Err(Error::DimensionMismatch {
                what: "loo data dimension vs training",
                expected: self.training.dim(),
                got: data.dim(),
            });
        }
        let rows = self.standardizer.apply_points(data.points());
        let nugget_vars: Vec<f64> = data.points().iter().map(|p| self.nugget.var_at(p.im)).collect();
        let (chol, _) = kernel::factor_cov_rows(rows.view(), &self.kernel_params, &nugget_vars)?;
        let kinv = linalg::spd_inverse_from_chol(&chol);
        let yc: Vec<f64> = data.responses().iter().map(|y| y - self.prior_mean).collect();
        let mut alpha = yc.clone();
        linalg::solve_spd(&chol, &mut alpha);
        let n = data.n();
        let mut means = vec![0.0; n];
        let mut vars = vec![0.0; n];
        for i in 0..n {
            let kii = kinv[[i, i]];
            means[i] = data.responses()[i] - alpha[i] / kii;
            vars[i] = 1.0 / kii;
        }
        Ok((means, vars))
    }

    /// Leave-one-out predictive coefficient of determination.
    pub fn loo_q2(&self, data: &Dataset) -> Result<f64> {
        if data.n() < 3 {
            return Err(Error::InvalidInput(
                "Q2 needs at least 3 observations".into(),
            ));
        }
        let ybar = data.response_mean();
        let sst: f64 = data.responses().iter().map(|y| (y - ybar) * (y - ybar)).sum();
        if sst == 0.0 {
            return Err(Error::DegenerateData(
                "zero response variance in Q2".into(),
            ));
        }
        let (means, _) = self.loo_moments(data)?;
        let sse: f64 = data
            .responses()
            .iter()
            .zip(&means)
            .map(|(y, m)| (y - m) * (y - m))
            .sum();
        Ok(1.0 - sse / sst)
    }

    /// Empirical proportion of held-out observations inside the central
    /// alpha-prediction interval, by leave-one-out.
    pub fn coverage_curve(&self, data: &Dataset, alphas: &[f64]) -> Result<Vec<f64>> {
        if alphas.is_empty()
            || alphas.windows(2).any(|w| w[0] >= w[1])
            || alphas.iter().any(|a| !(0.0 < *a && *a < 1.0))
        {
            return Err(Error::InvalidInput(
                "alphas must be strictly increasing in (0,1)".into(),
            ));
        }
        let (means, vars) = self.loo_moments(data)?;
        let n = data.n() as f64;
        Ok(alphas
            .iter()
            .map(|&alpha| {
                let z = stats::norm_quantile(0.5 * (1.0 + alpha));
                let hits = data
                    .responses()
                    .iter()
                    .zip(means.iter().zip(&vars))
                    .filter(|(y, (m, v))| (*y - *m).abs() <= z * v.sqrt())
                    .count();
                hits as f64 / n
            })
            .collect())
    }

    /// Serialize the model to a single JSON document. Factorizations are
    /// rebuilt on load, never serialized.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = ModelFile {
            format: "fragility-uq/gp-model/1".into(),
            kernel_params: self.kernel_params.clone(),
            nugget: self.nugget.clone(),
            prior_mean: self.prior_mean,
            standardizer: self.standardizer.clone(),
            points: self.training.points().to_vec(),
            responses: self.training.responses().to_vec(),
        };
        let json = serde_json::to_string_pretty(&file)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: ModelFile = serde_json::from_str(&text)?;
        if file.format != "fragility-uq/gp-model/1" {
            return Err(Error::InvalidInput(format!(
                "unknown model format {:?}",
                file.format
            )));
        }
        let training = Dataset::new(file.points, file.responses)?;
        Self::assemble(
            file.kernel_params,
            file.nugget,
            file.standardizer,
            file.prior_mean,
            training,
        )
    }

    /// Reconstruction error of the cached factorization, relative
    /// Frobenius norm. Diagnostic used by tests.
    pub fn factorization_residual(&self) -> f64 {
        let nugget_vars: Vec<f64> = self
            .training
            .points()
            .iter()
            .map(|p| self.nugget.var_at(p.im))
            .collect();
        let k = kernel::cov_matrix_rows(
            self.train_rows.view(),
            &self.kernel_params,
            &nugget_vars,
            self.jitter,
        );
        let rec = self.chol.dot(&self.chol.t());
        let mut num = 0.0;
        let mut den = 0.0;
        for (a, b) in rec.iter().zip(k.iter()) {
            num += (a - b) * (a - b);
            den += b * b;
        }
        (num / den).sqrt()
    }

    /// Residual of K w = y_c, relative to ||y_c||.
    pub fn weights_residual(&self) -> f64 {
        let nugget_vars: Vec<f64> = self
            .training
            .points()
            .iter()
            .map(|p| self.nugget.var_at(p.im))
            .collect();
        let k = kernel::cov_matrix_rows(
            self.train_rows.view(),
            &self.kernel_params,
            &nugget_vars,
            self.jitter,
        );
        let w = Array1::from(self.weights.clone());
        let kw = k.dot(&w);
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, y) in self.training.responses().iter().enumerate() {
            let yc = y - self.prior_mean;
            num += (kw[i] - yc) * (kw[i] - yc);
            den += yc * yc;
        }
        (num / den.max(1e-300)).sqrt()
    }
}
