//! Python bindings: fit surrogates, evaluate fragility curves and run
//! the pick-freeze sensitivity estimators from Python.
//!
//! Build as an extension module (`cargo build --release -p
//! fragility-uq-py`) and rename the produced `libfragility_uq.so` to
//! `fragility_uq.so` on the Python path; see python/smoke_test.py.

use std::collections::HashMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use fragility_uq_core::error::Error;
use fragility_uq_core::fragility::{
    bilevel_quantile_curve, mean_curve, psi1_curves, psi2_samples, quantile_curve, ImGrid,
};
use fragility_uq_core::gp::{
    fit_heteroskedastic, fit_homoskedastic, Dataset, FitConfig, GpModel, SampleConfig,
};
use fragility_uq_core::gsa::{
    aggregated_sobol_posterior, bandwidth_heuristic_matrix, betak_posterior, CurveKernel,
    GsaConfig, PickFreezeDesign,
};
use fragility_uq_core::kernel::InputPoint;
use fragility_uq_core::testbed::{
    default_im_law, default_linear_spec, default_nonlinsat_spec, make_dataset, true_fragility,
    SyntheticModelSpec,
};
use ndarray::Array2;

fn pyerr(err: Error) -> PyErr {
    match err.exit_code() {
        2 => PyValueError::new_err(err.to_string()),
        _ => PyRuntimeError::new_err(err.to_string()),
    }
}

fn rows_from_vecs(xs: &[Vec<f64>]) -> PyResult<Array2<f64>> {
    if xs.is_empty() {
        return Err(PyValueError::new_err("empty parameter sample"));
    }
    let d = xs[0].len();
    if xs.iter().any(|r| r.len() != d) {
        return Err(PyValueError::new_err("ragged parameter sample"));
    }
    let flat: Vec<f64> = xs.iter().flatten().copied().collect();
    Array2::from_shape_vec((xs.len(), d), flat)
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

fn resolve_spec(variant: &str) -> PyResult<SyntheticModelSpec> {
    match variant {
        "linear" => Ok(default_linear_spec()),
        "interaction" => Ok(default_nonlinsat_spec()),
        other => Err(PyValueError::new_err(format!(
            "unknown testbed variant {other:?} (expected linear | interaction)"
        ))),
    }
}

/// A fitted Gaussian-process surrogate of the log-EDP.
#[pyclass(name = "GpSurrogate")]
struct PyGpSurrogate {
    inner: GpModel,
}

#[pymethods]
impl PyGpSurrogate {
    /// Fit from raw arrays: IM values, parameter rows and log-EDP
    /// responses. `variant` is "homo" or "hetero".
    #[staticmethod]
    #[pyo3(signature = (ims, xs, ys, variant="hetero", seed=0, map_prior=false, restarts=10, max_evals=500))]
    #[allow(clippy::too_many_arguments)]
    fn fit(
        ims: Vec<f64>,
        xs: Vec<Vec<f64>>,
        ys: Vec<f64>,
        variant: &str,
        seed: u64,
        map_prior: bool,
        restarts: usize,
        max_evals: usize,
    ) -> PyResult<Self> {
        if ims.len() != xs.len() || ims.len() != ys.len() {
            return Err(PyValueError::new_err("ims, xs and ys must share length"));
        }
        let points: Vec<InputPoint> = ims
            .iter()
            .zip(&xs)
            .map(|(a, x)| InputPoint::new(*a, x.clone()).map_err(pyerr))
            .collect::<PyResult<_>>()?;
        let data = Dataset::new(points, ys).map_err(pyerr)?;
        let config = FitConfig {
            seed,
            map_prior,
            restarts,
            max_evals,
            ..FitConfig::default()
        };
        let inner = match variant {
            "homo" => fit_homoskedastic(&data, &config).map_err(pyerr)?,
            "hetero" => fit_heteroskedastic(&data, &config).map_err(pyerr)?,
            other => {
                return Err(PyValueError::new_err(format!(
                    "unknown variant {other:?} (expected homo | hetero)"
                )))
            }
        };
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: GpModel::load(&path).map_err(pyerr)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(pyerr)
    }

    /// Kriging moments at one point: (mean, latent_sd, observation_sd).
    fn predict(&self, im: f64, x: Vec<f64>) -> PyResult<(f64, f64, f64)> {
        let q = InputPoint::new(im, x).map_err(pyerr)?;
        let m = self.inner.predict(&q).map_err(pyerr)?;
        Ok((m.mean, m.latent_sd, m.observation_sd))
    }

    /// Leave-one-out predictive coefficient of determination on the
    /// training sample.
    fn loo_q2(&self) -> PyResult<f64> {
        let training = self.inner.training().clone();
        self.inner.loo_q2(&training).map_err(pyerr)
    }

    /// Empirical coverage of central prediction intervals, by
    /// leave-one-out on the training sample.
    fn coverage(&self, alphas: Vec<f64>) -> PyResult<Vec<f64>> {
        let training = self.inner.training().clone();
        self.inner.coverage_curve(&training, &alphas).map_err(pyerr)
    }

    /// Plug-in fragility estimate at (a, x) for threshold c.
    fn psi1(&self, a: f64, x: Vec<f64>, c: f64) -> PyResult<f64> {
        fragility_uq_core::fragility::psi1(&self.inner, a, &x, c).map_err(pyerr)
    }

    /// Fragility curve family over a regular grid: mean curve, quantile
    /// curves and bi-level quantile curves (gamma_G = gamma_X = gamma).
    #[pyo3(signature = (a0, a1, t, xs, c, gammas, p_draws=200, seed=0))]
    #[allow(clippy::too_many_arguments)]
    fn fragility_curves(
        &self,
        a0: f64,
        a1: f64,
        t: usize,
        xs: Vec<Vec<f64>>,
        c: f64,
        gammas: Vec<f64>,
        p_draws: usize,
        seed: u64,
    ) -> PyResult<HashMap<String, Vec<f64>>> {
        let grid = ImGrid::regular(a0, a1, t).map_err(pyerr)?;
        let rows = rows_from_vecs(&xs)?;
        let curves = psi1_curves(&self.inner, &grid, rows.view(), c).map_err(pyerr)?;
        let mut out = HashMap::new();
        out.insert("a".to_string(), grid.values().to_vec());
        out.insert(
            "mean".to_string(),
            mean_curve(&grid, curves.view()).map_err(pyerr)?.probabilities,
        );
        for &gamma in &gammas {
            let q = quantile_curve(&grid, curves.view(), gamma).map_err(pyerr)?;
            out.insert(format!("quantile_{gamma}"), q.probabilities);
        }
        let ensemble = psi2_samples(
            &self.inner,
            &grid,
            rows.view(),
            c,
            p_draws,
            seed,
            &SampleConfig::default(),
        )
        .map_err(pyerr)?;
        for &gamma in &gammas {
            let b = bilevel_quantile_curve(&ensemble, gamma, gamma).map_err(pyerr)?;
            out.insert(format!("bilevel_{gamma}"), b.probabilities);
        }
        Ok(out)
    }

    /// Joint posterior draws of the latent process at arbitrary points;
    /// returns count rows of values.
    #[pyo3(signature = (points, count, seed=0))]
    fn sample_posterior(
        &self,
        points: Vec<(f64, Vec<f64>)>,
        count: usize,
        seed: u64,
    ) -> PyResult<Vec<Vec<f64>>> {
        let queries: Vec<InputPoint> = points
            .into_iter()
            .map(|(a, x)| InputPoint::new(a, x).map_err(pyerr))
            .collect::<PyResult<_>>()?;
        let draws = fragility_uq_core::gp::sample_posterior(
            &self.inner,
            &queries,
            count,
            seed,
            &SampleConfig::default(),
        )
        .map_err(pyerr)?;
        Ok(draws.rows().into_iter().map(|r| r.to_vec()).collect())
    }

    /// Pick-freeze sensitivity indices of the fragility curves with the
    /// posterior/bootstrap variance split. `kind` is "sobol" or "betak".
    #[pyo3(signature = (kind, means, covs, a0, a1, t, c, m=2000, p_draws=50, bootstrap=50, seed=0))]
    #[allow(clippy::too_many_arguments)]
    fn sensitivity(
        &self,
        kind: &str,
        means: Vec<f64>,
        covs: Vec<f64>,
        a0: f64,
        a1: f64,
        t: usize,
        c: f64,
        m: usize,
        p_draws: usize,
        bootstrap: usize,
        seed: u64,
    ) -> PyResult<HashMap<String, Vec<f64>>> {
        if means.len() != covs.len() {
            return Err(PyValueError::new_err("means and covs must share length"));
        }
        let marginals: Vec<fragility_uq_core::gsa::InputMarginal> = means
            .iter()
            .zip(&covs)
            .map(|(mu, cv)| {
                fragility_uq_core::gsa::InputMarginal::uniform_mean_cov(*mu, *cv).map_err(pyerr)
            })
            .collect::<PyResult<_>>()?;
        let design = PickFreezeDesign::sample(m, &marginals, seed).map_err(pyerr)?;
        let grid = ImGrid::regular(a0, a1, t).map_err(pyerr)?;
        let config = GsaConfig::new(p_draws, bootstrap);
        let (first, total) = match kind {
            "sobol" => aggregated_sobol_posterior(&self.inner, &design, &grid, c, seed, &config)
                .map_err(pyerr)?,
            "betak" => {
                let base = psi1_curves(&self.inner, &grid, design.base().view(), c).map_err(pyerr)?;
                let bw = bandwidth_heuristic_matrix(&grid, base.view()).map_err(pyerr)?;
                let kernel = CurveKernel::new(bw, grid.clone()).map_err(pyerr)?;
                betak_posterior(&self.inner, &design, &grid, c, &kernel, seed, &config)
                    .map_err(pyerr)?
            }
            other => {
                return Err(PyValueError::new_err(format!(
                    "unknown index kind {other:?} (expected sobol | betak)"
                )))
            }
        };
        let mut out = HashMap::new();
        out.insert("first".to_string(), first.point_estimate);
        out.insert("first_sigma_gp".to_string(), first.sigma_gp);
        out.insert("first_sigma_mc".to_string(), first.sigma_mc);
        out.insert("total".to_string(), total.point_estimate);
        out.insert("total_sigma_gp".to_string(), total.sigma_gp);
        out.insert("total_sigma_mc".to_string(), total.sigma_mc);
        Ok(out)
    }
}

/// Generate a synthetic benchmark dataset; returns (ims, xs, ys).
#[pyfunction]
#[pyo3(signature = (n, seed=0, variant="linear"))]
fn make_testbed(
    n: usize,
    seed: u64,
    variant: &str,
) -> PyResult<(Vec<f64>, Vec<Vec<f64>>, Vec<f64>)> {
    let spec = resolve_spec(variant)?;
    let data = make_dataset(&spec, default_im_law(), n, seed).map_err(pyerr)?;
    let ims = data.points().iter().map(|p| p.im).collect();
    let xs = data.points().iter().map(|p| p.params.clone()).collect();
    Ok((ims, xs, data.responses().to_vec()))
}

/// Closed-form fragility of the synthetic benchmark at (a, x).
#[pyfunction]
#[pyo3(signature = (a, x, variant="linear"))]
fn testbed_true_fragility(a: f64, x: Vec<f64>, variant: &str) -> PyResult<f64> {
    let spec = resolve_spec(variant)?;
    true_fragility(&spec, a, &x).map_err(pyerr)
}

/// Input means and coefficients of variation of the default benchmark.
#[pyfunction]
fn testbed_inputs() -> (Vec<String>, Vec<f64>, Vec<f64>) {
    let dist = fragility_uq_core::testbed::default_inputs();
    let names = dist.inputs.iter().map(|i| i.name.clone()).collect();
    let means = dist.inputs.iter().map(|i| i.mean).collect();
    let covs = dist.inputs.iter().map(|i| i.cov).collect();
    (names, means, covs)
}

#[pymodule]
fn fragility_uq(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGpSurrogate>()?;
    m.add_function(wrap_pyfunction!(make_testbed, m)?)?;
    m.add_function(wrap_pyfunction!(testbed_true_fragility, m)?)?;
    m.add_function(wrap_pyfunction!(testbed_inputs, m)?)?;
    Ok(())
}
