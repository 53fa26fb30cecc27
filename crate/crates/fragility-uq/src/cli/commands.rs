//! Command implementations.

use super::{ensure_out_dir, parse_dataset, write_dataset_csv, write_manifest, RunConfig};
use crate::acceptance::{self, Profile};
use crate::error::{Error, Result};
use crate::fragility::{
    self, bilevel_quantile_curve, mean_curve, psi1_curves, psi2_samples, quantile_curve,
    FragilityCurve,
};
use crate::gp::{fit_heteroskedastic, fit_homoskedastic, FitConfig, GpModel, SampleConfig};
use crate::gsa::{
    aggregated_sobol_posterior, bandwidth_heuristic_matrix, betak_posterior, CurveKernel,
    GsaConfig, PickFreezeDesign, SensitivityResult,
};
use crate::testbed::{
    self, default_im_law, default_inputs, default_linear_spec, default_nonlinsat_spec,
    InputDistributionSpec, SyntheticModelSpec,
};
use serde::Serialize;
use std::path::Path;

fn resolve_testbed_spec(config: &RunConfig) -> Result<SyntheticModelSpec> {
    if let Some(path) = &config.testbed_spec {
        let text = std::fs::read_to_string(path)?;
        let spec: SyntheticModelSpec = serde_json::from_str(&text)?;
        spec.validate()?;
        return Ok(spec);
    }
    Ok(match config.testbed_variant.as_deref() {
        Some("interaction") => default_nonlinsat_spec(),
        Some("linear") | None => default_linear_spec(),
        Some(other) => {
            return Err(Error::InvalidInput(format!(
                "unknown testbed variant {other:?} (expected linear | interaction)"
            )))
        }
    })
}

fn resolve_inputs(config: &RunConfig) -> Result<InputDistributionSpec> {
    if let Some(inputs) = &config.inputs {
        let spec = InputDistributionSpec {
            inputs: inputs.clone(),
        };
        spec.validate()?;
        return Ok(spec);
    }
    if config.testbed_spec.is_some() || config.testbed_variant.is_some() {
        return Ok(resolve_testbed_spec(config)?.dist);
    }
    Ok(default_inputs())
}

fn fit_config(config: &RunConfig) -> FitConfig {
    let mut fc = FitConfig::with_seed(config.seed);
    if let Some(r) = config.restarts {
        fc.restarts = r;
    }
    if let Some(e) = config.max_evals {
        fc.max_evals = e;
    }
    fc.map_prior = config.map_prior.unwrap_or(false);
    fc
}

fn sample_config(config: &RunConfig) -> SampleConfig {
    let mut sc = SampleConfig::default();
    if let Some(t) = config.nystrom_threshold {
        sc.exact_threshold = t;
    }
    if let Some(r) = config.nystrom_rank {
        sc.nystrom_rank = Some(r);
    }
    sc
}

fn fit_variant(config: &RunConfig) -> Result<&'static str> {
    match config.variant.as_deref() {
        Some("homo") => Ok("homo"),
        Some("hetero") | None => Ok("hetero"),
        Some(other) => Err(Error::InvalidInput(format!(
            "unknown variant {other:?} (expected homo | hetero)"
        ))),
    }
}

#[derive(Serialize)]
struct FitReport {
    variant: String,
    n: usize,
    input_dim: usize,
    q2: f64,
    coverage: Vec<CoverageRow>,
    objective: f64,
    map_prior: bool,
    jitter: f64,
}

#[derive(Serialize)]
struct CoverageRow {
    alpha: f64,
    empirical: f64,
}

pub fn cmd_fit(config: &RunConfig) -> Result<()> {
    let dataset_path = config
        .dataset
        .clone()
        .ok_or_else(|| Error::InvalidInput("fit needs --dataset".into()))?;
    let data = parse_dataset(&dataset_path)?;
    let dir = ensure_out_dir(config)?;
    let variant = fit_variant(config)?;
    let fc = fit_config(config);
    let model = match variant {
        "homo" => fit_homoskedastic(&data, &fc)?,
        _ => fit_heteroskedastic(&data, &fc)?,
    };
    model.save(&dir.join("model.json"))?;
    let q2 = model.loo_q2(&data)?;
    let alphas: Vec<f64> = (1..=9).map(|k| k as f64 / 10.0).collect();
    let coverage = model.coverage_curve(&data, &alphas)?;
    let report = FitReport {
        variant: variant.to_string(),
        n: data.n(),
        input_dim: data.dim(),
        q2,
        coverage: alphas
            .iter()
            .zip(&coverage)
            .map(|(a, e)| CoverageRow {
                alpha: *a,
                empirical: *e,
            })
            .collect(),
        objective: model.fit_info.as_ref().map_or(f64::NAN, |i| i.best_objective),
        map_prior: fc.map_prior,
        jitter: model.jitter(),
    };
    std::fs::write(
        dir.join("report.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    write_manifest(&dir, "fit", config)?;
    println!("fit: n = {}, Q2 = {q2:.4}, model written to {}", data.n(), dir.display());
    Ok(())
}

fn threshold_suffix(config: &RunConfig, c: f64) -> String {
    if config.thresholds.len() > 1 {
        format!("_c{c}")
    } else {
        String::new()
    }
}

fn maybe_isotonic(config: &RunConfig, curve: FragilityCurve) -> FragilityCurve {
    if config.isotonic {
        fragility::isotonic_non_decreasing(&curve)
    } else {
        curve
    }
}

pub fn cmd_fragility(config: &RunConfig) -> Result<()> {
    let model_path = config
        .model
        .clone()
        .ok_or_else(|| Error::InvalidInput("fragility needs --model".into()))?;
    let model = GpModel::load(&model_path)?;
    let dir = ensure_out_dir(config)?;
    let grid = config.build_grid()?;
    let dist = resolve_inputs(config)?;
    if dist.d() + 1 != model.training().dim() {
        return Err(Error::DimensionMismatch {
            what: "input marginals vs model dimension",
            expected: model.training().dim() - 1,
            got: dist.d(),
        });
    }
    let m = config.m.unwrap_or(1000);
    let p_draws = config.p_draws.unwrap_or(200);
    let xs = testbed::sample_inputs(&dist, m, config.seed)?;
    let sc = sample_config(config);

    for &c in &config.thresholds {
        let suffix = threshold_suffix(config, c);
        let curves1 = psi1_curves(&model, &grid, xs.view(), c)?;
        let mean = maybe_isotonic(config, mean_curve(&grid, curves1.view())?);
        fragility::write_curve_csv(&dir.join(format!("mean{suffix}.csv")), &mean, None)?;
        for &gamma in &config.gammas {
            let q = maybe_isotonic(config, quantile_curve(&grid, curves1.view(), gamma)?);
            fragility::write_curve_csv(&dir.join(format!("quantile_{gamma}{suffix}.csv")), &q, None)?;
        }
        let ensemble = psi2_samples(&model, &grid, xs.view(), c, p_draws, config.seed, &sc)?;
        for &gamma in &config.gammas {
            let bl = maybe_isotonic(config, bilevel_quantile_curve(&ensemble, gamma, gamma)?);
            fragility::write_curve_csv(&dir.join(format!("bilevel_{gamma}{suffix}.csv")), &bl, None)?;
        }
        if config.audit_ensemble {
            fragility::write_ensemble_csv(&dir.join(format!("ensemble{suffix}.csv")), &ensemble)?;
        }
        if let Some(dataset_path) = &config.dataset {
            let data = parse_dataset(dataset_path)?;
            let clusters = config.clusters.unwrap_or(10);
            let reference = fragility::binned_mc_reference(&data, c, clusters, config.seed)?;
            let lo: Vec<f64> = reference
                .probabilities
                .iter()
                .zip(&reference.halfwidths)
                .map(|(p, h)| (p - h).max(0.0))
                .collect();
            let hi: Vec<f64> = reference
                .probabilities
                .iter()
                .zip(&reference.halfwidths)
                .map(|(p, h)| (p + h).min(1.0))
                .collect();
            let mut text = String::from("a,value,lo,hi,count\n");
            for (k, center) in reference.centers.iter().enumerate() {
                text.push_str(&format!(
                    "{center},{},{},{},{}\n",
                    reference.probabilities[k], lo[k], hi[k], reference.counts[k]
                ));
            }
            std::fs::write(dir.join(format!("reference{suffix}.csv")), text)?;
        }
    }
    write_manifest(&dir, "fragility", config)?;
    println!("fragility: curves written to {}", dir.display());
    Ok(())
}

#[derive(Serialize)]
struct SensitivityEntry {
    input: String,
    estimate: f64,
    q10: Option<f64>,
    q90: Option<f64>,
    sigma_gp: f64,
    sigma_mc: f64,
    ratio_mc_over_gp: Option<f64>,
    negative: bool,
    dropped_replicates: usize,
}

#[derive(Serialize)]
struct SensitivityReport {
    kind: &'static str,
    entries: Vec<SensitivityEntry>,
}

fn sensitivity_report(result: &SensitivityResult, names: &[String]) -> SensitivityReport {
    let entries = names
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let sigma_gp = result.sigma_gp[i];
            let sigma_mc = result.sigma_mc[i];
            SensitivityEntry {
                input: name.clone(),
                estimate: result.point_estimate[i],
                q10: result.replicate_quantile(i, 0.1),
                q90: result.replicate_quantile(i, 0.9),
                sigma_gp,
                sigma_mc,
                ratio_mc_over_gp: if sigma_gp > 0.0 {
                    Some(sigma_mc / sigma_gp)
                } else {
                    None
                },
                negative: result.point_estimate[i] < 0.0,
                dropped_replicates: result.dropped_replicates[i],
            }
        })
        .collect();
    SensitivityReport {
        kind: result.kind.label(),
        entries,
    }
}

fn append_replicates(csv: &mut String, result: &SensitivityResult, names: &[String]) {
    for (i, name) in names.iter().enumerate() {
        let reps = &result.replicates[i];
        for p in 0..reps.nrows() {
            for b in 0..reps.ncols() {
                csv.push_str(&format!(
                    "{},{name},{p},{b},{}\n",
                    result.kind.label(),
                    reps[[p, b]]
                ));
            }
        }
    }
}

pub fn cmd_gsa(config: &RunConfig) -> Result<()> {
    let model_path = config
        .model
        .clone()
        .ok_or_else(|| Error::InvalidInput("gsa needs --model".into()))?;
    let model = GpModel::load(&model_path)?;
    let dir = ensure_out_dir(config)?;
    let grid = config.build_grid()?;
    let dist = resolve_inputs(config)?;
    if dist.d() + 1 != model.training().dim() {
        return Err(Error::DimensionMismatch {
            what: "input marginals vs model dimension",
            expected: model.training().dim() - 1,
            got: dist.d(),
        });
    }
    let names = dist.names();
    let m = config.m.unwrap_or(5000);
    let design = PickFreezeDesign::sample(m, &dist.marginals()?, config.seed)?;
    let c = config.threshold();
    let gsa_config = GsaConfig {
        p_draws: config.p_draws.unwrap_or(100),
        bootstrap: config.bootstrap.unwrap_or(100),
        sample: sample_config(config),
        bootstrap_counts_override: None,
    };
    let which = config.indices.as_deref().unwrap_or("both");
    if !matches!(which, "both" | "sobol" | "betak") {
        return Err(Error::InvalidInput(format!(
            "unknown indices selection {which:?} (expected sobol | betak | both)"
        )));
    }

    let mut reports = Vec::new();
    let mut replicate_csv = String::from("kind,input,p,b,value\n");
    if which == "both" || which == "sobol" {
        let (first, total) =
            aggregated_sobol_posterior(&model, &design, &grid, c, config.seed, &gsa_config)?;
        reports.push(sensitivity_report(&first, &names));
        reports.push(sensitivity_report(&total, &names));
        append_replicates(&mut replicate_csv, &first, &names);
        append_replicates(&mut replicate_csv, &total, &names);
    }
    if which == "both" || which == "betak" {
        let bandwidth = match config.bandwidth {
            Some(b) => b,
            None => {
                let base_curves = psi1_curves(&model, &grid, design.base().view(), c)?;
                bandwidth_heuristic_matrix(&grid, base_curves.view())?
            }
        };
        let kernel = CurveKernel::new(bandwidth, grid.clone())?;
        let (first, total) =
            betak_posterior(&model, &design, &grid, c, &kernel, config.seed, &gsa_config)?;
        reports.push(sensitivity_report(&first, &names));
        reports.push(sensitivity_report(&total, &names));
        append_replicates(&mut replicate_csv, &first, &names);
        append_replicates(&mut replicate_csv, &total, &names);
    }

    #[derive(Serialize)]
    struct GsaOutput {
        threshold: f64,
        m: usize,
        p_draws: usize,
        bootstrap: usize,
        results: Vec<SensitivityReport>,
    }
    let out = GsaOutput {
        threshold: c,
        m,
        p_draws: gsa_config.p_draws,
        bootstrap: gsa_config.bootstrap,
        results: reports,
    };
    std::fs::write(
        dir.join("sensitivity.json"),
        serde_json::to_string_pretty(&out)?,
    )?;
    std::fs::write(dir.join("replicates.csv"), replicate_csv)?;
    write_manifest(&dir, "gsa", config)?;
    println!("gsa: sensitivity results written to {}", dir.display());
    Ok(())
}

pub fn cmd_testbed(config: &RunConfig) -> Result<()> {
    let spec = resolve_testbed_spec(config)?;
    let dir = ensure_out_dir(config)?;
    let n = config.n.unwrap_or(500);
    let law = config.im_law.unwrap_or_else(default_im_law);
    let data = testbed::make_dataset(&spec, law, n, config.seed)?;
    write_dataset_csv(&dir.join("dataset.csv"), &data)?;
    std::fs::write(dir.join("spec.json"), serde_json::to_string_pretty(&spec)?)?;

    let grid = config.build_grid()?;
    let truth_mean = testbed::mean_curve_oracle(&spec, &grid)?;
    {
        let mut text = String::from("a,value\n");
        for (a, v) in grid.values().iter().zip(&truth_mean) {
            text.push_str(&format!("{a},{v}\n"));
        }
        std::fs::write(dir.join("truth_mean_curve.csv"), text)?;
    }
    {
        // true fragility at every simulated row
        let mut text = String::from("a,value\n");
        for p in data.points() {
            let v = testbed::true_fragility(&spec, p.im, &p.params)?;
            text.push_str(&format!("{},{v}\n", p.im));
        }
        std::fs::write(dir.join("truth_fragility.csv"), text)?;
    }

    if !config.skip_oracles {
        let outer = config.oracle_outer.unwrap_or(200);
        let inner = config.oracle_inner.unwrap_or(200);
        let sobol = testbed::oracle_aggregated_sobol(&spec, &grid, outer, inner, config.seed)?;
        let write_oracle = |path: &Path, oracle: &testbed::OracleIndices| -> Result<()> {
            let mut text = String::from("input,first,first_se,total,total_se\n");
            for (k, name) in spec.dist.names().iter().enumerate() {
                text.push_str(&format!(
                    "{name},{},{},{},{}\n",
                    oracle.first[k], oracle.first_se[k], oracle.total[k], oracle.total_se[k]
                ));
            }
            std::fs::write(path, text)?;
            Ok(())
        };
        write_oracle(&dir.join("oracle_sobol.csv"), &sobol)?;

        let base = testbed::sample_inputs(&spec.dist, 500, config.seed)?;
        let curves = testbed::true_fragility_matrix(&spec, &grid, base.view())?;
        let bandwidth = match config.bandwidth {
            Some(b) => b,
            None => bandwidth_heuristic_matrix(&grid, curves.view())?,
        };
        let kernel = CurveKernel::new(bandwidth, grid.clone())?;
        let betak = testbed::oracle_betak(&spec, &grid, &kernel, outer, inner, config.seed)?;
        write_oracle(&dir.join("oracle_betak.csv"), &betak)?;
    }
    write_manifest(&dir, "testbed", config)?;
    println!(
        "testbed: {} simulations and truth files written to {}",
        n,
        dir.display()
    );
    Ok(())
}

pub fn cmd_validate(config: &RunConfig) -> Result<()> {
    let dir = ensure_out_dir(config)?;
    let profile = match config.profile.as_deref() {
        Some("quick") => Profile::Quick,
        Some("full") | None => Profile::Full,
        Some(other) => {
            return Err(Error::InvalidInput(format!(
                "unknown profile {other:?} (expected quick | full)"
            )))
        }
    };
    let report = acceptance::run(profile, config.seed);
    let mut text = String::new();
    for c in &report.criteria {
        let line = format!(
            "criterion {:>2} [{}]: {} - {}",
            c.id,
            c.name,
            if c.passed { "PASS" } else { "FAIL" },
            c.detail
        );
        println!("{line}");
        text.push_str(&line);
        text.push('\n');
    }
    std::fs::write(dir.join("report.txt"), &text)?;
    std::fs::write(
        dir.join("report.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    write_manifest(&dir, "validate", config)?;
    let failed = report.criteria.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        return Err(Error::DegenerateData(format!(
            "{failed} acceptance criteria failed (see {})",
            dir.join("report.txt").display()
        )));
    }
    println!("validate: all criteria passed");
    Ok(())
}
