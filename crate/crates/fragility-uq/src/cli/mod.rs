//! Batch command-line front end.
//!
//! One JSON config file per run, with CLI flags overriding file values.
//! Every command writes a manifest capturing the full effective config
//! and seeds, and is byte-reproducible given the same inputs.

mod commands;

pub use commands::{cmd_fit, cmd_fragility, cmd_gsa, cmd_testbed, cmd_validate};

use crate::error::{Error, Result};
use crate::gp::Dataset;
use crate::kernel::InputPoint;
use crate::testbed::ImLaw;
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Effective settings of one run. Optional fields fall back to defaults
/// at the point of use; the manifest records the resolved values.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: u64,
    /// "homo" or "hetero".
    pub variant: Option<String>,
    pub thresholds: Vec<f64>,
    /// (a0, a1, T)
    pub grid: Option<(f64, f64, usize)>,
    pub gammas: Vec<f64>,
    pub m: Option<usize>,
    pub p_draws: Option<usize>,
    pub bootstrap: Option<usize>,
    pub map_prior: Option<bool>,
    pub restarts: Option<usize>,
    pub max_evals: Option<usize>,
    pub nystrom_threshold: Option<usize>,
    pub nystrom_rank: Option<usize>,
    pub bandwidth: Option<f64>,
    /// Input marginals for design sampling (name/mean/cov uniforms).
    pub inputs: Option<Vec<crate::testbed::InputSpec>>,
    /// Testbed generation settings.
    pub n: Option<usize>,
    pub testbed_variant: Option<String>,
    pub testbed_spec: Option<PathBuf>,
    pub im_law: Option<ImLaw>,
    pub oracle_outer: Option<usize>,
    pub oracle_inner: Option<usize>,
    pub skip_oracles: bool,
    pub clusters: Option<usize>,
    pub isotonic: bool,
    pub audit_ensemble: bool,
    /// Which index families the gsa command runs: "sobol", "betak", "both".
    pub indices: Option<String>,
    /// validate: "quick" or "full".
    pub profile: Option<String>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: RunConfig = serde_json::from_str(&text)?;
        Ok(cfg)
    }

    pub fn grid_spec(&self) -> (f64, f64, usize) {
        self.grid.unwrap_or((0.1, 25.0, 100))
    }

    pub fn build_grid(&self) -> Result<crate::fragility::ImGrid> {
        let (a0, a1, t) = self.grid_spec();
        crate::fragility::ImGrid::regular(a0, a1, t)
    }

    pub fn threshold(&self) -> f64 {
        *self.thresholds.first().unwrap_or(&1.0)
    }

    pub fn out_dir(&self) -> Result<PathBuf> {
        self.out
            .clone()
            .ok_or_else(|| Error::InvalidInput("missing output directory (--out)".into()))
    }
}

#[derive(Parser)]
#[command(
    name = "fragility-uq",
    version,
    about = "GP fragility curves with uncertainty propagation and global sensitivity analysis"
)]
pub struct CliArgs {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Clone)]
pub struct CommonFlags {
    /// JSON config file; flags override file values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Surrogate variant: homo | hetero.
    #[arg(long)]
    pub variant: Option<String>,
    /// Failure threshold(s), comma separated.
    #[arg(long, value_delimiter = ',')]
    pub threshold: Option<Vec<f64>>,
    /// IM grid as a0,a1,T.
    #[arg(long)]
    pub grid: Option<String>,
    /// Quantile level(s), comma separated.
    #[arg(long, value_delimiter = ',')]
    pub gamma: Option<Vec<f64>>,
    /// Monte-Carlo design size.
    #[arg(long = "m")]
    pub m: Option<usize>,
    /// Posterior draws.
    #[arg(long = "P")]
    pub p_draws: Option<usize>,
    /// Bootstrap redraws.
    #[arg(long = "B")]
    pub bootstrap: Option<usize>,
    /// Fit with the jointly robust log-prior (MAP).
    #[arg(long)]
    pub map: bool,
    /// Number of testbed simulations.
    #[arg(long = "n")]
    pub n: Option<usize>,
    /// Testbed form: linear | interaction.
    #[arg(long)]
    pub testbed_variant: Option<String>,
    /// Curve-kernel bandwidth override.
    #[arg(long)]
    pub bandwidth: Option<f64>,
    /// Index families for gsa: sobol | betak | both.
    #[arg(long)]
    pub indices: Option<String>,
    /// Validation profile: quick | full.
    #[arg(long)]
    pub profile: Option<String>,
    /// Skip the brute-force oracle outputs of the testbed command.
    #[arg(long)]
    pub skip_oracles: bool,
}

#[derive(Subcommand)]
pub enum Command {
    /// Fit a GP surrogate to a dataset and write the model with
    /// leave-one-out diagnostics.
    Fit(CommonFlags),
    /// Estimate fragility, quantile and bi-level quantile curves.
    Fragility(CommonFlags),
    /// Estimate aggregated Sobol and beta-k indices with the variance split.
    Gsa(CommonFlags),
    /// Generate a synthetic benchmark dataset with analytic truth files.
    Testbed(CommonFlags),
    /// Run the acceptance suite on the testbed.
    Validate(CommonFlags),
}

impl CommonFlags {
    /// Resolve the effective config: file first, then flag overrides.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(v) = &self.dataset {
            cfg.dataset = Some(v.clone());
        }
        if let Some(v) = &self.model {
            cfg.model = Some(v.clone());
        }
        if let Some(v) = &self.out {
            cfg.out = Some(v.clone());
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = &self.variant {
            cfg.variant = Some(v.clone());
        }
        if let Some(v) = &self.threshold {
            cfg.thresholds = v.clone();
        }
        if let Some(v) = &self.grid {
            cfg.grid = Some(parse_grid(v)?);
        }
        if let Some(v) = &self.gamma {
            cfg.gammas = v.clone();
        }
        if let Some(v) = self.m {
            cfg.m = Some(v);
        }
        if let Some(v) = self.p_draws {
            cfg.p_draws = Some(v);
        }
        if let Some(v) = self.bootstrap {
            cfg.bootstrap = Some(v);
        }
        if self.map {
            cfg.map_prior = Some(true);
        }
        if let Some(v) = self.n {
            cfg.n = Some(v);
        }
        if let Some(v) = &self.testbed_variant {
            cfg.testbed_variant = Some(v.clone());
        }
        if let Some(v) = self.bandwidth {
            cfg.bandwidth = Some(v);
        }
        if let Some(v) = &self.indices {
            cfg.indices = Some(v.clone());
        }
        if let Some(v) = &self.profile {
            cfg.profile = Some(v.clone());
        }
        if self.skip_oracles {
            cfg.skip_oracles = true;
        }
        if cfg.thresholds.is_empty() {
            cfg.thresholds = vec![1.0];
        }
        if cfg.gammas.is_empty() {
            cfg.gammas = vec![0.1, 0.9];
        }
        for &c in &cfg.thresholds {
            if !(c > 0.0) {
                return Err(Error::InvalidInput(format!("threshold must be positive, got {c}")));
            }
        }
        Ok(cfg)
    }
}

fn parse_grid(text: &str) -> Result<(f64, f64, usize)> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 3 {
        return Err(Error::InvalidInput(format!(
            "grid must be a0,a1,T, got {text:?}"
        )));
    }
    let a0: f64 = parts[0]
        .trim()
        .parse()
        .map_err(|_| Error::InvalidInput(format!("bad grid a0 {:?}", parts[0])))?;
    let a1: f64 = parts[1]
        .trim()
        .parse()
        .map_err(|_| Error::InvalidInput(format!("bad grid a1 {:?}", parts[1])))?;
    let t: usize = parts[2]
        .trim()
        .parse()
        .map_err(|_| Error::InvalidInput(format!("bad grid T {:?}", parts[2])))?;
    if !(a0 > 0.0 && a1 > a0 && t >= 2) {
        return Err(Error::InvalidInput(format!("invalid grid {text:?}")));
    }
    Ok((a0, a1, t))
}

/// Parse the dataset CSV: header `a,x1,...,xd,y`, one simulation per row.
pub fn parse_dataset(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| Error::Parse {
        line: 1,
        msg: "empty dataset file".into(),
    })?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.len() < 2 || cols[0] != "a" || *cols.last().unwrap() != "y" {
        return Err(Error::Parse {
            line: 1,
            msg: format!("expected header a,x1,...,xd,y, got {header:?}"),
        });
    }
    let d = cols.len() - 2;
    let mut points = Vec::new();
    let mut responses = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != d + 2 {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected {} fields, got {}", d + 2, fields.len()),
            });
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("bad number {s:?}"),
            })
        };
        let a = parse(fields[0])?;
        let mut params = Vec::with_capacity(d);
        for f in &fields[1..=d] {
            params.push(parse(f)?);
        }
        let y = parse(fields[d + 1])?;
        if !(a > 0.0) {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("IM must be positive, got {a}"),
            });
        }
        points.push(InputPoint::new(a, params).map_err(|e| Error::Parse {
            line: lineno,
            msg: e.to_string(),
        })?);
        responses.push(y);
    }
    Dataset::new(points, responses)
}

/// Write a dataset in the shared CSV format.
pub fn write_dataset_csv(path: &Path, data: &Dataset) -> Result<()> {
    let d = data.dim() - 1;
    let mut out = String::from("a");
    for k in 1..=d {
        out.push_str(&format!(",x{k}"));
    }
    out.push_str(",y\n");
    for (p, y) in data.points().iter().zip(data.responses()) {
        out.push_str(&format!("{}", p.im));
        for v in &p.params {
            out.push_str(&format!(",{v}"));
        }
        out.push_str(&format!(",{y}\n"));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Manifest written to every output directory: the resolved config, tool
/// version and master seed. No timestamps, so reruns are byte-identical.
#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    master_seed: u64,
    config: &'a RunConfig,
}

pub fn write_manifest(dir: &Path, command: &str, config: &RunConfig) -> Result<()> {
    let manifest = Manifest {
        tool: "fragility-uq",
        version: env!("CARGO_PKG_VERSION"),
        command,
        master_seed: config.seed,
        config,
    };
    let json = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(dir.join("manifest.json"), json)?;
    Ok(())
}

pub fn ensure_out_dir(config: &RunConfig) -> Result<PathBuf> {
    let dir = config.out_dir()?;
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

/// Entry point used by the binary: dispatch, map errors to exit codes.
pub fn run(args: CliArgs) -> i32 {
    let result = match &args.command {
        Command::Fit(flags) => flags.resolve().and_then(|cfg| cmd_fit(&cfg)),
        Command::Fragility(flags) => flags.resolve().and_then(|cfg| cmd_fragility(&cfg)),
        Command::Gsa(flags) => flags.resolve().and_then(|cfg| cmd_gsa(&cfg)),
        Command::Testbed(flags) => flags.resolve().and_then(|cfg| cmd_testbed(&cfg)),
        Command::Validate(flags) => flags.resolve().and_then(|cfg| cmd_validate(&cfg)),
    };
    match result {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            err.exit_code()
        }
    }
}
