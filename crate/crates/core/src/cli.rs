//! Batch commands behind the `halsx` binary.
//!
//! Every command reads one TOML run configuration (unknown keys rejected),
//! applies the command-line overrides and writes its outputs together with
//! the resolved configuration (`run_config.toml`) into the output directory.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::bench::{
    render_svg, run_experiment, sample, simulate, timing_sweep, write_report, write_timing, ExperimentSpec,
    SamplingScheme, SyntheticSpec, TimingSpec,
};
use crate::error::{Error, Result};
use crate::identifiability::{check, is_separable, BoundaryReport, IdentifiabilityReport, Verdict, DEFAULT_CAP, DEFAULT_TOL};
use crate::io::{load_matrix, save_matrix};
use crate::linkmodels::{FeatureSet, Features, LinkSpec};
use crate::operators::{read_mask, read_measurements, write_mask, write_measurements, MeasurementVector};
use crate::solver::{fit, fit2, FactorModel, SolverConfig, StopReason};

pub const EXIT_MAX_ITER: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_BAD_INPUT: i32 = 4;
pub const EXIT_DIVERGED: i32 = 5;

#[derive(Debug, Parser)]
#[command(name = "halsx", version, about = "Nonnegative matrix factorization with side information")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for simulation, sampling and solver initialization.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    pub solver: Option<Algorithm>,
    /// Row link family: identity, linear, spline or kernel.
    #[arg(long, global = true)]
    pub link_row: Option<String>,
    /// Column link family.
    #[arg(long, global = true)]
    pub link_col: Option<String>,
    /// Factorization rank.
    #[arg(long, global = true)]
    pub rank: Option<usize>,
    /// Output directory, `out` when unset.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Simulate a matrix with features from the generative model.
    Simulate,
    /// Measure a matrix with a sampling scheme.
    Sample,
    /// Fit a factor model to measurements.
    Fit,
    /// Predict blocks for new rows and/or columns from a fitted model.
    Predict,
    /// Check the identifiability conditions of a factor matrix.
    Check,
    /// Run the synthetic benchmark and optional timing sweep.
    Bench,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    /// Slack-variable solver with link functions.
    #[default]
    Halsx,
    /// Sampling-error solver (identity and linear links).
    Halsx2,
    /// Slack-variable solver without features.
    Hals,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Desk,
    Large,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleSection {
    pub matrix: PathBuf,
    pub scheme: SamplingScheme,
    #[serde(default = "default_rate")]
    pub rate: f64,
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_rate() -> f64 {
    0.3
}

/// Inputs of `fit`. Missing feature files mean no side information.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub mask: PathBuf,
    pub measurements: PathBuf,
    #[serde(default)]
    pub row_features: Option<PathBuf>,
    #[serde(default)]
    pub col_features: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictSection {
    pub model: PathBuf,
    #[serde(default)]
    pub row_features: Option<PathBuf>,
    #[serde(default)]
    pub col_features: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSection {
    pub matrix: PathBuf,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_cap")]
    pub cap: usize,
}

fn default_tol() -> f64 {
    DEFAULT_TOL
}

fn default_cap() -> usize {
    DEFAULT_CAP
}

/// One run configuration covering every command; each command reads only
/// its own sections.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub out_dir: Option<PathBuf>,
    pub algorithm: Algorithm,
    /// Used by `simulate` when `[synthetic]` is absent.
    pub preset: Option<Preset>,
    pub synthetic: Option<SyntheticSpec>,
    pub sample: Option<SampleSection>,
    pub data: Option<DataSection>,
    pub solver: SolverConfig,
    pub predict: Option<PredictSection>,
    pub check: Option<CheckSection>,
    pub bench: Option<ExperimentSpec>,
    pub timing: Option<TimingSpec>,
    /// Also write SVG charts of the benchmark errors.
    pub plots: bool,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Applies command-line flags on top of the file contents.
    pub fn apply_overrides(&mut self, cli: &Cli) -> Result<()> {
        if let Some(dir) = &cli.out_dir {
            self.out_dir = Some(dir.clone());
        }
        if let Some(a) = cli.solver {
            self.algorithm = a;
        }
        if let Some(k) = cli.rank {
            self.solver.rank = k;
            if let Some(bench) = &mut self.bench {
                bench.ranks = vec![k];
            }
        }
        if let Some(link) = &cli.link_row {
            self.solver.row_link = link.parse()?;
        }
        if let Some(link) = &cli.link_col {
            self.solver.col_link = link.parse()?;
        }
        if let Some(seed) = cli.seed {
            self.solver.seed = seed;
            if let Some(s) = &mut self.synthetic {
                s.seed = seed;
            }
            if let Some(s) = &mut self.sample {
                s.seed = seed;
            }
            if let Some(b) = &mut self.bench {
                b.synthetic.seed = seed;
            }
            if let Some(t) = &mut self.timing {
                t.seed = seed;
            }
            if self.synthetic.is_none() {
                let mut spec = self.preset_spec();
                spec.seed = seed;
                self.synthetic = Some(spec);
            }
        }
        Ok(())
    }

    fn preset_spec(&self) -> SyntheticSpec {
        match self.preset {
            Some(Preset::Large) => SyntheticSpec::large(),
            _ => SyntheticSpec::default(),
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    fn section<'a, T>(value: &'a Option<T>, name: &str) -> Result<&'a T> {
        value
            .as_ref()
            .ok_or_else(|| Error::Config(format!("missing [{name}] section")))
    }
}

/// How a command finished, mapped to the process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Done,
    MaxIterations,
    Diverged,
}

impl Status {
    pub fn code(self) -> i32 {
        match self {
            Status::Done => 0,
            Status::MaxIterations => EXIT_MAX_ITER,
            Status::Diverged => EXIT_DIVERGED,
        }
    }
}

/// Exit status for a failed command.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Infeasible(_) | Error::ProjectionNotConverged { .. } => EXIT_INFEASIBLE,
        Error::Diverged { .. } => EXIT_DIVERGED,
        Error::LinkFit { source, .. } => exit_code(source),
        _ => EXIT_BAD_INPUT,
    }
}

pub fn run(cli: &Cli) -> Result<Status> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    config.apply_overrides(cli)?;
    config.solver.validate()?;
    let out = config.out_dir();
    fs::create_dir_all(&out)?;
    fs::write(out.join("run_config.toml"), config.to_toml()?)?;
    match cli.command {
        Command::Simulate => cmd_simulate(&config, &out),
        Command::Sample => cmd_sample(&config, &out),
        Command::Fit => cmd_fit(&config, &out),
        Command::Predict => cmd_predict(&config, &out),
        Command::Check => cmd_check(&config, &out),
        Command::Bench => cmd_bench(&config, &out),
    }
}

fn cmd_simulate(config: &RunConfig, out: &Path) -> Result<Status> {
    let spec = config.synthetic.clone().unwrap_or_else(|| config.preset_spec());
    let data = simulate(&spec)?;
    save_matrix(&data.matrix, &out.join("matrix.csv"))?;
    save_matrix(&data.row_features, &out.join("row_features.csv"))?;
    save_matrix(&data.col_features, &out.join("col_features.csv"))?;
    save_matrix(&data.row_factors, &out.join("row_factors.csv"))?;
    save_matrix(&data.col_factors, &out.join("col_factors.csv"))?;
    let links = serde_json::json!({ "row_links": data.row_links, "col_links": data.col_links });
    fs::write(out.join("true_links.json"), serde_json::to_string_pretty(&links)?)?;
    Ok(Status::Done)
}

fn cmd_sample(config: &RunConfig, out: &Path) -> Result<Status> {
    let s = RunConfig::section(&config.sample, "sample")?;
    let m = load_matrix(&s.matrix)?;
    let op = s.scheme.operator(m.nrows(), m.ncols(), s.rate, s.seed)?;
    let b = sample(&op, &m, s.noise, s.seed)?;
    write_mask(&op, BufWriter::new(File::create(out.join("mask.txt"))?))?;
    write_measurements(
        &MeasurementVector::new(&op, b)?,
        BufWriter::new(File::create(out.join("measurements.csv"))?),
    )?;
    Ok(Status::Done)
}

fn features(path: &Option<PathBuf>, n: usize) -> Result<Features> {
    match path {
        Some(p) => Features::new(load_matrix(p)?),
        None => Ok(Features::identity(n)),
    }
}

fn cmd_fit(config: &RunConfig, out: &Path) -> Result<Status> {
    let d = RunConfig::section(&config.data, "data")?;
    let op = read_mask(File::open(&d.mask)?)?;
    let b = read_measurements(File::open(&d.measurements)?)?.into_values();
    let mut solver = config.solver.clone();
    let features = if config.algorithm == Algorithm::Hals {
        solver.row_link = LinkSpec::Identity;
        solver.col_link = LinkSpec::Identity;
        FeatureSet::identity(op.rows(), op.cols())
    } else {
        FeatureSet::new(features(&d.row_features, op.rows())?, features(&d.col_features, op.cols())?)
    };
    let result = match config.algorithm {
        Algorithm::Halsx2 => fit2(&op, &b, &features, &solver),
        _ => fit(&op, &b, &features, &solver),
    };
    let (model, status) = match result {
        Ok(m) => {
            let status = match m.stop {
                StopReason::Converged => Status::Done,
                _ => Status::MaxIterations,
            };
            (m, status)
        }
        Err(Error::Diverged { model, .. }) => (*model, Status::Diverged),
        Err(e) => return Err(e),
    };
    model.save(out)?;
    Ok(status)
}

fn cmd_predict(config: &RunConfig, out: &Path) -> Result<Status> {
    let p = RunConfig::section(&config.predict, "predict")?;
    let model = FactorModel::load(&p.model)?;
    let rows = p.row_features.as_ref().map(|f| load_matrix(f)).transpose()?;
    let cols = p.col_features.as_ref().map(|f| load_matrix(f)).transpose()?;
    let pred = model.predict(rows.as_ref(), cols.as_ref())?;
    for (name, block) in [("rows", &pred.rows), ("cols", &pred.cols), ("both", &pred.both)] {
        if let Some(m) = block {
            save_matrix(m, &out.join(format!("{name}.csv")))?;
        }
    }
    Ok(Status::Done)
}

/// The report, or an inconclusive one when the column count exceeds the cap.
pub fn check_report(m: &nalgebra::DMatrix<f64>, tol: f64, cap: usize) -> Result<IdentifiabilityReport> {
    match check(m, tol, cap) {
        Err(e @ Error::SearchTooLarge { .. }) => Ok(IdentifiabilityReport {
            rows: m.nrows(),
            cols: m.ncols(),
            tol,
            separability: is_separable(m, tol)?,
            strong_boundary_closeness: BoundaryReport {
                verdict: Verdict::Inconclusive,
                boundary_close: false,
                missing_pairs: Vec::new(),
                permutation: None,
                witness_rows: Vec::new(),
                exhaustive: false,
                reason: Some(e.to_string()),
            },
        }),
        other => other,
    }
}

fn cmd_check(config: &RunConfig, out: &Path) -> Result<Status> {
    let c = RunConfig::section(&config.check, "check")?;
    let report = check_report(&load_matrix(&c.matrix)?, c.tol, c.cap)?;
    let doc = serde_json::json!({ "config": config, "report": report });
    fs::write(out.join("report.json"), serde_json::to_string_pretty(&doc)?)?;
    Ok(Status::Done)
}

fn cmd_bench(config: &RunConfig, out: &Path) -> Result<Status> {
    if config.bench.is_none() && config.timing.is_none() {
        return Err(Error::Config("bench needs a [bench] or [timing] section".into()));
    }
    if let Some(spec) = &config.bench {
        let report = run_experiment(spec)?;
        write_report(&report.rows, BufWriter::new(File::create(out.join("report.csv"))?))?;
        if config.plots {
            for metric in ["recovery", "row", "col", "rowcol"] {
                fs::write(out.join(format!("{metric}.svg")), render_svg(&report.rows, metric))?;
            }
        }
    }
    if let Some(spec) = &config.timing {
        let rows = timing_sweep(spec)?;
        write_timing(&rows, BufWriter::new(File::create(out.join("timing.csv"))?))?;
    }
    Ok(Status::Done)
}
