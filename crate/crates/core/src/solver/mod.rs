//! Alternating solvers for factorization with side information.
//!
//! [`fit`] keeps a slack matrix `V` consistent with the measurements and
//! refits one factor column at a time against `V`. [`fit2`] drops the slack
//! and minimizes the sampling error `||b - A(F_r F_c^T)||^2` directly.

mod halsx;
mod halsx2;
mod persist;

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result, Side};
use crate::linkmodels::{FeatureSet, LinkModel, LinkSpec};
use crate::operators::{MeasurementOperator, ProjectionOptions};

pub use halsx::{fit, fit_from, kkt_residual, update_column};
pub use halsx2::{build_normal_system, fit2, fit2_from, solve_update};

fn default_rank() -> usize {
    5
}
fn default_max_iter() -> usize {
    200
}
fn default_kkt_epsilon() -> f64 {
    1e-4
}
fn default_projection_tol() -> f64 {
    1e-8
}
fn default_projection_max_iter() -> usize {
    500
}
fn default_floor() -> f64 {
    1e-16
}
fn default_time_limit() -> f64 {
    300.0
}
fn default_window() -> usize {
    5
}
fn default_link() -> LinkSpec {
    LinkSpec::Linear
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "default_rank")]
    pub rank: usize,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// Stop once the KKT residual is below this fraction of its initial value.
    #[serde(default = "default_kkt_epsilon")]
    pub kkt_epsilon: f64,
    #[serde(default = "default_projection_tol")]
    pub projection_tol: f64,
    #[serde(default = "default_projection_max_iter")]
    pub projection_max_iter: usize,
    /// Use alternating projection even where a closed form exists.
    #[serde(default)]
    pub generic_projection: bool,
    /// Degenerate columns are set to `floor * mean|V|` instead of zero.
    #[serde(default = "default_floor")]
    pub degenerate_floor: f64,
    #[serde(default = "default_link")]
    pub row_link: LinkSpec,
    #[serde(default = "default_link")]
    pub col_link: LinkSpec,
    #[serde(default)]
    pub seed: u64,
    /// Wall-clock cap in seconds.
    #[serde(default = "default_time_limit")]
    pub time_limit_secs: f64,
    /// Sampling-error solver aborts after this many consecutive increases.
    #[serde(default = "default_window")]
    pub divergence_window: usize,
    /// Record the slack objective after every block update.
    #[serde(default)]
    pub record_blocks: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rank: default_rank(),
            max_iter: default_max_iter(),
            kkt_epsilon: default_kkt_epsilon(),
            projection_tol: default_projection_tol(),
            projection_max_iter: default_projection_max_iter(),
            generic_projection: false,
            degenerate_floor: default_floor(),
            row_link: default_link(),
            col_link: default_link(),
            seed: 0,
            time_limit_secs: default_time_limit(),
            divergence_window: default_window(),
            record_blocks: false,
        }
    }
}

impl SolverConfig {
    pub fn with_rank(rank: usize) -> Self {
        Self {
            rank,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 {
            return Err(Error::Config("rank must be at least 1".into()));
        }
        // a zero stopping tolerance runs to max_iter
        if !(self.kkt_epsilon >= 0.0) {
            return Err(Error::Config(format!("kkt_epsilon must be nonnegative, got {}", self.kkt_epsilon)));
        }
        for (name, v) in [
            ("projection_tol", self.projection_tol),
            ("time_limit_secs", self.time_limit_secs),
        ] {
            if !(v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.degenerate_floor >= 0.0) {
            return Err(Error::Config("degenerate_floor must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn projection(&self) -> ProjectionOptions {
        ProjectionOptions {
            tol: self.projection_tol,
            max_iter: self.projection_max_iter,
            force_alternating: self.generic_projection,
            ..ProjectionOptions::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    MaxIterations,
    TimeLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iter: usize,
    pub objective: f64,
    pub kkt_residual: f64,
    /// Wall-clock seconds since the start of the fit.
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    /// Entry 0 describes the initialization.
    pub entries: Vec<TraceEntry>,
    /// Slack objective after every block update, when requested.
    pub block_objectives: Vec<f64>,
}

impl Trace {
    pub fn initial_kkt(&self) -> f64 {
        self.entries.first().map_or(f64::NAN, |e| e.kkt_residual)
    }

    pub fn final_kkt(&self) -> f64 {
        self.entries.last().map_or(f64::NAN, |e| e.kkt_residual)
    }

    pub fn objectives(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.objective).collect()
    }

    /// Seconds spent in each iteration after the initialization.
    pub fn iteration_seconds(&self) -> Vec<f64> {
        self.entries.windows(2).map(|w| w[1].seconds - w[0].seconds).collect()
    }
}

/// Result of a fit: nonnegative factors, their links and diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel {
    pub row_factors: DMatrix<f64>,
    pub col_factors: DMatrix<f64>,
    /// `None` until a column has been fitted at least once.
    pub row_links: Vec<Option<LinkModel>>,
    pub col_links: Vec<Option<LinkModel>>,
    /// Whether each side was fitted on real features (not identity).
    pub row_side_information: bool,
    pub col_side_information: bool,
    /// Slack matrix; absent for the sampling-error solver.
    pub slack: Option<DMatrix<f64>>,
    pub trace: Trace,
    pub stop: StopReason,
}

/// Predicted blocks for new rows and/or columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// New rows against the training columns.
    pub rows: Option<DMatrix<f64>>,
    /// Training rows against new columns.
    pub cols: Option<DMatrix<f64>>,
    /// New rows against new columns.
    pub both: Option<DMatrix<f64>>,
}

impl FactorModel {
    pub fn rank(&self) -> usize {
        self.row_factors.ncols()
    }

    pub fn iterations(&self) -> usize {
        self.trace.entries.len().saturating_sub(1)
    }

    /// `F_r F_c^T`.
    pub fn reconstruction(&self) -> DMatrix<f64> {
        &self.row_factors * self.col_factors.transpose()
    }

    fn factors_for(&self, side: Side, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let (links, informed) = match side {
            Side::Row => (&self.row_links, self.row_side_information),
            Side::Column => (&self.col_links, self.col_side_information),
        };
        if !informed {
            return Err(Error::NoSideInformation(side));
        }
        let mut out = DMatrix::zeros(x.nrows(), links.len());
        for (i, link) in links.iter().enumerate() {
            let link = link
                .as_ref()
                .ok_or(Error::MissingLink { side, column: i })?;
            out.set_column(i, &link.evaluate(x)?);
        }
        Ok(out)
    }

    /// Row factors `(f_r(X_new))_+` for new individuals.
    pub fn row_factors_for(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.factors_for(Side::Row, x)
    }

    pub fn col_factors_for(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.factors_for(Side::Column, x)
    }

    pub fn predict(&self, new_rows: Option<&DMatrix<f64>>, new_cols: Option<&DMatrix<f64>>) -> Result<Prediction> {
        if new_rows.is_none() && new_cols.is_none() {
            return Err(Error::InvalidArgument(
                "prediction needs new row features, new column features, or both".into(),
            ));
        }
        let fr = new_rows.map(|x| self.row_factors_for(x)).transpose()?;
        let fc = new_cols.map(|x| self.col_factors_for(x)).transpose()?;
        Ok(Prediction {
            rows: fr.as_ref().map(|f| f * self.col_factors.transpose()),
            cols: fc.as_ref().map(|f| &self.row_factors * f.transpose()),
            both: match (&fr, &fc) {
                (Some(a), Some(b)) => Some(a * b.transpose()),
                _ => None,
            },
        })
    }
}

/// Uniform(0, 1) factors scaled so that the mean of `F_r F_c^T` matches the
/// average cell level implied by the measurements.
pub fn initialize(
    op: &MeasurementOperator,
    b: &DVector<f64>,
    rank: usize,
    seed: u64,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let (n1, n2) = op.shape();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fr = DMatrix::from_fn(n1, rank, |_, _| rng.random::<f64>());
    let mut fc = DMatrix::from_fn(n2, rank, |_, _| rng.random::<f64>());
    let target = op.implied_mean(b);
    let current: f64 = (0..rank)
        .map(|i| fr.column(i).sum() * fc.column(i).sum())
        .sum::<f64>()
        / (n1 * n2).max(1) as f64;
    if target > 0.0 && current > 0.0 {
        let s = (target / current).sqrt();
        fr *= s;
        fc *= s;
    }
    (fr, fc)
}

pub(crate) fn check_problem(
    op: &MeasurementOperator,
    b: &DVector<f64>,
    features: &FeatureSet,
    config: &SolverConfig,
) -> Result<()> {
    config.validate()?;
    check_len("measurements", op.len(), b.len())?;
    check_len("row features", op.rows(), features.rows.len())?;
    check_len("column features", op.cols(), features.cols.len())?;
    Ok(())
}

pub(crate) fn check_init(op: &MeasurementOperator, rank: usize, init: &(DMatrix<f64>, DMatrix<f64>)) -> Result<()> {
    crate::error::check_shape("initial row factors", (op.rows(), rank), init.0.shape())?;
    crate::error::check_shape("initial column factors", (op.cols(), rank), init.1.shape())?;
    if init.0.iter().chain(init.1.iter()).any(|&v| !(v >= 0.0)) {
        return Err(Error::InvalidArgument("initial factors must be nonnegative".into()));
    }
    Ok(())
}

/// Wall clock shared by both solvers.
pub(crate) struct Clock {
    start: Instant,
    limit: f64,
}

impl Clock {
    pub(crate) fn new(limit: f64) -> Self {
        Self {
            start: Instant::now(),
            limit,
        }
    }

    pub(crate) fn seconds(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }

    pub(crate) fn expired(&self) -> bool {
        self.seconds() >= self.limit
    }
}
