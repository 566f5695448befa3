//! Synthetic benchmark: data generation, sampling of a training block,
//! recovery and prediction errors, rank sweeps and timing comparisons.

mod methods;
mod report;
mod timing;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_shape, Error, Result};
use crate::linkmodels::{LinkModel, SplineBasis, SplineModel, SplineTerm};
use crate::operators::{
    make_periodic_aggregates, make_random_aggregates, random_completion, Mask, MeasurementOperator,
};

pub use methods::{run_method, Method, MethodOutput};
pub use report::{render_svg, write_report, ExperimentReport, ReportRow};
pub use timing::{timing_sweep, write_timing, TimingRow, TimingSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n1: usize,
    pub n2: usize,
    pub rank: usize,
    pub row_features: usize,
    pub col_features: usize,
    /// Spline basis dimension of each coordinate of the true row links.
    pub row_basis_dim: usize,
    pub col_basis_dim: usize,
    /// Spline weights are uniform on `[weight_low, 1]`.
    pub weight_low: f64,
    /// Set each link's intercept so that its minimum over the sample is 0,
    /// which keeps the ramp inactive.
    pub shift_to_zero: bool,
    /// Measurement noise, relative to the root-mean-square measurement.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n1: 60,
            n2: 72,
            rank: 5,
            row_features: 3,
            col_features: 4,
            row_basis_dim: 10,
            col_basis_dim: 10,
            weight_low: -0.5,
            shift_to_zero: false,
            noise: 0.0,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    /// The larger published scale: 150 x 180, rank 20, 33 and 44 basis functions
    /// per factor.
    pub fn large() -> Self {
        Self {
            n1: 150,
            n2: 180,
            rank: 20,
            row_basis_dim: 11,
            col_basis_dim: 11,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 || self.rank > self.n1.min(self.n2) {
            return Err(Error::Config(format!(
                "rank must be in 1..={}, got {}",
                self.n1.min(self.n2),
                self.rank
            )));
        }
        if self.row_features == 0 || self.col_features == 0 {
            return Err(Error::Config("feature dimensions must be positive".into()));
        }
        if self.row_basis_dim < 4 || self.col_basis_dim < 4 {
            return Err(Error::Config("basis dimensions must be at least 4".into()));
        }
        if !(self.weight_low <= 1.0) || !(self.noise >= 0.0) {
            return Err(Error::Config("need weight_low <= 1 and noise >= 0".into()));
        }
        Ok(())
    }
}

/// A simulated problem and its generating links.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub matrix: DMatrix<f64>,
    pub row_features: DMatrix<f64>,
    pub col_features: DMatrix<f64>,
    pub row_factors: DMatrix<f64>,
    pub col_factors: DMatrix<f64>,
    pub row_links: Vec<LinkModel>,
    pub col_links: Vec<LinkModel>,
}

fn random_links(x: &DMatrix<f64>, k: usize, dim: usize, low: f64, rng: &mut ChaCha8Rng) -> Result<Vec<LinkModel>> {
    let bases = (0..x.ncols())
        .map(|j| SplineBasis::from_values(x.column(j).as_slice(), dim))
        .collect::<Result<Vec<_>>>()?;
    Ok((0..k)
        .map(|_| {
            LinkModel::Spline(SplineModel {
                intercept: 0.0,
                terms: bases
                    .iter()
                    .map(|b| SplineTerm {
                        knots: b.knots().to_vec(),
                        coefficients: (0..b.dim()).map(|_| low + (1.0 - low) * rng.random::<f64>()).collect(),
                        lambda: 0.0,
                    })
                    .collect(),
                gcv: None,
            })
        })
        .collect())
}

fn shift_links(links: &mut [LinkModel], x: &DMatrix<f64>) -> Result<()> {
    for link in links.iter_mut() {
        let low = link.evaluate_raw(x)?.min();
        if let LinkModel::Spline(m) = link {
            m.intercept -= low;
        }
    }
    Ok(())
}

fn evaluate_links(links: &[LinkModel], x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut f = DMatrix::zeros(x.nrows(), links.len());
    for (i, l) in links.iter().enumerate() {
        f.set_column(i, &l.evaluate(x)?);
    }
    Ok(f)
}

/// Gaussian features, additive random-weight spline links per factor (ramped)
/// and `V* = F_r F_c^T`.
pub fn simulate(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let row_features = DMatrix::from_fn(spec.n1, spec.row_features, |_, _| rng.sample::<f64, _>(StandardNormal));
    let col_features = DMatrix::from_fn(spec.n2, spec.col_features, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut row_links = random_links(&row_features, spec.rank, spec.row_basis_dim, spec.weight_low, &mut rng)?;
    let mut col_links = random_links(&col_features, spec.rank, spec.col_basis_dim, spec.weight_low, &mut rng)?;
    if spec.shift_to_zero {
        shift_links(&mut row_links, &row_features)?;
        shift_links(&mut col_links, &col_features)?;
    }
    let row_factors = evaluate_links(&row_links, &row_features)?;
    let col_factors = evaluate_links(&col_links, &col_features)?;
    Ok(SyntheticData {
        matrix: &row_factors * col_factors.transpose(),
        row_features,
        col_features,
        row_factors,
        col_factors,
        row_links,
        col_links,
    })
}

/// `||V - V_ref||_F / ||V_ref||_F`.
pub fn rrmse(v: &DMatrix<f64>, v_ref: &DMatrix<f64>) -> Result<f64> {
    check_shape("rrmse", v_ref.shape(), v.shape())?;
    let denom = v_ref.norm();
    if denom == 0.0 {
        return Err(Error::ZeroReference);
    }
    Ok((v - v_ref).norm() / denom)
}

/// Aggregates spread evenly over their spans; cells outside every span are 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Interpolation {
    pub matrix: DMatrix<f64>,
    pub uncovered: usize,
}

pub fn interpolation_baseline(op: &MeasurementOperator, b: &DVector<f64>) -> Result<Interpolation> {
    let Mask::TemporalAggregate { spans } = op.mask() else {
        return Err(Error::InvalidArgument(format!(
            "interpolation needs temporal aggregates, got {}",
            op.kind()
        )));
    };
    crate::error::check_len("interpolation measurements", op.len(), b.len())?;
    let mut matrix = DMatrix::zeros(op.rows(), op.cols());
    let mut covered = DMatrix::from_element(op.rows(), op.cols(), false);
    for (s, &v) in spans.iter().zip(b.iter()) {
        for t in s.rows() {
            matrix[(t, s.column)] = v / s.len as f64;
            covered[(t, s.column)] = true;
        }
    }
    Ok(Interpolation {
        matrix,
        uncovered: covered.iter().filter(|c| !**c).count(),
    })
}

/// Sampling scheme for the training block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingScheme {
    Complete,
    /// Spans of `round(1 / rate)` consecutive rows.
    Periodic,
    RandomAggregate,
    Completion,
}

impl SamplingScheme {
    pub fn name(&self) -> &'static str {
        match self {
            SamplingScheme::Complete => "complete",
            SamplingScheme::Periodic => "periodic",
            SamplingScheme::RandomAggregate => "random_aggregate",
            SamplingScheme::Completion => "completion",
        }
    }

    pub fn operator(&self, rows: usize, cols: usize, rate: f64, seed: u64) -> Result<MeasurementOperator> {
        match self {
            SamplingScheme::Complete => Ok(MeasurementOperator::complete(rows, cols)),
            SamplingScheme::Periodic => {
                if !(rate > 0.0 && rate <= 1.0) {
                    return Err(Error::InvalidArgument(format!("sampling rate must be in (0, 1], got {rate}")));
                }
                let period = ((1.0 / rate).round() as usize).clamp(1, rows.max(1));
                make_periodic_aggregates(rows, cols, period)
            }
            SamplingScheme::RandomAggregate => make_random_aggregates(rows, cols, rate, seed),
            SamplingScheme::Completion => random_completion(rows, cols, rate, seed),
        }
    }
}

impl std::str::FromStr for SamplingScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "complete" => Ok(SamplingScheme::Complete),
            "periodic" => Ok(SamplingScheme::Periodic),
            "random_aggregate" | "random" => Ok(SamplingScheme::RandomAggregate),
            "completion" => Ok(SamplingScheme::Completion),
            other => Err(Error::Parse(format!("unknown sampling scheme `{other}`"))),
        }
    }
}

/// Upper-left training block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSpec {
    pub train_rows: usize,
    pub train_cols: usize,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_rows: 40,
            train_cols: 48,
        }
    }
}

/// The four evaluation blocks of a split matrix plus the matching features.
#[derive(Debug, Clone)]
pub struct Blocks {
    pub train: DMatrix<f64>,
    pub rows: DMatrix<f64>,
    pub cols: DMatrix<f64>,
    pub both: DMatrix<f64>,
    pub train_row_features: DMatrix<f64>,
    pub test_row_features: DMatrix<f64>,
    pub train_col_features: DMatrix<f64>,
    pub test_col_features: DMatrix<f64>,
}

impl SplitSpec {
    pub fn blocks(&self, data: &SyntheticData) -> Result<Blocks> {
        let (n1, n2) = data.matrix.shape();
        let (m1, m2) = (self.train_rows, self.train_cols);
        if m1 == 0 || m2 == 0 || m1 > n1 || m2 > n2 {
            return Err(Error::Config(format!(
                "training block {m1} x {m2} must be nonempty and fit in {n1} x {n2}"
            )));
        }
        let v = &data.matrix;
        Ok(Blocks {
            train: v.view((0, 0), (m1, m2)).into_owned(),
            rows: v.view((m1, 0), (n1 - m1, m2)).into_owned(),
            cols: v.view((0, m2), (m1, n2 - m2)).into_owned(),
            both: v.view((m1, m2), (n1 - m1, n2 - m2)).into_owned(),
            train_row_features: data.row_features.rows(0, m1).into_owned(),
            test_row_features: data.row_features.rows(m1, n1 - m1).into_owned(),
            train_col_features: data.col_features.rows(0, m2).into_owned(),
            test_col_features: data.col_features.rows(m2, n2 - m2).into_owned(),
        })
    }
}

/// Measures `m` and adds relative Gaussian noise, clamped at zero.
pub fn sample(op: &MeasurementOperator, m: &DMatrix<f64>, noise: f64, seed: u64) -> Result<DVector<f64>> {
    let mut b = op.apply(m)?;
    if noise > 0.0 && !b.is_empty() {
        let rms = b.norm() / (b.len() as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in b.iter_mut() {
            *v = (*v + noise * rms * rng.sample::<f64, _>(StandardNormal)).max(0.0);
        }
    }
    Ok(b)
}

/// Deterministic per-run seed.
pub(crate) fn mix_seed(seed: u64, rate: f64, salt: u64) -> u64 {
    let mut h = seed ^ 0x51_7c_c1_b7_27_22_0a_95;
    for v in [rate.to_bits(), salt] {
        h = (h ^ v).wrapping_mul(0x9e37_79b9_7f4a_7c15);
        h ^= h >> 29;
    }
    h
}

/// Full sweep configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub synthetic: SyntheticSpec,
    pub split: SplitSpec,
    pub schemes: Vec<SamplingScheme>,
    pub rates: Vec<f64>,
    pub ranks: Vec<usize>,
    pub methods: Vec<Method>,
    pub solver: crate::solver::SolverConfig,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            synthetic: SyntheticSpec::default(),
            split: SplitSpec::default(),
            schemes: vec![SamplingScheme::Periodic],
            rates: vec![0.1, 0.2, 0.3, 0.4, 0.5],
            ranks: vec![3, 5, 7],
            methods: Method::all().to_vec(),
            solver: crate::solver::SolverConfig {
                max_iter: 100,
                ..Default::default()
            },
        }
    }
}

/// Runs every (scheme, rate, method) combination, keeping the rank with the
/// lowest recovery error. Failures are recorded in the report.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    let data = simulate(&spec.synthetic)?;
    let blocks = spec.split.blocks(&data)?;
    let mut rows = Vec::new();
    for &scheme in &spec.schemes {
        for &rate in &spec.rates {
            let op = scheme.operator(blocks.train.nrows(), blocks.train.ncols(), rate, mix_seed(spec.synthetic.seed, rate, 1))?;
            let b = sample(&op, &blocks.train, spec.synthetic.noise, mix_seed(spec.synthetic.seed, rate, 2))?;
            for &method in &spec.methods {
                let ranks: &[usize] = if method.uses_rank() { &spec.ranks } else { &[0] };
                let mut best: Option<ReportRow> = None;
                let mut last_error = None;
                for &rank in ranks {
                    let cfg = crate::solver::SolverConfig {
                        rank: rank.max(1),
                        ..spec.solver.clone()
                    };
                    match run_method(method, &op, &b, &blocks, &cfg) {
                        Ok(out) => {
                            let row = ReportRow::score(method, scheme, rate, rank, &out, &blocks)?;
                            if best.as_ref().is_none_or(|r| row.recovery_rrmse < r.recovery_rrmse) {
                                best = Some(row);
                            }
                        }
                        Err(e) => last_error = Some(e.to_string()),
                    }
                }
                rows.push(best.unwrap_or_else(|| ReportRow::failed(method, scheme, rate, last_error.unwrap_or_default())));
            }
        }
    }
    Ok(ExperimentReport { spec: spec.clone(), rows })
}
