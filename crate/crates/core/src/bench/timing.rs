use std::io::Write;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{mix_seed, rrmse};
use crate::error::{Error, Result};
use crate::linkmodels::{FeatureSet, LinkSpec};
use crate::operators::make_random_aggregates;
use crate::solver::{fit, fit2, FactorModel, SolverConfig};

/// Slack solver against sampling-error solver on random aggregates without
/// features. The slack solver projects through the generic alternating path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimingSpec {
    pub n1: usize,
    pub n2: usize,
    /// Rank of the random ground truth.
    pub true_rank: usize,
    pub ranks: Vec<usize>,
    pub rates: Vec<f64>,
    pub max_iter: usize,
    pub time_limit_secs: f64,
    pub seed: u64,
}

impl Default for TimingSpec {
    fn default() -> Self {
        Self {
            n1: 40,
            n2: 48,
            true_rank: 5,
            ranks: vec![2, 5],
            rates: vec![0.1, 0.2, 0.3, 0.5],
            max_iter: 20,
            time_limit_secs: 300.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingRow {
    pub solver: String,
    pub rank: usize,
    pub rate: f64,
    pub measurements: usize,
    pub iters: usize,
    pub per_iter_seconds: f64,
    pub total_seconds: f64,
    pub recovery_rrmse: f64,
    pub diverged: bool,
}

fn row(solver: &str, rank: usize, rate: f64, n: usize, model: &FactorModel, truth: &DMatrix<f64>, diverged: bool) -> Result<TimingRow> {
    let per_iter = model.trace.iteration_seconds();
    Ok(TimingRow {
        solver: solver.into(),
        rank,
        rate,
        measurements: n,
        iters: model.iterations(),
        per_iter_seconds: if per_iter.is_empty() { 0.0 } else { per_iter.iter().sum::<f64>() / per_iter.len() as f64 },
        total_seconds: model.trace.entries.last().map_or(0.0, |e| e.seconds),
        recovery_rrmse: rrmse(&model.reconstruction(), truth)?,
        diverged,
    })
}

pub fn timing_sweep(spec: &TimingSpec) -> Result<Vec<TimingRow>> {
    if spec.true_rank == 0 || spec.ranks.contains(&0) {
        return Err(Error::Config("ranks must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let a = DMatrix::from_fn(spec.n1, spec.true_rank, |_, _| rng.random::<f64>());
    let c = DMatrix::from_fn(spec.n2, spec.true_rank, |_, _| rng.random::<f64>());
    let truth = a * c.transpose();
    let features = FeatureSet::identity(spec.n1, spec.n2);
    let mut rows = Vec::new();
    for &rate in &spec.rates {
        let op = make_random_aggregates(spec.n1, spec.n2, rate, mix_seed(spec.seed, rate, 3))?;
        let b = op.apply(&truth)?;
        for &rank in &spec.ranks {
            let cfg = SolverConfig {
                rank,
                max_iter: spec.max_iter,
                time_limit_secs: spec.time_limit_secs,
                row_link: LinkSpec::Identity,
                col_link: LinkSpec::Identity,
                generic_projection: true,
                seed: mix_seed(spec.seed, rate, 4),
                ..SolverConfig::default()
            };
            let slack = fit(&op, &b, &features, &cfg)?;
            rows.push(row("hals", rank, rate, op.len(), &slack, &truth, false)?);
            let (model, diverged) = match fit2(&op, &b, &features, &cfg) {
                Ok(m) => (m, false),
                Err(Error::Diverged { model, .. }) => (*model, true),
                Err(e) => return Err(e),
            };
            rows.push(row("hals2", rank, rate, op.len(), &model, &truth, diverged)?);
        }
    }
    Ok(rows)
}

pub fn write_timing<W: Write>(rows: &[TimingRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
