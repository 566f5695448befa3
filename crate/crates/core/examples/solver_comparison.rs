// Slack-variable solver against the sampling-error solver on sparse random
// aggregates.

use halsx::bench::rrmse;
use halsx::linkmodels::{FeatureSet, LinkSpec};
use halsx::operators::make_random_aggregates;
use halsx::solver::{fit, fit2, SolverConfig};
use halsx::Error;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn run_example() -> halsx::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let truth = DMatrix::from_fn(40, 5, |_, _| rng.random::<f64>()) * DMatrix::from_fn(48, 5, |_, _| rng.random::<f64>()).transpose();
    let features = FeatureSet::identity(40, 48);
    let config = SolverConfig {
        rank: 5,
        seed: 1,
        row_link: LinkSpec::Identity,
        col_link: LinkSpec::Identity,
        ..SolverConfig::default()
    };
    for rate in [0.1, 0.5] {
        let op = make_random_aggregates(40, 48, rate, 2)?;
        let b = op.apply(&truth)?;
        let slack = fit(&op, &b, &features, &config)?;
        let (sampled, diverged) = match fit2(&op, &b, &features, &config) {
            Ok(m) => (m, false),
            Err(Error::Diverged { model, .. }) => (*model, true),
            Err(e) => return Err(e),
        };
        println!(
            "rate {rate}: slack solver RRMSE {:.3}, sampling-error solver RRMSE {:.3}{}",
            rrmse(&slack.reconstruction(), &truth)?,
            rrmse(&sampled.reconstruction(), &truth)?,
            if diverged { " (diverged)" } else { "" }
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
