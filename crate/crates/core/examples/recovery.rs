// Recovery of a simulated matrix from complete observations with spline links.

use halsx::bench::{rrmse, simulate, SyntheticSpec};
use halsx::linkmodels::{FeatureSet, Features, LinkSpec};
use halsx::operators::MeasurementOperator;
use halsx::solver::{fit, SolverConfig};

pub fn run_example() -> halsx::Result<()> {
    let spec = SyntheticSpec { n1: 40, n2: 48, rank: 3, weight_low: 0.0, ..SyntheticSpec::default() };
    let data = simulate(&spec)?;
    let op = MeasurementOperator::complete(40, 48);
    let b = op.apply(&data.matrix)?;
    let features = FeatureSet::new(Features::new(data.row_features.clone())?, Features::new(data.col_features.clone())?);
    let config = SolverConfig {
        rank: 3,
        row_link: LinkSpec::spline(),
        col_link: LinkSpec::spline(),
        ..SolverConfig::default()
    };
    let model = fit(&op, &b, &features, &config)?;
    println!(
        "{:?} after {} iterations, KKT ratio {:.1e}, recovery RRMSE {:.2e}",
        model.stop,
        model.iterations(),
        model.trace.final_kkt() / model.trace.initial_kkt(),
        rrmse(&model.reconstruction(), &data.matrix)?
    );
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
