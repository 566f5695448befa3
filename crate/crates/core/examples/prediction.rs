// Fit on periodic aggregates of a training block, then predict the held-out
// rows, columns and their intersection from features alone.

use halsx::bench::{rrmse, simulate, SamplingScheme, SplitSpec, SyntheticSpec};
use halsx::linkmodels::{FeatureSet, Features, LinkSpec};
use halsx::solver::{fit, SolverConfig};

pub fn run_example() -> halsx::Result<()> {
    let data = simulate(&SyntheticSpec::default())?;
    let blocks = SplitSpec::default().blocks(&data)?;
    let op = SamplingScheme::Periodic.operator(40, 48, 0.5, 0)?;
    let b = op.apply(&blocks.train)?;
    let features = FeatureSet::new(
        Features::new(blocks.train_row_features.clone())?,
        Features::new(blocks.train_col_features.clone())?,
    );
    let config = SolverConfig {
        rank: 5,
        max_iter: 100,
        row_link: LinkSpec::spline(),
        col_link: LinkSpec::spline(),
        ..SolverConfig::default()
    };
    let model = fit(&op, &b, &features, &config)?;
    let p = model.predict(Some(&blocks.test_row_features), Some(&blocks.test_col_features))?;
    println!("recovery RRMSE {:.3}", rrmse(&model.reconstruction(), &blocks.train)?);
    if let (Some(rows), Some(cols), Some(both)) = (&p.rows, &p.cols, &p.both) {
        println!(
            "prediction RRMSE: new rows {:.3}, new columns {:.3}, both {:.3}",
            rrmse(rows, &blocks.rows)?,
            rrmse(cols, &blocks.cols)?,
            rrmse(both, &blocks.both)?
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
