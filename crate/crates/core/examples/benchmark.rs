// A reduced benchmark sweep printed as CSV.

use halsx::bench::{run_experiment, write_report, ExperimentSpec, Method, SyntheticSpec};

pub fn run_example() -> halsx::Result<()> {
    let spec = ExperimentSpec {
        synthetic: SyntheticSpec { seed: 1, ..SyntheticSpec::default() },
        rates: vec![0.3, 0.5],
        ranks: vec![5],
        methods: vec![Method::Interpolation, Method::IndividualGam, Method::FactorGam, Method::HalsxSpline],
        ..ExperimentSpec::default()
    };
    let report = run_experiment(&spec)?;
    write_report(&report.rows, std::io::stdout())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
