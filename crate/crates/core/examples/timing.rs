// Per-iteration cost of both solvers as the number of aggregates grows.

use halsx::bench::{timing_sweep, write_timing, TimingSpec};

pub fn run_example() -> halsx::Result<()> {
    let spec = TimingSpec {
        rates: vec![0.1, 0.2, 0.4],
        max_iter: 5,
        ..TimingSpec::default()
    };
    write_timing(&timing_sweep(&spec)?, std::io::stdout())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
