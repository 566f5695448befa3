// Certified features for a unique factorization, and the checker's report.

use halsx::identifiability::{check, construct_certified_features, DEFAULT_CAP, DEFAULT_TOL};
use halsx::linalg::numerical_rank;

pub fn run_example() -> halsx::Result<()> {
    let c = construct_certified_features(4, 0)?;
    println!("features {}x{} of rank {}", c.x.nrows(), c.x.ncols(), numerical_rank(&c.x, 1e-10));
    let report = check(&c.f, DEFAULT_TOL, DEFAULT_CAP)?;
    println!("{}", report.to_json()?);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
