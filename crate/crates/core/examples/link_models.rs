// Link families fitted to a noisy one-dimensional target.

use halsx::linkmodels::{Features, LinkFitter, LinkSpec};
use nalgebra::{DMatrix, DVector};

pub fn run_example() -> halsx::Result<()> {
    let n = 60;
    let x = DMatrix::from_fn(n, 1, |i, _| -2.0 + 4.0 * i as f64 / (n - 1) as f64);
    let truth = DVector::from_fn(n, |i, _| (1.5 * x[(i, 0)]).sin() + 1.0);
    let noisy = DVector::from_fn(n, |i, _| truth[i] + 0.1 * ((7 * i) % 5) as f64 - 0.2);
    let features = Features::new(x.clone())?;
    for spec in [LinkSpec::Linear, LinkSpec::spline(), LinkSpec::kernel_ridge()] {
        let fitter = LinkFitter::prepare(&spec, &features)?;
        let model = fitter.fit(&noisy, 1.0)?;
        let fitted = fitter.evaluate(&model)?;
        println!("{:>7}: error against the noiseless curve {:.3}", spec.name(), (fitted - &truth).norm() / truth.norm());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
