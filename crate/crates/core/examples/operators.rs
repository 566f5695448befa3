// Measurement operators: apply, adjoint and projection onto the slack polytope.

use halsx::operators::{make_periodic_aggregates, random_completion, MeasurementOperator, ProjectionOptions};
use nalgebra::DMatrix;

pub fn run_example() -> halsx::Result<()> {
    let truth = DMatrix::from_fn(6, 4, |i, j| 1.0 + (i * j) as f64);
    let ops: Vec<(&str, MeasurementOperator)> = vec![
        ("periodic aggregates", make_periodic_aggregates(6, 4, 3)?),
        ("completion", random_completion(6, 4, 0.5, 1)?),
    ];
    for (name, op) in ops {
        let b = op.apply(&truth)?;
        let back = op.adjoint(&b)?;
        let guess = DMatrix::from_element(6, 4, 2.0);
        let p = op.project_polytope(&b, &guess, &ProjectionOptions::default())?;
        let residual = (op.apply(&p.matrix)? - &b).amax();
        println!(
            "{name}: {} measurements, <A(M), b> = {:.3}, <M, A*(b)> = {:.3}, projection residual {residual:.1e}",
            op.len(),
            b.norm_squared(),
            truth.dot(&back)
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
