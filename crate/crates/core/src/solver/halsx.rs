use nalgebra::{DMatrix, DVector};

use super::{check_init, check_problem, initialize, Clock, FactorModel, SolverConfig, StopReason, Trace, TraceEntry};
use crate::error::{Error, Result, Side};
use crate::linkmodels::{reduce_subproblem, FeatureSet, LinkFitter, LinkModel};
use crate::operators::MeasurementOperator;

/// Fits `k` nonnegative factor pairs whose columns are links of the row and
/// column features, from measurements `b = A(M)`.
pub fn fit(
    op: &MeasurementOperator,
    b: &DVector<f64>,
    features: &FeatureSet,
    config: &SolverConfig,
) -> Result<FactorModel> {
    check_problem(op, b, features, config)?;
    let init = initialize(op, b, config.rank, config.seed);
    fit_from(op, b, features, config, init)
}

/// [`fit`] from given initial factors (`n1 x k`, `n2 x k`).
pub fn fit_from(
    op: &MeasurementOperator,
    b: &DVector<f64>,
    features: &FeatureSet,
    config: &SolverConfig,
    init: (DMatrix<f64>, DMatrix<f64>),
) -> Result<FactorModel> {
    check_problem(op, b, features, config)?;
    check_init(op, config.rank, &init)?;
    let clock = Clock::new(config.time_limit_secs);
    let row_fitter = LinkFitter::prepare(&config.row_link, &features.rows)?;
    let col_fitter = LinkFitter::prepare(&config.col_link, &features.cols)?;
    let proj = config.projection();
    let k = config.rank;
    let (mut fr, mut fc) = init;
    let mut row_links: Vec<Option<LinkModel>> = vec![None; k];
    let mut col_links: Vec<Option<LinkModel>> = vec![None; k];

    let mut v = op.project_polytope(b, &(&fr * fc.transpose()), &proj)?.matrix;
    let mut trace = Trace::default();
    let r0 = &v - &fr * fc.transpose();
    let kkt0 = kkt_residual(&v, &fr, &fc, &row_fitter, &col_fitter);
    trace.entries.push(TraceEntry {
        iter: 0,
        objective: r0.norm_squared(),
        kkt_residual: kkt0,
        seconds: clock.seconds(),
    });

    let mut stop = StopReason::MaxIterations;
    for iter in 1..=config.max_iter {
        if iter > 1 {
            v = op.project_polytope(b, &(&fr * fc.transpose()), &proj)?.matrix;
        }
        let mut r = &v - &fr * fc.transpose();
        if config.record_blocks {
            trace.block_objectives.push(r.norm_squared());
        }
        let floor = config.degenerate_floor * v.abs().mean();

        for i in 0..k {
            let (f_r, f_c) = (fr.column(i).clone_owned(), fc.column(i).clone_owned());
            r.ger(1.0, &f_r, &f_c, 1.0);
            let weight = f_c.norm_squared();
            let target = if weight > 0.0 { &r * &f_c / weight } else { DVector::zeros(r.nrows()) };
            let (col, link) = refit(&target, weight, &row_fitter, floor)
                .map_err(|e| link_error(e, Side::Row, i, iter))?;
            r.ger(-1.0, &col, &f_c, 1.0);
            fr.set_column(i, &col);
            if link.is_some() {
                row_links[i] = link;
            }
            if config.record_blocks {
                trace.block_objectives.push(r.norm_squared());
            }
        }
        for i in 0..k {
            let (f_r, f_c) = (fr.column(i).clone_owned(), fc.column(i).clone_owned());
            r.ger(1.0, &f_r, &f_c, 1.0);
            let weight = f_r.norm_squared();
            let target = if weight > 0.0 { r.tr_mul(&f_r) / weight } else { DVector::zeros(r.ncols()) };
            let (col, link) = refit(&target, weight, &col_fitter, floor)
                .map_err(|e| link_error(e, Side::Column, i, iter))?;
            r.ger(-1.0, &f_r, &col, 1.0);
            fc.set_column(i, &col);
            if link.is_some() {
                col_links[i] = link;
            }
            if config.record_blocks {
                trace.block_objectives.push(r.norm_squared());
            }
        }

        let kkt = kkt_residual(&v, &fr, &fc, &row_fitter, &col_fitter);
        trace.entries.push(TraceEntry {
            iter,
            objective: r.norm_squared(),
            kkt_residual: kkt,
            seconds: clock.seconds(),
        });
        if kkt <= config.kkt_epsilon * kkt0 {
            stop = StopReason::Converged;
            break;
        }
        if clock.expired() {
            stop = StopReason::TimeLimit;
            break;
        }
    }

    let slack = op.project_polytope(b, &(&fr * fc.transpose()), &proj)?.matrix;
    Ok(FactorModel {
        row_factors: fr,
        col_factors: fc,
        row_links,
        col_links,
        row_side_information: !features.rows.is_identity(),
        col_side_information: !features.cols.is_identity(),
        slack: Some(slack),
        trace,
        stop,
    })
}

fn link_error(e: Error, side: Side, column: usize, iteration: usize) -> Error {
    Error::LinkFit {
        side,
        column,
        iteration,
        source: Box::new(e),
    }
}

/// Fits the link for one reduced subproblem and returns the ramped in-sample
/// column. A zero partner or an all-zero column becomes the constant `floor`
/// column and leaves the link untouched (`None`).
fn refit(
    target: &DVector<f64>,
    weight: f64,
    fitter: &LinkFitter,
    floor: f64,
) -> Result<(DVector<f64>, Option<LinkModel>)> {
    if !(weight > 0.0) {
        return Ok((DVector::from_element(target.len(), floor), None));
    }
    let model = fitter.fit(target, weight)?;
    let col = fitter.evaluate(&model)?;
    if col.iter().all(|&x| x == 0.0) {
        return Ok((DVector::from_element(target.len(), floor), None));
    }
    Ok((col, Some(model)))
}

/// One block update: the best ramped link column for
/// `min_g ||R - g f^T||^2` with `R` the residual with this pair added back.
pub fn update_column(
    r: &DMatrix<f64>,
    partner: &DVector<f64>,
    fitter: &LinkFitter,
    floor: f64,
) -> Result<(DVector<f64>, Option<LinkModel>)> {
    if partner.norm_squared() == 0.0 {
        return refit(&DVector::zeros(r.nrows()), 0.0, fitter, floor);
    }
    let (target, weight) = reduce_subproblem(r, partner)?;
    refit(&target, weight, fitter, floor)
}

/// Norm of the stacked first-order conditions with `E = V - F_r F_c^T`:
/// `(E)_-`, `E o V`, and the link-parameter gradients restricted to active
/// factor entries, `D_r^T ((E F_c) o 1[F_r > 0])` and its column analog.
pub fn kkt_residual(
    v: &DMatrix<f64>,
    fr: &DMatrix<f64>,
    fc: &DMatrix<f64>,
    row: &LinkFitter,
    col: &LinkFitter,
) -> f64 {
    let e = v - fr * fc.transpose();
    let negative: f64 = e.iter().map(|&x| x.min(0.0).powi(2)).sum();
    let complementary: f64 = e.iter().zip(v.iter()).map(|(a, b)| (a * b).powi(2)).sum();
    let side = |grad: DMatrix<f64>, factors: &DMatrix<f64>, fitter: &LinkFitter| -> f64 {
        (0..factors.ncols())
            .map(|i| {
                let g = DVector::from_fn(grad.nrows(), |t, _| {
                    if factors[(t, i)] > 0.0 {
                        grad[(t, i)]
                    } else {
                        0.0
                    }
                });
                fitter.design_transpose_times(&g).norm_squared()
            })
            .sum()
    };
    let rows = side(&e * fc, fr, row);
    let cols = side(e.tr_mul(fr), fc, col);
    (negative + complementary + rows + cols).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linkmodels::{Features, LinkSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn low_rank(n1: usize, n2: usize, k: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(n1, k, |_, _| rng.random::<f64>());
        let c = DMatrix::from_fn(n2, k, |_, _| rng.random::<f64>());
        a * c.transpose()
    }

    #[test]
    fn update_column_zero_partner_uses_floor() {
        let r = DMatrix::from_element(3, 2, 1.0);
        let fitter = LinkFitter::Identity(3);
        let (col, link) = update_column(&r, &DVector::zeros(2), &fitter, 1e-3).unwrap();
        assert_eq!(col, DVector::from_element(3, 1e-3));
        assert!(link.is_none());
    }

    #[test]
    fn update_column_identity_is_ramped_projection() {
        let r = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, -1.0, 0.0]);
        let f = DVector::from_vec(vec![2.0, 0.0]);
        let (col, _) = update_column(&r, &f, &LinkFitter::Identity(2), 0.0).unwrap();
        assert_eq!(col, DVector::from_vec(vec![1.0, 0.0]));
    }

    #[test]
    fn complete_exact_rank_converges_to_zero_kkt() {
        let m = low_rank(8, 7, 2, 1);
        let op = MeasurementOperator::complete(8, 7);
        let b = op.apply(&m).unwrap();
        let cfg = SolverConfig {
            rank: 2,
            max_iter: 3000,
            kkt_epsilon: 1e-9,
            ..SolverConfig::default()
        };
        let model = fit(&op, &b, &FeatureSet::identity(8, 7), &cfg).unwrap();
        assert_eq!(model.stop, StopReason::Converged);
        assert!((model.reconstruction() - &m).norm() / m.norm() < 1e-4);
    }

    #[test]
    fn objective_is_monotone_for_exact_block_minimizers() {
        let m = low_rank(10, 9, 3, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let entries: Vec<_> = (0..10)
            .flat_map(|i| (0..9).map(move |j| (i, j)))
            .filter(|_| rng.random::<f64>() < 0.6)
            .collect();
        let op = MeasurementOperator::completion(10, 9, entries).unwrap();
        let b = op.apply(&m).unwrap();
        let cfg = SolverConfig {
            rank: 3,
            max_iter: 30,
            record_blocks: true,
            ..SolverConfig::default()
        };
        let model = fit(&op, &b, &FeatureSet::identity(10, 9), &cfg).unwrap();
        for w in model.trace.block_objectives.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-12, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn link_failures_carry_context() {
        // a single distinct feature value cannot support a spline basis
        let x = DMatrix::from_element(6, 1, 1.0);
        let op = MeasurementOperator::complete(6, 4);
        let b = op.apply(&low_rank(6, 4, 1, 4)).unwrap();
        let features = FeatureSet::new(Features::Matrix(x), Features::identity(4));
        let cfg = SolverConfig {
            rank: 1,
            row_link: LinkSpec::spline(),
            ..SolverConfig::default()
        };
        assert!(fit(&op, &b, &features, &cfg).is_err());
    }
}
