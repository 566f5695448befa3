use nalgebra::{DMatrix, DVector};

use super::{check_init, check_problem, initialize, Clock, FactorModel, SolverConfig, StopReason, Trace, TraceEntry};
use crate::error::{Error, Result, Side};
use crate::linalg::symmetric_pinv_solve;
use crate::linkmodels::{FeatureSet, LinkFitter, LinkModel};
use crate::operators::MeasurementOperator;

/// Relative eigenvalue cutoff for the normal-equation pseudo-inverse.
const PINV_CUTOFF: f64 = 1e-12;

/// Normal equations for one column under the sampling error.
///
/// For the row side, `u_i = A_i f` (an `n1`-vector); for the column side,
/// `u_i = A_i^T f`. With a feature matrix `X`, `u_i` is replaced by `X^T u_i`.
/// Returns `(sum_i u_i u_i^T, sum_i r_i u_i)`, accumulated densely.
pub fn build_normal_system(
    op: &MeasurementOperator,
    side: Side,
    partner: &DVector<f64>,
    residual: &DVector<f64>,
    features: Option<&DMatrix<f64>>,
) -> (DMatrix<f64>, DVector<f64>) {
    let n = match side {
        Side::Row => op.rows(),
        Side::Column => op.cols(),
    };
    let p = features.map_or(n, |x| x.ncols());
    let mut gram = DMatrix::zeros(p, p);
    let mut rhs = DVector::zeros(p);
    for i in 0..op.len() {
        let u = match side {
            Side::Row => op.mask_times(i, partner),
            Side::Column => op.mask_transpose_times(i, partner),
        };
        let u = match features {
            Some(x) => x.tr_mul(&u),
            None => u,
        };
        gram.ger(1.0, &u, &u, 1.0);
        rhs.axpy(residual[i], &u, 1.0);
    }
    (gram, rhs)
}

/// Minimum-norm solution of the normal equations.
pub fn solve_update(gram: &DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    symmetric_pinv_solve(gram, rhs, PINV_CUTOFF)
}

/// Minimizes `||b - A(F_r F_c^T)||^2` column by column, without a slack
/// matrix. Only identity and linear links are supported.
pub fn fit2(
    op: &MeasurementOperator,
    b: &DVector<f64>,
    features: &FeatureSet,
    config: &SolverConfig,
) -> Result<FactorModel> {
    check_problem(op, b, features, config)?;
    let init = initialize(op, b, config.rank, config.seed);
    fit2_from(op, b, features, config, init)
}

/// [`fit2`] from given initial factors.
pub fn fit2_from(
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
    for f in [&row_fitter, &col_fitter] {
        if matches!(f, LinkFitter::Spline(_) | LinkFitter::Kernel(_)) {
            return Err(Error::InvalidArgument(
                "the sampling-error solver supports identity and linear links only".into(),
            ));
        }
    }
    let row_x = design_of(&row_fitter);
    let col_x = design_of(&col_fitter);
    let k = config.rank;
    let (mut fr, mut fc) = init;
    let mut row_links: Vec<Option<LinkModel>> = vec![None; k];
    let mut col_links: Vec<Option<LinkModel>> = vec![None; k];
    let floor = config.degenerate_floor * op.implied_mean(b).abs();

    let mut trace = Trace::default();
    let r0 = b - op.apply(&(&fr * fc.transpose()))?;
    let kkt0 = sampling_kkt(op, &r0, &fr, &fc, &row_fitter, &col_fitter)?;
    trace.entries.push(TraceEntry {
        iter: 0,
        objective: r0.norm_squared(),
        kkt_residual: kkt0,
        seconds: clock.seconds(),
    });

    let mut stop = StopReason::MaxIterations;
    let mut increases = 0;
    // increases below round-off of the data scale do not count
    let slack_tol = 1e-12 * b.norm_squared();
    for iter in 1..=config.max_iter {
        let mut r = b - op.apply(&(&fr * fc.transpose()))?;
        for i in 0..k {
            let (f_r, f_c) = (fr.column(i).clone_owned(), fc.column(i).clone_owned());
            r += op.apply_rank_one(&f_r, &f_c)?;
            let (col, link) = sampling_update(op, Side::Row, &f_c, &r, &row_fitter, row_x, floor)
                .map_err(|e| link_error(e, Side::Row, i, iter))?;
            r -= op.apply_rank_one(&col, &f_c)?;
            fr.set_column(i, &col);
            if link.is_some() {
                row_links[i] = link;
            }
        }
        for i in 0..k {
            let (f_r, f_c) = (fr.column(i).clone_owned(), fc.column(i).clone_owned());
            r += op.apply_rank_one(&f_r, &f_c)?;
            let (col, link) = sampling_update(op, Side::Column, &f_r, &r, &col_fitter, col_x, floor)
                .map_err(|e| link_error(e, Side::Column, i, iter))?;
            r -= op.apply_rank_one(&f_r, &col)?;
            fc.set_column(i, &col);
            if link.is_some() {
                col_links[i] = link;
            }
        }

        let objective = r.norm_squared();
        let kkt = sampling_kkt(op, &r, &fr, &fc, &row_fitter, &col_fitter)?;
        let previous = trace.entries.last().map_or(f64::INFINITY, |e| e.objective);
        trace.entries.push(TraceEntry {
            iter,
            objective,
            kkt_residual: kkt,
            seconds: clock.seconds(),
        });
        if objective > previous + slack_tol {
            increases += 1;
        } else {
            increases = 0;
        }
        if config.divergence_window > 0 && increases >= config.divergence_window {
            let model = FactorModel {
                row_factors: fr,
                col_factors: fc,
                row_links,
                col_links,
                row_side_information: !features.rows.is_identity(),
                col_side_information: !features.cols.is_identity(),
                slack: None,
                trace,
                stop: StopReason::MaxIterations,
            };
            return Err(Error::Diverged {
                iteration: iter,
                objective,
                model: Box::new(model),
            });
        }
        if kkt <= config.kkt_epsilon * kkt0 {
            stop = StopReason::Converged;
            break;
        }
        if clock.expired() {
            stop = StopReason::TimeLimit;
            break;
        }
    }

    Ok(FactorModel {
        row_factors: fr,
        col_factors: fc,
        row_links,
        col_links,
        row_side_information: !features.rows.is_identity(),
        col_side_information: !features.cols.is_identity(),
        slack: None,
        trace,
        stop,
    })
}

fn design_of(fitter: &LinkFitter) -> Option<&DMatrix<f64>> {
    match fitter {
        LinkFitter::Linear(d) => Some(d.features()),
        _ => None,
    }
}

fn link_error(e: Error, side: Side, column: usize, iteration: usize) -> Error {
    Error::LinkFit {
        side,
        column,
        iteration,
        source: Box::new(e),
    }
}

fn sampling_update(
    op: &MeasurementOperator,
    side: Side,
    partner: &DVector<f64>,
    residual: &DVector<f64>,
    fitter: &LinkFitter,
    features: Option<&DMatrix<f64>>,
    floor: f64,
) -> Result<(DVector<f64>, Option<LinkModel>)> {
    let n = fitter.len();
    if partner.norm_squared() == 0.0 {
        return Ok((DVector::from_element(n, floor), None));
    }
    let (gram, rhs) = build_normal_system(op, side, partner, residual, features);
    let coefficients = solve_update(&gram, &rhs);
    let model = LinkModel::Linear {
        coefficients: coefficients.iter().copied().collect(),
    };
    let col = fitter.evaluate(&model)?;
    if col.iter().all(|&x| x == 0.0) {
        return Ok((DVector::from_element(n, floor), None));
    }
    Ok((col, Some(model)))
}

/// Stationarity norm for the sampling error: with `E = A^*(r)`, the stacked
/// link gradients `D_r^T ((E F_c) o 1[F_r > 0])` and the column analog.
fn sampling_kkt(
    op: &MeasurementOperator,
    r: &DVector<f64>,
    fr: &DMatrix<f64>,
    fc: &DMatrix<f64>,
    row: &LinkFitter,
    col: &LinkFitter,
) -> Result<f64> {
    let e = op.adjoint(r)?;
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
    Ok((side(&e * fc, fr, row) + side(e.tr_mul(fr), fc, col)).sqrt())
}
