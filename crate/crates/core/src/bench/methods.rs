use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{interpolation_baseline, Blocks};
use crate::error::{Error, Result};
use crate::linalg::ramp;
use crate::linkmodels::{FeatureSet, Features, LinkSpec, Smoothing, SplineDesign};
use crate::operators::{Mask, MeasurementOperator};
use crate::solver::{fit, fit2, FactorModel, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Aggregates spread evenly over their spans.
    Interpolation,
    /// One spline regression per training column (new rows) and per
    /// training row (new columns) on the interpolated matrix.
    IndividualGam,
    /// Factorization without features.
    Hals,
    /// Factorization without features, then spline regression of each factor.
    FactorGam,
    HalsxLinear,
    HalsxSpline,
    HalsxKernel,
    /// Sampling-error solver with linear links.
    Halsx2,
}

impl Method {
    pub fn all() -> &'static [Method] {
        &[
            Method::Interpolation,
            Method::IndividualGam,
            Method::Hals,
            Method::FactorGam,
            Method::HalsxLinear,
            Method::HalsxSpline,
            Method::HalsxKernel,
            Method::Halsx2,
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            Method::Interpolation => "interpolation",
            Method::IndividualGam => "individual_gam",
            Method::Hals => "hals",
            Method::FactorGam => "factor_gam",
            Method::HalsxLinear => "halsx_linear",
            Method::HalsxSpline => "halsx_spline",
            Method::HalsxKernel => "halsx_kernel",
            Method::Halsx2 => "halsx2",
        }
    }

    pub fn uses_rank(&self) -> bool {
        !matches!(self, Method::Interpolation | Method::IndividualGam)
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::all()
            .iter()
            .copied()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown method `{s}`")))
    }
}

/// Estimates for the training block and whichever held-out blocks the
/// method can predict.
#[derive(Debug, Clone)]
pub struct MethodOutput {
    pub recovery: DMatrix<f64>,
    pub rows: Option<DMatrix<f64>>,
    pub cols: Option<DMatrix<f64>>,
    pub both: Option<DMatrix<f64>>,
    pub seconds: f64,
    pub iters: usize,
}

/// Fills the training block from the measurements without a model.
fn naive_fill(op: &MeasurementOperator, b: &DVector<f64>) -> Result<DMatrix<f64>> {
    match op.mask() {
        Mask::TemporalAggregate { .. } => Ok(interpolation_baseline(op, b)?.matrix),
        Mask::Complete | Mask::Completion { .. } => op.adjoint(b),
        _ => Err(Error::InvalidArgument(format!(
            "no interpolation for {} measurements",
            op.kind()
        ))),
    }
}

fn gam(x: &DMatrix<f64>) -> Result<SplineDesign> {
    SplineDesign::new(x, 10, Smoothing::default())
}

/// Regresses every column of `targets` on the design and predicts at `new`.
fn regress_columns(design: &SplineDesign, targets: &DMatrix<f64>, new: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut out = DMatrix::zeros(new.nrows(), targets.ncols());
    for j in 0..targets.ncols() {
        let model = design.fit(&targets.column(j).clone_owned(), 1.0)?;
        out.set_column(j, &ramp(&model.evaluate_raw(new)));
    }
    Ok(out)
}

fn finish(model: &FactorModel, blocks: &Blocks, start: Instant) -> Result<MethodOutput> {
    let p = model.predict(Some(&blocks.test_row_features), Some(&blocks.test_col_features))?;
    Ok(MethodOutput {
        recovery: model.reconstruction(),
        rows: p.rows,
        cols: p.cols,
        both: p.both,
        seconds: start.elapsed().as_secs_f64(),
        iters: model.iterations(),
    })
}

fn feature_set(blocks: &Blocks) -> Result<FeatureSet> {
    Ok(FeatureSet::new(
        Features::new(blocks.train_row_features.clone())?,
        Features::new(blocks.train_col_features.clone())?,
    ))
}

/// Runs one method at one rank (`config.rank`) on the training measurements.
pub fn run_method(
    method: Method,
    op: &MeasurementOperator,
    b: &DVector<f64>,
    blocks: &Blocks,
    config: &SolverConfig,
) -> Result<MethodOutput> {
    let start = Instant::now();
    let (m1, m2) = blocks.train.shape();
    match method {
        Method::Interpolation => Ok(MethodOutput {
            recovery: interpolation_baseline(op, b)?.matrix,
            rows: None,
            cols: None,
            both: None,
            seconds: start.elapsed().as_secs_f64(),
            iters: 0,
        }),
        Method::IndividualGam => {
            let filled = naive_fill(op, b)?;
            let row_design = gam(&blocks.train_row_features)?;
            let col_design = gam(&blocks.train_col_features)?;
            let rows = regress_columns(&row_design, &filled, &blocks.test_row_features)?;
            let cols = regress_columns(&col_design, &filled.transpose(), &blocks.test_col_features)?.transpose();
            let both = regress_columns(&col_design, &rows.transpose(), &blocks.test_col_features)?.transpose();
            Ok(MethodOutput {
                recovery: filled,
                rows: Some(rows),
                cols: Some(cols),
                both: Some(both),
                seconds: start.elapsed().as_secs_f64(),
                iters: 0,
            })
        }
        Method::Hals | Method::FactorGam => {
            let cfg = SolverConfig {
                row_link: LinkSpec::Identity,
                col_link: LinkSpec::Identity,
                ..config.clone()
            };
            let model = fit(op, b, &FeatureSet::identity(m1, m2), &cfg)?;
            if method == Method::Hals {
                return Ok(MethodOutput {
                    recovery: model.reconstruction(),
                    rows: None,
                    cols: None,
                    both: None,
                    seconds: start.elapsed().as_secs_f64(),
                    iters: model.iterations(),
                });
            }
            let fr = regress_columns(&gam(&blocks.train_row_features)?, &model.row_factors, &blocks.test_row_features)?;
            let fc = regress_columns(&gam(&blocks.train_col_features)?, &model.col_factors, &blocks.test_col_features)?;
            Ok(MethodOutput {
                recovery: model.reconstruction(),
                rows: Some(&fr * model.col_factors.transpose()),
                cols: Some(&model.row_factors * fc.transpose()),
                both: Some(&fr * fc.transpose()),
                seconds: start.elapsed().as_secs_f64(),
                iters: model.iterations(),
            })
        }
        Method::HalsxLinear | Method::HalsxSpline | Method::HalsxKernel => {
            let link = match method {
                Method::HalsxLinear => LinkSpec::Linear,
                Method::HalsxSpline => LinkSpec::spline(),
                _ => LinkSpec::kernel_ridge(),
            };
            let cfg = SolverConfig {
                row_link: link.clone(),
                col_link: link,
                ..config.clone()
            };
            let model = fit(op, b, &feature_set(blocks)?, &cfg)?;
            finish(&model, blocks, start)
        }
        Method::Halsx2 => {
            let cfg = SolverConfig {
                row_link: LinkSpec::Linear,
                col_link: LinkSpec::Linear,
                ..config.clone()
            };
            let model = match fit2(op, b, &feature_set(blocks)?, &cfg) {
                Ok(m) => m,
                // a diverged run is still scored
                Err(Error::Diverged { model, .. }) => *model,
                Err(e) => return Err(e),
            };
            finish(&model, blocks, start)
        }
    }
}
