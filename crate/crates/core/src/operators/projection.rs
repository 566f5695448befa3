use nalgebra::{DMatrix, DVector};

use super::{Mask, MeasurementOperator};
use crate::error::{check_len, check_shape, Error, Result};

/// Stopping rule for the alternating projection used by general masks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionOptions {
    /// Maximum allowed `||A(V) - b||_inf`.
    pub tol: f64,
    pub max_iter: usize,
    /// Stop once `||V_new - V|| <= rel_change * ||V||` (and the residual is within `tol`).
    pub rel_change: f64,
    /// Skip the closed forms and always use alternating projection.
    pub force_alternating: bool,
}

impl Default for ProjectionOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 500,
            rel_change: 1e-9,
            force_alternating: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Projection {
    pub matrix: DMatrix<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// Euclidean projection of `y` onto `{v >= 0, sum(v) = total}` by sorting.
pub fn project_simplex(y: &[f64], total: f64) -> Vec<f64> {
    if y.is_empty() {
        return Vec::new();
    }
    if total <= 0.0 {
        return vec![0.0; y.len()];
    }
    let mut u = y.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cumsum += uj;
        let t = (cumsum - total) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        }
    }
    y.iter().map(|&v| (v - theta).max(0.0)).collect()
}

fn max_abs(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

impl MeasurementOperator {
    /// Projects `w` onto `{V >= 0, A(V) = b}`.
    ///
    /// Completion and temporal-aggregate masks are projected exactly in closed
    /// form. Other masks use Dykstra-corrected alternating projection between
    /// the affine set (through the cached pseudo-inverse) and the orthant.
    pub fn project_polytope(
        &self,
        b: &DVector<f64>,
        w: &DMatrix<f64>,
        opts: &ProjectionOptions,
    ) -> Result<Projection> {
        check_len("projection measurements", self.len(), b.len())?;
        check_shape("projection target", self.shape(), w.shape())?;
        if opts.force_alternating {
            return self.project_alternating(b, w, opts);
        }
        match &self.mask {
            Mask::Complete => {
                if let Some(i) = b.iter().position(|&x| x < 0.0) {
                    return Err(Error::Infeasible(format!(
                        "negative observed entry at measurement {i}"
                    )));
                }
                let matrix = self.adjoint(b)?;
                Ok(Projection {
                    matrix,
                    iterations: 0,
                    residual: 0.0,
                })
            }
            Mask::Completion { entries } => {
                let mut v = w.map(|x| x.max(0.0));
                for (k, (&(i, j), &val)) in entries.iter().zip(b.iter()).enumerate() {
                    if val < 0.0 {
                        return Err(Error::Infeasible(format!(
                            "negative observed entry at measurement {k}"
                        )));
                    }
                    v[(i, j)] = val;
                }
                Ok(Projection {
                    matrix: v,
                    iterations: 0,
                    residual: 0.0,
                })
            }
            Mask::TemporalAggregate { spans } => {
                // uncovered cells keep the clamped target
                let mut v = w.map(|x| x.max(0.0));
                let mut buf = Vec::new();
                for (k, (s, &total)) in spans.iter().zip(b.iter()).enumerate() {
                    if total < 0.0 {
                        return Err(Error::Infeasible(format!(
                            "negative aggregate {total} at measurement {k}"
                        )));
                    }
                    buf.clear();
                    buf.extend(s.rows().map(|t| w[(t, s.column)]));
                    for (t, p) in s.rows().zip(project_simplex(&buf, total)) {
                        v[(t, s.column)] = p;
                    }
                }
                let residual = max_abs(&(self.apply(&v)? - b));
                Ok(Projection {
                    matrix: v,
                    iterations: 0,
                    residual,
                })
            }
            Mask::GaussianSensing { .. } | Mask::RankOne { .. } => {
                self.project_alternating(b, w, opts)
            }
        }
    }

    /// Generic path, available for every mask family.
    pub fn project_alternating(
        &self,
        b: &DVector<f64>,
        w: &DMatrix<f64>,
        opts: &ProjectionOptions,
    ) -> Result<Projection> {
        check_len("projection measurements", self.len(), b.len())?;
        check_shape("projection target", self.shape(), w.shape())?;
        let pinv = self.gram_pinv();
        let mut x = w.clone();
        let mut correction = DMatrix::zeros(self.rows, self.cols);
        let mut residual = f64::INFINITY;
        for it in 1..=opts.max_iter {
            let r = b - self.apply(&x)?;
            let y = &x + self.adjoint(&(pinv * r))?;
            let z = y + &correction;
            let x_new = z.map(|v| v.max(0.0));
            correction = z - &x_new;
            let change = (&x_new - &x).norm();
            let scale = x_new.norm().max(f64::MIN_POSITIVE);
            x = x_new;
            residual = max_abs(&(self.apply(&x)? - b));
            if residual <= opts.tol && change <= opts.rel_change * scale {
                return Ok(Projection {
                    matrix: x,
                    iterations: it,
                    residual,
                });
            }
        }
        if residual <= opts.tol {
            Ok(Projection {
                matrix: x,
                iterations: opts.max_iter,
                residual,
            })
        } else {
            Err(Error::ProjectionNotConverged {
                iterations: opts.max_iter,
                residual,
            })
        }
    }
}
