use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::numerical_rank;

use super::RANK_TOL;

/// Least-squares solver for `X beta = t` with `(X^T X)^{-1} X^T = R^{-1} Q^T`
/// computed once from a thin QR factorization.
#[derive(Debug, Clone)]
pub struct LinearDesign {
    x: DMatrix<f64>,
    left_inverse: DMatrix<f64>,
}

impl LinearDesign {
    pub fn new(x: &DMatrix<f64>) -> Result<Self> {
        let (n, d) = x.shape();
        let rank = numerical_rank(x, RANK_TOL);
        if n < d || rank < d {
            return Err(Error::RankDeficient { rows: n, cols: d, rank });
        }
        let qr = x.clone().qr();
        let r = qr.r();
        let q = qr.q();
        let left_inverse = r
            .solve_upper_triangular(&q.transpose())
            .ok_or(Error::RankDeficient { rows: n, cols: d, rank })?;
        Ok(Self {
            x: x.clone(),
            left_inverse,
        })
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.x
    }

    /// Least-squares coefficients for `target`.
    pub fn solve(&self, target: &DVector<f64>) -> DVector<f64> {
        &self.left_inverse * target
    }
}
