//! Additive penalized cubic regression splines.
//!
//! Each feature column gets a cubic B-spline basis with quantile knots and an
//! integrated squared second-derivative penalty. Terms are centered (their
//! fitted values sum to zero over the training data) so that the model
//! `intercept + sum_j h_j(x_j)` has a unique parametrization.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg::{quantile_sorted, symmetric_pinv};

const ORDER: usize = 4;

/// How the smoothing parameter of every term is chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum Smoothing {
    /// Minimize GCV over a log grid of `grid_size` values spanning
    /// `[1e-8, 1e4] * trace(X^T X) / trace(S)`. With `per_term`, one
    /// coordinate sweep refines each term's value after the shared search.
    Gcv {
        #[serde(default = "default_grid_size")]
        grid_size: usize,
        #[serde(default)]
        per_term: bool,
    },
    /// Same smoothing parameter for every term.
    Fixed { lambda: f64 },
}

fn default_grid_size() -> usize {
    30
}

impl Default for Smoothing {
    fn default() -> Self {
        Smoothing::Gcv {
            grid_size: default_grid_size(),
            per_term: false,
        }
    }
}

/// Log-spaced smoothing grid `scale * 10^[-8, 4]`.
pub fn gcv_grid(scale: f64, size: usize) -> Vec<f64> {
    if size == 1 {
        return vec![scale];
    }
    (0..size)
        .map(|i| scale * 10f64.powf(-8.0 + 12.0 * i as f64 / (size - 1) as f64))
        .collect()
}

/// Order-`k` B-spline `i` at `x` (Cox-de Boor). The last non-empty knot
/// interval is closed so that the basis is a partition of unity on
/// `[first knot, last knot]`.
fn bspline(knots: &[f64], i: usize, k: usize, x: f64) -> f64 {
    if k == 1 {
        let (a, b) = (knots[i], knots[i + 1]);
        let last = knots[knots.len() - 1];
        return if (a <= x && x < b) || (x == last && b == last && a < b) {
            1.0
        } else {
            0.0
        };
    }
    let mut v = 0.0;
    let d1 = knots[i + k - 1] - knots[i];
    if d1 > 0.0 {
        v += (x - knots[i]) / d1 * bspline(knots, i, k - 1, x);
    }
    let d2 = knots[i + k] - knots[i + 1];
    if d2 > 0.0 {
        v += (knots[i + k] - x) / d2 * bspline(knots, i + 1, k - 1, x);
    }
    v
}

/// `r`-th derivative of the order-`k` B-spline `i` at `x`.
fn dbasis(knots: &[f64], i: usize, k: usize, x: f64, r: usize) -> f64 {
    if r == 0 {
        return bspline(knots, i, k, x);
    }
    if k == 1 {
        return 0.0;
    }
    let scale = (k - 1) as f64;
    let mut v = 0.0;
    let d1 = knots[i + k - 1] - knots[i];
    if d1 > 0.0 {
        v += scale / d1 * dbasis(knots, i, k - 1, x, r - 1);
    }
    let d2 = knots[i + k] - knots[i + 1];
    if d2 > 0.0 {
        v -= scale / d2 * dbasis(knots, i + 1, k - 1, x, r - 1);
    }
    v
}

/// Cubic B-spline basis of one feature.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineBasis {
    knots: Vec<f64>,
}

impl SplineBasis {
    /// `dim - 4` interior knots at quantiles of the distinct values; boundary
    /// knots repeated four times at the extremes.
    pub fn from_values(x: &[f64], dim: usize) -> Result<Self> {
        if dim < ORDER {
            return Err(Error::InvalidArgument(format!(
                "spline basis dimension must be at least {ORDER}, got {dim}"
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite spline feature".into()));
        }
        let mut distinct = x.to_vec();
        distinct.sort_by(|a, b| a.total_cmp(b));
        distinct.dedup();
        if distinct.len() < dim {
            return Err(Error::TooFewDistinctValues {
                needed: dim,
                found: distinct.len(),
            });
        }
        let lo = distinct[0];
        let hi = distinct[distinct.len() - 1];
        let interior = dim - ORDER;
        let mut knots = vec![lo; ORDER];
        for i in 1..=interior {
            knots.push(quantile_sorted(&distinct, i as f64 / (interior + 1) as f64));
        }
        knots.extend(std::iter::repeat_n(hi, ORDER));
        Ok(Self { knots })
    }

    pub fn from_knots(knots: Vec<f64>) -> Result<Self> {
        if knots.len() < 2 * ORDER || knots.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidArgument("invalid spline knot vector".into()));
        }
        Ok(Self { knots })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn dim(&self) -> usize {
        self.knots.len() - ORDER
    }

    fn lo(&self) -> f64 {
        self.knots[0]
    }

    fn hi(&self) -> f64 {
        self.knots[self.knots.len() - 1]
    }

    /// `r`-th derivative of every basis function at `x` inside the knot range.
    pub fn derivatives(&self, x: f64, r: usize) -> DVector<f64> {
        DVector::from_fn(self.dim(), |i, _| dbasis(&self.knots, i, ORDER, x, r))
    }

    /// Basis values at `x`, continued linearly outside the knot range.
    pub fn row(&self, x: f64) -> DVector<f64> {
        let (lo, hi) = (self.lo(), self.hi());
        if x < lo {
            self.derivatives(lo, 0) + self.derivatives(lo, 1) * (x - lo)
        } else if x > hi {
            self.derivatives(hi, 0) + self.derivatives(hi, 1) * (x - hi)
        } else {
            self.derivatives(x, 0)
        }
    }

    pub fn design<'a>(&self, x: impl ExactSizeIterator<Item = &'a f64>) -> DMatrix<f64> {
        let n = x.len();
        let mut out = DMatrix::zeros(n, self.dim());
        for (r, &v) in x.enumerate() {
            out.row_mut(r).copy_from(&self.row(v).transpose());
        }
        out
    }

    /// `S_ab = integral of B_a'' B_b''` over the knot range. Second
    /// derivatives are linear on each knot interval, so two-point Gauss
    /// quadrature is exact.
    pub fn penalty(&self) -> DMatrix<f64> {
        let l = self.dim();
        let mut s = DMatrix::zeros(l, l);
        let offset = 0.5 / 3f64.sqrt();
        for w in self.knots.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b <= a {
                continue;
            }
            let h = b - a;
            let mid = 0.5 * (a + b);
            for node in [mid - offset * h, mid + offset * h] {
                let d2 = self.derivatives(node, 2);
                s.ger(0.5 * h, &d2, &d2, 1.0);
            }
        }
        s
    }

    /// Coefficients reproducing the linear function `a x + b` on the knot range.
    pub fn greville_coefficients(&self, slope: f64, intercept: f64) -> DVector<f64> {
        DVector::from_fn(self.dim(), |i, _| {
            let xi = (self.knots[i + 1] + self.knots[i + 2] + self.knots[i + 3]) / 3.0;
            slope * xi + intercept
        })
    }
}

/// Orthonormal basis of `{z : c^T z = 0}` from one Householder reflection.
fn null_space_of(c: &DVector<f64>) -> DMatrix<f64> {
    let l = c.len();
    let mut v = c.clone();
    let sign = if c[0] >= 0.0 { 1.0 } else { -1.0 };
    v[0] += sign * c.norm();
    let vtv = v.norm_squared();
    let mut h = DMatrix::identity(l, l);
    h.ger(-2.0 / vtv, &v, &v, 1.0);
    h.columns(1, l - 1).into_owned()
}

/// One smooth term of a fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineTerm {
    pub knots: Vec<f64>,
    /// Coefficients on the (uncentered) B-spline basis.
    pub coefficients: Vec<f64>,
    /// Smoothing parameter on the scale of the unreduced objective.
    pub lambda: f64,
}

/// `intercept + sum_j B_j(x_j) beta_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineModel {
    pub intercept: f64,
    pub terms: Vec<SplineTerm>,
    pub gcv: Option<f64>,
}

impl SplineModel {
    pub(crate) fn evaluate_raw(&self, x: &DMatrix<f64>) -> DVector<f64> {
        let mut out = DVector::from_element(x.nrows(), self.intercept);
        for (j, term) in self.terms.iter().enumerate() {
            let basis = SplineBasis {
                knots: term.knots.clone(),
            };
            let beta = DVector::from_column_slice(&term.coefficients);
            for r in 0..x.nrows() {
                out[r] += basis.row(x[(r, j)]).dot(&beta);
            }
        }
        out
    }
}

/// Simultaneous diagonalization of `X^T X` and the summed penalty, used for
/// fast GCV scoring when one smoothing value is shared by all terms.
#[derive(Debug, Clone)]
struct SharedEigen {
    /// `P` with `P^T X^T X P = I` and `P^T S P = diag(d)`.
    p: DMatrix<f64>,
    d: DVector<f64>,
}

/// Cached design for fitting additive spline links on fixed features.
#[derive(Debug, Clone)]
pub struct SplineDesign {
    features: DMatrix<f64>,
    bases: Vec<SplineBasis>,
    centering: Vec<DMatrix<f64>>,
    /// `[1 | B_1 Z_1 | B_2 Z_2 | ...]`.
    design: DMatrix<f64>,
    /// `(column offset, Z_j^T S_j Z_j)` per term.
    penalties: Vec<(usize, DMatrix<f64>)>,
    xtx: DMatrix<f64>,
    scale: f64,
    shared: Option<SharedEigen>,
    smoothing: Smoothing,
}

impl SplineDesign {
    pub fn new(x: &DMatrix<f64>, dim: usize, smoothing: Smoothing) -> Result<Self> {
        let (n, d) = x.shape();
        if d == 0 {
            return Err(Error::InvalidArgument("spline links need at least one feature".into()));
        }
        let width = 1 + d * (dim.max(ORDER) - 1);
        let mut design = DMatrix::zeros(n, width);
        design.column_mut(0).fill(1.0);
        let mut bases = Vec::with_capacity(d);
        let mut centering = Vec::with_capacity(d);
        let mut penalties = Vec::with_capacity(d);
        let mut offset = 1;
        for j in 0..d {
            let col: Vec<f64> = x.column(j).iter().copied().collect();
            let basis = SplineBasis::from_values(&col, dim)?;
            let b = basis.design(col.iter());
            let sums = b.row_sum().transpose();
            let z = null_space_of(&sums);
            let block = &b * &z;
            design.columns_mut(offset, dim - 1).copy_from(&block);
            let s = z.transpose() * basis.penalty() * &z;
            penalties.push((offset, 0.5 * (&s + s.transpose())));
            offset += dim - 1;
            bases.push(basis);
            centering.push(z);
        }
        let xtx = design.tr_mul(&design);
        let mut total = DMatrix::zeros(width, width);
        for (off, s) in &penalties {
            let mut view = total.view_mut((*off, *off), s.shape());
            view += s;
        }
        let s_trace = total.trace();
        let scale = if s_trace > 0.0 { xtx.trace() / s_trace } else { 1.0 };
        let shared = xtx.clone().cholesky().map(|chol| {
            let l = chol.l();
            let a = l.solve_lower_triangular(&total).expect("Cholesky factor is nonsingular");
            let m = l
                .solve_lower_triangular(&a.transpose())
                .expect("Cholesky factor is nonsingular");
            let m = 0.5 * (&m + m.transpose());
            let eig = m.symmetric_eigen();
            let p = l
                .tr_solve_lower_triangular(&eig.eigenvectors)
                .expect("Cholesky factor is nonsingular");
            SharedEigen {
                p,
                d: eig.eigenvalues.map(|v| v.max(0.0)),
            }
        });
        Ok(Self {
            features: x.clone(),
            bases,
            centering,
            design,
            penalties,
            xtx,
            scale,
            shared,
            smoothing,
        })
    }

    pub fn len(&self) -> usize {
        self.design.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.design.nrows() == 0
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn bases(&self) -> &[SplineBasis] {
        &self.bases
    }

    /// Centered design `[1 | B_1 Z_1 | ...]`.
    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    /// Summed penalty embedded in the full parameter space.
    pub fn penalty(&self) -> DMatrix<f64> {
        let p = self.design.ncols();
        let mut total = DMatrix::zeros(p, p);
        for (off, s) in &self.penalties {
            let mut view = total.view_mut((*off, *off), s.shape());
            view += s;
        }
        total
    }

    /// `trace(X^T X) / trace(S)`, the unit of the smoothing grid.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    fn grid(&self, size: usize) -> Vec<f64> {
        gcv_grid(self.scale, size)
    }

    /// Solves `(X^T X + sum_j rho_j S_j) beta = rhs`; a numerically singular
    /// system falls back to the minimum-norm solution.
    fn penalized_solve(&self, rhos: &[f64], rhs: &DMatrix<f64>) -> DMatrix<f64> {
        let mut a = self.xtx.clone();
        for ((off, s), &rho) in self.penalties.iter().zip(rhos) {
            let mut view = a.view_mut((*off, *off), s.shape());
            view += s * rho;
        }
        match a.clone().cholesky() {
            Some(chol) => chol.solve(rhs),
            None => symmetric_pinv(&a, 1e-12) * rhs,
        }
    }

    /// GCV score with explicit per-term effective penalties.
    fn direct_score(&self, y: &DVector<f64>, xty: &DVector<f64>, rhos: &[f64]) -> Result<f64> {
        let beta = self.penalized_solve(rhos, &DMatrix::from_column_slice(xty.len(), 1, xty.as_slice()));
        let rss = (y - &self.design * beta.column(0)).norm_squared();
        let edf = self.penalized_solve(rhos, &self.xtx).trace();
        Ok(gcv_score(y.len(), rss, edf))
    }

    /// GCV scores on the shared grid, as `(lambda, score)` pairs.
    pub fn gcv_scores(&self, target: &DVector<f64>, weight: f64) -> Result<Vec<(f64, f64)>> {
        check_len("spline target", self.len(), target.len())?;
        let size = match self.smoothing {
            Smoothing::Gcv { grid_size, .. } => grid_size.max(1),
            Smoothing::Fixed { .. } => default_grid_size(),
        };
        self.shared_scores(target, weight, &self.grid(size))
    }

    fn shared_scores(&self, y: &DVector<f64>, weight: f64, grid: &[f64]) -> Result<Vec<(f64, f64)>> {
        let n = y.len();
        let xty = self.design.tr_mul(y);
        let terms = self.penalties.len();
        match &self.shared {
            Some(se) => {
                let yty = y.norm_squared();
                let z = se.p.tr_mul(&xty);
                Ok(grid
                    .iter()
                    .map(|&lambda| {
                        let rho = lambda / weight;
                        let mut rss = yty;
                        let mut edf = 0.0;
                        for (zi, di) in z.iter().zip(se.d.iter()) {
                            let s = 1.0 / (1.0 + rho * di);
                            rss -= zi * zi * (2.0 * s - s * s);
                            edf += s;
                        }
                        (lambda, gcv_score(n, rss.max(0.0), edf))
                    })
                    .collect())
            }
            None => grid
                .iter()
                .map(|&lambda| {
                    let rhos = vec![lambda / weight; terms];
                    Ok((lambda, self.direct_score(y, &xty, &rhos)?))
                })
                .collect(),
        }
    }

    /// Penalized fit of `weight * ||target - f||^2 + sum_j lambda_j pen_j`.
    pub fn fit(&self, target: &DVector<f64>, weight: f64) -> Result<SplineModel> {
        check_len("spline target", self.len(), target.len())?;
        let terms = self.penalties.len();
        let xty = self.design.tr_mul(target);
        let (lambdas, gcv) = match &self.smoothing {
            Smoothing::Fixed { lambda } => (vec![*lambda; terms], None),
            Smoothing::Gcv { grid_size, per_term } => {
                let grid = self.grid((*grid_size).max(1));
                let scores = self.shared_scores(target, weight, &grid)?;
                let (best_lambda, best_score) = argmin(&scores);
                let mut lambdas = vec![best_lambda; terms];
                let mut best = best_score;
                if *per_term && terms > 1 {
                    best = self.direct_score(
                        target,
                        &xty,
                        &lambdas.iter().map(|l| l / weight).collect::<Vec<_>>(),
                    )?;
                    for j in 0..terms {
                        for &candidate in &grid {
                            let mut trial = lambdas.clone();
                            trial[j] = candidate;
                            let rhos: Vec<f64> = trial.iter().map(|l| l / weight).collect();
                            let score = self.direct_score(target, &xty, &rhos)?;
                            if score < best {
                                best = score;
                                lambdas = trial;
                            }
                        }
                    }
                }
                (lambdas, Some(best))
            }
        };
        let rhos: Vec<f64> = lambdas.iter().map(|l| l / weight).collect();
        let beta = self
            .penalized_solve(&rhos, &DMatrix::from_column_slice(xty.len(), 1, xty.as_slice()))
            .column(0)
            .clone_owned();
        let terms = self
            .bases
            .iter()
            .zip(&self.centering)
            .zip(&self.penalties)
            .zip(&lambdas)
            .map(|(((basis, z), (off, _)), &lambda)| {
                let gamma = beta.rows(*off, z.ncols());
                SplineTerm {
                    knots: basis.knots.clone(),
                    coefficients: (z * gamma).iter().copied().collect(),
                    lambda,
                }
            })
            .collect();
        Ok(SplineModel {
            intercept: beta[0],
            terms,
            gcv,
        })
    }
}

fn gcv_score(n: usize, rss: f64, edf: f64) -> f64 {
    let dof = n as f64 - edf;
    if dof <= 0.0 {
        return f64::INFINITY;
    }
    n as f64 * rss / (dof * dof)
}

/// First minimizer, so ties resolve toward smaller smoothing values.
fn argmin(scores: &[(f64, f64)]) -> (f64, f64) {
    scores
        .iter()
        .copied()
        .fold((f64::NAN, f64::INFINITY), |best, (l, s)| {
            if s < best.1 || best.0.is_nan() {
                (l, s)
            } else {
                best
            }
        })
}
