//! Linear measurement operators.
//!
//! An operator maps an `n1 x n2` matrix to `N` scalar measurements
//! `<M, A_i>`, one per mask `A_i`. Five mask families are supported; each
//! stores only what it needs (index pairs, span triples, vector pairs or dense
//! masks), never the full list of dense masks unless the family is dense.

mod io;
mod projection;
mod sampling;

use std::collections::HashSet;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, check_shape, Error, Result};

pub use io::{read_mask, read_measurements, write_mask, write_measurements};
pub use projection::{project_simplex, Projection, ProjectionOptions};
pub use sampling::{
    make_periodic_aggregates, make_random_aggregates, random_completion, random_gaussian_sensing,
    random_rank_one,
};

/// A temporal-aggregate measurement: rows `start .. start + len` of `column`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub column: usize,
    pub start: usize,
    pub len: usize,
}

impl Span {
    pub fn rows(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.len
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskKind {
    Complete,
    Completion,
    GaussianSensing,
    RankOne,
    TemporalAggregate,
}

impl MaskKind {
    pub fn name(&self) -> &'static str {
        match self {
            MaskKind::Complete => "complete",
            MaskKind::Completion => "completion",
            MaskKind::GaussianSensing => "gaussian_sensing",
            MaskKind::RankOne => "rank_one",
            MaskKind::TemporalAggregate => "temporal_aggregate",
        }
    }
}

impl std::fmt::Display for MaskKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for MaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "complete" => Ok(MaskKind::Complete),
            "completion" => Ok(MaskKind::Completion),
            "gaussian_sensing" => Ok(MaskKind::GaussianSensing),
            "rank_one" => Ok(MaskKind::RankOne),
            "temporal_aggregate" => Ok(MaskKind::TemporalAggregate),
            other => Err(Error::Parse(format!("unknown mask kind `{other}`"))),
        }
    }
}

/// Kind-specific payload of a measurement operator.
#[derive(Debug, Clone, PartialEq)]
pub enum Mask {
    /// Every entry observed; measurement `i * n2 + j` is entry `(i, j)`.
    Complete,
    /// A subset of entries, in the given order.
    Completion { entries: Vec<(usize, usize)> },
    /// Dense masks.
    GaussianSensing { masks: Vec<DMatrix<f64>> },
    /// `A_i = left_i right_i^T`, stored as the two vectors.
    RankOne {
        left: Vec<DVector<f64>>,
        right: Vec<DVector<f64>>,
    },
    /// Sums of consecutive rows within one column.
    TemporalAggregate { spans: Vec<Span> },
}

/// A linear measurement operator on `rows x cols` matrices.
#[derive(Debug, Clone)]
pub struct MeasurementOperator {
    rows: usize,
    cols: usize,
    mask: Mask,
    gram_pinv: OnceLock<DMatrix<f64>>,
}

impl MeasurementOperator {
    fn from_parts(rows: usize, cols: usize, mask: Mask) -> Self {
        Self {
            rows,
            cols,
            mask,
            gram_pinv: OnceLock::new(),
        }
    }

    pub fn complete(rows: usize, cols: usize) -> Self {
        Self::from_parts(rows, cols, Mask::Complete)
    }

    pub fn completion(rows: usize, cols: usize, entries: Vec<(usize, usize)>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(entries.len());
        for &(i, j) in &entries {
            if i >= rows || j >= cols {
                return Err(Error::InvalidArgument(format!(
                    "completion entry ({i}, {j}) out of bounds for {rows}x{cols}"
                )));
            }
            if !seen.insert((i, j)) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate completion entry ({i}, {j})"
                )));
            }
        }
        Ok(Self::from_parts(rows, cols, Mask::Completion { entries }))
    }

    pub fn gaussian_sensing(rows: usize, cols: usize, masks: Vec<DMatrix<f64>>) -> Result<Self> {
        for m in &masks {
            check_shape("sensing mask", (rows, cols), m.shape())?;
        }
        Ok(Self::from_parts(rows, cols, Mask::GaussianSensing { masks }))
    }

    pub fn rank_one(
        rows: usize,
        cols: usize,
        left: Vec<DVector<f64>>,
        right: Vec<DVector<f64>>,
    ) -> Result<Self> {
        check_len("rank-one vector pairs", left.len(), right.len())?;
        for (a, b) in left.iter().zip(&right) {
            check_len("rank-one left vector", rows, a.len())?;
            check_len("rank-one right vector", cols, b.len())?;
        }
        Ok(Self::from_parts(rows, cols, Mask::RankOne { left, right }))
    }

    /// Spans must lie inside the matrix and be pairwise disjoint within a column.
    pub fn temporal_aggregate(rows: usize, cols: usize, spans: Vec<Span>) -> Result<Self> {
        let mut covered = vec![false; rows * cols];
        for s in &spans {
            if s.column >= cols || s.len == 0 || s.start + s.len > rows {
                return Err(Error::InvalidArgument(format!(
                    "span {s:?} invalid for {rows}x{cols}"
                )));
            }
            for t in s.rows() {
                let cell = &mut covered[t * cols + s.column];
                if *cell {
                    return Err(Error::InvalidArgument(format!(
                        "span {s:?} overlaps another span in column {}",
                        s.column
                    )));
                }
                *cell = true;
            }
        }
        Ok(Self::from_parts(rows, cols, Mask::TemporalAggregate { spans }))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn mask(&self) -> &Mask {
        &self.mask
    }

    pub fn kind(&self) -> MaskKind {
        match self.mask {
            Mask::Complete => MaskKind::Complete,
            Mask::Completion { .. } => MaskKind::Completion,
            Mask::GaussianSensing { .. } => MaskKind::GaussianSensing,
            Mask::RankOne { .. } => MaskKind::RankOne,
            Mask::TemporalAggregate { .. } => MaskKind::TemporalAggregate,
        }
    }

    /// Number of measurements `N`.
    pub fn len(&self) -> usize {
        match &self.mask {
            Mask::Complete => self.rows * self.cols,
            Mask::Completion { entries } => entries.len(),
            Mask::GaussianSensing { masks } => masks.len(),
            Mask::RankOne { left, .. } => left.len(),
            Mask::TemporalAggregate { spans } => spans.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(<M, A_i>)_i`.
    pub fn apply(&self, m: &DMatrix<f64>) -> Result<DVector<f64>> {
        check_shape("apply", self.shape(), m.shape())?;
        let out = match &self.mask {
            Mask::Complete => {
                let mut v = DVector::zeros(self.rows * self.cols);
                for i in 0..self.rows {
                    for j in 0..self.cols {
                        v[i * self.cols + j] = m[(i, j)];
                    }
                }
                v
            }
            Mask::Completion { entries } => {
                DVector::from_iterator(entries.len(), entries.iter().map(|&(i, j)| m[(i, j)]))
            }
            Mask::GaussianSensing { masks } => {
                DVector::from_iterator(masks.len(), masks.iter().map(|a| a.dot(m)))
            }
            Mask::RankOne { left, right } => DVector::from_iterator(
                left.len(),
                left.iter().zip(right).map(|(a, b)| (m * b).dot(a)),
            ),
            Mask::TemporalAggregate { spans } => DVector::from_iterator(
                spans.len(),
                spans
                    .iter()
                    .map(|s| s.rows().map(|t| m[(t, s.column)]).sum::<f64>()),
            ),
        };
        Ok(out)
    }

    /// Measures `m`, pairing the values with this operator's length.
    pub fn measure(&self, m: &DMatrix<f64>) -> Result<MeasurementVector> {
        Ok(MeasurementVector {
            values: self.apply(m)?,
        })
    }

    /// `sum_i b_i A_i`.
    pub fn adjoint(&self, b: &DVector<f64>) -> Result<DMatrix<f64>> {
        check_len("adjoint", self.len(), b.len())?;
        let mut out = DMatrix::zeros(self.rows, self.cols);
        match &self.mask {
            Mask::Complete => {
                for i in 0..self.rows {
                    for j in 0..self.cols {
                        out[(i, j)] = b[i * self.cols + j];
                    }
                }
            }
            Mask::Completion { entries } => {
                for (&(i, j), &v) in entries.iter().zip(b.iter()) {
                    out[(i, j)] += v;
                }
            }
            Mask::GaussianSensing { masks } => {
                for (a, &v) in masks.iter().zip(b.iter()) {
                    out += a * v;
                }
            }
            Mask::RankOne { left, right } => {
                for ((a, c), &v) in left.iter().zip(right).zip(b.iter()) {
                    out.ger(v, a, c, 1.0);
                }
            }
            Mask::TemporalAggregate { spans } => {
                for (s, &v) in spans.iter().zip(b.iter()) {
                    for t in s.rows() {
                        out[(t, s.column)] += v;
                    }
                }
            }
        }
        Ok(out)
    }

    /// `A(u v^T)` without forming the outer product.
    pub fn apply_rank_one(&self, u: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
        check_len("apply_rank_one left", self.rows, u.len())?;
        check_len("apply_rank_one right", self.cols, v.len())?;
        let out = match &self.mask {
            Mask::Complete => {
                let mut out = DVector::zeros(self.rows * self.cols);
                for i in 0..self.rows {
                    for j in 0..self.cols {
                        out[i * self.cols + j] = u[i] * v[j];
                    }
                }
                out
            }
            Mask::Completion { entries } => {
                DVector::from_iterator(entries.len(), entries.iter().map(|&(i, j)| u[i] * v[j]))
            }
            Mask::GaussianSensing { masks } => {
                DVector::from_iterator(masks.len(), masks.iter().map(|a| (a * v).dot(u)))
            }
            Mask::RankOne { left, right } => DVector::from_iterator(
                left.len(),
                left.iter().zip(right).map(|(a, b)| a.dot(u) * b.dot(v)),
            ),
            Mask::TemporalAggregate { spans } => DVector::from_iterator(
                spans.len(),
                spans
                    .iter()
                    .map(|s| s.rows().map(|t| u[t]).sum::<f64>() * v[s.column]),
            ),
        };
        Ok(out)
    }

    /// `A_i v` for a single mask (an `n1`-vector).
    pub fn mask_times(&self, i: usize, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.rows);
        match &self.mask {
            Mask::Complete => {
                let (r, c) = (i / self.cols, i % self.cols);
                out[r] = v[c];
            }
            Mask::Completion { entries } => {
                let (r, c) = entries[i];
                out[r] = v[c];
            }
            Mask::GaussianSensing { masks } => out = &masks[i] * v,
            Mask::RankOne { left, right } => out = &left[i] * right[i].dot(v),
            Mask::TemporalAggregate { spans } => {
                let s = spans[i];
                for t in s.rows() {
                    out[t] = v[s.column];
                }
            }
        }
        out
    }

    /// `A_i^T u` for a single mask (an `n2`-vector).
    pub fn mask_transpose_times(&self, i: usize, u: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.cols);
        match &self.mask {
            Mask::Complete => {
                let (r, c) = (i / self.cols, i % self.cols);
                out[c] = u[r];
            }
            Mask::Completion { entries } => {
                let (r, c) = entries[i];
                out[c] = u[r];
            }
            Mask::GaussianSensing { masks } => out = masks[i].tr_mul(u),
            Mask::RankOne { left, right } => out = &right[i] * left[i].dot(u),
            Mask::TemporalAggregate { spans } => {
                let s = spans[i];
                out[s.column] = s.rows().map(|t| u[t]).sum();
            }
        }
        out
    }

    /// `A(1)`, used to turn measurements into an average cell level.
    pub fn implied_mean(&self, b: &DVector<f64>) -> f64 {
        match &self.mask {
            Mask::Complete | Mask::Completion { .. } => {
                if b.is_empty() {
                    0.0
                } else {
                    b.mean()
                }
            }
            Mask::TemporalAggregate { spans } => {
                let cells: usize = spans.iter().map(|s| s.len).sum();
                if cells == 0 {
                    0.0
                } else {
                    b.sum() / cells as f64
                }
            }
            _ => {
                let ones = DMatrix::from_element(self.rows, self.cols, 1.0);
                let a1 = self.apply(&ones).expect("shape matches by construction");
                let denom = a1.norm_squared();
                if denom == 0.0 {
                    0.0
                } else {
                    a1.dot(b) / denom
                }
            }
        }
    }

    /// `<A_i, A_j>` for all pairs: the Gram matrix of the flattened operator.
    pub fn flattened_gram(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut g = DMatrix::zeros(n, n);
        match &self.mask {
            Mask::Complete => g.fill_with_identity(),
            Mask::Completion { .. } => g.fill_with_identity(),
            Mask::GaussianSensing { masks } => {
                for i in 0..n {
                    for j in 0..=i {
                        let v = masks[i].dot(&masks[j]);
                        g[(i, j)] = v;
                        g[(j, i)] = v;
                    }
                }
            }
            Mask::RankOne { left, right } => {
                for i in 0..n {
                    for j in 0..=i {
                        let v = left[i].dot(&left[j]) * right[i].dot(&right[j]);
                        g[(i, j)] = v;
                        g[(j, i)] = v;
                    }
                }
            }
            Mask::TemporalAggregate { spans } => {
                // disjoint spans: diagonal with the span lengths
                for (i, s) in spans.iter().enumerate() {
                    g[(i, i)] = s.len as f64;
                }
            }
        }
        g
    }

    /// Cached pseudo-inverse of the flattened Gram matrix, so that
    /// `A^+ r = A^*(G^+ r)`.
    pub(crate) fn gram_pinv(&self) -> &DMatrix<f64> {
        self.gram_pinv
            .get_or_init(|| crate::linalg::symmetric_pinv(&self.flattened_gram(), 1e-12))
    }
}

/// Measurement values `b` produced by (or destined for) an operator.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementVector {
    values: DVector<f64>,
}

impl MeasurementVector {
    pub fn new(op: &MeasurementOperator, values: DVector<f64>) -> Result<Self> {
        check_len("measurement vector", op.len(), values.len())?;
        Ok(Self { values })
    }

    /// Unchecked constructor; lengths are validated when paired with an operator.
    pub fn from_values(values: DVector<f64>) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn into_values(self) -> DVector<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn m22() -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0])
    }

    #[test]
    fn complete_apply_is_row_major() {
        let op = MeasurementOperator::complete(2, 2);
        assert_eq!(op.apply(&m22()).unwrap().as_slice(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn aggregate_sums_covered_periods() {
        let op = MeasurementOperator::temporal_aggregate(
            4,
            1,
            vec![Span {
                column: 0,
                start: 0,
                len: 3,
            }],
        )
        .unwrap();
        let col = DMatrix::from_column_slice(4, 1, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(op.apply(&col).unwrap()[0], 6.0);
    }

    #[test]
    fn rank_one_apply_matches_outer_product() {
        let a = DVector::from_vec(vec![1.0, 1.0]);
        let b = DVector::from_vec(vec![1.0, -1.0]);
        let outer = &a * b.transpose();
        let oracle = m22().dot(&outer);
        let op = MeasurementOperator::rank_one(2, 2, vec![a], vec![b]).unwrap();
        let v = op.apply(&m22()).unwrap()[0];
        assert_eq!(oracle, -2.0);
        assert_eq!(v, oracle);
    }

    #[test]
    fn completion_adjoint_places_value() {
        let op = MeasurementOperator::completion(2, 2, vec![(0, 1)]).unwrap();
        let a = op.adjoint(&DVector::from_vec(vec![5.0])).unwrap();
        assert_eq!(a, DMatrix::from_row_slice(2, 2, &[0.0, 5.0, 0.0, 0.0]));
    }

    #[test]
    fn adjoint_of_zero_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let op = random_gaussian_sensing(3, 4, 5, &mut rng);
        assert_eq!(op.adjoint(&DVector::zeros(5)).unwrap(), DMatrix::zeros(3, 4));
    }

    #[test]
    fn gaussian_adjoint_identity_against_explicit_masks() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let op = random_gaussian_sensing(3, 4, 3, &mut rng);
        let Mask::GaussianSensing { masks } = op.mask() else {
            unreachable!()
        };
        let m = DMatrix::from_fn(3, 4, |i, j| (i as f64 + 1.0) * 0.7 - j as f64 * 0.3);
        let b = DVector::from_vec(vec![0.5, -1.25, 2.0]);
        // brute force: <A(M), b> = sum_i b_i sum_{r,c} A_i[r,c] M[r,c]
        let mut lhs = 0.0;
        for (k, a) in masks.iter().enumerate() {
            let mut s = 0.0;
            for r in 0..3 {
                for c in 0..4 {
                    s += a[(r, c)] * m[(r, c)];
                }
            }
            lhs += s * b[k];
        }
        let rhs = m.dot(&op.adjoint(&b).unwrap());
        assert!((lhs - rhs).abs() < 1e-12);
        assert!((op.apply(&m).unwrap().dot(&b) - lhs).abs() < 1e-12);
    }

    #[test]
    fn complete_adjoint_inverts_apply() {
        let op = MeasurementOperator::complete(3, 2);
        let m = DMatrix::from_fn(3, 2, |i, j| (i * 2 + j) as f64 - 1.5);
        assert_eq!(op.adjoint(&op.apply(&m).unwrap()).unwrap(), m);
    }

    #[test]
    fn shape_errors() {
        let op = MeasurementOperator::complete(2, 2);
        assert!(matches!(
            op.apply(&DMatrix::zeros(3, 2)),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            op.adjoint(&DVector::zeros(3)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn invariants_rejected() {
        assert!(MeasurementOperator::completion(2, 2, vec![(0, 0), (0, 0)]).is_err());
        assert!(MeasurementOperator::completion(2, 2, vec![(2, 0)]).is_err());
        let overlapping = vec![
            Span {
                column: 0,
                start: 0,
                len: 2,
            },
            Span {
                column: 0,
                start: 1,
                len: 2,
            },
        ];
        assert!(MeasurementOperator::temporal_aggregate(4, 1, overlapping).is_err());
        let too_long = vec![Span {
            column: 0,
            start: 2,
            len: 3,
        }];
        assert!(MeasurementOperator::temporal_aggregate(4, 1, too_long).is_err());
    }

    #[test]
    fn rank_one_stores_vectors_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let op = random_rank_one(7, 9, 4, &mut rng);
        let Mask::RankOne { left, right } = op.mask() else {
            unreachable!()
        };
        assert_eq!(left.len(), 4);
        assert!(left.iter().all(|a| a.len() == 7));
        assert!(right.iter().all(|b| b.len() == 9));
    }

    #[test]
    fn mask_products_agree_with_apply_rank_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let u = DVector::from_vec(vec![0.3, -1.0, 2.0]);
        let v = DVector::from_vec(vec![1.5, 0.25, -0.5, 1.0]);
        let ops = vec![
            MeasurementOperator::complete(3, 4),
            random_completion(3, 4, 0.5, 2).unwrap(),
            random_gaussian_sensing(3, 4, 5, &mut rng),
            random_rank_one(3, 4, 5, &mut rng),
            make_random_aggregates(3, 4, 0.5, 4).unwrap(),
        ];
        for op in ops {
            let direct = op.apply_rank_one(&u, &v).unwrap();
            let dense = op.apply(&(&u * v.transpose())).unwrap();
            assert!((&direct - &dense).norm() < 1e-12, "{}", op.kind());
            for i in 0..op.len() {
                let via_mask = op.mask_times(i, &v).dot(&u);
                let via_t = op.mask_transpose_times(i, &u).dot(&v);
                assert!((via_mask - dense[i]).abs() < 1e-12);
                assert!((via_t - dense[i]).abs() < 1e-12);
            }
        }
    }
}
