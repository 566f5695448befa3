use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{MeasurementOperator, Span};
use crate::error::{Error, Result};

/// Each column is cut into consecutive spans of `period` rows; the last span
/// of a column may be shorter.
pub fn make_periodic_aggregates(rows: usize, cols: usize, period: usize) -> Result<MeasurementOperator> {
    if period == 0 || period > rows {
        return Err(Error::InvalidArgument(format!(
            "period must be in 1..={rows}, got {period}"
        )));
    }
    let mut spans = Vec::with_capacity(cols * rows.div_ceil(period));
    for column in 0..cols {
        let mut start = 0;
        while start < rows {
            let len = period.min(rows - start);
            spans.push(Span { column, start, len });
            start += len;
        }
    }
    MeasurementOperator::temporal_aggregate(rows, cols, spans)
}

/// Random span boundaries: every interior row boundary of every column is a
/// breakpoint independently with probability `(rate * rows - 1) / (rows - 1)`,
/// so a column holds `rate * rows` spans on average and every cell is covered
/// exactly once.
pub fn make_random_aggregates(rows: usize, cols: usize, rate: f64, seed: u64) -> Result<MeasurementOperator> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "sampling rate must be in (0, 1], got {rate}"
        )));
    }
    if rows == 0 {
        return Err(Error::InvalidArgument("matrix has no rows".into()));
    }
    let p = if rows > 1 {
        ((rate * rows as f64 - 1.0) / (rows as f64 - 1.0)).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut spans = Vec::new();
    for column in 0..cols {
        let mut start = 0;
        for boundary in 1..rows {
            if rng.random::<f64>() < p {
                spans.push(Span {
                    column,
                    start,
                    len: boundary - start,
                });
                start = boundary;
            }
        }
        spans.push(Span {
            column,
            start,
            len: rows - start,
        });
    }
    MeasurementOperator::temporal_aggregate(rows, cols, spans)
}

/// Uniformly sampled entries, `round(rate * rows * cols)` of them (at least one).
pub fn random_completion(rows: usize, cols: usize, rate: f64, seed: u64) -> Result<MeasurementOperator> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "sampling rate must be in (0, 1], got {rate}"
        )));
    }
    let total = rows * cols;
    let count = ((rate * total as f64).round() as usize).clamp(1, total);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cells: Vec<usize> = (0..total).collect();
    cells.shuffle(&mut rng);
    let mut chosen = cells[..count].to_vec();
    chosen.sort_unstable();
    let entries = chosen.into_iter().map(|c| (c / cols, c % cols)).collect();
    MeasurementOperator::completion(rows, cols, entries)
}

/// Masks with i.i.d. standard normal entries.
pub fn random_gaussian_sensing<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    count: usize,
    rng: &mut R,
) -> MeasurementOperator {
    let masks = (0..count)
        .map(|_| DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal)))
        .collect();
    MeasurementOperator::gaussian_sensing(rows, cols, masks).expect("shapes are consistent")
}

/// Rank-one masks `a b^T` with i.i.d. standard normal vectors.
pub fn random_rank_one<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    count: usize,
    rng: &mut R,
) -> MeasurementOperator {
    let mut left = Vec::with_capacity(count);
    let mut right = Vec::with_capacity(count);
    for _ in 0..count {
        left.push(DVector::from_fn(rows, |_, _| rng.sample::<f64, _>(StandardNormal)));
        right.push(DVector::from_fn(cols, |_, _| rng.sample::<f64, _>(StandardNormal)));
    }
    MeasurementOperator::rank_one(rows, cols, left, right).expect("shapes are consistent")
}
