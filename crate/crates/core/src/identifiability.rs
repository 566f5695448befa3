//! Checks for the factor-matrix conditions that make a nonnegative
//! factorization unique, and a constructor for row features that admit a
//! factor matrix satisfying them.
//!
//! All positivity tests are relative: an entry is zero iff it is at most
//! `tol` times the largest entry of its column.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::numerical_rank;

pub const DEFAULT_TOL: f64 = 1e-9;
/// Largest column count searched exhaustively.
pub const EXHAUSTIVE_LIMIT: usize = 8;
pub const DEFAULT_CAP: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Holds,
    Fails,
    /// The heuristic search found no witness; the condition may still hold.
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparabilityReport {
    pub separable: bool,
    /// For each column, a row that is positive there and zero elsewhere.
    pub witness_rows: Vec<Option<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryReport {
    pub verdict: Verdict,
    /// Every ordered pair `(i, j)` has a row with `m_i = 0 < m_j`.
    pub boundary_close: bool,
    /// Ordered pairs `(i, j)` lacking such a row.
    pub missing_pairs: Vec<(usize, usize)>,
    /// Column order for the nested-facet condition, when one was found.
    pub permutation: Option<Vec<usize>>,
    /// For position `p` of the permutation (all but the last), `n - p - 1`
    /// rows that vanish on `permutation[p]` and are independent on the
    /// columns after it.
    pub witness_rows: Vec<Vec<usize>>,
    pub exhaustive: bool,
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentifiabilityReport {
    pub rows: usize,
    pub cols: usize,
    pub tol: f64,
    pub separability: SeparabilityReport,
    pub strong_boundary_closeness: BoundaryReport,
}

impl IdentifiabilityReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Runs both checks.
pub fn check(m: &DMatrix<f64>, tol: f64, cap: usize) -> Result<IdentifiabilityReport> {
    Ok(IdentifiabilityReport {
        rows: m.nrows(),
        cols: m.ncols(),
        tol,
        separability: is_separable(m, tol)?,
        strong_boundary_closeness: is_strongly_boundary_close(m, tol, cap)?,
    })
}

fn check_input(m: &DMatrix<f64>, tol: f64) -> Result<()> {
    if !(tol >= 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be nonnegative, got {tol}")));
    }
    if m.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidArgument("matrix must be finite and nonnegative".into()));
    }
    Ok(())
}

/// Column-max normalized copy and its zero pattern.
fn normalize(m: &DMatrix<f64>, tol: f64) -> (DMatrix<f64>, DMatrix<bool>) {
    let mut scaled = m.clone();
    for mut col in scaled.column_iter_mut() {
        let top = col.max();
        if top > 0.0 {
            col /= top;
        }
    }
    let positive = scaled.map(|v| v > tol);
    (scaled, positive)
}

pub fn is_separable(m: &DMatrix<f64>, tol: f64) -> Result<SeparabilityReport> {
    check_input(m, tol)?;
    let (_, pos) = normalize(m, tol);
    let n = m.ncols();
    let witness_rows: Vec<Option<usize>> = (0..n)
        .map(|j| (0..m.nrows()).find(|&r| (0..n).all(|s| pos[(r, s)] == (s == j))))
        .collect();
    Ok(SeparabilityReport {
        separable: m.nrows() >= n && witness_rows.iter().all(Option::is_some),
        witness_rows,
    })
}

struct Facets<'a> {
    scaled: &'a DMatrix<f64>,
    pos: &'a DMatrix<bool>,
    tol: f64,
}

impl Facets<'_> {
    /// Rows vanishing on `c` with positive mass on `tail`, restricted to
    /// `tail`, when they reach rank `|tail|`; returns independent witnesses.
    fn facet(&self, c: usize, tail: &[usize]) -> Option<Vec<usize>> {
        let candidates: Vec<usize> = (0..self.scaled.nrows())
            .filter(|&r| !self.pos[(r, c)] && tail.iter().any(|&s| self.pos[(r, s)]))
            .collect();
        if candidates.len() < tail.len() {
            return None;
        }
        let mut chosen: Vec<usize> = Vec::with_capacity(tail.len());
        for &r in &candidates {
            let mut trial = chosen.clone();
            trial.push(r);
            if numerical_rank(&self.block(&trial, tail), self.tol) == trial.len() {
                chosen = trial;
                if chosen.len() == tail.len() {
                    return Some(chosen);
                }
            }
        }
        None
    }

    fn block(&self, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), cols.len(), |a, b| self.scaled[(rows[a], cols[b])])
    }

    fn zero_count(&self, c: usize) -> usize {
        (0..self.pos.nrows()).filter(|&r| !self.pos[(r, c)]).count()
    }
}

fn members(set: u64, n: usize) -> Vec<usize> {
    (0..n).filter(|&c| set & (1 << c) != 0).collect()
}

/// Dynamic program over the set of trailing columns: `tail` is reachable
/// when its columns can fill the last `|tail|` positions.
fn exhaustive_order(f: &Facets, n: usize) -> Option<Vec<usize>> {
    let full: u64 = (1 << n) - 1;
    let mut prev: Vec<Option<usize>> = vec![None; 1 << n];
    let mut reachable = vec![false; 1 << n];
    for c in 0..n {
        reachable[1 << c] = true;
    }
    let mut sets: Vec<u64> = (1..=full).collect();
    sets.sort_by_key(|s| s.count_ones());
    for &tail in &sets {
        if !reachable[tail as usize] || tail == full {
            continue;
        }
        let cols = members(tail, n);
        for c in 0..n {
            let next = tail | (1 << c);
            if tail & (1 << c) != 0 || reachable[next as usize] {
                continue;
            }
            if f.facet(c, &cols).is_some() {
                reachable[next as usize] = true;
                prev[next as usize] = Some(c);
            }
        }
    }
    if !reachable[full as usize] {
        return None;
    }
    let mut order = Vec::with_capacity(n);
    let mut set = full;
    while set.count_ones() > 1 {
        let c = prev[set as usize].expect("reachable sets record their front column");
        order.push(c);
        set &= !(1 << c);
    }
    order.push(set.trailing_zeros() as usize);
    Some(order)
}

/// Fills positions front to back, preferring columns with the most zeros.
fn greedy_order(f: &Facets, n: usize) -> Option<Vec<usize>> {
    let mut remaining: Vec<usize> = (0..n).collect();
    remaining.sort_by_key(|&c| std::cmp::Reverse(f.zero_count(c)));
    let mut order = Vec::with_capacity(n);
    while remaining.len() > 1 {
        let pick = (0..remaining.len()).find(|&a| {
            let tail: Vec<usize> = remaining.iter().enumerate().filter(|&(b, _)| b != a).map(|(_, &c)| c).collect();
            f.facet(remaining[a], &tail).is_some()
        })?;
        order.push(remaining.remove(pick));
    }
    order.extend(remaining);
    Some(order)
}

pub fn is_strongly_boundary_close(m: &DMatrix<f64>, tol: f64, cap: usize) -> Result<BoundaryReport> {
    check_input(m, tol)?;
    let n = m.ncols();
    if n > cap {
        return Err(Error::SearchTooLarge { columns: n, cap });
    }
    let (scaled, pos) = normalize(m, tol);
    let mut missing_pairs = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j && !(0..m.nrows()).any(|r| !pos[(r, i)] && pos[(r, j)]) {
                missing_pairs.push((i, j));
            }
        }
    }
    let boundary_close = missing_pairs.is_empty();
    let facets = Facets {
        scaled: &scaled,
        pos: &pos,
        tol,
    };
    let exhaustive = n <= EXHAUSTIVE_LIMIT;
    let order = if n == 0 {
        Some(Vec::new())
    } else if exhaustive {
        exhaustive_order(&facets, n)
    } else {
        greedy_order(&facets, n)
    };
    let witness_rows: Vec<Vec<usize>> = order
        .as_ref()
        .map(|o| {
            (0..n.saturating_sub(1))
                .map(|p| facets.facet(o[p], &o[p + 1..]).expect("order was built from valid facets"))
                .collect()
        })
        .unwrap_or_default();
    let (verdict, reason) = match (&order, boundary_close) {
        (Some(_), true) => (Verdict::Holds, None),
        (_, false) => (
            Verdict::Fails,
            Some(format!("{} column pairs have no separating row", missing_pairs.len())),
        ),
        (None, true) if exhaustive => (
            Verdict::Fails,
            Some("no column order satisfies the nested facet condition".into()),
        ),
        (None, true) => (
            Verdict::Inconclusive,
            Some(format!(
                "greedy search over {n} columns found no order; exhaustive search is limited to {EXHAUSTIVE_LIMIT}"
            )),
        ),
    };
    Ok(BoundaryReport {
        verdict,
        boundary_close,
        missing_pairs,
        permutation: order,
        witness_rows,
        exhaustive,
        reason,
    })
}

/// Row features `X`, coefficients `B` and the factor matrix `F = X B`.
#[derive(Debug, Clone, PartialEq)]
pub struct CertifiedFeatures {
    pub x: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub f: DMatrix<f64>,
}

/// Feature dimension `k (k - 1) / 2 + 1` used for rank `k`.
pub fn feature_dim(k: usize) -> usize {
    k * (k - 1) / 2 + 1
}

/// First feature index of coefficient column `j` (0-based) and its length.
fn coefficient_block(j: usize) -> (usize, usize) {
    if j == 0 {
        (0, 1)
    } else {
        (j * (j - 1) / 2 + 1, j)
    }
}

/// `B`: column 0 selects feature 0, column `j >= 1` sums the `j` features
/// starting at `j (j - 1) / 2 + 1`.
pub fn coefficient_pattern(k: usize) -> DMatrix<f64> {
    let d = feature_dim(k);
    let mut b = DMatrix::zeros(d, k);
    for j in 0..k {
        let (start, len) = coefficient_block(j);
        for r in start..start + len {
            b[(r, j)] = 1.0;
        }
    }
    b
}

fn positive_entry(rng: &mut ChaCha8Rng) -> f64 {
    rng.random_range(1..=20) as f64
}

/// The nested prefix: a first row zero on feature 0 and positive elsewhere,
/// then for `i = 2..=k` a group of `i - 1` rows positive on the first
/// `(i - 1)(i - 2)/2 + 1` features.
pub fn nested_prefix(k: usize, seed: u64) -> Result<DMatrix<f64>> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("rank must be at least 2, got {k}")));
    }
    let d = feature_dim(k);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = DMatrix::zeros(d, d);
    for c in 1..d {
        x[(0, c)] = positive_entry(&mut rng);
    }
    let mut row = 1;
    for i in 2..=k {
        let width = (i - 1) * (i - 2) / 2 + 1;
        for _ in 0..i - 1 {
            for c in 0..width {
                x[(row, c)] = positive_entry(&mut rng);
            }
            row += 1;
        }
    }
    Ok(x)
}

/// Appends, for each coefficient column, as many rows as its block length
/// that are positive only on that block's features. The resulting `X` has
/// full column rank and `X B` has rows supported on a single column, which
/// makes every column pair separable.
pub fn certify_prefix(prefix: &DMatrix<f64>, k: usize, seed: u64) -> Result<CertifiedFeatures> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("rank must be at least 2, got {k}")));
    }
    let d = feature_dim(k);
    crate::error::check_shape("feature prefix", (prefix.nrows(), d), prefix.shape())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut x = DMatrix::zeros(prefix.nrows() + d, d);
    x.rows_mut(0, prefix.nrows()).copy_from(prefix);
    let mut row = prefix.nrows();
    for j in 0..k {
        let (start, len) = coefficient_block(j);
        loop {
            let block = DMatrix::from_fn(len, len, |_, _| positive_entry(&mut rng));
            if block.determinant().abs() > 0.5 {
                x.view_mut((row, start), (len, len)).copy_from(&block);
                break;
            }
        }
        row += len;
    }
    let b = coefficient_pattern(k);
    let f = &x * &b;
    Ok(CertifiedFeatures { x, b, f })
}

/// Random nested prefix followed by the certifying rows.
pub fn construct_certified_features(k: usize, seed: u64) -> Result<CertifiedFeatures> {
    certify_prefix(&nested_prefix(k, seed)?, k, seed)
}

/// The seven displayed rows of the rank-4 example (features, coefficients
/// and factor matrix), without continuation rows.
pub fn rank4_display() -> CertifiedFeatures {
    let x = DMatrix::from_row_slice(
        7,
        7,
        &[
            0.0, 5.0, 14.0, 7.0, 9.0, 15.0, 13.0, //
            10.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, //
            4.0, 5.0, 0.0, 0.0, 0.0, 0.0, 0.0, //
            12.0, 4.0, 0.0, 0.0, 0.0, 0.0, 0.0, //
            10.0, 7.0, 10.0, 7.0, 0.0, 0.0, 0.0, //
            13.0, 10.0, 12.0, 9.0, 0.0, 0.0, 0.0, //
            12.0, 10.0, 16.0, 8.0, 0.0, 0.0, 0.0,
        ],
    );
    let b = coefficient_pattern(4);
    let f = DMatrix::from_row_slice(
        7,
        4,
        &[
            0.0, 5.0, 21.0, 37.0, //
            10.0, 0.0, 0.0, 0.0, //
            4.0, 5.0, 0.0, 0.0, //
            12.0, 4.0, 0.0, 0.0, //
            10.0, 7.0, 17.0, 0.0, //
            13.0, 10.0, 21.0, 0.0, //
            12.0, 10.0, 24.0, 0.0,
        ],
    );
    CertifiedFeatures { x, b, f }
}
