//! Text formats for masks and measurement vectors.
//!
//! Mask files are line oriented:
//!
//! ```text
//! halsx-mask 1
//! kind temporal_aggregate
//! shape 6 2
//! span 0 0 3
//! span 0 3 3
//! ```
//!
//! with one record per measurement: `entry i j` (completion), `span column
//! start len` (temporal aggregate), `mask v...` (dense sensing mask, row-major),
//! `pair a... | b...` (rank one). Complete masks carry no records.

use std::io::{BufRead, BufReader, Read, Write};

use nalgebra::{DMatrix, DVector};

use super::{Mask, MaskKind, MeasurementOperator, MeasurementVector, Span};
use crate::error::{Error, Result};

const MAGIC: &str = "halsx-mask 1";

pub fn write_mask<W: Write>(op: &MeasurementOperator, mut out: W) -> Result<()> {
    writeln!(out, "{MAGIC}")?;
    writeln!(out, "kind {}", op.kind())?;
    writeln!(out, "shape {} {}", op.rows(), op.cols())?;
    match op.mask() {
        Mask::Complete => {}
        Mask::Completion { entries } => {
            for (i, j) in entries {
                writeln!(out, "entry {i} {j}")?;
            }
        }
        Mask::TemporalAggregate { spans } => {
            for s in spans {
                writeln!(out, "span {} {} {}", s.column, s.start, s.len)?;
            }
        }
        Mask::GaussianSensing { masks } => {
            for m in masks {
                write!(out, "mask")?;
                for i in 0..m.nrows() {
                    for j in 0..m.ncols() {
                        write!(out, " {}", m[(i, j)])?;
                    }
                }
                writeln!(out)?;
            }
        }
        Mask::RankOne { left, right } => {
            for (a, b) in left.iter().zip(right) {
                write!(out, "pair")?;
                for v in a.iter() {
                    write!(out, " {v}")?;
                }
                write!(out, " |")?;
                for v in b.iter() {
                    write!(out, " {v}")?;
                }
                writeln!(out)?;
            }
        }
    }
    Ok(())
}

fn parse_usize(tok: Option<&str>, line: usize) -> Result<usize> {
    tok.ok_or_else(|| Error::Parse(format!("line {line}: missing integer field")))?
        .parse()
        .map_err(|e| Error::Parse(format!("line {line}: {e}")))
}

fn parse_floats<'a>(toks: impl Iterator<Item = &'a str>, line: usize) -> Result<Vec<f64>> {
    toks.map(|t| {
        t.parse::<f64>()
            .map_err(|e| Error::Parse(format!("line {line}: {e}")))
    })
    .collect()
}

pub fn read_mask<R: Read>(input: R) -> Result<MeasurementOperator> {
    let reader = BufReader::new(input);
    let mut lines = reader
        .lines()
        .enumerate()
        .map(|(n, l)| l.map(|l| (n + 1, l)))
        .filter(|r| match r {
            Ok((_, l)) => !l.trim().is_empty() && !l.trim_start().starts_with('#'),
            Err(_) => true,
        });

    let mut header = |what: &str| -> Result<(usize, String)> {
        lines
            .next()
            .transpose()?
            .ok_or_else(|| Error::Parse(format!("mask file ends before {what}")))
    };
    let (n, magic) = header("header")?;
    if magic.trim() != MAGIC {
        return Err(Error::Parse(format!("line {n}: expected `{MAGIC}`")));
    }
    let (n, kind_line) = header("kind")?;
    let kind: MaskKind = kind_line
        .trim()
        .strip_prefix("kind ")
        .ok_or_else(|| Error::Parse(format!("line {n}: expected `kind <name>`")))?
        .trim()
        .parse()?;
    let (n, shape_line) = header("shape")?;
    let mut toks = shape_line.split_whitespace();
    if toks.next() != Some("shape") {
        return Err(Error::Parse(format!("line {n}: expected `shape <rows> <cols>`")));
    }
    let rows = parse_usize(toks.next(), n)?;
    let cols = parse_usize(toks.next(), n)?;

    let mut entries = Vec::new();
    let mut spans = Vec::new();
    let mut masks = Vec::new();
    let mut left = Vec::new();
    let mut right = Vec::new();
    for record in lines {
        let (n, line) = record?;
        let mut toks = line.split_whitespace();
        let tag = toks.next().unwrap_or_default();
        match (kind, tag) {
            (MaskKind::Completion, "entry") => {
                entries.push((parse_usize(toks.next(), n)?, parse_usize(toks.next(), n)?));
            }
            (MaskKind::TemporalAggregate, "span") => spans.push(Span {
                column: parse_usize(toks.next(), n)?,
                start: parse_usize(toks.next(), n)?,
                len: parse_usize(toks.next(), n)?,
            }),
            (MaskKind::GaussianSensing, "mask") => {
                let vals = parse_floats(toks, n)?;
                if vals.len() != rows * cols {
                    return Err(Error::Parse(format!(
                        "line {n}: mask has {} values, expected {}",
                        vals.len(),
                        rows * cols
                    )));
                }
                masks.push(DMatrix::from_row_slice(rows, cols, &vals));
            }
            (MaskKind::RankOne, "pair") => {
                let rest: Vec<&str> = toks.collect();
                let bar = rest
                    .iter()
                    .position(|&t| t == "|")
                    .ok_or_else(|| Error::Parse(format!("line {n}: missing `|` separator")))?;
                let a = parse_floats(rest[..bar].iter().copied(), n)?;
                let b = parse_floats(rest[bar + 1..].iter().copied(), n)?;
                left.push(DVector::from_vec(a));
                right.push(DVector::from_vec(b));
            }
            _ => {
                return Err(Error::Parse(format!(
                    "line {n}: unexpected record `{tag}` for {kind} mask"
                )))
            }
        }
    }
    match kind {
        MaskKind::Complete => Ok(MeasurementOperator::complete(rows, cols)),
        MaskKind::Completion => MeasurementOperator::completion(rows, cols, entries),
        MaskKind::TemporalAggregate => MeasurementOperator::temporal_aggregate(rows, cols, spans),
        MaskKind::GaussianSensing => MeasurementOperator::gaussian_sensing(rows, cols, masks),
        MaskKind::RankOne => MeasurementOperator::rank_one(rows, cols, left, right),
    }
}

/// CSV with header `index,value`.
pub fn write_measurements<W: Write>(b: &MeasurementVector, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["index", "value"])?;
    for (i, v) in b.values().iter().enumerate() {
        w.write_record([i.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_measurements<R: Read>(input: R) -> Result<MeasurementVector> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers()?.clone();
    if headers.len() != 2 || &headers[0] != "index" || &headers[1] != "value" {
        return Err(Error::Parse("measurement CSV must have header `index,value`".into()));
    }
    let mut values = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        let idx: usize = rec[0]
            .trim()
            .parse()
            .map_err(|e| Error::Parse(format!("row {row}: {e}")))?;
        if idx != row {
            return Err(Error::Parse(format!(
                "row {row}: measurement index {idx} out of order"
            )));
        }
        let v: f64 = rec[1]
            .trim()
            .parse()
            .map_err(|e| Error::Parse(format!("row {row}: {e}")))?;
        values.push(v);
    }
    Ok(MeasurementVector::from_values(DVector::from_vec(values)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{make_random_aggregates, random_completion, random_rank_one};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn round_trip(op: &MeasurementOperator) -> MeasurementOperator {
        let mut buf = Vec::new();
        write_mask(op, &mut buf).unwrap();
        read_mask(buf.as_slice()).unwrap()
    }

    #[test]
    fn masks_round_trip_through_text() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ops = vec![
            MeasurementOperator::complete(3, 2),
            random_completion(4, 5, 0.4, 1).unwrap(),
            make_random_aggregates(6, 3, 0.5, 9).unwrap(),
            random_rank_one(3, 4, 2, &mut rng),
            crate::operators::random_gaussian_sensing(2, 3, 2, &mut rng),
        ];
        let m = DMatrix::from_fn(6, 5, |i, j| (i as f64 - 2.0) * 0.37 + j as f64);
        for op in ops {
            let back = round_trip(&op);
            assert_eq!(back.mask(), op.mask());
            let sub = m.view((0, 0), op.shape()).into_owned();
            assert_eq!(back.apply(&sub).unwrap(), op.apply(&sub).unwrap());
        }
    }

    #[test]
    fn rejects_foreign_records() {
        let text = "halsx-mask 1\nkind completion\nshape 2 2\nspan 0 0 1\n";
        assert!(matches!(read_mask(text.as_bytes()), Err(Error::Parse(_))));
        assert!(read_mask("nonsense\n".as_bytes()).is_err());
    }

    #[test]
    fn measurement_csv_round_trip() {
        let b = MeasurementVector::from_values(DVector::from_vec(vec![0.1, -2.5e-17, 3.0]));
        let mut buf = Vec::new();
        write_measurements(&b, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("index,value\n"));
        assert_eq!(read_measurements(buf.as_slice()).unwrap(), b);
    }
}
