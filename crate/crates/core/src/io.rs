//! Dense matrix CSV: a first record `rows,cols`, then one record per row.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub fn write_matrix<W: Write>(m: &DMatrix<f64>, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(out);
    w.write_record([m.nrows().to_string(), m.ncols().to_string()])?;
    for row in m.row_iter() {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix<R: Read>(input: R) -> Result<DMatrix<f64>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut records = r.records();
    let header = records
        .next()
        .ok_or_else(|| Error::Parse("empty matrix file".into()))??;
    let dim = |k: usize| -> Result<usize> {
        header
            .get(k)
            .ok_or_else(|| Error::Parse("matrix header must be `rows,cols`".into()))?
            .parse()
            .map_err(|e| Error::Parse(format!("matrix header: {e}")))
    };
    if header.len() != 2 {
        return Err(Error::Parse("matrix header must be `rows,cols`".into()));
    }
    let (rows, cols) = (dim(0)?, dim(1)?);
    let mut values = Vec::with_capacity(rows * cols);
    let mut seen = 0;
    for (i, rec) in records.enumerate() {
        let rec = rec?;
        if rec.len() != cols {
            return Err(Error::Parse(format!(
                "matrix row {i} has {} values, expected {cols}",
                rec.len()
            )));
        }
        for field in rec.iter() {
            values.push(
                field
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("matrix row {i}: {e}")))?,
            );
        }
        seen += 1;
    }
    if seen != rows {
        return Err(Error::Parse(format!("matrix has {seen} rows, header says {rows}")));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &values))
}

pub fn save_matrix(m: &DMatrix<f64>, path: &Path) -> Result<()> {
    write_matrix(m, File::create(path)?)
}

pub fn load_matrix(path: &Path) -> Result<DMatrix<f64>> {
    read_matrix(File::open(path)?)
}
