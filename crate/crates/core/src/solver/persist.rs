//! On-disk layout of a fitted model:
//! `row_factors.csv`, `col_factors.csv`, optional `slack.csv`,
//! `links.json` and `trace.csv`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{FactorModel, StopReason, Trace, TraceEntry};
use crate::error::{Error, Result};
use crate::io::{load_matrix, save_matrix};
use crate::linkmodels::LinkModel;

#[derive(Serialize, Deserialize)]
struct LinkFile {
    stop: StopReason,
    row_side_information: bool,
    col_side_information: bool,
    row_links: Vec<Option<LinkModel>>,
    col_links: Vec<Option<LinkModel>>,
    #[serde(default)]
    block_objectives: Vec<f64>,
}

impl FactorModel {
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        save_matrix(&self.row_factors, &dir.join("row_factors.csv"))?;
        save_matrix(&self.col_factors, &dir.join("col_factors.csv"))?;
        if let Some(v) = &self.slack {
            save_matrix(v, &dir.join("slack.csv"))?;
        }
        let links = LinkFile {
            stop: self.stop,
            row_side_information: self.row_side_information,
            col_side_information: self.col_side_information,
            row_links: self.row_links.clone(),
            col_links: self.col_links.clone(),
            block_objectives: self.trace.block_objectives.clone(),
        };
        fs::write(dir.join("links.json"), serde_json::to_string_pretty(&links)?)?;
        let mut w = csv::Writer::from_path(dir.join("trace.csv"))?;
        for e in &self.trace.entries {
            w.serialize(e)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let row_factors = load_matrix(&dir.join("row_factors.csv"))?;
        let col_factors = load_matrix(&dir.join("col_factors.csv"))?;
        let slack_path = dir.join("slack.csv");
        let slack = if slack_path.exists() {
            Some(load_matrix(&slack_path)?)
        } else {
            None
        };
        let links: LinkFile = serde_json::from_str(&fs::read_to_string(dir.join("links.json"))?)?;
        let k = row_factors.ncols();
        if col_factors.ncols() != k || links.row_links.len() != k || links.col_links.len() != k {
            return Err(Error::Parse(format!(
                "inconsistent model: rank {k}, {} column factors, {} row links, {} column links",
                col_factors.ncols(),
                links.row_links.len(),
                links.col_links.len()
            )));
        }
        let mut reader = csv::Reader::from_path(dir.join("trace.csv"))?;
        let entries = reader.deserialize::<TraceEntry>().collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(FactorModel {
            row_factors,
            col_factors,
            row_links: links.row_links,
            col_links: links.col_links,
            row_side_information: links.row_side_information,
            col_side_information: links.col_side_information,
            slack,
            trace: Trace {
                entries,
                block_objectives: links.block_objectives,
            },
            stop: links.stop,
        })
    }
}
