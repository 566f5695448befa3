use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use serde::Serialize;

use super::{rrmse, Blocks, ExperimentSpec, Method, MethodOutput, SamplingScheme};
use crate::error::Result;

/// One line of the report; prediction errors are absent for methods that
/// cannot predict the block.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub method: String,
    pub mask: String,
    pub rate: f64,
    pub rank: usize,
    pub recovery_rrmse: f64,
    pub row_rrmse: Option<f64>,
    pub col_rrmse: Option<f64>,
    pub rowcol_rrmse: Option<f64>,
    pub seconds: f64,
    pub iters: usize,
    pub error: Option<String>,
}

fn block_error(estimate: &Option<nalgebra::DMatrix<f64>>, truth: &nalgebra::DMatrix<f64>) -> Result<Option<f64>> {
    match estimate {
        Some(m) if truth.len() > 0 => Ok(Some(rrmse(m, truth)?)),
        _ => Ok(None),
    }
}

impl ReportRow {
    pub fn score(
        method: Method,
        scheme: SamplingScheme,
        rate: f64,
        rank: usize,
        out: &MethodOutput,
        blocks: &Blocks,
    ) -> Result<Self> {
        Ok(Self {
            method: method.name().into(),
            mask: scheme.name().into(),
            rate,
            rank,
            recovery_rrmse: rrmse(&out.recovery, &blocks.train)?,
            row_rrmse: block_error(&out.rows, &blocks.rows)?,
            col_rrmse: block_error(&out.cols, &blocks.cols)?,
            rowcol_rrmse: block_error(&out.both, &blocks.both)?,
            seconds: out.seconds,
            iters: out.iters,
            error: None,
        })
    }

    pub fn failed(method: Method, scheme: SamplingScheme, rate: f64, error: String) -> Self {
        Self {
            method: method.name().into(),
            mask: scheme.name().into(),
            rate,
            rank: 0,
            recovery_rrmse: f64::NAN,
            row_rrmse: None,
            col_rrmse: None,
            rowcol_rrmse: None,
            seconds: 0.0,
            iters: 0,
            error: Some(error),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub spec: ExperimentSpec,
    pub rows: Vec<ReportRow>,
}

/// CSV with header
/// `method,mask,rate,rank,recovery_rrmse,row_rrmse,col_rrmse,rowcol_rrmse,seconds,iters,error`.
pub fn write_report<W: Write>(rows: &[ReportRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// Line chart of one error column against the sampling rate, one line per
/// method. `metric` is one of `recovery`, `row`, `col`, `rowcol`.
pub fn render_svg(rows: &[ReportRow], metric: &str) -> String {
    let value = |r: &ReportRow| match metric {
        "row" => r.row_rrmse,
        "col" => r.col_rrmse,
        "rowcol" => r.rowcol_rrmse,
        _ => Some(r.recovery_rrmse),
    };
    let mut series: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for r in rows {
        if let Some(v) = value(r).filter(|v| v.is_finite()) {
            series.entry(&r.method).or_default().push((r.rate, v));
        }
    }
    let points: Vec<(f64, f64)> = series.values().flatten().copied().collect();
    let (w, h, pad) = (640.0, 400.0, 50.0);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="20" text-anchor="middle">{metric} RRMSE</text>"#, w / 2.0);
    if points.is_empty() {
        svg.push_str("</svg>\n");
        return svg;
    }
    let (xmin, xmax) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)));
    let ymax = points.iter().fold(0.0_f64, |a, p| a.max(p.1)) * 1.05;
    let xspan = if xmax > xmin { xmax - xmin } else { 1.0 };
    let yspan = if ymax > 0.0 { ymax } else { 1.0 };
    let sx = |x: f64| pad + (x - xmin) / xspan * (w - 2.0 * pad - 120.0);
    let sy = |y: f64| h - pad - y / yspan * (h - 2.0 * pad);
    let _ = writeln!(
        svg,
        r#"<line x1="{pad}" y1="{0}" x2="{1}" y2="{0}" stroke="black"/><line x1="{pad}" y1="{pad}" x2="{pad}" y2="{0}" stroke="black"/>"#,
        h - pad,
        w - pad - 120.0
    );
    for t in 0..=4 {
        let y = yspan * t as f64 / 4.0;
        let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="end">{y:.3}</text>"#, pad - 4.0, sy(y) + 4.0);
    }
    let mut rates: Vec<f64> = points.iter().map(|p| p.0).collect();
    rates.sort_by(|a, b| a.total_cmp(b));
    rates.dedup();
    for x in rates {
        let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">{x}</text>"#, sx(x), h - pad + 16.0);
    }
    for (i, (name, mut pts)) in series.into_iter().enumerate() {
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let color = COLORS[i % COLORS.len()];
        let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y))).collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            path.join(" ")
        );
        for &(x, y) in &pts {
            let _ = writeln!(svg, r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{color}"/>"#, sx(x), sy(y));
        }
        let ly = pad + 16.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{ly}" fill="{color}">{name}</text>"#,
            w - pad - 110.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}
