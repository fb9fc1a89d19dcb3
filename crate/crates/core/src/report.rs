//! CSV export for time series and tables.
//!
//! Numbers are written in plain decimal notation with nine significant
//! digits; missing values are empty fields.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::ArrayView2;

use crate::error::{Error, Result};
use crate::trainer::RunLog;

pub const SIG_DIGITS: usize = 9;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Num(f64),
    Text(String),
    Empty,
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(v: Option<T>) -> Self {
        v.map_or(Cell::Empty, Into::into)
    }
}

/// `v` in decimal notation with [`SIG_DIGITS`] significant digits.
pub fn format_num(v: f64) -> String {
    if !v.is_finite() {
        return if v.is_nan() { "nan".into() } else if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    // Round first so the exponent reflects carries like 9.9999999996 -> 10.
    let sci = format!("{:.*e}", SIG_DIGITS - 1, v);
    let exp: i32 = sci[sci.find('e').expect("exponent") + 1..].parse().expect("integer exponent");
    let decimals = (SIG_DIGITS as i32 - 1 - exp).max(0) as usize;
    let mut s = format!("{v:.decimals$}");
    if s.contains('.') {
        let trimmed = s.trim_end_matches('0').trim_end_matches('.').len();
        s.truncate(trimmed);
    }
    if s == "-0" {
        s = "0".into();
    }
    s
}

fn render(cell: &Cell) -> String {
    match cell {
        Cell::Int(i) => i.to_string(),
        Cell::Num(v) => format_num(*v),
        Cell::Text(t) => t.clone(),
        Cell::Empty => String::new(),
    }
}

/// A header plus homogeneous rows.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl CsvTable {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) -> Result<()> {
        if row.len() != self.header.len() {
            return Err(Error::Shape(format!(
                "row has {} fields, header has {}",
                row.len(),
                self.header.len()
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            let line: Vec<String> = row.iter().map(render).collect();
            let _ = writeln!(out, "{}", line.join(","));
        }
        out
    }
}

pub fn emit_csv(table: &CsvTable, path: &Path) -> Result<()> {
    std::fs::write(path, table.to_csv_string()).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// DG series in long form, one row per estimate.
pub fn dg_series(log: &RunLog) -> CsvTable {
    let mut t = CsvTable::new(&["iteration", "m1", "m2", "dg", "variant"]);
    for m in &log.monitors {
        for (name, est) in [("vanilla", m.vanilla), ("perturbed", m.perturbed)] {
            if let Some(e) = est {
                t.rows.push(vec![m.iteration.into(), e.m1.into(), e.m2.into(), e.dg.into(), name.into()]);
            }
        }
    }
    t
}

/// Per-cycle losses, with monitor columns filled at monitored cycles.
pub fn metrics_table(log: &RunLog) -> CsvTable {
    let mut t = CsvTable::new(&[
        "iteration",
        "g_loss",
        "d_loss",
        "dg_vanilla",
        "dg_perturbed",
        "kl",
        "modes_covered",
    ]);
    let mut monitors = log.monitors.iter().peekable();
    for rec in &log.iterations {
        let mon = monitors.next_if(|m| m.iteration == rec.iteration);
        t.rows.push(vec![
            rec.iteration.into(),
            rec.g_loss.into(),
            rec.d_loss.into(),
            mon.and_then(|m| m.vanilla).map(|e| e.dg).into(),
            mon.and_then(|m| m.perturbed).map(|e| e.dg).into(),
            mon.and_then(|m| m.kl).into(),
            mon.and_then(|m| m.modes_covered).into(),
        ]);
    }
    t
}

/// `x,y` rows of an n×2 sample matrix.
pub fn samples_table(points: ArrayView2<'_, f64>) -> Result<CsvTable> {
    if points.ncols() != 2 {
        return Err(Error::Shape(format!("expected n×2 samples, got {} columns", points.ncols())));
    }
    let mut t = CsvTable::new(&["x", "y"]);
    for r in points.rows() {
        t.rows.push(vec![r[0].into(), r[1].into()]);
    }
    Ok(t)
}

/// Splits CSV text into a header and string fields. Only handles the
/// unquoted output written by this module.
pub fn parse_csv(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut lines = text.lines();
    let split = |l: &str| l.split(',').map(str::to_string).collect::<Vec<_>>();
    let header = lines.next().map(split).unwrap_or_default();
    (header, lines.map(split).collect())
}
