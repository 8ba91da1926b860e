//! Tabular report emission: CSV with RFC-4180 quoting and GitHub-flavored
//! markdown pipe tables. Numbers print with four decimals to match the
//! table style of the published results this toolkit mirrors; a raw mode
//! keeps full precision for machine consumption.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// One table cell: text or a number.
#[derive(Clone, Debug)]
pub enum Cell {
    Text(String),
    Number(f64),
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Number(v)
    }
}

/// Output format for [`emit_report`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
    /// CSV with numbers at full precision.
    CsvRaw,
}

/// A header plus rows of cells.
#[derive(Clone, Debug, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push_row(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

/// Four-decimal formatting used in report tables ("0.97083333" -> "0.9708").
pub fn fmt4(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else {
        format!("{v:.4}")
    }
}

fn render_cell(cell: &Cell, raw: bool) -> String {
    match cell {
        Cell::Text(s) => s.clone(),
        Cell::Number(v) => {
            if raw {
                format!("{v}")
            } else {
                fmt4(*v)
            }
        }
    }
}

fn csv_quote(field: &str) -> String {
    if field.contains(',') || field.contains('"') || field.contains('\n') {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

/// Render a table to a string in the requested format.
pub fn render_report(table: &Table, format: ReportFormat) -> String {
    let raw = format == ReportFormat::CsvRaw;
    match format {
        ReportFormat::Csv | ReportFormat::CsvRaw => {
            let mut out = String::new();
            let _ = writeln!(
                out,
                "{}",
                table
                    .header
                    .iter()
                    .map(|h| csv_quote(h))
                    .collect::<Vec<_>>()
                    .join(",")
            );
            for row in &table.rows {
                let line = row
                    .iter()
                    .map(|c| csv_quote(&render_cell(c, raw)))
                    .collect::<Vec<_>>()
                    .join(",");
                let _ = writeln!(out, "{line}");
            }
            out
        }
        ReportFormat::Markdown => {
            let mut out = String::new();
            let _ = writeln!(out, "| {} |", table.header.join(" | "));
            let _ = writeln!(
                out,
                "|{}|",
                table.header.iter().map(|_| " --- ").collect::<Vec<_>>().join("|")
            );
            for row in &table.rows {
                let line = row
                    .iter()
                    .map(|c| render_cell(c, false))
                    .collect::<Vec<_>>()
                    .join(" | ");
                let _ = writeln!(out, "| {line} |");
            }
            out
        }
    }
}

/// Write a table to `path` in the requested format.
pub fn emit_report(table: &Table, format: ReportFormat, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, render_report(table, format)).map_err(|e| Error::io(path, e))
}
