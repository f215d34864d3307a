//! CSV ingestion and emission. Files are comma separated with a header row;
//! numbers are written in shortest round-trip form (exponent notation for very
//! large or small magnitudes) so they re-parse exactly.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{CliError, Result};

/// A numeric table read from CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub path: PathBuf,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h.eq_ignore_ascii_case(name))
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    /// Column `name`, or a validation error naming the file.
    pub fn require(&self, name: &str) -> Result<Vec<f64>> {
        match self.column_index(name) {
            Some(j) => Ok(self.column(j)),
            None => Err(CliError::Validation(format!(
                "{}: missing column `{name}` (found {:?})",
                self.path.display(),
                self.headers
            ))),
        }
    }
}

/// Read a CSV of finite reals. Empty files, ragged rows and unparsable or
/// non-finite cells are errors carrying the offending line number.
pub fn read_table(path: &Path) -> Result<Table> {
    let t = read_table_allow_empty(path)?;
    if t.rows.is_empty() {
        return Err(CliError::Input { path: path.to_path_buf(), line: 1, detail: "no data rows".into() });
    }
    Ok(t)
}

/// As [`read_table`], but a header with no data rows is accepted.
pub fn read_table_allow_empty(path: &Path) -> Result<Table> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let input_err = |line: u64, detail: String| CliError::Input { path: path.to_path_buf(), line, detail };

    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| input_err(1, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if headers.is_empty() || headers.iter().all(String::is_empty) {
        return Err(input_err(1, "empty file: a header row is required".into()));
    }

    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            input_err(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.iter().all(str::is_empty) {
            continue;
        }
        let row = rec
            .iter()
            .enumerate()
            .map(|(j, cell)| match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(input_err(line, format!("column `{}`: `{cell}` is not a finite number", headers[j]))),
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(Table { path: path.to_path_buf(), headers, rows })
}

/// The single column of a one-column file.
pub fn read_single_column(path: &Path) -> Result<Vec<f64>> {
    let t = read_table(path)?;
    if t.headers.len() != 1 {
        return Err(CliError::Validation(format!(
            "{}: expected a single column, found {}",
            path.display(),
            t.headers.len()
        )));
    }
    Ok(t.column(0))
}

/// One CSV cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v)
    }
}

impl From<u32> for Cell {
    fn from(v: u32) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(v) => format!("{v:?}"),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }
}

/// Write `rows` under `headers` to `path`.
pub fn write_csv(path: &Path, headers: &[&str], rows: &[Vec<Cell>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::io(path, e.into()))?;
    w.write_record(headers).map_err(|e| CliError::io(path, e.into()))?;
    for r in rows {
        w.write_record(r.iter().map(Cell::render)).map_err(|e| CliError::io(path, e.into()))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}
