//! Header-bearing tab-separated tables, the carrier for every tabular
//! artifact the pipeline reads or writes.
//!
//! The writer takes typed cells and emits floats at a fixed 6 decimal
//! places so that reruns produce byte-identical files. The reader keeps
//! raw text cells and parses on demand, reporting the source line number
//! on any failure.

use crate::error::{Error, Result};

/// A typed cell for table emission.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Str(String),
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::Int(v)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<u32> for Cell {
    fn from(v: u32) -> Self {
        Cell::Int(i64::from(v))
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Str(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Str(v.to_string())
    }
}

/// Render a float at 6 decimal places, normalizing negative zero.
pub fn format_float(v: f64) -> String {
    let s = format!("{v:.6}");
    if s == "-0.000000" {
        "0.000000".to_string()
    } else {
        s
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => format_float(*v),
            Cell::Str(v) => v.clone(),
        }
    }
}

/// Serialize rows under a header line. Row order is preserved as given.
pub fn write_table(columns: &[&str], rows: &[Vec<Cell>]) -> Result<String> {
    let mut out = String::new();
    out.push_str(&columns.join("\t"));
    out.push('\n');
    for (i, row) in rows.iter().enumerate() {
        if row.len() != columns.len() {
            return Err(Error::internal(format!(
                "table row {i} has {} cells, header has {} columns",
                row.len(),
                columns.len()
            )));
        }
        let rendered: Vec<String> = row.iter().map(Cell::render).collect();
        out.push_str(&rendered.join("\t"));
        out.push('\n');
    }
    Ok(out)
}

#[derive(Debug, Clone)]
struct Row {
    line: usize,
    cells: Vec<String>,
}

/// A parsed table: raw text cells plus source line numbers for diagnostics.
#[derive(Debug, Clone)]
pub struct Table {
    pub columns: Vec<String>,
    rows: Vec<Row>,
}

impl Table {
    /// Parse a tab-separated stream whose first line names the columns.
    /// Blank lines are skipped; every data line must match the header width.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.split('\n').enumerate();
        let (header_idx, header) = loop {
            match lines.next() {
                Some((i, raw)) => {
                    let trimmed = raw.trim_end_matches('\r');
                    if !trimmed.is_empty() {
                        break (i, trimmed);
                    }
                }
                None => return Err(Error::parse(1, "missing header line")),
            }
        };
        let columns: Vec<String> = header.split('\t').map(str::to_string).collect();
        if columns.iter().any(String::is_empty) {
            return Err(Error::parse(header_idx + 1, "empty column name in header"));
        }
        let mut rows = Vec::new();
        for (i, raw) in lines {
            let trimmed = raw.trim_end_matches('\r');
            if trimmed.is_empty() {
                continue;
            }
            let cells: Vec<String> = trimmed.split('\t').map(str::to_string).collect();
            if cells.len() != columns.len() {
                return Err(Error::parse(
                    i + 1,
                    format!("expected {} columns, found {}", columns.len(), cells.len()),
                ));
            }
            rows.push(Row { line: i + 1, cells });
        }
        Ok(Table { columns, rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Index of a named column.
    pub fn column(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::invalid(format!("missing column `{name}`")))
    }

    /// 1-based source line of a data row.
    pub fn line_of(&self, row: usize) -> usize {
        self.rows[row].line
    }

    pub fn raw(&self, row: usize, col: usize) -> &str {
        &self.rows[row].cells[col]
    }

    pub fn f64_at(&self, row: usize, col: usize) -> Result<f64> {
        let cell = self.raw(row, col);
        cell.trim().parse::<f64>().map_err(|_| {
            Error::parse(
                self.line_of(row),
                format!("column `{}`: expected number, found `{cell}`", self.columns[col]),
            )
        })
    }

    pub fn i64_at(&self, row: usize, col: usize) -> Result<i64> {
        let cell = self.raw(row, col);
        cell.trim().parse::<i64>().map_err(|_| {
            Error::parse(
                self.line_of(row),
                format!("column `{}`: expected integer, found `{cell}`", self.columns[col]),
            )
        })
    }

    pub fn u32_at(&self, row: usize, col: usize) -> Result<u32> {
        let v = self.i64_at(row, col)?;
        u32::try_from(v).map_err(|_| {
            Error::parse(
                self.line_of(row),
                format!("column `{}`: value {v} out of range", self.columns[col]),
            )
        })
    }

    pub fn u64_at(&self, row: usize, col: usize) -> Result<u64> {
        let v = self.i64_at(row, col)?;
        u64::try_from(v).map_err(|_| {
            Error::parse(
                self.line_of(row),
                format!("column `{}`: value {v} out of range", self.columns[col]),
            )
        })
    }

    pub fn usize_at(&self, row: usize, col: usize) -> Result<usize> {
        let v = self.i64_at(row, col)?;
        usize::try_from(v).map_err(|_| {
            Error::parse(
                self.line_of(row),
                format!("column `{}`: value {v} out of range", self.columns[col]),
            )
        })
    }
}
