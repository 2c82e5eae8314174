//! Delimited matrix files.
//!
//! Input: comma- or tab-separated text, delimiter taken from the header line.
//! The header holds column names; if its first cell is empty, the first
//! column of every row is a row label. Row and column numbers in errors are
//! 1-based positions in the file.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::ViewMatrix;

/// A parsed file.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub row_labels: Option<Vec<String>>,
    pub columns: Vec<String>,
    pub data: Matrix,
}

fn delimiter(header: &str) -> u8 {
    if header.contains('\t') {
        b'\t'
    } else {
        b','
    }
}

pub fn parse_table(text: &str) -> Result<Table> {
    let header_line = text.lines().next().unwrap_or("");
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter(header_line))
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut records = reader.records();
    let header = match records.next() {
        Some(r) => r.map_err(|e| csv_error(e, 1))?,
        None => return Err(Error::Parse { row: 1, column: 1, detail: "empty file".into() }),
    };
    let labeled = header.get(0).is_some_and(str::is_empty);
    let skip = usize::from(labeled);
    let columns: Vec<String> = header.iter().skip(skip).map(str::to_owned).collect();
    let width = header.len();
    let mut labels = Vec::new();
    let mut values = Vec::new();
    let mut rows = 0;
    for (k, record) in records.enumerate() {
        let row = k + 2;
        let record = record.map_err(|e| csv_error(e, row))?;
        if record.len() == 1 && record.get(0) == Some("") {
            continue;
        }
        if record.len() != width {
            return Err(Error::RaggedRows { row, found: record.len(), expected: width });
        }
        if labeled {
            labels.push(record[0].to_owned());
        }
        for (c, cell) in record.iter().enumerate().skip(skip) {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row,
                column: c + 1,
                detail: format!("cannot parse {cell:?} as a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFinite { row, column: c + 1 });
            }
            values.push(v);
        }
        rows += 1;
    }
    let data = Array2::from_shape_vec((rows, columns.len()), values)
        .map_err(|e| Error::Dimension(e.to_string()))?;
    Ok(Table {
        row_labels: labeled.then_some(labels),
        columns,
        data,
    })
}

fn csv_error(e: csv::Error, row: usize) -> Error {
    Error::Parse { row, column: 1, detail: e.to_string() }
}

pub fn read_table(path: &Path) -> Result<Table> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_table(&text)
}

/// Samples as rows, features as columns, without standardizing.
pub fn read_view(path: &Path) -> Result<ViewMatrix> {
    let t = read_table(path)?;
    ViewMatrix::raw(t.data, t.columns)
}

/// Parsed and standardized view.
pub fn load_matrix(path: &Path) -> Result<ViewMatrix> {
    read_view(path)?.standardized()
}

/// Seventeen significant digits: enough to reproduce every `f64` exactly.
pub fn format_number(v: f64) -> String {
    format!("{v:.16e}")
}

fn render(row_labels: Option<&[String]>, columns: &[String], data: &Matrix) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<&str> = Vec::with_capacity(columns.len() + 1);
    if row_labels.is_some() {
        header.push("");
    }
    header.extend(columns.iter().map(String::as_str));
    w.write_record(&header).map_err(|e| Error::Io(e.to_string()))?;
    for (i, row) in data.rows().into_iter().enumerate() {
        let mut rec: Vec<String> = Vec::with_capacity(row.len() + 1);
        if let Some(l) = row_labels {
            rec.push(l[i].clone());
        }
        rec.extend(row.iter().map(|v| format_number(*v)));
        w.write_record(&rec).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.into_inner().map_err(|e| Error::Io(e.to_string()))
}

/// Writes via a temporary file in the same directory and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().ok_or_else(|| Error::Io(format!("{} is not a file path", path.display())))?;
    let tmp: PathBuf = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    Ok(())
}

/// Matrix with a row-label column and an empty first header cell.
pub fn write_labeled(path: &Path, row_labels: &[String], columns: &[String], data: &Matrix) -> Result<()> {
    if row_labels.len() != data.nrows() || columns.len() != data.ncols() {
        return Err(Error::Dimension("labels do not match the matrix".into()));
    }
    write_atomic(path, &render(Some(row_labels), columns, data)?)
}

/// Matrix with a header row only.
pub fn write_plain(path: &Path, columns: &[String], data: &Matrix) -> Result<()> {
    if columns.len() != data.ncols() {
        return Err(Error::Dimension("labels do not match the matrix".into()));
    }
    write_atomic(path, &render(None, columns, data)?)
}

/// Rows of optional numbers; `None` becomes an empty cell.
pub fn write_records(path: &Path, columns: &[&str], rows: &[Vec<Cell>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(columns).map_err(|e| Error::Io(e.to_string()))?;
    for row in rows {
        let rec: Vec<String> = row.iter().map(Cell::render).collect();
        w.write_record(&rec).map_err(|e| Error::Io(e.to_string()))?;
    }
    write_atomic(path, &w.into_inner().map_err(|e| Error::Io(e.to_string()))?)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(Option<f64>),
    Int(usize),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(Some(v)) => format_number(*v),
            Cell::Num(None) => String::new(),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }
}
