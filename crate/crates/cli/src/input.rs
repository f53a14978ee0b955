//! Comma-separated input with a header row.

use std::path::Path;

use crate::error::{CliError, CliResult};

/// Reads two numeric columns by header name. Rows are reported by their
/// line number in the file, counting the header as line 1.
pub fn read_columns(path: &Path, x_col: &str, y_col: &str) -> CliResult<(Vec<f64>, Vec<f64>)> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let find = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| CliError::MissingColumn {
            path: path.to_path_buf(),
            column: name.to_string(),
            available: headers.iter().collect::<Vec<_>>().join(", "),
        })
    };
    let (ix, iy) = (find(x_col)?, find(y_col)?);
    let mut x = Vec::new();
    let mut y = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let row = record.position().map(|p| p.line()).unwrap_or(0);
        x.push(cell(path, &record, ix, x_col, row)?);
        y.push(cell(path, &record, iy, y_col, row)?);
    }
    Ok((x, y))
}

fn cell(path: &Path, record: &csv::StringRecord, idx: usize, column: &str, row: u64) -> CliResult<f64> {
    let bad = |message: String| CliError::Cell {
        path: path.to_path_buf(),
        row,
        column: column.to_string(),
        message,
    };
    let raw = record.get(idx).ok_or_else(|| bad("missing value".into()))?;
    let v: f64 = raw.parse().map_err(|_| bad(format!("'{raw}' is not a number")))?;
    if !v.is_finite() {
        return Err(bad(format!("'{raw}' is not finite")));
    }
    Ok(v)
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    match e.kind() {
        csv::ErrorKind::Io(_) => match e.into_kind() {
            csv::ErrorKind::Io(io) => CliError::io(path, io),
            _ => unreachable!(),
        },
        _ => CliError::Csv {
            path: path.to_path_buf(),
            message: e.to_string(),
        },
    }
}
