//! Row-labeled CSV for signal matrices.
//!
//! One line per series: a label cell (`component_0`, `channel_2`, ...)
//! followed by the row's values at full round-trip precision.

use std::path::Path;

use crate::diffengine::Matrix;
use crate::{Error, Result};

pub fn write_labeled_matrix(path: &Path, prefix: &str, m: &Matrix) -> Result<()> {
    let mut out = String::new();
    for i in 0..m.rows() {
        out.push_str(prefix);
        out.push('_');
        out.push_str(&i.to_string());
        for v in m.row(i) {
            out.push(',');
            out.push_str(&format!("{v}"));
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_labeled_matrix(path: &Path) -> Result<(Vec<String>, Matrix)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut labels = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let label = fields
            .next()
            .ok_or_else(|| Error::parse(path, format!("line {}: empty", lineno + 1)))?;
        labels.push(label.to_string());
        let mut row = Vec::new();
        for (col, field) in fields.enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                Error::parse(
                    path,
                    format!("line {}, value {}: not a number: {field:?}", lineno + 1, col + 1),
                )
            })?;
            row.push(v);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::parse(path, "no data rows"));
    }
    let matrix = Matrix::from_rows(&rows)
        .map_err(|e| Error::parse(path, format!("ragged rows: {e}")))?;
    Ok((labels, matrix))
}
