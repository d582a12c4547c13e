//! Matrix Market exchange format (dense `array real general`) for
//! cross-validation of assembled operators with external tools.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

const HEADER: &str = "%%MatrixMarket matrix array real general";

/// Render a dense matrix in Matrix Market array format, column-major,
/// full f64 precision.
pub fn matrix_to_string(m: &DMatrix<f64>) -> String {
    let mut out = String::with_capacity(32 + 26 * m.len());
    out.push_str(HEADER);
    out.push('\n');
    let _ = writeln!(out, "{} {}", m.nrows(), m.ncols());
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let _ = writeln!(out, "{:.17e}", m[(i, j)]);
        }
    }
    out
}

/// Parse a Matrix Market dense array file.
pub fn parse_matrix(text: &str) -> Result<DMatrix<f64>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::MatrixMarket("empty file".into()))?;
    let lower = header.to_ascii_lowercase();
    if !lower.starts_with("%%matrixmarket matrix array real") {
        return Err(Error::MatrixMarket(format!("unsupported header: {header}")));
    }
    let mut lines = lines.filter(|l| !l.trim_start().starts_with('%'));
    let size_line = lines.next().ok_or_else(|| Error::MatrixMarket("missing size line".into()))?;
    let mut parts = size_line.split_whitespace();
    let nrows: usize = parts
        .next()
        .and_then(|p| p.parse().ok())
        .ok_or_else(|| Error::MatrixMarket("bad row count".into()))?;
    let ncols: usize = parts
        .next()
        .and_then(|p| p.parse().ok())
        .ok_or_else(|| Error::MatrixMarket("bad column count".into()))?;
    let mut values = Vec::with_capacity(nrows * ncols);
    for line in lines {
        let v: f64 = line
            .trim()
            .parse()
            .map_err(|_| Error::MatrixMarket(format!("bad entry: {line}")))?;
        values.push(v);
    }
    if values.len() != nrows * ncols {
        return Err(Error::MatrixMarket(format!(
            "expected {} entries, found {}",
            nrows * ncols,
            values.len()
        )));
    }
    Ok(DMatrix::from_vec(nrows, ncols, values))
}

pub fn write_matrix_file(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    std::fs::write(path, matrix_to_string(m))?;
    Ok(())
}

pub fn read_matrix_file(path: &Path) -> Result<DMatrix<f64>> {
    let text = std::fs::read_to_string(path)?;
    parse_matrix(&text)
}
