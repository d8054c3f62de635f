//! Plain-text matrix, vector and block-structure files.
//!
//! A matrix file starts with a `rows cols` line followed by one
//! whitespace-separated row per line. Vectors are stored as `N x 1`
//! matrices; `1 x N` files are accepted on input. Values are written in the
//! shortest form that parses back to the same `f64`. A block structure is a
//! single line of block sizes. Blank lines and lines starting with `#` are
//! ignored.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use blockrip_core::{BlockStructure, Matrix};

use crate::error::{HarnessError, Result};

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> HarnessError {
    HarnessError::Parse { path: path.to_path_buf(), line, message: message.into() }
}

/// Parses a matrix document; `path` is only used in error messages.
pub fn parse_matrix(text: &str, path: &Path) -> Result<Matrix> {
    let mut lines = content_lines(text);
    let (hline, header) = lines.next().ok_or_else(|| parse_error(path, 1, "missing `rows cols` header"))?;
    let dims: Vec<&str> = header.split_whitespace().collect();
    let [rows, cols] = dims[..] else {
        return Err(parse_error(path, hline, "header must be `rows cols`"));
    };
    let parse_dim = |s: &str| s.parse::<usize>().map_err(|_| parse_error(path, hline, format!("bad dimension `{s}`")));
    let (rows, cols) = (parse_dim(rows)?, parse_dim(cols)?);
    let mut data = Vec::with_capacity(rows * cols);
    let mut seen = 0;
    for (ln, line) in lines {
        seen += 1;
        if seen > rows {
            return Err(parse_error(path, ln, format!("more than {rows} rows")));
        }
        let before = data.len();
        for tok in line.split_whitespace() {
            let v: f64 = tok.parse().map_err(|_| parse_error(path, ln, format!("bad number `{tok}`")))?;
            if !v.is_finite() {
                return Err(parse_error(path, ln, format!("non-finite value `{tok}`")));
            }
            data.push(v);
        }
        if data.len() - before != cols {
            return Err(parse_error(path, ln, format!("expected {cols} values, found {}", data.len() - before)));
        }
    }
    if seen != rows {
        return Err(parse_error(path, hline, format!("expected {rows} rows, found {seen}")));
    }
    Ok(Matrix::new(rows, cols, data)?)
}

pub fn format_matrix(m: &Matrix) -> String {
    let mut out = format!("{} {}\n", m.rows(), m.cols());
    for r in 0..m.rows() {
        let row: Vec<String> = m.row(r).iter().map(|v| format!("{v:?}")).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
    out
}

/// Parses a vector stored as an `N x 1` or `1 x N` matrix.
pub fn parse_vector(text: &str, path: &Path) -> Result<Vec<f64>> {
    let m = parse_matrix(text, path)?;
    if m.cols() == 1 || m.rows() == 1 {
        Ok(m.data().to_vec())
    } else {
        Err(parse_error(path, 1, format!("expected a vector, found a {}x{} matrix", m.rows(), m.cols())))
    }
}

pub fn format_vector(v: &[f64]) -> String {
    let mut out = format!("{} 1\n", v.len());
    for x in v {
        let _ = writeln!(out, "{x:?}");
    }
    out
}

pub fn parse_structure(text: &str, path: &Path) -> Result<Arc<BlockStructure>> {
    let mut lines = content_lines(text);
    let (ln, line) = lines.next().ok_or_else(|| parse_error(path, 1, "missing block sizes"))?;
    if let Some((extra, _)) = lines.next() {
        return Err(parse_error(path, extra, "block sizes must fit on one line"));
    }
    let sizes = line
        .split_whitespace()
        .map(|t| t.parse::<usize>().map_err(|_| parse_error(path, ln, format!("bad block size `{t}`"))))
        .collect::<Result<Vec<_>>>()?;
    Ok(Arc::new(BlockStructure::new(sizes)?))
}

pub fn format_structure(s: &BlockStructure) -> String {
    let sizes: Vec<String> = s.sizes().iter().map(|v| v.to_string()).collect();
    format!("{}\n", sizes.join(" "))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| HarnessError::io(path, e))
}

pub fn read_matrix(path: &Path) -> Result<Matrix> {
    parse_matrix(&read(path)?, path)
}

pub fn read_vector(path: &Path) -> Result<Vec<f64>> {
    parse_vector(&read(path)?, path)
}

pub fn read_structure(path: &Path) -> Result<Arc<BlockStructure>> {
    parse_structure(&read(path)?, path)
}

pub fn write_matrix(path: &Path, m: &Matrix) -> Result<()> {
    write_file(path, &format_matrix(m))
}

pub fn write_vector(path: &Path, v: &[f64]) -> Result<()> {
    write_file(path, &format_vector(v))
}

pub fn write_structure(path: &Path, s: &BlockStructure) -> Result<()> {
    write_file(path, &format_structure(s))
}
