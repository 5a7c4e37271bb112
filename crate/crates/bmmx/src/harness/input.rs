//! Loading and saving user-supplied weight vectors.
//!
//! Two on-disk shapes are supported, chosen by file extension:
//! `.csv` and `.txt` parse as one value per line (CSV rows use their
//! first field; blank lines and `#` comments are skipped), and any
//! other extension is read as a raw little-endian f64 dump, which is
//! the natural export format for model weight tensors.

use std::path::Path;

use crate::error::{Error, Result};

/// Reads a flat value vector from disk.
pub fn load_vector(path: &Path) -> Result<Vec<f64>> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    let values = match ext.as_deref() {
        Some("csv") | Some("txt") => parse_text(&std::fs::read_to_string(path)?)?,
        _ => parse_raw(&std::fs::read(path)?)?,
    };
    for (i, &v) in values.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite(i));
        }
    }
    if values.is_empty() {
        return Err(Error::Data(format!("{} holds no values", path.display())));
    }
    Ok(values)
}

fn parse_text(text: &str) -> Result<Vec<f64>> {
    let mut values = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let field = line.split(',').next().unwrap_or("").trim();
        let v: f64 = field.parse().map_err(|_| {
            Error::Data(format!("line {}: cannot parse {field:?} as a number", lineno + 1))
        })?;
        values.push(v);
    }
    Ok(values)
}

fn parse_raw(bytes: &[u8]) -> Result<Vec<f64>> {
    if bytes.len() % 8 != 0 {
        return Err(Error::Data(format!(
            "raw dump length {} is not a multiple of 8",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

/// Writes a vector as a raw little-endian f64 dump.
pub fn save_raw(path: &Path, values: &[f64]) -> Result<()> {
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    Ok(std::fs::write(path, bytes)?)
}

/// Writes a vector as one value per line.
pub fn save_text(path: &Path, values: &[f64]) -> Result<()> {
    let mut text = String::new();
    for v in values {
        text.push_str(&format!("{v}\n"));
    }
    Ok(std::fs::write(path, text)?)
}

/// Splits a flat vector into `sites` contiguous chunks of equal size.
pub fn split_sites(values: &[f64], sites: usize) -> Result<Vec<&[f64]>> {
    if sites == 0 {
        return Err(Error::InvalidConfig("site count must be positive".into()));
    }
    if values.len() < sites {
        return Err(Error::InvalidConfig(format!(
            "{} values cannot feed {sites} sites",
            values.len()
        )));
    }
    if values.len() % sites != 0 {
        return Err(Error::InvalidConfig(format!(
            "{} values do not divide evenly across {sites} sites",
            values.len()
        )));
    }
    Ok(values.chunks_exact(values.len() / sites).collect())
}
