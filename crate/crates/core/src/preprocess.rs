//! Packet bytes → fixed-length normalised Packet Byte Vectors, and the CSV
//! form they are stored in.
//!
//! CSV layout: one row per packet, `fixed_len` decimal values followed by the
//! integer label, comma separated, newline terminated. Values are written with
//! Rust's shortest round-trip float formatting, so `0.0` and `1.0` appear as
//! `0` and `1`.

use std::io::{BufRead, Write};

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

/// Fixed vector length used unless configured otherwise.
pub const DEFAULT_FIXED_LEN: usize = 1480;

#[derive(Debug, thiserror::Error)]
pub enum PreprocessError {
    #[error("fixed length must be at least 1")]
    ZeroLength,
    #[error("value {value} at index {index} is outside [0, 1]")]
    OutOfRange { index: usize, value: f64 },
    #[error("row {row} has {found} values, expected {expected}")]
    DimensionMismatch { row: usize, expected: usize, found: usize },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Normalizer {
    #[default]
    ByteOver255,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub fixed_len: usize,
    pub normalizer: Normalizer,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            fixed_len: DEFAULT_FIXED_LEN,
            normalizer: Normalizer::ByteOver255,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<(), PreprocessError> {
        if self.fixed_len == 0 {
            return Err(PreprocessError::ZeroLength);
        }
        Ok(())
    }
}

/// Fixed-length vector of values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PacketByteVector(Vec<f64>);

impl PacketByteVector {
    /// Wrap values after checking the `[0, 1]` range.
    pub fn from_values(values: Vec<f64>) -> Result<Self, PreprocessError> {
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(PreprocessError::OutOfRange { index, value });
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Truncate to the first `fixed_len` bytes or zero-pad up to `fixed_len`.
pub fn fix_length(bytes: &[u8], fixed_len: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(fixed_len);
    out.extend_from_slice(&bytes[..bytes.len().min(fixed_len)]);
    out.resize(fixed_len, 0);
    out
}

pub fn normalize(bytes: &[u8]) -> PacketByteVector {
    PacketByteVector(bytes.iter().map(|&b| f64::from(b) / 255.0).collect())
}

/// Inverse of [`normalize`]: `round(v·255)` clamped to a byte.
pub fn denormalize(values: &[f64]) -> Vec<u8> {
    values.iter().map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8).collect()
}

/// `fix_length` followed by `normalize`.
pub fn to_pbv(bytes: &[u8], config: &PreprocessConfig) -> PacketByteVector {
    match config.normalizer {
        Normalizer::ByteOver255 => normalize(&fix_length(bytes, config.fixed_len)),
    }
}

/// Stack packets into an `N × fixed_len` matrix.
pub fn to_pbm<'a, I>(packets: I, config: &PreprocessConfig) -> Array2<f64>
where
    I: IntoIterator<Item = &'a [u8]>,
{
    let rows: Vec<f64> = packets
        .into_iter()
        .flat_map(|p| to_pbv(p, config).into_inner())
        .collect();
    let n = rows.len() / config.fixed_len;
    Array2::from_shape_vec((n, config.fixed_len), rows).expect("rows are fixed length")
}

fn write_row<W: Write>(out: &mut W, values: ArrayView1<f64>, label: usize) -> std::io::Result<()> {
    let mut line = String::with_capacity(values.len() * 8 + 8);
    for v in values.iter() {
        // `{}` on f64 is the shortest representation that parses back exactly
        line.push_str(&format!("{v}"));
        line.push(',');
    }
    line.push_str(&label.to_string());
    line.push('\n');
    out.write_all(line.as_bytes())
}

/// Write labelled PBVs; every row must share the first row's length.
pub fn write_csv<W: Write>(rows: &[(PacketByteVector, usize)], out: &mut W) -> Result<(), PreprocessError> {
    let Some(width) = rows.first().map(|(v, _)| v.len()) else {
        return Ok(());
    };
    for (i, (v, _)) in rows.iter().enumerate() {
        if v.len() != width {
            return Err(PreprocessError::DimensionMismatch {
                row: i,
                expected: width,
                found: v.len(),
            });
        }
    }
    for (v, label) in rows {
        write_row(out, ArrayView1::from(v.values()), *label)?;
    }
    Ok(())
}

/// Write a matrix and its labels in the same CSV layout.
pub fn write_matrix_csv<W: Write>(pbm: &Array2<f64>, labels: &[usize], out: &mut W) -> Result<(), PreprocessError> {
    if pbm.nrows() != labels.len() {
        return Err(PreprocessError::DimensionMismatch {
            row: pbm.nrows().min(labels.len()),
            expected: pbm.nrows(),
            found: labels.len(),
        });
    }
    for (row, &label) in pbm.rows().into_iter().zip(labels) {
        write_row(out, row, label)?;
    }
    Ok(())
}

/// Parsed CSV contents.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRows {
    pub pbm: Array2<f64>,
    pub labels: Vec<usize>,
}

/// Read the CSV layout back. Blank lines are skipped; line numbers in errors
/// are 1-based.
pub fn read_csv<R: BufRead>(input: R) -> Result<CsvRows, PreprocessError> {
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut width: Option<usize> = None;
    for (i, line) in input.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 2 {
            return Err(PreprocessError::Parse {
                line: line_no,
                message: "expected at least one value and a label".into(),
            });
        }
        let n = fields.len() - 1;
        match width {
            None => width = Some(n),
            Some(w) if w != n => {
                return Err(PreprocessError::Parse {
                    line: line_no,
                    message: format!("{n} values, previous rows had {w}"),
                })
            }
            _ => {}
        }
        for (col, f) in fields[..n].iter().enumerate() {
            let v: f64 = f.trim().parse().map_err(|_| PreprocessError::Parse {
                line: line_no,
                message: format!("column {}: invalid number {f:?}", col + 1),
            })?;
            if !(0.0..=1.0).contains(&v) {
                return Err(PreprocessError::Parse {
                    line: line_no,
                    message: format!("column {}: value {v} outside [0, 1]", col + 1),
                });
            }
            values.push(v);
        }
        let label_field = fields[n].trim();
        labels.push(label_field.parse().map_err(|_| PreprocessError::Parse {
            line: line_no,
            message: format!("invalid label {label_field:?}"),
        })?);
    }
    let width = width.unwrap_or(0);
    let pbm = Array2::from_shape_vec((labels.len(), width), values).expect("row widths checked");
    Ok(CsvRows { pbm, labels })
}
