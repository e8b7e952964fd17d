//! The encoder-snapshot interchange format.
//!
//! A snapshot holds the per-sample diagonal-Gaussian posterior parameters
//! (μ(x^m), σ(x^m)) exported from a trained encoder; it is the only coupling
//! between this toolkit and any particular VAE implementation.
//!
//! Two formats are supported, bit-exact as specified:
//!
//! * binary `FSNAP1`: magic `"FSNAP"`, version byte `0x01`, `M` and `H` as
//!   little-endian u32, then M·H little-endian f64 for mu (row-major,
//!   sample-major), then M·H for sigma;
//! * CSV: header `mu_1..mu_H,sigma_1..sigma_H`, one row per sample, values
//!   written with 17 significant digits so reads round-trip exactly.

use crate::error::{Error, Result};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 5] = b"FSNAP";
const VERSION: u8 = 0x01;

/// Per-sample posterior means and standard deviations, M samples × H factors.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderSnapshot {
    num_samples: usize,
    num_factors: usize,
    mu: Vec<f64>,    // row-major M×H
    sigma: Vec<f64>, // row-major M×H
    provenance: String,
}

/// One invariant violation, locating the offending entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Violation {
    /// sigma[row, col] ≤ 0
    NonPositiveSigma { row: usize, col: usize },
    /// mu or sigma entry at (row, col) is NaN or infinite
    NonFinite { row: usize, col: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonPositiveSigma { row, col } => {
                write!(f, "NonPositiveSigma({row},{col})")
            }
            Violation::NonFinite { row, col } => write!(f, "NonFinite({row},{col})"),
        }
    }
}

/// On-disk snapshot encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SnapshotFormat {
    Csv,
    Binary,
}

impl EncoderSnapshot {
    /// Builds a snapshot from row-major matrices. Only shape consistency is
    /// enforced here; use [`validate_snapshot`] for the entry invariants.
    pub fn new(
        num_samples: usize,
        num_factors: usize,
        mu: Vec<f64>,
        sigma: Vec<f64>,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        if num_samples == 0 || num_factors == 0 {
            return Err(Error::Usage(format!(
                "snapshot dimensions must be >= 1, got M={num_samples}, H={num_factors}"
            )));
        }
        let expect = num_samples * num_factors;
        if mu.len() != expect || sigma.len() != expect {
            return Err(Error::Usage(format!(
                "matrix shapes disagree: M*H={expect}, mu has {}, sigma has {}",
                mu.len(),
                sigma.len()
            )));
        }
        Ok(Self {
            num_samples,
            num_factors,
            mu,
            sigma,
            provenance: provenance.into(),
        })
    }

    pub fn num_samples(&self) -> usize {
        self.num_samples
    }

    pub fn num_factors(&self) -> usize {
        self.num_factors
    }

    pub fn mu(&self, row: usize, col: usize) -> f64 {
        self.mu[row * self.num_factors + col]
    }

    pub fn sigma(&self, row: usize, col: usize) -> f64 {
        self.sigma[row * self.num_factors + col]
    }

    pub fn mu_data(&self) -> &[f64] {
        &self.mu
    }

    pub fn sigma_data(&self) -> &[f64] {
        &self.sigma
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    /// Mean column `col` as a contiguous vector.
    pub fn mu_column(&self, col: usize) -> Vec<f64> {
        (0..self.num_samples).map(|m| self.mu(m, col)).collect()
    }

    pub fn sigma_column(&self, col: usize) -> Vec<f64> {
        (0..self.num_samples).map(|m| self.sigma(m, col)).collect()
    }

    /// Returns a snapshot with factor columns permuted: column `j` of the
    /// result is column `perm[j]` of the input.
    pub fn permute_factors(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.num_factors {
            return Err(Error::Usage("permutation length must equal H".into()));
        }
        let mut mu = Vec::with_capacity(self.mu.len());
        let mut sigma = Vec::with_capacity(self.sigma.len());
        for m in 0..self.num_samples {
            for &j in perm {
                mu.push(self.mu(m, j));
                sigma.push(self.sigma(m, j));
            }
        }
        Self::new(
            self.num_samples,
            self.num_factors,
            mu,
            sigma,
            self.provenance.clone(),
        )
    }
}

/// Checks all entry invariants; empty iff the snapshot is valid.
pub fn validate_snapshot(snapshot: &EncoderSnapshot) -> Vec<Violation> {
    let mut out = Vec::new();
    let h = snapshot.num_factors;
    for (i, &v) in snapshot.mu.iter().enumerate() {
        if !v.is_finite() {
            out.push(Violation::NonFinite {
                row: i / h,
                col: i % h,
            });
        }
    }
    for (i, &v) in snapshot.sigma.iter().enumerate() {
        let (row, col) = (i / h, i % h);
        if !v.is_finite() {
            out.push(Violation::NonFinite { row, col });
        } else if v <= 0.0 {
            out.push(Violation::NonPositiveSigma { row, col });
        }
    }
    out
}

fn validated(snapshot: EncoderSnapshot) -> Result<EncoderSnapshot> {
    let violations = validate_snapshot(&snapshot);
    if violations.is_empty() {
        Ok(snapshot)
    } else {
        let msg = violations
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(", ");
        Err(Error::Validation(msg))
    }
}

/// Reads and validates a snapshot file.
pub fn read_snapshot(path: &Path, format: SnapshotFormat) -> Result<EncoderSnapshot> {
    match format {
        SnapshotFormat::Binary => read_binary(path),
        SnapshotFormat::Csv => read_csv(path),
    }
}

/// Writes a snapshot in the requested format.
pub fn write_snapshot(
    snapshot: &EncoderSnapshot,
    path: &Path,
    format: SnapshotFormat,
) -> Result<()> {
    match format {
        SnapshotFormat::Binary => write_binary(snapshot, path),
        SnapshotFormat::Csv => write_csv(snapshot, path),
    }
}

fn read_binary(path: &Path) -> Result<EncoderSnapshot> {
    let mut file = BufReader::new(File::open(path)?);
    let mut header = [0u8; 14];
    file.read_exact(&mut header)
        .map_err(|_| Error::Format("file too short for FSNAP1 header".into()))?;
    if &header[..5] != MAGIC {
        return Err(Error::Format("bad magic, expected FSNAP".into()));
    }
    if header[5] != VERSION {
        return Err(Error::Format(format!("unsupported version {}", header[5])));
    }
    let m = u32::from_le_bytes(header[6..10].try_into().unwrap()) as usize;
    let h = u32::from_le_bytes(header[10..14].try_into().unwrap()) as usize;
    if m == 0 || h == 0 {
        return Err(Error::Format(format!("degenerate dimensions M={m}, H={h}")));
    }
    let count = m
        .checked_mul(h)
        .ok_or_else(|| Error::Format("M*H overflows".into()))?;
    let mut read_matrix = |name: &str| -> Result<Vec<f64>> {
        let mut buf = vec![0u8; count * 8];
        file.read_exact(&mut buf)
            .map_err(|_| Error::Format(format!("truncated {name} matrix")))?;
        Ok(buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    };
    let mu = read_matrix("mu")?;
    let sigma = read_matrix("sigma")?;
    let mut trailing = [0u8; 1];
    if file.read(&mut trailing)? != 0 {
        return Err(Error::Format("trailing bytes after sigma matrix".into()));
    }
    validated(EncoderSnapshot::new(m, h, mu, sigma, "")?)
}

fn write_binary(snapshot: &EncoderSnapshot, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(MAGIC)?;
    out.write_all(&[VERSION])?;
    out.write_all(&(snapshot.num_samples as u32).to_le_bytes())?;
    out.write_all(&(snapshot.num_factors as u32).to_le_bytes())?;
    for v in &snapshot.mu {
        out.write_all(&v.to_le_bytes())?;
    }
    for v in &snapshot.sigma {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

fn read_csv(path: &Path) -> Result<EncoderSnapshot> {
    let file = BufReader::new(File::open(path)?);
    let mut lines = file.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("empty CSV file".into()))??;
    let cols: Vec<&str> = header.trim_end().split(',').collect();
    if !cols.len().is_multiple_of(2) {
        return Err(Error::Format(format!(
            "expected 2H columns, got {}",
            cols.len()
        )));
    }
    let h = cols.len() / 2;
    if h == 0 {
        return Err(Error::Format("header has no columns".into()));
    }
    for (j, col) in cols.iter().enumerate() {
        let expected = if j < h {
            format!("mu_{}", j + 1)
        } else {
            format!("sigma_{}", j + 1 - h)
        };
        if *col != expected {
            return Err(Error::Format(format!(
                "header column {} is '{}', expected '{}'",
                j + 1,
                col,
                expected
            )));
        }
    }
    let mut mu = Vec::new();
    let mut sigma = Vec::new();
    let mut rows = 0usize;
    for (line_no, line) in lines.enumerate() {
        let line = line?;
        let trimmed = line.trim_end();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != 2 * h {
            return Err(Error::Format(format!(
                "row {} has {} fields, expected {}",
                line_no + 2,
                fields.len(),
                2 * h
            )));
        }
        for (j, field) in fields.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::Format(format!(
                    "row {}, column {}: unparseable '{}'",
                    line_no + 2,
                    j + 1,
                    field
                ))
            })?;
            if j < h {
                mu.push(v);
            } else {
                sigma.push(v);
            }
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::Format("CSV has a header but no data rows".into()));
    }
    validated(EncoderSnapshot::new(rows, h, mu, sigma, "")?)
}

fn write_csv(snapshot: &EncoderSnapshot, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    let h = snapshot.num_factors;
    let header: Vec<String> = (1..=h)
        .map(|j| format!("mu_{j}"))
        .chain((1..=h).map(|j| format!("sigma_{j}")))
        .collect();
    writeln!(out, "{}", header.join(","))?;
    for m in 0..snapshot.num_samples {
        let row: Vec<String> = (0..h)
            .map(|j| format_sig17(snapshot.mu(m, j)))
            .chain((0..h).map(|j| format_sig17(snapshot.sigma(m, j))))
            .collect();
        writeln!(out, "{}", row.join(","))?;
    }
    out.flush()?;
    Ok(())
}

/// 17 significant digits: enough for exact f64 round-trips.
pub(crate) fn format_sig17(v: f64) -> String {
    format!("{v:.16e}")
}
