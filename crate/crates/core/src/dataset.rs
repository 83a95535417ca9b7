//! Sample types shared by every module, plus CSV ingestion.
//!
//! Row order of a file defines the unit index. Files are comma separated,
//! UTF-8, with an optional single header row.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Formats a number with 17 significant digits, which round-trips any `f64`.
pub fn format_number(v: f64) -> String {
    format!("{:.16e}", v)
}

/// `n x D` matrix of pre-treatment covariates, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateMatrix {
    n: usize,
    d: usize,
    values: Vec<f64>,
}

impl CovariateMatrix {
    /// Requires `n >= 2`, `D >= 1` and finite entries.
    pub fn new(n: usize, d: usize, values: Vec<f64>) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidData(format!("need at least 2 units, got {n}")));
        }
        if d < 1 {
            return Err(Error::InvalidData("need at least 1 covariate".into()));
        }
        if values.len() != n * d {
            return Err(Error::LengthMismatch {
                expected: n * d,
                found: values.len(),
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonNumericField {
                row: pos / d + 1,
                col: pos % d + 1,
            });
        }
        Ok(CovariateMatrix { n, d, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != d {
                return Err(Error::RaggedRows {
                    row: i + 1,
                    found: r.len(),
                    expected: d,
                });
            }
        }
        Self::new(rows.len(), d, rows.concat())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.d)
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.values[i * self.d + k]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        self.rows().map(|r| r[k]).collect()
    }

    /// Squared Euclidean distance between units `i` and `j`.
    pub fn sq_dist(&self, i: usize, j: usize) -> f64 {
        sq_dist(self.row(i), self.row(j))
    }

    pub fn dist(&self, i: usize, j: usize) -> f64 {
        self.sq_dist(i, j).sqrt()
    }

    /// Sub-matrix made of the given units, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Result<Self> {
        let mut values = Vec::with_capacity(idx.len() * self.d);
        for &i in idx {
            values.extend_from_slice(self.row(i));
        }
        Self::new(idx.len(), self.d, values)
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Observed (or potential) outcomes, one per unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeVector(Vec<f64>);

impl OutcomeVector {
    pub fn new(y: Vec<f64>) -> Result<Self> {
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonNumericField { row: i + 1, col: 1 });
        }
        Ok(OutcomeVector(y))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl std::ops::Index<usize> for OutcomeVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Treatment indicator per unit: 1 treated, 0 control.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Assignment(Vec<u8>);

impl Assignment {
    pub fn new(a: Vec<u8>) -> Result<Self> {
        if let Some(i) = a.iter().position(|&v| v > 1) {
            return Err(Error::InvalidData(format!(
                "arm of unit {i} is {}, expected 0 or 1",
                a[i]
            )));
        }
        Ok(Assignment(a))
    }

    pub fn from_bools(treated: impl IntoIterator<Item = bool>) -> Self {
        Assignment(treated.into_iter().map(u8::from).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn arms(&self) -> &[u8] {
        &self.0
    }

    pub fn arm(&self, i: usize) -> u8 {
        self.0[i]
    }

    pub fn is_treated(&self, i: usize) -> bool {
        self.0[i] == 1
    }

    /// The `{-1, 1}` coding, `u = 2a - 1`.
    pub fn signs(&self) -> Vec<f64> {
        self.0.iter().map(|&a| 2.0 * f64::from(a) - 1.0).collect()
    }

    /// `(treated, control)` counts.
    pub fn group_sizes(&self) -> (usize, usize) {
        let n1 = self.0.iter().filter(|&&a| a == 1).count();
        (n1, self.0.len() - n1)
    }

    pub fn flipped(&self) -> Self {
        Assignment(self.0.iter().map(|&a| 1 - a).collect())
    }

    pub(crate) fn require_both_arms(&self) -> Result<(usize, usize)> {
        let (n1, n0) = self.group_sizes();
        if n1 == 0 || n0 == 0 {
            return Err(Error::EmptyArm);
        }
        Ok((n1, n0))
    }

    pub(crate) fn require_len(&self, n: usize) -> Result<()> {
        if self.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                found: self.len(),
            });
        }
        Ok(())
    }
}

fn read_records(path: &Path, has_header: bool) -> Result<Vec<(usize, csv::StringRecord)>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut out = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Malformed {
            row: k + 1,
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(k + 1, |p| p.line() as usize);
        if has_header && k == 0 {
            continue;
        }
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        out.push((line, rec));
    }
    Ok(out)
}

fn parse_field(s: &str, row: usize, col: usize) -> Result<f64> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::NonNumericField { row, col }),
    }
}

/// Reads a rectangular table of finite reals.
pub fn load_covariates(path: impl AsRef<Path>, has_header: bool) -> Result<CovariateMatrix> {
    let records = read_records(path.as_ref(), has_header)?;
    let Some((_, first)) = records.first() else {
        return Err(Error::InvalidData("no data rows".into()));
    };
    let d = first.len();
    let mut values = Vec::with_capacity(records.len() * d);
    for (line, rec) in &records {
        if rec.len() != d {
            return Err(Error::RaggedRows {
                row: *line,
                found: rec.len(),
                expected: d,
            });
        }
        for (c, field) in rec.iter().enumerate() {
            values.push(parse_field(field, *line, c + 1)?);
        }
    }
    CovariateMatrix::new(records.len(), d, values)
}

/// Writes `x` without a header, 17 significant digits per field.
pub fn write_covariates(path: impl AsRef<Path>, x: &CovariateMatrix) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for row in x.rows() {
        let fields: Vec<String> = row.iter().map(|&v| format_number(v)).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads one outcome per row from the last column of the file.
pub fn load_outcomes(path: impl AsRef<Path>, has_header: bool) -> Result<OutcomeVector> {
    let records = read_records(path.as_ref(), has_header)?;
    let mut y = Vec::with_capacity(records.len());
    for (line, rec) in &records {
        let col = rec.len();
        y.push(parse_field(&rec[col - 1], *line, col)?);
    }
    OutcomeVector::new(y)
}

pub fn write_outcomes(path: impl AsRef<Path>, y: &OutcomeVector) -> Result<()> {
    let path = path.as_ref();
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    for &v in y.as_slice() {
        writeln!(f, "{}", format_number(v)).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Result of [`standardize`]: the transformed matrix and the indices of
/// columns left unchanged because their variance is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardized {
    pub matrix: CovariateMatrix,
    pub constant_columns: Vec<usize>,
}

/// Gives every varying column sample mean 0 and sample standard deviation 1
/// (`n - 1` denominator). Constant columns pass through and are reported.
pub fn standardize(x: &CovariateMatrix) -> Standardized {
    let (n, d) = (x.n(), x.dim());
    let mut values = x.values().to_vec();
    let mut constant_columns = Vec::new();
    for k in 0..d {
        let col = x.column(k);
        let mean = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
        let sd = var.sqrt();
        if !(sd > 0.0) || col.iter().all(|&v| v == col[0]) {
            constant_columns.push(k);
            continue;
        }
        for i in 0..n {
            values[i * d + k] = (col[i] - mean) / sd;
        }
    }
    Standardized {
        matrix: CovariateMatrix { n, d, values },
        constant_columns,
    }
}
