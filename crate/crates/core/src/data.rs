//! Row-major sample matrices and their CSV form.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::error::{KmacError, Result};

/// An `n x d` matrix of observations; each row is one sample point.
#[derive(Clone, Debug, PartialEq)]
pub struct DataMatrix {
    n: usize,
    d: usize,
    values: Vec<f64>,
}

impl DataMatrix {
    pub fn new(n: usize, d: usize, values: Vec<f64>) -> Result<Self> {
        if d == 0 {
            return Err(KmacError::InvalidParameter(
                "dimension must be at least 1".into(),
            ));
        }
        if values.len() != n * d {
            return Err(KmacError::DimensionMismatch {
                expected: n * d,
                got: values.len(),
            });
        }
        Ok(Self { n, d, values })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let d = rows.first().map(|r| r.as_ref().len()).unwrap_or(1);
        let mut values = Vec::with_capacity(rows.len() * d);
        for r in rows {
            let r = r.as_ref();
            if r.len() != d {
                return Err(KmacError::DimensionMismatch {
                    expected: d,
                    got: r.len(),
                });
            }
            values.extend_from_slice(r);
        }
        Self::new(rows.len(), d, values)
    }

    /// A one-column matrix.
    pub fn from_column(col: &[f64]) -> Self {
        Self {
            n: col.len(),
            d: 1,
            values: col.to_vec(),
        }
    }

    pub fn nrows(&self) -> usize {
        self.n
    }

    pub fn ncols(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.d)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    /// Returns the first non-finite entry, if any.
    pub fn check_finite(&self) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(p) => Err(KmacError::NonFinite {
                row: p / self.d,
                col: p % self.d,
            }),
            None => Ok(()),
        }
    }

    /// New matrix whose row `i` is row `perm[i]` of `self`.
    pub fn permute_rows(&self, perm: &[usize]) -> Self {
        let mut values = Vec::with_capacity(self.values.len());
        for &p in perm {
            values.extend_from_slice(self.row(p));
        }
        Self {
            n: perm.len(),
            d: self.d,
            values,
        }
    }

    /// Applies `f` to each row, producing rows of dimension `d_out`.
    pub fn map_rows(&self, d_out: usize, mut f: impl FnMut(&[f64], &mut [f64])) -> Self {
        let mut values = vec![0.0; self.n * d_out];
        for (src, dst) in self.rows().zip(values.chunks_exact_mut(d_out)) {
            f(src, dst);
        }
        Self {
            n: self.n,
            d: d_out,
            values,
        }
    }

    pub fn hstack(&self, other: &DataMatrix) -> Result<Self> {
        if self.n != other.n {
            return Err(KmacError::RowMismatch {
                x: self.n,
                y: other.n,
            });
        }
        let d = self.d + other.d;
        let mut values = Vec::with_capacity(self.n * d);
        for (a, b) in self.rows().zip(other.rows()) {
            values.extend_from_slice(a);
            values.extend_from_slice(b);
        }
        Self::new(self.n, d, values)
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    sq_dist(a, b).sqrt()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Parses a rectangular numeric CSV. A first row that does not parse as
/// numbers is treated as a header and skipped.
pub fn parse_csv(text: &str) -> Result<DataMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut values = Vec::new();
    let mut width: Option<usize> = None;
    let mut n = 0;
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| KmacError::Csv {
            line: line + 1,
            reason: e.to_string(),
        })?;
        if rec.iter().all(|c| c.is_empty()) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        let row = match parsed {
            Ok(r) => r,
            Err(_) if line == 0 => continue,
            Err(e) => {
                return Err(KmacError::Csv {
                    line: line + 1,
                    reason: format!("non-numeric cell ({e})"),
                })
            }
        };
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(KmacError::Csv {
                    line: line + 1,
                    reason: format!("expected {w} fields, found {}", row.len()),
                })
            }
            _ => {}
        }
        values.extend(row);
        n += 1;
    }
    let d = width.ok_or(KmacError::Csv {
        line: 0,
        reason: "no data rows".into(),
    })?;
    DataMatrix::new(n, d, values)
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<DataMatrix> {
    let mut text = String::new();
    File::open(path)?.read_to_string(&mut text)?;
    parse_csv(&text)
}

/// Writes the matrix without a header. Values use the shortest
/// representation that round-trips exactly.
pub fn write_csv(m: &DataMatrix, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for row in m.rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    w.flush()?;
    Ok(())
}
