//! Positive-definite kernels on `R^d`.
//!
//! Every estimator in the crate touches the response sample only through
//! pointwise evaluations `K(y, y')`, so any type implementing [`Kernel`] can be
//! plugged in. [`KernelSpec`] covers the families used in practice and parses
//! from strings such as `"gaussian:sigma=1.0"` or `"distance:alpha=1"`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{dist, norm, sq_dist, DataMatrix};
use crate::error::{KmacError, Result};

/// A symmetric kernel evaluated pointwise.
pub trait Kernel: Sync {
    fn eval(&self, a: &[f64], b: &[f64]) -> f64;
}

impl<K: Kernel + ?Sized> Kernel for &K {
    fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        (**self).eval(a, b)
    }
}

/// The supported kernel families.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum KernelSpec {
    /// `exp(-||a - b||^2 / sigma^2)`; `sigma = 1` gives `exp(-||a - b||^2)`.
    Gaussian { sigma: f64 },
    /// `exp(-||a - b||_1 / sigma)`.
    Laplacian { sigma: f64 },
    /// `(||a||^alpha + ||b||^alpha - ||a - b||^alpha) / 2`, the fractional
    /// Brownian motion covariance. `alpha = 1` is the distance covariance kernel.
    Distance { alpha: f64 },
    /// `<a, b>`. Not characteristic.
    Linear,
    /// `min(a, b)` on `[0, 1]`; the distance kernel restricted to the unit
    /// interval, scaled so that `K(y, y) = y`.
    MinCdf,
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec::Distance { alpha: 1.0 }
    }
}

impl KernelSpec {
    pub fn gaussian() -> Self {
        KernelSpec::Gaussian { sigma: 1.0 }
    }

    pub fn distance() -> Self {
        KernelSpec::Distance { alpha: 1.0 }
    }

    /// Checks the parameter invariants.
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Gaussian { sigma } | KernelSpec::Laplacian { sigma } => {
                if !(sigma > 0.0 && sigma.is_finite()) {
                    return Err(KmacError::InvalidParameter(format!(
                        "bandwidth must be positive and finite, got {sigma}"
                    )));
                }
            }
            KernelSpec::Distance { alpha } => {
                if !(alpha > 0.0 && alpha <= 2.0) {
                    return Err(KmacError::InvalidParameter(format!(
                        "distance kernel exponent must lie in (0, 2], got {alpha}"
                    )));
                }
            }
            KernelSpec::Linear | KernelSpec::MinCdf => {}
        }
        Ok(())
    }

    /// Checks that the kernel may be applied to every row of `data`.
    pub fn validate_data(&self, data: &DataMatrix) -> Result<()> {
        self.validate()?;
        data.check_finite()?;
        if let KernelSpec::MinCdf = self {
            if data.ncols() != 1 {
                return Err(KmacError::InvalidParameter(format!(
                    "mincdf kernel needs one-dimensional data, got {} columns",
                    data.ncols()
                )));
            }
            if let Some(i) = data
                .as_slice()
                .iter()
                .position(|v| !(0.0..=1.0).contains(v))
            {
                return Err(KmacError::InvalidParameter(format!(
                    "mincdf kernel needs values in [0, 1]; row {i} is {}",
                    data.as_slice()[i]
                )));
            }
        }
        Ok(())
    }

    /// Pointwise evaluation with dimension and parameter checks.
    pub fn eval_checked(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        self.validate()?;
        if a.len() != b.len() {
            return Err(KmacError::DimensionMismatch {
                expected: a.len(),
                got: b.len(),
            });
        }
        if let KernelSpec::MinCdf = self {
            if a.len() != 1 || !(0.0..=1.0).contains(&a[0]) || !(0.0..=1.0).contains(&b[0]) {
                return Err(KmacError::InvalidParameter(
                    "mincdf kernel is defined for scalars in [0, 1]".into(),
                ));
            }
        }
        Ok(self.eval(a, b))
    }

    /// Whether mean embeddings under this kernel are injective. The linear
    /// kernel and the distance kernel with `alpha = 2` are not.
    pub fn is_characteristic(&self) -> bool {
        match *self {
            KernelSpec::Linear => false,
            KernelSpec::Distance { alpha } => alpha < 2.0,
            _ => true,
        }
    }

    /// `sup K` for bounded kernels.
    pub fn upper_bound(&self) -> Option<f64> {
        match self {
            KernelSpec::Gaussian { .. } | KernelSpec::Laplacian { .. } | KernelSpec::MinCdf => {
                Some(1.0)
            }
            _ => None,
        }
    }

    /// Gaussian kernel whose bandwidth is the median pairwise distance over
    /// an evenly strided subsample of at most 1024 rows.
    pub fn gaussian_median_heuristic(data: &DataMatrix) -> Result<Self> {
        let n = data.nrows();
        let stride = n.div_ceil(1024).max(1);
        let rows: Vec<&[f64]> = (0..n).step_by(stride).map(|i| data.row(i)).collect();
        let mut d = Vec::with_capacity(rows.len() * rows.len() / 2);
        for i in 0..rows.len() {
            for j in i + 1..rows.len() {
                d.push(dist(rows[i], rows[j]));
            }
        }
        if d.is_empty() {
            return Err(KmacError::TooFewRows { needed: 2, got: n });
        }
        d.sort_by(f64::total_cmp);
        let sigma = d[d.len() / 2];
        if sigma <= 0.0 {
            return Err(KmacError::DegenerateY { denominator: 0.0 });
        }
        Ok(KernelSpec::Gaussian { sigma })
    }
}

impl Kernel for KernelSpec {
    #[inline]
    fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            KernelSpec::Gaussian { sigma } => (-sq_dist(a, b) / (sigma * sigma)).exp(),
            KernelSpec::Laplacian { sigma } => {
                let l1: f64 = a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum();
                (-l1 / sigma).exp()
            }
            KernelSpec::Distance { alpha } => {
                if alpha == 1.0 {
                    0.5 * (norm(a) + norm(b) - dist(a, b))
                } else if alpha == 2.0 {
                    a.iter().zip(b).map(|(x, y)| x * y).sum()
                } else {
                    let p = 0.5 * alpha;
                    let na: f64 = a.iter().map(|x| x * x).sum();
                    let nb: f64 = b.iter().map(|x| x * x).sum();
                    0.5 * (na.powf(p) + nb.powf(p) - sq_dist(a, b).powf(p))
                }
            }
            KernelSpec::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
            KernelSpec::MinCdf => a[0].min(b[0]),
        }
    }
}

/// `[K(Y_i, Y_i)]` for every row.
pub fn kernel_self_diag<K: Kernel + ?Sized>(kernel: &K, data: &DataMatrix) -> Vec<f64> {
    data.rows().map(|r| kernel.eval(r, r)).collect()
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelSpec::Gaussian { sigma } => write!(f, "gaussian:sigma={sigma}"),
            KernelSpec::Laplacian { sigma } => write!(f, "laplace:sigma={sigma}"),
            KernelSpec::Distance { alpha } => write!(f, "distance:alpha={alpha}"),
            KernelSpec::Linear => write!(f, "linear"),
            KernelSpec::MinCdf => write!(f, "mincdf"),
        }
    }
}

/// Splits `"name:key=value,key=value"` into the name and its parameters.
pub(crate) fn split_spec(s: &str) -> Result<(String, Vec<(String, String)>)> {
    let s = s.trim();
    let (name, rest) = match s.split_once(':') {
        Some((n, r)) => (n, r),
        None => (s, ""),
    };
    let mut params = Vec::new();
    for part in rest.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| KmacError::spec(s, format!("expected key=value, found {part:?}")))?;
        params.push((k.trim().to_ascii_lowercase(), v.trim().to_string()));
    }
    Ok((name.trim().to_ascii_lowercase(), params))
}

pub(crate) fn parse_param<T: FromStr>(spec: &str, key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| KmacError::spec(spec, format!("cannot parse {key}={value}")))
}

impl FromStr for KernelSpec {
    type Err = KmacError;

    fn from_str(s: &str) -> Result<Self> {
        let (name, params) = split_spec(s)?;
        let mut sigma = 1.0;
        let mut alpha = 1.0;
        for (k, v) in &params {
            match (name.as_str(), k.as_str()) {
                ("gaussian" | "laplace" | "laplacian", "sigma") => sigma = parse_param(s, k, v)?,
                ("distance", "alpha") => alpha = parse_param(s, k, v)?,
                _ => return Err(KmacError::spec(s, format!("unknown parameter {k:?}"))),
            }
        }
        let spec = match name.as_str() {
            "gaussian" => KernelSpec::Gaussian { sigma },
            "laplace" | "laplacian" => KernelSpec::Laplacian { sigma },
            "distance" => KernelSpec::Distance { alpha },
            "linear" => KernelSpec::Linear,
            "mincdf" | "min" => KernelSpec::MinCdf,
            _ => return Err(KmacError::spec(s, "unknown kernel family")),
        };
        spec.validate()
            .map_err(|e| KmacError::spec(s, e.to_string()))?;
        Ok(spec)
    }
}
