//! Population-level ground truth and the data-generating settings used by
//! the experiments.
//!
//! Every sampler takes an explicit seed and draws from a single ChaCha8
//! stream, so a `(setting, seed)` pair reproduces its dataset bit for bit.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::error::{KmacError, Result};
use crate::kernels::Kernel;
use crate::rng::{stream_rng, KmacRng};
use crate::stats::pairwise_sum;

/// `1 - sqrt(1 - rho^2)`: the distance-kernel coefficient of a bivariate
/// Gaussian with correlation `rho`. NaN when `|rho| > 1`.
pub fn t1_gaussian(rho: f64) -> f64 {
    1.0 - (1.0 - rho * rho).sqrt()
}

/// `rho^2`: the linear-kernel coefficient of a bivariate Gaussian.
pub fn t2_gaussian(rho: f64) -> f64 {
    rho * rho
}

/// A joint law given through the marginal of `X` and the conditional law of
/// `Y` given `X`.
pub trait ConditionalModel: Sync {
    fn sample_x(&self, rng: &mut KmacRng) -> Vec<f64>;
    fn sample_y(&self, x: &[f64], rng: &mut KmacRng) -> Vec<f64>;
}

/// `blocks` independent copies of a bivariate Gaussian pair, stacked into
/// `X = (X1, .., Xb)` and `Y = (Y1, .., Yb)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianPairSpec {
    pub rho: f64,
    pub mean_x: f64,
    pub mean_y: f64,
    pub sd_x: f64,
    pub sd_y: f64,
    pub blocks: usize,
}

impl GaussianPairSpec {
    /// Standard marginals.
    pub fn new(rho: f64, blocks: usize) -> Self {
        Self {
            rho,
            mean_x: 0.0,
            mean_y: 0.0,
            sd_x: 1.0,
            sd_y: 1.0,
            blocks,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho.abs() <= 1.0) {
            return Err(KmacError::InvalidParameter(format!(
                "rho must lie in [-1, 1], got {}",
                self.rho
            )));
        }
        if !(self.sd_x > 0.0 && self.sd_y > 0.0) || !self.sd_x.is_finite() || !self.sd_y.is_finite()
        {
            return Err(KmacError::InvalidParameter(
                "standard deviations must be positive".into(),
            ));
        }
        if !(self.mean_x.is_finite() && self.mean_y.is_finite()) {
            return Err(KmacError::InvalidParameter("means must be finite".into()));
        }
        if self.blocks == 0 {
            return Err(KmacError::InvalidParameter(
                "need at least one block".into(),
            ));
        }
        Ok(())
    }

    pub fn sample(&self, n: usize, seed: u64) -> Result<(DataMatrix, DataMatrix)> {
        self.validate()?;
        Ok(sample_model(self, n, seed))
    }
}

impl ConditionalModel for GaussianPairSpec {
    fn sample_x(&self, rng: &mut KmacRng) -> Vec<f64> {
        (0..self.blocks)
            .map(|_| self.mean_x + self.sd_x * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }

    fn sample_y(&self, x: &[f64], rng: &mut KmacRng) -> Vec<f64> {
        let resid = (1.0 - self.rho * self.rho).sqrt();
        x.iter()
            .map(|&xi| {
                let z = (xi - self.mean_x) / self.sd_x;
                self.mean_y
                    + self.sd_y * (self.rho * z + resid * rng.sample::<f64, _>(StandardNormal))
            })
            .collect()
    }
}

/// `n` i.i.d. rows of `(X, Y)` from one stream.
pub fn sample_model<M: ConditionalModel + ?Sized>(
    model: &M,
    n: usize,
    seed: u64,
) -> (DataMatrix, DataMatrix) {
    let mut rng = stream_rng(seed, 0);
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let x = model.sample_x(&mut rng);
        ys.push(model.sample_y(&x, &mut rng));
        xs.push(x);
    }
    let to_matrix = |rows: Vec<Vec<f64>>| {
        let d = rows.first().map_or(0, Vec::len);
        DataMatrix::new(rows.len(), d, rows.concat()).expect("rows share one dimension")
    };
    (to_matrix(xs), to_matrix(ys))
}

/// Fewest Monte Carlo replicates accepted by [`eta_population_mc`].
pub const MIN_POPULATION_REPS: usize = 10_000;

const MC_CHUNK: usize = 4096;

/// Two Monte Carlo estimates of the population coefficient from independent
/// draws, each with a delta-method standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationEstimate {
    /// From `(E K(Y', Y'~) - E K(Y1, Y2)) / (E K(Y, Y) - E K(Y1, Y2))`.
    pub direct: f64,
    pub direct_se: f64,
    /// From the average squared MMD between `Y | X` and `Y`, over half the
    /// mean squared feature distance.
    pub mmd: f64,
    pub mmd_se: f64,
    pub reps: usize,
}

impl PopulationEstimate {
    pub fn combined_se(&self) -> f64 {
        self.direct_se.hypot(self.mmd_se)
    }

    /// The two forms differ by at most three combined standard errors.
    pub fn forms_agree(&self) -> bool {
        (self.direct - self.mmd).abs() <= (3.0 * self.combined_se()).max(1e-12)
    }

    /// Precision-weighted average of the two forms.
    pub fn value(&self) -> f64 {
        let (wd, wm) = (self.direct_se.powi(-2), self.mmd_se.powi(-2));
        if !wd.is_finite() {
            return self.direct;
        }
        if !wm.is_finite() {
            return self.mmd;
        }
        (wd * self.direct + wm * self.mmd) / (wd + wm)
    }

    /// `|value - target| <= 3 se`, using the direct form.
    pub fn matches(&self, target: f64) -> bool {
        (self.direct - target).abs() <= (3.0 * self.direct_se).max(1e-12)
    }
}

/// Ratio of means with its delta-method standard error.
fn ratio_with_se(num: &[f64], den: &[f64]) -> (f64, f64) {
    let m = num.len() as f64;
    let nbar = pairwise_sum(num) / m;
    let dbar = pairwise_sum(den) / m;
    let r = nbar / dbar;
    let resid: Vec<f64> = num
        .iter()
        .zip(den)
        .map(|(a, b)| (a - r * b).powi(2))
        .collect();
    let var = pairwise_sum(&resid) / (m - 1.0);
    (r, (var / m).sqrt() / dbar.abs())
}

fn chunked<T: Send>(
    reps: usize,
    seed: u64,
    stream_offset: u64,
    f: impl Fn(&mut KmacRng) -> T + Sync,
) -> Vec<T> {
    let chunks = reps.div_ceil(MC_CHUNK);
    (0..chunks)
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut rng = stream_rng(seed, stream_offset + c as u64);
            let len = MC_CHUNK.min(reps - c * MC_CHUNK);
            (0..len).map(|_| f(&mut rng)).collect::<Vec<_>>()
        })
        .collect()
}

/// Monte Carlo estimate of the population coefficient in two algebraically
/// equivalent forms, computed from independent draws.
pub fn eta_population_mc<M, K>(
    model: &M,
    kernel: &K,
    reps: usize,
    seed: u64,
) -> Result<PopulationEstimate>
where
    M: ConditionalModel + ?Sized,
    K: Kernel + ?Sized,
{
    if reps < MIN_POPULATION_REPS {
        return Err(KmacError::InvalidParameter(format!(
            "need at least {MIN_POPULATION_REPS} replicates, got {reps}"
        )));
    }
    eta_population_mc_unchecked(model, kernel, reps, seed)
}

/// [`eta_population_mc`] without the lower bound on `reps`.
pub fn eta_population_mc_unchecked<M, K>(
    model: &M,
    kernel: &K,
    reps: usize,
    seed: u64,
) -> Result<PopulationEstimate>
where
    M: ConditionalModel + ?Sized,
    K: Kernel + ?Sized,
{
    if reps < 2 {
        return Err(KmacError::InvalidParameter(
            "need at least two replicates".into(),
        ));
    }
    let direct: Vec<(f64, f64)> = chunked(reps, seed, 0, |rng| {
        let x = model.sample_x(rng);
        let y = model.sample_y(&x, rng);
        let y_twin = model.sample_y(&x, rng);
        let x2 = model.sample_x(rng);
        let y2 = model.sample_y(&x2, rng);
        let k_cross = kernel.eval(&y, &y2);
        (
            kernel.eval(&y, &y_twin) - k_cross,
            kernel.eval(&y, &y) - k_cross,
        )
    });
    let offset = reps.div_ceil(MC_CHUNK) as u64;
    let mmd: Vec<(f64, f64)> = chunked(reps, seed, offset, |rng| {
        let x = model.sample_x(rng);
        let y = model.sample_y(&x, rng);
        let y_twin = model.sample_y(&x, rng);
        let x2 = model.sample_x(rng);
        let y2 = model.sample_y(&x2, rng);
        let x3 = model.sample_x(rng);
        let y3 = model.sample_y(&x3, rng);
        let k23 = kernel.eval(&y2, &y3);
        let mmd2 =
            kernel.eval(&y, &y_twin) - kernel.eval(&y, &y2) - kernel.eval(&y_twin, &y3) + k23;
        let half_sq = 0.5 * (kernel.eval(&y2, &y2) + kernel.eval(&y3, &y3)) - k23;
        (mmd2, half_sq)
    });
    let split = |v: &[(f64, f64)]| -> (Vec<f64>, Vec<f64>) { v.iter().copied().unzip() };
    let (dn, dd) = split(&direct);
    let (mn, md) = split(&mmd);
    if !(pairwise_sum(&dd) > 0.0) {
        return Err(KmacError::DegenerateY { denominator: 0.0 });
    }
    let (direct, direct_se) = ratio_with_se(&dn, &dd);
    let (mmd, mmd_se) = ratio_with_se(&mn, &md);
    Ok(PopulationEstimate {
        direct,
        direct_se,
        mmd,
        mmd_se,
        reps,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SettingName {
    Linear,
    Sinusoidal,
    #[serde(rename = "w-shaped")]
    Wshaped,
    Step,
    Semicircular,
    Heterogeneous,
    #[serde(rename = "null-i")]
    NullSettingI,
    #[serde(rename = "null-ii")]
    NullSettingII,
}

impl SettingName {
    pub const ALL: [SettingName; 8] = [
        SettingName::Linear,
        SettingName::Sinusoidal,
        SettingName::Wshaped,
        SettingName::Step,
        SettingName::Semicircular,
        SettingName::Heterogeneous,
        SettingName::NullSettingI,
        SettingName::NullSettingII,
    ];

    pub const POWER: [SettingName; 6] = [
        SettingName::Linear,
        SettingName::Sinusoidal,
        SettingName::Wshaped,
        SettingName::Step,
        SettingName::Semicircular,
        SettingName::Heterogeneous,
    ];

    pub fn is_null(self) -> bool {
        matches!(self, SettingName::NullSettingI | SettingName::NullSettingII)
    }
}

impl fmt::Display for SettingName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SettingName::Linear => "linear",
            SettingName::Sinusoidal => "sinusoidal",
            SettingName::Wshaped => "w-shaped",
            SettingName::Step => "step",
            SettingName::Semicircular => "semicircular",
            SettingName::Heterogeneous => "heterogeneous",
            SettingName::NullSettingI => "null-i",
            SettingName::NullSettingII => "null-ii",
        })
    }
}

impl FromStr for SettingName {
    type Err = KmacError;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .trim()
            .to_ascii_lowercase()
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect();
        Ok(match key.as_str() {
            "linear" => SettingName::Linear,
            "sinusoidal" => SettingName::Sinusoidal,
            "wshaped" => SettingName::Wshaped,
            "step" | "stepfunction" => SettingName::Step,
            "semicircular" => SettingName::Semicircular,
            "heterogeneous" => SettingName::Heterogeneous,
            "nulli" | "nullsettingi" | "null1" => SettingName::NullSettingI,
            "nullii" | "nullsettingii" | "null2" => SettingName::NullSettingII,
            _ => return Err(KmacError::spec(s, "unknown setting")),
        })
    }
}

/// Noise conventions. The power study scales the noise by a factor per
/// setting with `lambda` in `[0, 1]`. The coefficient curves use
/// `cos(8 pi X) + lambda eps` with `lambda` in `[0, 2.5]` for the sinusoidal
/// setting and a standard bivariate Gaussian with correlation `lambda` for
/// the linear one.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Design {
    #[default]
    Power,
    Coefficient,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SettingSpec {
    pub name: SettingName,
    pub lambda: f64,
    pub n: usize,
    pub seed: u64,
    #[serde(default)]
    pub design: Design,
}

impl SettingSpec {
    pub fn new(name: SettingName, lambda: f64, n: usize, seed: u64) -> Self {
        Self {
            name,
            lambda,
            n,
            seed,
            design: Design::Power,
        }
    }

    pub fn coefficient(name: SettingName, lambda: f64, n: usize, seed: u64) -> Self {
        Self {
            design: Design::Coefficient,
            ..Self::new(name, lambda, n, seed)
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(KmacError::InvalidParameter(format!(
                "n must be at least 2, got {}",
                self.n
            )));
        }
        let (lo, hi) = match (self.design, self.name) {
            (_, name) if name.is_null() => (0.0, f64::INFINITY),
            (Design::Power, _) => (0.0, 1.0),
            (Design::Coefficient, SettingName::Sinusoidal) => (0.0, 2.5),
            (Design::Coefficient, SettingName::Linear) => (-1.0, 1.0),
            (Design::Coefficient, name) => {
                return Err(KmacError::InvalidParameter(format!(
                    "the coefficient design covers the linear and sinusoidal settings, not {name}"
                )));
            }
        };
        if !(self.lambda >= lo && self.lambda <= hi) {
            return Err(KmacError::InvalidParameter(format!(
                "lambda for {} must lie in [{lo}, {hi}], got {}",
                self.name, self.lambda
            )));
        }
        Ok(())
    }

    /// `(d1, d2)`.
    pub fn dims(&self) -> (usize, usize) {
        match self.name {
            SettingName::NullSettingI => (5, 4),
            SettingName::NullSettingII => (4, 4),
            _ => (2, 2),
        }
    }
}

/// Step function with values -3, 2, 4, 3 on [-1, -0.05), [-0.05, 0),
/// [0, 0.05) and [0.05, 1].
pub fn step_function(x: f64) -> f64 {
    if x < -0.05 {
        -3.0
    } else if x < 0.0 {
        2.0
    } else if x < 0.05 {
        4.0
    } else {
        3.0
    }
}

fn uniform_pm1(rng: &mut KmacRng) -> f64 {
    rng.random::<f64>() * 2.0 - 1.0
}

fn normal(rng: &mut KmacRng) -> f64 {
    rng.sample(StandardNormal)
}

impl ConditionalModel for SettingSpec {
    fn sample_x(&self, rng: &mut KmacRng) -> Vec<f64> {
        match self.name {
            SettingName::NullSettingI => {
                let mut v: Vec<f64> = (0..4).map(|_| rng.random::<f64>()).collect();
                v.push(v[0] + v[1]);
                v
            }
            SettingName::NullSettingII => (0..4).map(|_| rng.random::<f64>()).collect(),
            SettingName::Linear if self.design == Design::Coefficient => {
                (0..2).map(|_| normal(rng)).collect()
            }
            SettingName::Semicircular => (0..2).map(|_| rng.random::<f64>()).collect(),
            _ => (0..2).map(|_| uniform_pm1(rng)).collect(),
        }
    }

    fn sample_y(&self, x: &[f64], rng: &mut KmacRng) -> Vec<f64> {
        let lambda = self.lambda;
        if self.name.is_null() {
            return (0..4).map(|_| rng.sample::<f64, _>(Exp1)).collect();
        }
        x.iter()
            .map(|&x| match (self.design, self.name) {
                (Design::Coefficient, SettingName::Linear) => {
                    lambda * x + (1.0 - lambda * lambda).sqrt() * normal(rng)
                }
                (Design::Coefficient, _) => {
                    (8.0 * std::f64::consts::PI * x).cos() + lambda * normal(rng)
                }
                (Design::Power, SettingName::Linear) => 0.5 * x + 3.0 * lambda * normal(rng),
                (Design::Power, SettingName::Sinusoidal) => {
                    (8.0 * std::f64::consts::PI * x).cos() + 3.0 * lambda * normal(rng)
                }
                (Design::Power, SettingName::Wshaped) => {
                    let w = if x <= 0.0 {
                        (x + 0.5).abs()
                    } else {
                        (x - 0.5).abs()
                    };
                    w + 0.75 * lambda * normal(rng)
                }
                (Design::Power, SettingName::Step) => {
                    step_function(x) + 10.0 * lambda * normal(rng)
                }
                (Design::Power, SettingName::Semicircular) => {
                    let z = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    z * (1.0 - x * x).sqrt() + 0.9 * lambda * normal(rng)
                }
                (Design::Power, SettingName::Heterogeneous) => {
                    let sigma = if x.abs() <= 0.5 { 1.0 } else { 0.0 };
                    3.0 * (sigma * (1.0 - lambda) + lambda) * normal(rng)
                }
                (Design::Power, SettingName::NullSettingI | SettingName::NullSettingII) => {
                    unreachable!()
                }
            })
            .collect()
    }
}

/// Draws `spec.n` rows of the setting.
pub fn sample_setting(spec: &SettingSpec) -> Result<(DataMatrix, DataMatrix)> {
    spec.validate()?;
    Ok(sample_model(spec, spec.n, spec.seed))
}
