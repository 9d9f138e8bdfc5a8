//! Experiment protocols: coefficient curves, null QQ tables, log-log rate
//! checks and power curves, each producing an [`ExperimentTable`].
//!
//! Replicate `(i, r)` of an experiment (grid point `i`, repetition `r`)
//! draws its data from a seed derived from the run seed and both indices,
//! so tables are reproducible regardless of scheduling.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{json, Value};

use crate::data::{write_csv, DataMatrix};
use crate::error::{KmacError, Result};
use crate::estimators::{eta_hat, eta_hat_lin, AssociationEstimate, EstimatorKind};
use crate::geograph::GraphSpec;
use crate::inference::{
    dcor2, dcov_test, estimate_and_scale, hsic_test, permutation_test, RankGrids,
};
use crate::kernels::KernelSpec;
use crate::oracles::{sample_setting, SettingName, SettingSpec};
use crate::ranks::eta_hat_rank;
use crate::rng::derive_seed;
use crate::stats::{fit_slope, ks_normal, mean, normal_quantile, variance};

/// Seed for replicate `(a, b)` of a run.
pub fn replicate_seed(seed: u64, a: u64, b: u64) -> u64 {
    derive_seed(derive_seed(seed, a), b)
}

/// Desk-scale runs use fewer replicates and finish in minutes; full scale
/// uses 1000 replicates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    #[default]
    Desk,
    Full,
}

/// An estimator, kernel and graph, written `kind/kernel/graph`, for example
/// `linear/distance:alpha=1/knn:k=20`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Configuration {
    pub kind: EstimatorKind,
    pub kernel: KernelSpec,
    pub graph: GraphSpec,
}

impl Configuration {
    pub fn new(kind: EstimatorKind, kernel: KernelSpec, graph: GraphSpec) -> Self {
        Self {
            kind,
            kernel,
            graph,
        }
    }

    /// The estimate on `(x, y)`; rank grids take their defaults.
    pub fn evaluate(&self, x: &DataMatrix, y: &DataMatrix) -> Result<AssociationEstimate> {
        self.kernel.validate()?;
        match self.kind {
            EstimatorKind::Standard | EstimatorKind::Linear => {
                self.kernel.validate_data(y)?;
                let g = self.graph.build(x)?;
                if self.kind == EstimatorKind::Standard {
                    eta_hat(x, y, &self.kernel, &g)
                } else {
                    eta_hat_lin(x, y, &self.kernel, &g)
                }
            }
            EstimatorKind::Rank => {
                let grids = RankGrids::default_for(x, y)?;
                eta_hat_rank(x, y, &self.kernel, &self.graph, &grids.x, &grids.y)
            }
        }
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.kind, self.kernel, self.graph)
    }
}

impl FromStr for Configuration {
    type Err = KmacError;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split('/').collect();
        if parts.len() != 3 {
            return Err(KmacError::spec(s, "expected estimator/kernel/graph"));
        }
        Ok(Self {
            kind: parts[0].parse()?,
            kernel: parts[1].parse()?,
            graph: parts[2].parse()?,
        })
    }
}

impl Serialize for Configuration {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Configuration {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

/// Named numeric columns plus scalar summaries and the metadata needed to
/// rerun the experiment. Non-finite cells are written as `NA` (CSV) or
/// `null` (JSON).
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentTable {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub summary: BTreeMap<String, f64>,
    pub metadata: Value,
}

impl ExperimentTable {
    pub fn new(name: &str, columns: Vec<String>, config: Value) -> Self {
        Self {
            name: name.to_string(),
            columns,
            rows: Vec::new(),
            summary: BTreeMap::new(),
            metadata: json!({
                "experiment": name,
                "version": env!("CARGO_PKG_VERSION"),
                "config": config,
            }),
        }
    }

    pub fn push_row(&mut self, row: Vec<f64>) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(KmacError::DimensionMismatch {
                expected: self.columns.len(),
                got: row.len(),
            });
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    pub fn summary_value(&self, key: &str) -> Option<f64> {
        self.summary.get(key).copied()
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("# metadata: {}\n", self.metadata));
        for (k, v) in &self.summary {
            out.push_str(&format!("# summary {k}: {}\n", fmt_cell(*v)));
        }
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| fmt_cell(*v)).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> Value {
        let num = |v: f64| if v.is_finite() { json!(v) } else { Value::Null };
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|r| Value::Array(r.iter().map(|v| num(*v)).collect()))
            .collect();
        let summary: serde_json::Map<String, Value> = self
            .summary
            .iter()
            .map(|(k, v)| (k.clone(), num(*v)))
            .collect();
        json!({
            "metadata": self.metadata,
            "summary": summary,
            "columns": self.columns,
            "rows": rows,
        })
    }
}

fn fmt_cell(v: f64) -> String {
    if v.is_finite() {
        format!("{v:?}")
    } else {
        "NA".to_string()
    }
}

pub fn write_table(
    table: &ExperimentTable,
    path: impl AsRef<Path>,
    format: OutputFormat,
) -> Result<()> {
    let text = match format {
        OutputFormat::Csv => table.to_csv_string(),
        OutputFormat::Json => serde_json::to_string_pretty(&table.to_json())? + "\n",
    };
    let path = path.as_ref();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::File::create(path)?.write_all(text.as_bytes())?;
    Ok(())
}

/// Draws a setting and writes `x.csv` and `y.csv` into `dir`.
pub fn simulate_to_dir(spec: &SettingSpec, dir: impl AsRef<Path>) -> Result<(PathBuf, PathBuf)> {
    let (x, y) = sample_setting(spec)?;
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let (px, py) = (dir.join("x.csv"), dir.join("y.csv"));
    write_csv(&x, &px)?;
    write_csv(&y, &py)?;
    Ok((px, py))
}

fn parse_configs(specs: &[&str]) -> Vec<Configuration> {
    specs
        .iter()
        .map(|s| s.parse().expect("built-in configuration"))
        .collect()
}

fn grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    (0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
        .collect()
}

fn sd(xs: &[f64]) -> f64 {
    variance(xs).sqrt()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoeffCurveConfig {
    pub setting: SettingName,
    /// Noise levels for the sinusoidal setting, correlations for the linear one.
    pub grid: Vec<f64>,
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    pub configs: Vec<Configuration>,
    pub include_dcor: bool,
}

impl CoeffCurveConfig {
    pub fn new(setting: SettingName, scale: Scale, seed: u64) -> Self {
        let grid = match setting {
            SettingName::Linear => grid(0.0, 1.0, 11),
            _ => grid(0.0, 2.5, 11),
        };
        let reps = match scale {
            Scale::Desk => 20,
            Scale::Full => 1000,
        };
        Self {
            setting,
            grid,
            n: 2000,
            reps,
            seed,
            configs: parse_configs(&[
                "standard/distance:alpha=1/knn:k=1",
                "standard/gaussian:sigma=1/mst",
                "linear/distance:alpha=1/knn:k=1",
                "linear/distance:alpha=1/knn:k=20",
            ]),
            include_dcor: true,
        }
    }
}

/// Mean (and spread) of each configured estimator over repeated draws, per
/// grid point, with the squared distance correlation for comparison.
pub fn run_coeff_curve(cfg: &CoeffCurveConfig) -> Result<ExperimentTable> {
    if !matches!(cfg.setting, SettingName::Sinusoidal | SettingName::Linear) {
        return Err(KmacError::InvalidParameter(format!(
            "coefficient curves use the sinusoidal or linear setting, not {}",
            cfg.setting
        )));
    }
    if cfg.grid.is_empty() || cfg.reps == 0 {
        return Err(KmacError::InvalidParameter(
            "need a non-empty grid and at least one replicate".into(),
        ));
    }
    for &g in &cfg.grid {
        SettingSpec::coefficient(cfg.setting, g, cfg.n, 0).validate()?;
    }
    let mut columns = vec!["lambda".to_string()];
    for c in &cfg.configs {
        columns.push(format!("mean_{c}"));
        columns.push(format!("sd_{c}"));
    }
    if cfg.include_dcor {
        columns.push("mean_dcor2".into());
        columns.push("sd_dcor2".into());
    }
    let mut table = ExperimentTable::new("coeff-curve", columns, serde_json::to_value(cfg)?);
    for (gi, &g) in cfg.grid.iter().enumerate() {
        let per_rep: Vec<Vec<f64>> = (0..cfg.reps)
            .into_par_iter()
            .map(|r| {
                let spec = SettingSpec::coefficient(
                    cfg.setting,
                    g,
                    cfg.n,
                    replicate_seed(cfg.seed, gi as u64, r as u64),
                );
                let (x, y) = sample_setting(&spec)?;
                let mut vals = Vec::with_capacity(cfg.configs.len() + 1);
                for c in &cfg.configs {
                    vals.push(c.evaluate(&x, &y)?.value);
                }
                if cfg.include_dcor {
                    vals.push(dcor2(&x, &y)?);
                }
                Ok(vals)
            })
            .collect::<Result<_>>()?;
        let mut row = vec![g];
        for j in 0..per_rep[0].len() {
            let v: Vec<f64> = per_rep.iter().map(|r| r[j]).collect();
            row.push(mean(&v));
            row.push(if v.len() > 1 { sd(&v) } else { f64::NAN });
        }
        table.push_row(row)?;
    }
    Ok(table)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QqConfig {
    pub setting: SettingName,
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    pub config: Configuration,
}

/// Fewest replicates accepted for a QQ table.
pub const MIN_QQ_REPS: usize = 200;

impl QqConfig {
    pub fn new(setting: SettingName, config: Configuration, scale: Scale, seed: u64) -> Self {
        let (n, reps) = match scale {
            Scale::Desk => (500, 500),
            Scale::Full => (2000, 1000),
        };
        Self {
            setting,
            n,
            reps,
            seed,
            config,
        }
    }
}

/// Sorted standardized statistics `N / S` under a null setting against
/// normal quantiles, with a Kolmogorov-Smirnov summary.
pub fn run_qq_null(cfg: &QqConfig) -> Result<ExperimentTable> {
    if !cfg.setting.is_null() {
        return Err(KmacError::InvalidParameter(format!(
            "{} is not a null setting",
            cfg.setting
        )));
    }
    if cfg.reps < MIN_QQ_REPS {
        return Err(KmacError::InvalidParameter(format!(
            "QQ tables need at least {MIN_QQ_REPS} replicates, got {}",
            cfg.reps
        )));
    }
    let zs: Vec<Option<f64>> = (0..cfg.reps)
        .into_par_iter()
        .map(|r| {
            let spec = SettingSpec::new(
                cfg.setting,
                0.0,
                cfg.n,
                replicate_seed(cfg.seed, 0, r as u64),
            );
            let (x, y) = sample_setting(&spec)?;
            let c = &cfg.config;
            let (est, scaling) = estimate_and_scale(c.kind, &x, &y, &c.kernel, &c.graph, None)?;
            Ok((!scaling.is_degenerate()).then(|| est.scaled_numerator() / scaling.s2.sqrt()))
        })
        .collect::<Result<_>>()?;
    let degenerate = zs.iter().filter(|z| z.is_none()).count();
    if degenerate * 100 > cfg.reps {
        return Err(KmacError::FrequentDegeneracy {
            count: degenerate,
            reps: cfg.reps,
        });
    }
    let mut z: Vec<f64> = zs.into_iter().flatten().collect();
    z.sort_by(f64::total_cmp);
    let m = z.len();
    let mut table = ExperimentTable::new(
        "qq-null",
        vec!["index".into(), "z".into(), "normal_quantile".into()],
        serde_json::to_value(cfg)?,
    );
    for (i, &v) in z.iter().enumerate() {
        table.push_row(vec![
            (i + 1) as f64,
            v,
            normal_quantile((i as f64 + 0.5) / m as f64),
        ])?;
    }
    let ks = ks_normal(&z);
    table.summary.insert("ks_distance".into(), ks.distance);
    table.summary.insert("ks_p_value".into(), ks.p_value);
    table.summary.insert("mean_z".into(), mean(&z));
    table.summary.insert("sd_z".into(), sd(&z));
    table
        .summary
        .insert("degenerate_reps".into(), degenerate as f64);
    Ok(table)
}

/// A null setting paired with a configuration, written
/// `setting/kind/kernel/graph`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateCase {
    pub setting: SettingName,
    pub config: Configuration,
}

impl fmt::Display for RateCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.setting, self.config)
    }
}

impl FromStr for RateCase {
    type Err = KmacError;

    fn from_str(s: &str) -> Result<Self> {
        let (setting, rest) = s
            .split_once('/')
            .ok_or_else(|| KmacError::spec(s, "expected setting/estimator/kernel/graph"))?;
        Ok(Self {
            setting: setting.parse()?,
            config: rest.parse()?,
        })
    }
}

impl Serialize for RateCase {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for RateCase {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LogLogConfig {
    pub cases: Vec<RateCase>,
    pub n_grid: Vec<usize>,
    pub reps: usize,
    pub seed: u64,
}

/// `round(2^(8 + k/4))` for `k = 0..=12`: thirteen sizes from 256 to 2048.
pub fn quarter_power_grid() -> Vec<usize> {
    (0..=12)
        .map(|k| 2f64.powf(8.0 + k as f64 / 4.0).round() as usize)
        .collect()
}

impl LogLogConfig {
    pub fn new(scale: Scale, seed: u64) -> Self {
        let cases = [
            "null-i/standard/gaussian:sigma=1/mst",
            "null-i/standard/gaussian:sigma=1/knn:k=1",
            "null-ii/linear/distance:alpha=1/knn:k=1",
            "null-ii/linear/distance:alpha=1/knn:k=20",
        ];
        Self {
            cases: cases
                .iter()
                .map(|c| c.parse().expect("built-in case"))
                .collect(),
            n_grid: quarter_power_grid(),
            reps: match scale {
                Scale::Desk => 100,
                Scale::Full => 1000,
            },
            seed,
        }
    }
}

/// Standard deviation of the estimator's numerator across replicates at each
/// sample size, and the least-squares slope of `log sd` on `log n` per case
/// (`slope_<i>`, `ci_low_<i>`, `ci_high_<i>` in the summary, `i` indexing
/// `cases`).
pub fn run_loglog_rate(cfg: &LogLogConfig) -> Result<ExperimentTable> {
    if cfg.n_grid.len() < 3 || cfg.reps < 2 || cfg.cases.is_empty() {
        return Err(KmacError::InvalidParameter(
            "need at least three sample sizes, two replicates and one case".into(),
        ));
    }
    let mut table = ExperimentTable::new(
        "loglog",
        vec![
            "case".into(),
            "n".into(),
            "sd".into(),
            "log_n".into(),
            "log_sd".into(),
        ],
        serde_json::to_value(cfg)?,
    );
    for (ci, case) in cfg.cases.iter().enumerate() {
        let (mut lx, mut ly) = (Vec::new(), Vec::new());
        for (ni, &n) in cfg.n_grid.iter().enumerate() {
            let nums: Vec<f64> = (0..cfg.reps)
                .into_par_iter()
                .map(|r| {
                    let seed =
                        replicate_seed(derive_seed(cfg.seed, ci as u64), ni as u64, r as u64);
                    let (x, y) = sample_setting(&SettingSpec::new(case.setting, 0.0, n, seed))?;
                    Ok(case.config.evaluate(&x, &y)?.numerator)
                })
                .collect::<Result<_>>()?;
            let s = sd(&nums);
            lx.push((n as f64).ln());
            ly.push(s.ln());
            table.push_row(vec![ci as f64, n as f64, s, (n as f64).ln(), s.ln()])?;
        }
        let fit = fit_slope(&lx, &ly);
        table.summary.insert(format!("slope_{ci}"), fit.slope);
        table.summary.insert(format!("ci_low_{ci}"), fit.ci_low);
        table.summary.insert(format!("ci_high_{ci}"), fit.ci_high);
    }
    Ok(table)
}

/// A test in a power study: a permutation-calibrated association test or one
/// of the two baselines. Written as a configuration string, `dcor` or `hsic`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PowerTest {
    Kmac(Configuration),
    Dcor,
    Hsic,
}

impl fmt::Display for PowerTest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PowerTest::Kmac(c) => c.fmt(f),
            PowerTest::Dcor => f.write_str("dcor"),
            PowerTest::Hsic => f.write_str("hsic"),
        }
    }
}

impl FromStr for PowerTest {
    type Err = KmacError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dcor" | "dcov" => Ok(PowerTest::Dcor),
            "hsic" | "dhsic" => Ok(PowerTest::Hsic),
            _ => Ok(PowerTest::Kmac(s.parse()?)),
        }
    }
}

impl Serialize for PowerTest {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PowerTest {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PowerConfig {
    pub setting: SettingName,
    pub lambdas: Vec<f64>,
    pub n: usize,
    pub b: usize,
    pub reps: usize,
    pub alpha: f64,
    pub seed: u64,
    pub tests: Vec<PowerTest>,
}

impl PowerConfig {
    pub fn new(setting: SettingName, scale: Scale, seed: u64) -> Self {
        let tests = [
            "standard/distance:alpha=1/knn:k=1",
            "standard/distance:alpha=1/knn:k=20",
            "linear/distance:alpha=1/knn:k=1",
            "linear/distance:alpha=1/knn:k=20",
            "dcor",
            "hsic",
        ];
        Self {
            setting,
            lambdas: grid(0.0, 1.0, 6),
            n: 300,
            b: 1000,
            reps: match scale {
                Scale::Desk => 200,
                Scale::Full => 1000,
            },
            alpha: 0.05,
            seed,
            tests: tests
                .iter()
                .map(|t| t.parse().expect("built-in test"))
                .collect(),
        }
    }
}

/// Rejection rate of each test at level `alpha`, per noise level. All tests
/// in a replicate see the same dataset.
pub fn run_power_curve(cfg: &PowerConfig) -> Result<ExperimentTable> {
    if cfg.setting.is_null() {
        return Err(KmacError::InvalidParameter(format!(
            "{} has no dependence to detect",
            cfg.setting
        )));
    }
    if cfg.lambdas.is_empty() || cfg.reps == 0 || cfg.tests.is_empty() {
        return Err(KmacError::InvalidParameter(
            "need noise levels, replicates and tests".into(),
        ));
    }
    if !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
        return Err(KmacError::InvalidParameter(format!(
            "alpha must lie in (0, 1), got {}",
            cfg.alpha
        )));
    }
    for &l in &cfg.lambdas {
        SettingSpec::new(cfg.setting, l, cfg.n, 0).validate()?;
    }
    let hsic_kernel = KernelSpec::gaussian();
    let mut columns = vec!["lambda".to_string()];
    columns.extend(cfg.tests.iter().map(|t| format!("power_{t}")));
    let mut table = ExperimentTable::new("power", columns, serde_json::to_value(cfg)?);
    for (li, &lambda) in cfg.lambdas.iter().enumerate() {
        let rejections: Vec<Vec<bool>> = (0..cfg.reps)
            .into_par_iter()
            .map(|r| {
                let seed = replicate_seed(cfg.seed, li as u64, r as u64);
                let (x, y) = sample_setting(&SettingSpec::new(cfg.setting, lambda, cfg.n, seed))?;
                cfg.tests
                    .iter()
                    .enumerate()
                    .map(|(ti, t)| {
                        let perm_seed = derive_seed(seed, ti as u64 + 1);
                        let report = match t {
                            PowerTest::Kmac(c) => permutation_test(
                                c.kind, &x, &y, &c.kernel, &c.graph, None, cfg.b, perm_seed,
                            )?,
                            PowerTest::Dcor => dcov_test(&x, &y, cfg.b, perm_seed)?,
                            PowerTest::Hsic => hsic_test(&x, &y, &hsic_kernel, cfg.b, perm_seed)?,
                        };
                        Ok(report.rejects(cfg.alpha))
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        let mut row = vec![lambda];
        for ti in 0..cfg.tests.len() {
            let hits = rejections.iter().filter(|r| r[ti]).count();
            row.push(hits as f64 / cfg.reps as f64);
        }
        table.push_row(row)?;
    }
    Ok(table)
}
