//! Independence tests built on the estimators.
//!
//! The asymptotic tests reject for large `z = N / S`, where `N` is the
//! scaled numerator and `S^2` its variance estimate. Permutation tests
//! relabel the rows of `y` while the graph on `x` stays fixed. Replicate `r`
//! draws its permutation from its own stream `(seed, r)`, so the p-value does
//! not depend on the number of worker threads.

use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{dist, DataMatrix};
use crate::error::{KmacError, Result};
use crate::estimators::{
    cyclic_term, eta_hat_lin_with_scaling, eta_hat_with_scaling, graph_term, AssociationEstimate,
    CltScaling, EstimatorKind, GramSummary,
};
use crate::geograph::{GeoGraph, GraphSpec};
use crate::kernels::{Kernel, KernelSpec};
use crate::ranks::{rank_analysis, rank_clt_scaling, GridSpec, TargetGrid};
use crate::rng::stream_rng;
use crate::stats::{normal_sf, pairwise_sum};

/// Fewest permutations accepted.
pub const MIN_PERMUTATIONS: usize = 19;

/// Quasi-Monte Carlo nodes used for the rank test's variance constants.
pub const DEFAULT_MC_NODES: usize = 100_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum TestMethod {
    AsymptoticStandard,
    AsymptoticLinear,
    AsymptoticRank,
    Permutation { b: usize },
}

impl TestMethod {
    pub fn asymptotic(kind: EstimatorKind) -> Self {
        match kind {
            EstimatorKind::Standard => TestMethod::AsymptoticStandard,
            EstimatorKind::Linear => TestMethod::AsymptoticLinear,
            EstimatorKind::Rank => TestMethod::AsymptoticRank,
        }
    }
}

/// Outcome of one test. `z` is present for asymptotic tests only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub statistic: f64,
    pub z: Option<f64>,
    pub p_value: f64,
    pub method: TestMethod,
    pub estimator_value: f64,
    pub seed: Option<u64>,
    pub runtime_ms: f64,
}

impl TestReport {
    pub fn rejects(&self, alpha: f64) -> bool {
        self.p_value <= alpha
    }

    /// Equality of everything except the wall-clock time.
    pub fn same_outcome(&self, other: &Self) -> bool {
        Self {
            runtime_ms: 0.0,
            ..self.clone()
        } == Self {
            runtime_ms: 0.0,
            ..other.clone()
        }
    }
}

/// Target grids for the rank estimator.
#[derive(Clone, Debug)]
pub struct RankGrids {
    pub x: TargetGrid,
    pub y: TargetGrid,
}

impl RankGrids {
    /// Halton grids in two or more dimensions, lattices in one.
    pub fn default_for(x: &DataMatrix, y: &DataMatrix) -> Result<Self> {
        Self::from_specs(
            GridSpec::default_for(x.ncols()),
            GridSpec::default_for(y.ncols()),
            x,
            y,
        )
    }

    pub fn from_specs(gx: GridSpec, gy: GridSpec, x: &DataMatrix, y: &DataMatrix) -> Result<Self> {
        Ok(Self {
            x: gx.build(x.nrows(), x.ncols())?,
            y: gy.build(y.nrows(), y.ncols())?,
        })
    }
}

fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// Estimate and variance scaling for any estimator kind. Rank grids default
/// as in [`RankGrids::default_for`].
pub fn estimate_and_scale(
    kind: EstimatorKind,
    x: &DataMatrix,
    y: &DataMatrix,
    kernel: &KernelSpec,
    graph_spec: &GraphSpec,
    grids: Option<&RankGrids>,
) -> Result<(AssociationEstimate, CltScaling)> {
    kernel.validate()?;
    match kind {
        EstimatorKind::Standard | EstimatorKind::Linear => {
            if x.nrows() != y.nrows() {
                return Err(KmacError::RowMismatch {
                    x: x.nrows(),
                    y: y.nrows(),
                });
            }
            kernel.validate_data(y)?;
            let graph = graph_spec.build(x)?;
            if kind == EstimatorKind::Standard {
                eta_hat_with_scaling(x, y, kernel, &graph)
            } else {
                eta_hat_lin_with_scaling(x, y, kernel, &graph)
            }
        }
        EstimatorKind::Rank => {
            let owned;
            let grids = match grids {
                Some(g) => g,
                None => {
                    owned = RankGrids::default_for(x, y)?;
                    &owned
                }
            };
            let r = rank_analysis(x, y, kernel, graph_spec, &grids.x, &grids.y)?;
            let scaling = rank_clt_scaling(kernel, y.ncols(), &r.graph, DEFAULT_MC_NODES)?;
            Ok((r.estimate, scaling))
        }
    }
}

/// One-sided test rejecting for large `N / S` with p-value `1 - Phi(z)`.
pub fn asymptotic_test(
    kind: EstimatorKind,
    x: &DataMatrix,
    y: &DataMatrix,
    kernel: &KernelSpec,
    graph_spec: &GraphSpec,
    grids: Option<&RankGrids>,
) -> Result<TestReport> {
    let start = Instant::now();
    let (est, scaling) = estimate_and_scale(kind, x, y, kernel, graph_spec, grids)?;
    if scaling.is_degenerate() {
        return Err(KmacError::DegenerateVariance { s2: scaling.s2 });
    }
    let statistic = est.scaled_numerator();
    let z = statistic / scaling.s2.sqrt();
    Ok(TestReport {
        statistic,
        z: Some(z),
        p_value: normal_sf(z),
        method: TestMethod::asymptotic(kind),
        estimator_value: est.value,
        seed: None,
        runtime_ms: elapsed_ms(start),
    })
}

/// `(1 + #{replicates >= observed}) / (B + 1)`.
pub fn permutation_p_value(observed: f64, replicates: &[f64]) -> f64 {
    let hits = replicates.iter().filter(|&&r| r >= observed).count();
    (1 + hits) as f64 / (replicates.len() + 1) as f64
}

fn check_b(b: usize) -> Result<()> {
    if b < MIN_PERMUTATIONS {
        return Err(KmacError::InvalidParameter(format!(
            "need at least {MIN_PERMUTATIONS} permutations, got {b}"
        )));
    }
    Ok(())
}

/// Evaluates `stat` on `b` independent uniform permutations of `0..n`.
fn replicate<F>(n: usize, b: usize, seed: u64, stat: F) -> Vec<f64>
where
    F: Fn(&[usize]) -> f64 + Sync,
{
    (0..b)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(seed, r as u64 + 1);
            let mut p: Vec<usize> = (0..n).collect();
            p.shuffle(&mut rng);
            stat(&p)
        })
        .collect()
}

fn kernel_permutation<K: Kernel>(
    kind: EstimatorKind,
    y: &DataMatrix,
    kernel: &K,
    graph: &GeoGraph,
    b: usize,
    seed: u64,
) -> (f64, Vec<f64>) {
    let n = y.nrows();
    let root_n = (n as f64).sqrt();
    match kind {
        EstimatorKind::Linear => {
            let stat = |p: Option<&[usize]>| {
                let g = graph_term(y, kernel, graph, p);
                let c = match p {
                    Some(p) => cyclic_term(&y.permute_rows(p), kernel),
                    None => cyclic_term(y, kernel),
                };
                root_n * (g - c)
            };
            (stat(None), replicate(n, b, seed, |p| stat(Some(p))))
        }
        EstimatorKind::Standard | EstimatorKind::Rank => {
            let cross = GramSummary::compute(y, kernel).cross_term();
            let observed = root_n * (graph_term(y, kernel, graph, None) - cross);
            let reps = replicate(n, b, seed, |p| {
                root_n * (graph_term(y, kernel, graph, Some(p)) - cross)
            });
            (observed, reps)
        }
    }
}

/// Permutation calibration of the scaled numerator. For the rank kind the
/// `y` ranks are relabeled, which is the same as re-ranking permuted rows.
pub fn permutation_test(
    kind: EstimatorKind,
    x: &DataMatrix,
    y: &DataMatrix,
    kernel: &KernelSpec,
    graph_spec: &GraphSpec,
    grids: Option<&RankGrids>,
    b: usize,
    seed: u64,
) -> Result<TestReport> {
    let start = Instant::now();
    check_b(b)?;
    kernel.validate()?;
    let (estimate, graph, y_eval) = match kind {
        EstimatorKind::Rank => {
            let owned;
            let grids = match grids {
                Some(g) => g,
                None => {
                    owned = RankGrids::default_for(x, y)?;
                    &owned
                }
            };
            let r = rank_analysis(x, y, kernel, graph_spec, &grids.x, &grids.y)?;
            (r.estimate, r.graph, r.y_ranks)
        }
        EstimatorKind::Standard | EstimatorKind::Linear => {
            kernel.validate_data(y)?;
            let graph = graph_spec.build(x)?;
            let est = if kind == EstimatorKind::Standard {
                crate::estimators::eta_hat(x, y, kernel, &graph)?
            } else {
                crate::estimators::eta_hat_lin(x, y, kernel, &graph)?
            };
            (est, graph, y.clone())
        }
    };
    let (statistic, reps) = kernel_permutation(kind, &y_eval, kernel, &graph, b, seed);
    Ok(TestReport {
        statistic,
        z: None,
        p_value: permutation_p_value(statistic, &reps),
        method: TestMethod::Permutation { b },
        estimator_value: estimate.value,
        seed: Some(seed),
        runtime_ms: elapsed_ms(start),
    })
}

/// Double-centers a symmetric `n x n` matrix in place.
fn double_center(m: &mut [f64], n: usize) {
    let row: Vec<f64> = (0..n)
        .map(|i| pairwise_sum(&m[i * n..(i + 1) * n]) / n as f64)
        .collect();
    let grand = pairwise_sum(&row) / n as f64;
    for i in 0..n {
        for j in 0..n {
            m[i * n + j] += grand - row[i] - row[j];
        }
    }
}

fn pair_matrix(x: &DataMatrix, f: impl Fn(&[f64], &[f64]) -> f64 + Sync) -> Vec<f64> {
    let n = x.nrows();
    (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            (0..n)
                .map(move |j| (i, j))
                .map(|(i, j)| f(x.row(i), x.row(j)))
                .collect::<Vec<_>>()
        })
        .collect()
}

/// `n^-2 sum_ij A_ij B_{p(i) p(j)}`.
fn centered_product(a: &[f64], b: &[f64], n: usize, p: Option<&[usize]>) -> f64 {
    let rows: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let pi = p.map_or(i, |p| p[i]);
            (0..n)
                .map(|j| a[i * n + j] * b[pi * n + p.map_or(j, |p| p[j])])
                .sum()
        })
        .collect();
    pairwise_sum(&rows) / (n * n) as f64
}

fn matrix_permutation_test(
    n: usize,
    mut a: Vec<f64>,
    mut b_mat: Vec<f64>,
    b: usize,
    seed: u64,
    start: Instant,
) -> Result<TestReport> {
    double_center(&mut a, n);
    double_center(&mut b_mat, n);
    let observed = centered_product(&a, &b_mat, n, None);
    let reps = replicate(n, b, seed, |p| centered_product(&a, &b_mat, n, Some(p)));
    Ok(TestReport {
        statistic: observed,
        z: None,
        p_value: permutation_p_value(observed, &reps),
        method: TestMethod::Permutation { b },
        estimator_value: observed,
        seed: Some(seed),
        runtime_ms: elapsed_ms(start),
    })
}

fn check_pair(x: &DataMatrix, y: &DataMatrix) -> Result<()> {
    if x.nrows() != y.nrows() {
        return Err(KmacError::RowMismatch {
            x: x.nrows(),
            y: y.nrows(),
        });
    }
    if x.nrows() < 4 {
        return Err(KmacError::TooFewRows {
            needed: 4,
            got: x.nrows(),
        });
    }
    x.check_finite()?;
    y.check_finite()
}

/// Squared sample distance covariance (V-statistic).
pub fn dcov2(x: &DataMatrix, y: &DataMatrix) -> Result<f64> {
    check_pair(x, y)?;
    let n = x.nrows();
    let mut a = pair_matrix(x, dist);
    let mut b = pair_matrix(y, dist);
    double_center(&mut a, n);
    double_center(&mut b, n);
    Ok(centered_product(&a, &b, n, None))
}

/// Squared sample distance correlation `dCov^2(x, y) / sqrt(dCov^2(x, x) dCov^2(y, y))`,
/// or 0 when either sample is constant.
pub fn dcor2(x: &DataMatrix, y: &DataMatrix) -> Result<f64> {
    check_pair(x, y)?;
    let n = x.nrows();
    let mut a = pair_matrix(x, dist);
    let mut b = pair_matrix(y, dist);
    double_center(&mut a, n);
    double_center(&mut b, n);
    let xy = centered_product(&a, &b, n, None);
    let xx = centered_product(&a, &a, n, None);
    let yy = centered_product(&b, &b, n, None);
    let den = (xx * yy).sqrt();
    Ok(if den > 0.0 { xy / den } else { 0.0 })
}

/// Distance covariance test with permutation calibration.
pub fn dcov_test(x: &DataMatrix, y: &DataMatrix, b: usize, seed: u64) -> Result<TestReport> {
    let start = Instant::now();
    check_b(b)?;
    check_pair(x, y)?;
    if (1..y.nrows()).all(|i| y.row(i) == y.row(0)) {
        return Err(KmacError::DegenerateY { denominator: 0.0 });
    }
    if (1..x.nrows()).all(|i| x.row(i) == x.row(0)) {
        return Err(KmacError::DegenerateX);
    }
    matrix_permutation_test(
        x.nrows(),
        pair_matrix(x, dist),
        pair_matrix(y, dist),
        b,
        seed,
        start,
    )
}

/// HSIC `trace(K H L H) / n^2` with `kernel` on both samples, calibrated by
/// permutation.
pub fn hsic_test(
    x: &DataMatrix,
    y: &DataMatrix,
    kernel: &KernelSpec,
    b: usize,
    seed: u64,
) -> Result<TestReport> {
    let start = Instant::now();
    check_b(b)?;
    check_pair(x, y)?;
    kernel.validate()?;
    kernel.validate_data(x)?;
    kernel.validate_data(y)?;
    if (1..y.nrows()).all(|i| y.row(i) == y.row(0)) {
        return Err(KmacError::DegenerateY { denominator: 0.0 });
    }
    let k = pair_matrix(x, |a, b| kernel.eval(a, b));
    let l = pair_matrix(y, |a, b| kernel.eval(a, b));
    matrix_permutation_test(x.nrows(), k, l, b, seed, start)
}
