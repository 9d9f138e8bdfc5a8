//! Graph-based kernel measures of association and the scalings that make
//! their numerators asymptotically pivotal under independence.
//!
//! For a graph `G` on the covariates and a kernel `K` on the responses,
//!
//! ```text
//! graph_term = n^-1 sum_i d_i^-1 sum_{j ~ i} K(Y_i, Y_j)
//! cross_term = (n(n-1))^-1 sum_{i != j} K(Y_i, Y_j)      (standard)
//!            = n^-1 sum_i K(Y_i, Y_{i+1}),  Y_{n+1} = Y_1  (linear)
//! self_term  = n^-1 sum_i K(Y_i, Y_i)
//! value      = (graph_term - cross_term) / (self_term - cross_term)
//! ```
//!
//! The denominator is the average squared feature-space distance between
//! distinct responses, obtained from kernel values alone via
//! `||K(., a) - K(., b)||^2 = K(a, a) + K(b, b) - 2 K(a, b)`.
//!
//! Values are reported raw. At finite `n` they can fall slightly outside
//! `[0, 1]`.
//!
//! All `O(n^2)` reductions compute one partial sum per row and combine the
//! rows with [`pairwise_sum`], so results do not depend on the thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{dist, DataMatrix};
use crate::error::{KmacError, Result};
use crate::geograph::{GeoGraph, GraphStats};
use crate::kernels::Kernel;
use crate::stats::pairwise_sum;

/// Which estimator produced a value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Standard,
    Linear,
    Rank,
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EstimatorKind::Standard => "standard",
            EstimatorKind::Linear => "linear",
            EstimatorKind::Rank => "rank",
        })
    }
}

impl std::str::FromStr for EstimatorKind {
    type Err = KmacError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "standard" => Ok(EstimatorKind::Standard),
            "linear" | "lin" => Ok(EstimatorKind::Linear),
            "rank" => Ok(EstimatorKind::Rank),
            _ => Err(KmacError::spec(
                s,
                "estimator must be standard, linear or rank",
            )),
        }
    }
}

/// An estimate together with the pieces it was assembled from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssociationEstimate {
    pub value: f64,
    pub numerator: f64,
    pub denominator: f64,
    pub graph_term: f64,
    pub cross_term: f64,
    pub self_term: f64,
    pub n: usize,
    pub kind: EstimatorKind,
}

impl AssociationEstimate {
    /// `sqrt(n) * numerator`, the statistic whose null law is asymptotically normal.
    pub fn scaled_numerator(&self) -> f64 {
        (self.n as f64).sqrt() * self.numerator
    }
}

/// Moment estimates, graph averages and the resulting variance estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CltScaling {
    pub a_hat: f64,
    pub b_hat: f64,
    pub c_hat: f64,
    pub g1: f64,
    pub g2: f64,
    pub g3: f64,
    pub s2: f64,
}

/// Below this the asymptotic test refuses to standardize.
pub const MIN_VARIANCE: f64 = 1e-12;

impl CltScaling {
    /// Assembles the variance estimate for the U-statistic cross term:
    ///
    /// ```text
    /// s2 = a (g1 + g3 - 2/(n-1))
    ///    + b (g2 - 2 g1 - 2 g3 - 1 + 4/(n-1))
    ///    + c (g1 + g3 - g2 + (n-3)/(n-1))
    /// ```
    pub fn standard(a: f64, b: f64, c: f64, stats: GraphStats, n: usize) -> Self {
        let GraphStats { g1, g2, g3 } = stats;
        let m = n as f64 - 1.0;
        let s2 = a * (g1 + g3 - 2.0 / m)
            + b * (g2 - 2.0 * g1 - 2.0 * g3 - 1.0 + 4.0 / m)
            + c * (g1 + g3 - g2 + (n as f64 - 3.0) / m);
        Self {
            a_hat: a,
            b_hat: b,
            c_hat: c,
            g1,
            g2,
            g3,
            s2,
        }
    }

    /// Variance estimate for the cyclic cross term:
    /// `a (g1 + g3 + 1) + b (g2 - 2 g1 - 2 g3 - 3) + c (2 + g1 + g3 - g2)`.
    pub fn linear(a: f64, b: f64, c: f64, stats: GraphStats) -> Self {
        let GraphStats { g1, g2, g3 } = stats;
        let s2 =
            a * (g1 + g3 + 1.0) + b * (g2 - 2.0 * g1 - 2.0 * g3 - 3.0) + c * (2.0 + g1 + g3 - g2);
        Self {
            a_hat: a,
            b_hat: b,
            c_hat: c,
            g1,
            g2,
            g3,
            s2,
        }
    }

    pub fn is_degenerate(&self) -> bool {
        !(self.s2 > MIN_VARIANCE) || !self.s2.is_finite()
    }
}

/// Exact variance of `sqrt(n) (graph_term - cross_term)` over uniformly random
/// relabelings of the responses, for a fixed graph and response multiset
/// with distinct-tuple moments `(a, b, c)`:
///
/// ```text
/// (g1 + g3)(a - 2b + c) + (g2 - 1)(b - c) - 2 (a - 2b + c) / (n - 1)
/// ```
pub fn permutation_variance(a: f64, b: f64, c: f64, stats: GraphStats, n: usize) -> f64 {
    let GraphStats { g1, g2, g3 } = stats;
    let abc = a - 2.0 * b + c;
    (g1 + g3) * abc + (g2 - 1.0) * (b - c) - 2.0 * abc / (n as f64 - 1.0)
}

pub(crate) fn check_inputs(
    x: &DataMatrix,
    y: &DataMatrix,
    graph: &GeoGraph,
    min_n: usize,
) -> Result<()> {
    if x.nrows() != y.nrows() {
        return Err(KmacError::RowMismatch {
            x: x.nrows(),
            y: y.nrows(),
        });
    }
    check_y_graph(y, graph, min_n)
}

fn check_y_graph(y: &DataMatrix, graph: &GeoGraph, min_n: usize) -> Result<()> {
    if graph.n() != y.nrows() {
        return Err(KmacError::GraphSizeMismatch {
            graph: graph.n(),
            sample: y.nrows(),
        });
    }
    if y.nrows() < min_n {
        return Err(KmacError::TooFewRows {
            needed: min_n,
            got: y.nrows(),
        });
    }
    y.check_finite()
}

/// `n^-1 sum_i d_i^-1 sum_{j ~ i} K(Y_{p(i)}, Y_{p(j)})` where `p` is the
/// optional relabeling of responses.
pub fn graph_term<K: Kernel + ?Sized>(
    y: &DataMatrix,
    kernel: &K,
    graph: &GeoGraph,
    perm: Option<&[usize]>,
) -> f64 {
    let n = graph.n();
    let at = |i: usize| match perm {
        Some(p) => p[i],
        None => i,
    };
    let per_vertex: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let yi = y.row(at(i));
            let nbrs = graph.neighbors(i);
            let mut v: Vec<f64> = nbrs
                .iter()
                .map(|&j| kernel.eval(yi, y.row(at(j))))
                .collect();
            v.sort_unstable_by(f64::total_cmp);
            v.iter().sum::<f64>() / nbrs.len() as f64
        })
        .collect();
    sorted_sum(per_vertex) / n as f64
}

/// Sum that does not depend on the order of `v`.
pub(crate) fn sorted_sum(mut v: Vec<f64>) -> f64 {
    v.sort_unstable_by(f64::total_cmp);
    pairwise_sum(&v)
}

/// Row indices sorted lexicographically by row contents.
pub(crate) fn canonical_order(y: &DataMatrix) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..y.nrows()).collect();
    idx.sort_by(|&a, &b| {
        y.row(a)
            .iter()
            .zip(y.row(b))
            .map(|(p, q)| p.total_cmp(q))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    idx
}

/// Per-row Gram sums: `r_i = sum_{j != i} K_ij`, `q_i = sum_{j != i} K_ij^2`
/// and the diagonal `K_ii`. Rows are visited in lexicographic order of `Y`,
/// so every aggregate is identical for any ordering of the sample.
#[derive(Clone, Debug)]
pub struct GramSummary {
    pub row_sums: Vec<f64>,
    pub row_square_sums: Vec<f64>,
    pub diag: Vec<f64>,
}

impl GramSummary {
    pub fn compute<K: Kernel + ?Sized>(y: &DataMatrix, kernel: &K) -> Self {
        let order = canonical_order(y);
        let rows: Vec<(f64, f64, f64)> = order
            .par_iter()
            .map(|&i| {
                let yi = y.row(i);
                let (mut r, mut q) = (0.0, 0.0);
                for &j in &order {
                    if j != i {
                        let k = kernel.eval(yi, y.row(j));
                        r += k;
                        q += k * k;
                    }
                }
                (r, q, kernel.eval(yi, yi))
            })
            .collect();
        Self {
            row_sums: rows.iter().map(|t| t.0).collect(),
            row_square_sums: rows.iter().map(|t| t.1).collect(),
            diag: rows.iter().map(|t| t.2).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.diag.len()
    }

    /// U-statistic mean of `K(Y_i, Y_j)` over distinct pairs.
    pub fn cross_term(&self) -> f64 {
        let n = self.n() as f64;
        pairwise_sum(&self.row_sums) / (n * (n - 1.0))
    }

    pub fn self_term(&self) -> f64 {
        pairwise_sum(&self.diag) / self.n() as f64
    }

    /// The distinct-tuple U-statistics `(a, b, c)` from row sums:
    ///
    /// ```text
    /// sum_{(i,j,l) distinct} K_ij K_il     = sum_i r_i^2 - S2
    /// sum_{(i,j,l,m) distinct} K_ij K_lm  = S1^2 - 4 sum_i r_i^2 + 2 S2
    /// ```
    /// with `S1 = sum_i r_i` and `S2 = sum_i q_i`.
    pub fn moments(&self) -> (f64, f64, f64) {
        let n = self.n() as f64;
        let s1 = pairwise_sum(&self.row_sums);
        let s2 = pairwise_sum(&self.row_square_sums);
        let rr: Vec<f64> = self.row_sums.iter().map(|r| r * r).collect();
        let rr = pairwise_sum(&rr);
        let a = s2 / (n * (n - 1.0));
        let b = (rr - s2) / (n * (n - 1.0) * (n - 2.0));
        let c = (s1 * s1 - 4.0 * rr + 2.0 * s2) / (n * (n - 1.0) * (n - 2.0) * (n - 3.0));
        (a, b, c)
    }
}

/// `n^-1 sum_i K(Y_i, Y_{i+1})` with indices taken modulo `n`.
pub fn cyclic_term<K: Kernel + ?Sized>(y: &DataMatrix, kernel: &K) -> f64 {
    let n = y.nrows();
    let v: Vec<f64> = (0..n)
        .map(|i| kernel.eval(y.row(i), y.row((i + 1) % n)))
        .collect();
    pairwise_sum(&v) / n as f64
}

fn assemble(
    graph_term: f64,
    cross_term: f64,
    self_term: f64,
    n: usize,
    kind: EstimatorKind,
) -> Result<AssociationEstimate> {
    let numerator = graph_term - cross_term;
    let denominator = self_term - cross_term;
    if !(denominator > 1e-12 * self_term.abs().max(1.0)) || !numerator.is_finite() {
        return Err(KmacError::DegenerateY { denominator });
    }
    Ok(AssociationEstimate {
        value: numerator / denominator,
        numerator,
        denominator,
        graph_term,
        cross_term,
        self_term,
        n,
        kind,
    })
}

pub(crate) fn estimate_with_summary<K: Kernel + ?Sized>(
    y: &DataMatrix,
    kernel: &K,
    graph: &GeoGraph,
    summary: &GramSummary,
    kind: EstimatorKind,
) -> Result<AssociationEstimate> {
    assemble(
        graph_term(y, kernel, graph, None),
        summary.cross_term(),
        summary.self_term(),
        y.nrows(),
        kind,
    )
}

/// The kernel measure of association with the U-statistic cross term.
pub fn eta_hat<K: Kernel + ?Sized>(
    x: &DataMatrix,
    y: &DataMatrix,
    kernel: &K,
    graph: &GeoGraph,
) -> Result<AssociationEstimate> {
    check_inputs(x, y, graph, 4)?;
    let summary = GramSummary::compute(y, kernel);
    estimate_with_summary(y, kernel, graph, &summary, EstimatorKind::Standard)
}

/// [`eta_hat`] and [`clt_scaling_standard`] sharing one pass over the Gram matrix.
pub fn eta_hat_with_scaling<K: Kernel + ?Sized>(
    x: &DataMatrix,
    y: &DataMatrix,
    kernel: &K,
    graph: &GeoGraph,
) -> Result<(AssociationEstimate, CltScaling)> {
    check_inputs(x, y, graph, 5)?;
    let summary = GramSummary::compute(y, kernel);
    let est = estimate_with_summary(y, kernel, graph, &summary, EstimatorKind::Standard)?;
    let (a, b, c) = summary.moments();
    Ok((est, CltScaling::standard(a, b, c, graph.stats(), y.nrows())))
}

/// The energy-distance form with Euclidean distances in place of a kernel:
/// `1 - A / B`, where `A` is the graph-averaged distance `n^-1 sum_i
/// d_i^-1 sum_{j ~ i} ||Y_i - Y_j||` and `B` the U-statistic mean distance.
///
/// The returned fields are in distance units: `graph_term = A`,
/// `cross_term = B`, `numerator = B - A`, `denominator = B`, `self_term = 0`.
///
/// With the `alpha = 1` distance kernel, [`eta_hat`] differs from this value
/// by `(m_G - m) / B`, where `m = n^-1 sum_i ||Y_i||` and `m_G` is its
/// graph-weighted analogue `n^-1 sum_i d_i^-1 sum_{j ~ i} ||Y_j||`. The two
/// coincide on regular graphs and agree asymptotically.
pub fn t_n_energy(x: &DataMatrix, y: &DataMatrix, graph: &GeoGraph) -> Result<AssociationEstimate> {
    check_inputs(x, y, graph, 4)?;
    let n = y.nrows();
    let per_vertex: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let nbrs = graph.neighbors(i);
            nbrs.iter().map(|&j| dist(y.row(i), y.row(j))).sum::<f64>() / nbrs.len() as f64
        })
        .collect();
    let a = pairwise_sum(&per_vertex) / n as f64;
    let rows: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .filter(|&j| j != i)
                .map(|j| dist(y.row(i), y.row(j)))
                .sum()
        })
        .collect();
    let b = pairwise_sum(&rows) / (n as f64 * (n as f64 - 1.0));
    if !(b > 1e-12) {
        return Err(KmacError::DegenerateY { denominator: b });
    }
    Ok(AssociationEstimate {
        value: 1.0 - a / b,
        numerator: b - a,
        denominator: b,
        graph_term: a,
        cross_term: b,
        self_term: 0.0,
        n,
        kind: EstimatorKind::Standard,
    })
}

/// Near-linear-time variant: the cross term becomes the cyclic average
/// `n^-1 sum_i K(Y_i, Y_{i+1})`, so the value depends on row order.
pub fn eta_hat_lin<K: Kernel + ?Sized>(
    x: &DataMatrix,
    y: &DataMatrix,
    kernel: &K,
    graph: &GeoGraph,
) -> Result<AssociationEstimate> {
    check_inputs(x, y, graph, 4)?;
    let self_term = pairwise_sum(&crate::kernels::kernel_self_diag(kernel, y)) / y.nrows() as f64;
    assemble(
        graph_term(y, kernel, graph, None),
        cyclic_term(y, kernel),
        self_term,
        y.nrows(),
        EstimatorKind::Linear,
    )
}

/// [`eta_hat_lin`] together with [`clt_scaling_linear`].
pub fn eta_hat_lin_with_scaling<K: Kernel + ?Sized>(
    x: &DataMatrix,
    y: &DataMatrix,
    kernel: &K,
    graph: &GeoGraph,
) -> Result<(AssociationEstimate, CltScaling)> {
    let est = eta_hat_lin(x, y, kernel, graph)?;
    Ok((est, clt_scaling_linear(y, kernel, graph)?))
}

/// Variance estimate for `sqrt(n) (graph_term - cross_term)` under independence.
pub fn clt_scaling_standard<K: Kernel + ?Sized>(
    y: &DataMatrix,
    kernel: &K,
    graph: &GeoGraph,
) -> Result<CltScaling> {
    check_y_graph(y, graph, 5)?;
    let (a, b, c) = GramSummary::compute(y, kernel).moments();
    Ok(CltScaling::standard(a, b, c, graph.stats(), y.nrows()))
}

/// Cyclic moment estimates
///
/// ```text
/// a = n^-1 sum_i K(Y_i, Y_{i+1})^2
/// b = n^-1 sum_i K(Y_i, Y_{i+1}) K(Y_{i+1}, Y_{i+2})
/// c = n^-1 sum_i K(Y_i, Y_{i+1}) K(Y_{i+2}, Y_{i+3})
/// ```
/// (indices modulo `n`) plugged into the linear-variant variance formula.
pub fn clt_scaling_linear<K: Kernel + ?Sized>(
    y: &DataMatrix,
    kernel: &K,
    graph: &GeoGraph,
) -> Result<CltScaling> {
    check_y_graph(y, graph, 4)?;
    let n = y.nrows();
    let k: Vec<f64> = (0..n)
        .map(|i| kernel.eval(y.row(i), y.row((i + 1) % n)))
        .collect();
    let a: Vec<f64> = k.iter().map(|v| v * v).collect();
    let b: Vec<f64> = (0..n).map(|i| k[i] * k[(i + 1) % n]).collect();
    let c: Vec<f64> = (0..n).map(|i| k[i] * k[(i + 2) % n]).collect();
    let nf = n as f64;
    Ok(CltScaling::linear(
        pairwise_sum(&a) / nf,
        pairwise_sum(&b) / nf,
        pairwise_sum(&c) / nf,
        graph.stats(),
    ))
}

/// `sqrt(n) (graph_term - cross_term)` with the cross term of `kind`.
/// `Rank` is treated like `Standard`; pass rank-transformed data for it.
pub fn numerator_stat<K: Kernel + ?Sized>(
    kind: EstimatorKind,
    x: &DataMatrix,
    y: &DataMatrix,
    kernel: &K,
    graph: &GeoGraph,
) -> Result<f64> {
    check_inputs(x, y, graph, 4)?;
    let g = graph_term(y, kernel, graph, None);
    let cross = match kind {
        EstimatorKind::Linear => cyclic_term(y, kernel),
        EstimatorKind::Standard | EstimatorKind::Rank => {
            GramSummary::compute(y, kernel).cross_term()
        }
    };
    Ok((y.nrows() as f64).sqrt() * (g - cross))
}
