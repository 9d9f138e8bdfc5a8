//! Multivariate ranks by optimal transport to a uniform-like grid, and the
//! rank version of the association estimator.
//!
//! The rank of `X_i` is the grid point `h_{s(i)}`, where `s` minimizes
//! `sum_i ||X_i - h_{s(i)}||^2` over all bijections. In one dimension the
//! monotone matching is optimal for this cost, so sorting solves it exactly;
//! otherwise a dense Hungarian method is used.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{sq_dist, DataMatrix};
use crate::error::{KmacError, Result};
use crate::estimators::{
    estimate_with_summary, AssociationEstimate, CltScaling, EstimatorKind, GramSummary,
};
use crate::geograph::{GeoGraph, GraphSpec};
use crate::kernels::{Kernel, KernelSpec};
use crate::rng::stream_rng;
use crate::stats::pairwise_sum;

const PRIMES: [u64; 25] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97,
];

/// Largest dimension with a Halton base.
pub const HALTON_MAX_DIM: usize = PRIMES.len();

/// Default size limit for the `O(n^3)` Hungarian solver.
pub const DEFAULT_ASSIGNMENT_CAP: usize = 8000;

/// Fewest quasi-Monte Carlo nodes accepted for the uniform-law constants.
pub const MIN_MC_NODES: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "grid", rename_all = "lowercase")]
pub enum GridSpec {
    Halton,
    Uniform { seed: u64 },
    Lattice1d,
}

impl GridSpec {
    /// Halton in two or more dimensions, the regular lattice in one.
    pub fn default_for(d: usize) -> Self {
        if d == 1 {
            GridSpec::Lattice1d
        } else {
            GridSpec::Halton
        }
    }

    pub fn build(&self, n: usize, d: usize) -> Result<TargetGrid> {
        match *self {
            GridSpec::Halton => halton(n, d),
            GridSpec::Uniform { seed } => iid_uniform(n, d, seed),
            GridSpec::Lattice1d => {
                if d != 1 {
                    return Err(KmacError::InvalidParameter(format!(
                        "lattice1d grids are one-dimensional, got d = {d}"
                    )));
                }
                lattice1d(n)
            }
        }
    }
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GridSpec::Halton => f.write_str("halton"),
            GridSpec::Uniform { seed } => write!(f, "uniform:seed={seed}"),
            GridSpec::Lattice1d => f.write_str("lattice1d"),
        }
    }
}

impl FromStr for GridSpec {
    type Err = KmacError;

    fn from_str(s: &str) -> Result<Self> {
        let (name, params) = crate::kernels::split_spec(s)?;
        let seed = params.iter().find(|(k, _)| k == "seed");
        if let Some((k, _)) = params.iter().find(|(k, _)| k != "seed") {
            return Err(KmacError::spec(s, format!("unknown parameter `{k}`")));
        }
        match name.as_str() {
            "halton" if seed.is_none() => Ok(GridSpec::Halton),
            "lattice1d" | "lattice" if seed.is_none() => Ok(GridSpec::Lattice1d),
            "uniform" | "iid" => {
                let seed = match seed {
                    Some((_, v)) => v
                        .parse()
                        .map_err(|_| KmacError::spec(s, "seed must be an integer"))?,
                    None => 0,
                };
                Ok(GridSpec::Uniform { seed })
            }
            "halton" | "lattice1d" | "lattice" => {
                Err(KmacError::spec(s, "this grid takes no seed"))
            }
            _ => Err(KmacError::spec(
                s,
                "grid must be halton, uniform or lattice1d",
            )),
        }
    }
}

/// `n` target points in `[0, 1]^d`.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetGrid {
    pub points: DataMatrix,
    pub source: GridSpec,
}

impl TargetGrid {
    pub fn n(&self) -> usize {
        self.points.nrows()
    }

    pub fn d(&self) -> usize {
        self.points.ncols()
    }
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut num = 0u64;
    let mut den = 1u64;
    while i > 0 {
        num = num * base + i % base;
        den *= base;
        i /= base;
    }
    num as f64 / den as f64
}

/// First `n` points of the Halton sequence with the first `d` primes as
/// bases, indices starting at 1.
pub fn halton(n: usize, d: usize) -> Result<TargetGrid> {
    if n == 0 || d == 0 || d > HALTON_MAX_DIM {
        return Err(KmacError::InvalidParameter(format!(
            "halton grid needs n >= 1 and 1 <= d <= {HALTON_MAX_DIM}, got n = {n}, d = {d}"
        )));
    }
    let mut v = Vec::with_capacity(n * d);
    for i in 1..=n as u64 {
        v.extend(PRIMES[..d].iter().map(|&b| radical_inverse(i, b)));
    }
    Ok(TargetGrid {
        points: DataMatrix::new(n, d, v)?,
        source: GridSpec::Halton,
    })
}

/// `{1/n, 2/n, ..., 1}`.
pub fn lattice1d(n: usize) -> Result<TargetGrid> {
    if n == 0 {
        return Err(KmacError::InvalidParameter(
            "lattice grid needs n >= 1".into(),
        ));
    }
    let v: Vec<f64> = (1..=n).map(|i| i as f64 / n as f64).collect();
    Ok(TargetGrid {
        points: DataMatrix::from_column(&v),
        source: GridSpec::Lattice1d,
    })
}

/// `n` i.i.d. uniform points on `[0, 1)^d`.
pub fn iid_uniform(n: usize, d: usize, seed: u64) -> Result<TargetGrid> {
    if n == 0 || d == 0 {
        return Err(KmacError::InvalidParameter(
            "uniform grid needs n, d >= 1".into(),
        ));
    }
    let mut rng = stream_rng(seed, 0);
    let v: Vec<f64> = (0..n * d).map(|_| rng.random::<f64>()).collect();
    Ok(TargetGrid {
        points: DataMatrix::new(n, d, v)?,
        source: GridSpec::Uniform { seed },
    })
}

/// `perm[i]` is the grid index assigned to observation `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct RankAssignment {
    pub perm: Vec<usize>,
    pub cost: f64,
}

impl RankAssignment {
    /// The rank vectors `h_{perm[i]}`, one row per observation.
    pub fn ranks(&self, grid: &TargetGrid) -> DataMatrix {
        grid.points.permute_rows(&self.perm)
    }
}

/// Sum of squared distances for a given pairing.
pub fn assignment_cost(x: &DataMatrix, grid: &TargetGrid, perm: &[usize]) -> f64 {
    let v: Vec<f64> = perm
        .iter()
        .enumerate()
        .map(|(i, &j)| sq_dist(x.row(i), grid.points.row(j)))
        .collect();
    pairwise_sum(&v)
}

/// Exact optimal assignment with the default size cap.
pub fn solve_assignment(x: &DataMatrix, grid: &TargetGrid) -> Result<RankAssignment> {
    solve_assignment_capped(x, grid, DEFAULT_ASSIGNMENT_CAP)
}

/// Exact optimal assignment; `cap` bounds `n` for the cubic solver used in
/// two or more dimensions.
pub fn solve_assignment_capped(
    x: &DataMatrix,
    grid: &TargetGrid,
    cap: usize,
) -> Result<RankAssignment> {
    let n = x.nrows();
    if grid.n() != n {
        return Err(KmacError::GraphSizeMismatch {
            graph: grid.n(),
            sample: n,
        });
    }
    if grid.d() != x.ncols() {
        return Err(KmacError::DimensionMismatch {
            expected: grid.d(),
            got: x.ncols(),
        });
    }
    if n == 0 {
        return Err(KmacError::TooFewRows { needed: 1, got: 0 });
    }
    x.check_finite()?;
    let perm = if x.ncols() == 1 {
        monotone_matching(x, grid)
    } else {
        if n > cap {
            return Err(KmacError::AssignmentTooLarge { n, cap });
        }
        hungarian(x, grid)
    };
    let cost = assignment_cost(x, grid, &perm);
    Ok(RankAssignment { perm, cost })
}

fn monotone_matching(x: &DataMatrix, grid: &TargetGrid) -> Vec<usize> {
    let n = x.nrows();
    let mut xs: Vec<usize> = (0..n).collect();
    xs.sort_by(|&a, &b| x.row(a)[0].total_cmp(&x.row(b)[0]));
    let mut gs: Vec<usize> = (0..n).collect();
    gs.sort_by(|&a, &b| grid.points.row(a)[0].total_cmp(&grid.points.row(b)[0]));
    let mut perm = vec![0; n];
    for (i, j) in xs.into_iter().zip(gs) {
        perm[i] = j;
    }
    perm
}

/// Shortest augmenting paths with row and column potentials. Costs are
/// evaluated on demand, so memory is `O(n)`.
fn hungarian(x: &DataMatrix, grid: &TargetGrid) -> Vec<usize> {
    let n = x.nrows();
    let cost = |i: usize, j: usize| sq_dist(x.row(i - 1), grid.points.row(j - 1));
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    // row matched to column j (1-based, 0 = free)
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![0.0; n + 1];
    let mut used = vec![false; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        minv.fill(f64::INFINITY);
        used.fill(false);
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut perm = vec![0; n];
    for j in 1..=n {
        perm[p[j] - 1] = j - 1;
    }
    perm
}

/// Empirical rank map evaluated at the sample.
pub fn rank_transform(x: &DataMatrix, grid: &TargetGrid) -> Result<DataMatrix> {
    Ok(solve_assignment(x, grid)?.ranks(grid))
}

/// Everything the rank estimator computes on the way to its value.
#[derive(Clone, Debug)]
pub struct RankAnalysis {
    pub estimate: AssociationEstimate,
    pub x_ranks: DataMatrix,
    pub y_ranks: DataMatrix,
    pub graph: GeoGraph,
}

/// The association estimator with both samples replaced by their ranks and
/// the graph built on the `X` ranks.
pub fn eta_hat_rank(
    x: &DataMatrix,
    y: &DataMatrix,
    kernel: &KernelSpec,
    graph_spec: &GraphSpec,
    grid_x: &TargetGrid,
    grid_y: &TargetGrid,
) -> Result<AssociationEstimate> {
    Ok(rank_analysis(x, y, kernel, graph_spec, grid_x, grid_y)?.estimate)
}

pub fn rank_analysis(
    x: &DataMatrix,
    y: &DataMatrix,
    kernel: &KernelSpec,
    graph_spec: &GraphSpec,
    grid_x: &TargetGrid,
    grid_y: &TargetGrid,
) -> Result<RankAnalysis> {
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
    kernel.validate()?;
    let x_ranks = rank_transform(x, grid_x)?;
    let y_ranks = rank_transform(y, grid_y)?;
    kernel.validate_data(&y_ranks)?;
    let graph = graph_spec.build(&x_ranks)?;
    let summary = GramSummary::compute(&y_ranks, kernel);
    let estimate = estimate_with_summary(&y_ranks, kernel, &graph, &summary, EstimatorKind::Rank)?;
    Ok(RankAnalysis {
        estimate,
        x_ranks,
        y_ranks,
        graph,
    })
}

/// `(E K(U1,U2)^2, E K(U1,U2) K(U1,U3), (E K(U1,U2))^2)` for `U_i` i.i.d.
/// uniform on `[0, 1]^d2`, by quasi-Monte Carlo over `nodes` Halton points
/// in dimension `3 d2`.
pub fn uniform_kernel_moments<K: Kernel + ?Sized>(
    kernel: &K,
    d2: usize,
    nodes: usize,
) -> Result<(f64, f64, f64)> {
    if d2 == 0 || 3 * d2 > HALTON_MAX_DIM {
        return Err(KmacError::InvalidParameter(format!(
            "uniform-law constants support 1 <= d2 <= {}, got {d2}",
            HALTON_MAX_DIM / 3
        )));
    }
    if nodes == 0 {
        return Err(KmacError::InvalidParameter("need at least one node".into()));
    }
    let bases = &PRIMES[..3 * d2];
    let terms: Vec<(f64, f64, f64)> = (1..=nodes as u64)
        .into_par_iter()
        .map(|t| {
            let p: Vec<f64> = bases.iter().map(|&b| radical_inverse(t, b)).collect();
            let (u1, rest) = p.split_at(d2);
            let (u2, u3) = rest.split_at(d2);
            let k12 = kernel.eval(u1, u2);
            (k12 * k12, k12 * kernel.eval(u1, u3), k12)
        })
        .collect();
    let m = nodes as f64;
    let a = pairwise_sum(&terms.iter().map(|t| t.0).collect::<Vec<_>>()) / m;
    let b = pairwise_sum(&terms.iter().map(|t| t.1).collect::<Vec<_>>()) / m;
    let e = pairwise_sum(&terms.iter().map(|t| t.2).collect::<Vec<_>>()) / m;
    Ok((a, b, e * e))
}

/// Variance constant for the rank statistic: uniform-law moments of the
/// kernel combined with the rank graph's statistics.
pub fn rank_clt_scaling(
    kernel: &KernelSpec,
    d2: usize,
    graph: &GeoGraph,
    mc_nodes: usize,
) -> Result<CltScaling> {
    if mc_nodes < MIN_MC_NODES {
        return Err(KmacError::InvalidParameter(format!(
            "mc_nodes must be at least {MIN_MC_NODES}, got {mc_nodes}"
        )));
    }
    rank_clt_scaling_unchecked(kernel, d2, graph, mc_nodes)
}

/// [`rank_clt_scaling`] without the lower bound on `mc_nodes`.
pub fn rank_clt_scaling_unchecked(
    kernel: &KernelSpec,
    d2: usize,
    graph: &GeoGraph,
    mc_nodes: usize,
) -> Result<CltScaling> {
    kernel.validate()?;
    let (a, b, c) = match kernel {
        KernelSpec::MinCdf if d2 == 1 => (1.0 / 6.0, 2.0 / 15.0, 1.0 / 9.0),
        KernelSpec::MinCdf => {
            return Err(KmacError::InvalidParameter(
                "the min kernel needs d2 = 1".into(),
            ));
        }
        _ => uniform_kernel_moments(kernel, d2, mc_nodes)?,
    };
    Ok(CltScaling::standard(a, b, c, graph.stats(), graph.n()))
}

/// Chatterjee's rank correlation: with the pairs sorted by `x` and `r_i` the
/// rank of the `i`-th `y`, `1 - 3 sum |r_{i+1} - r_i| / (n^2 - 1)`.
/// Ties are broken by row index.
pub fn chatterjee_xi(x: &DataMatrix, y: &DataMatrix) -> Result<f64> {
    if x.ncols() != 1 || y.ncols() != 1 {
        return Err(KmacError::InvalidParameter(
            "chatterjee_xi needs one-dimensional x and y".into(),
        ));
    }
    if x.nrows() != y.nrows() {
        return Err(KmacError::RowMismatch {
            x: x.nrows(),
            y: y.nrows(),
        });
    }
    let n = x.nrows();
    if n < 2 {
        return Err(KmacError::TooFewRows { needed: 2, got: n });
    }
    x.check_finite()?;
    y.check_finite()?;
    let mut by_y: Vec<usize> = (0..n).collect();
    by_y.sort_by(|&a, &b| y.row(a)[0].total_cmp(&y.row(b)[0]));
    let mut rank = vec![0i64; n];
    for (r, i) in by_y.into_iter().enumerate() {
        rank[i] = r as i64 + 1;
    }
    let mut by_x: Vec<usize> = (0..n).collect();
    by_x.sort_by(|&a, &b| x.row(a)[0].total_cmp(&x.row(b)[0]));
    let gaps: i64 = by_x
        .windows(2)
        .map(|w| (rank[w[1]] - rank[w[0]]).abs())
        .sum();
    let nf = n as f64;
    Ok(1.0 - 3.0 * gaps as f64 / (nf * nf - 1.0))
}
