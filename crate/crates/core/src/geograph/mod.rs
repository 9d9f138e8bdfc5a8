//! Geometric graphs on the covariate sample: k-nearest-neighbor graphs and
//! the Euclidean minimum spanning tree.
//!
//! Edges are stored as the symmetric closure of the raw (possibly directed)
//! edge set: `j` is a neighbor of `i` whenever the construction produced an
//! edge `i -> j` or `j -> i`. Degrees, common-neighbor counts and the graph
//! averages used by the variance estimators all follow that convention.

mod knn;
mod mst;

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{dist, DataMatrix};
use crate::error::{KmacError, Result};
use crate::kernels::{parse_param, split_spec};
use crate::stats::pairwise_sum;

pub use knn::{knn_brute_force, knn_kdtree, KDTREE_MAX_DIM};
pub use mst::{build_mst, MST_MAX_POINTS};

/// How equal distances are ordered when selecting nearest neighbors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum TieRule {
    /// Lower row index wins.
    ByIndex,
    /// Ties resolved by a keyed hash of `(seed, query, candidate)`, i.e.
    /// uniformly at random and independently per query point.
    SeededRandom { seed: u64 },
}

/// Which graph functional to build.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "graph", rename_all = "snake_case")]
pub enum GraphSpec {
    Knn { k: usize, tie: TieRule },
    Mst,
}

impl GraphSpec {
    pub fn knn(k: usize) -> Self {
        GraphSpec::Knn {
            k,
            tie: TieRule::ByIndex,
        }
    }

    pub fn build(&self, x: &DataMatrix) -> Result<GeoGraph> {
        match *self {
            GraphSpec::Knn { k, tie } => build_knn(x, k, tie),
            GraphSpec::Mst => build_mst(x),
        }
    }
}

impl fmt::Display for GraphSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphSpec::Knn {
                k,
                tie: TieRule::ByIndex,
            } => write!(f, "knn:k={k}"),
            GraphSpec::Knn {
                k,
                tie: TieRule::SeededRandom { seed },
            } => write!(f, "knn:k={k},tie=random,seed={seed}"),
            GraphSpec::Mst => write!(f, "mst"),
        }
    }
}

impl FromStr for GraphSpec {
    type Err = KmacError;

    fn from_str(s: &str) -> Result<Self> {
        let (name, params) = split_spec(s)?;
        match name.as_str() {
            "mst" => {
                if !params.is_empty() {
                    return Err(KmacError::spec(s, "mst takes no parameters"));
                }
                Ok(GraphSpec::Mst)
            }
            "knn" => {
                let mut k = None;
                let mut random = false;
                let mut seed = 0u64;
                for (key, v) in &params {
                    match key.as_str() {
                        "k" => k = Some(parse_param::<usize>(s, key, v)?),
                        "tie" => match v.as_str() {
                            "random" => random = true,
                            "index" => random = false,
                            _ => return Err(KmacError::spec(s, "tie must be index or random")),
                        },
                        "seed" => seed = parse_param(s, key, v)?,
                        _ => return Err(KmacError::spec(s, format!("unknown parameter {key:?}"))),
                    }
                }
                let k = k.ok_or_else(|| KmacError::spec(s, "knn needs k"))?;
                if k == 0 {
                    return Err(KmacError::spec(s, "k must be positive"));
                }
                let tie = if random {
                    TieRule::SeededRandom { seed }
                } else {
                    TieRule::ByIndex
                };
                Ok(GraphSpec::Knn { k, tie })
            }
            _ => Err(KmacError::spec(s, "unknown graph functional")),
        }
    }
}

/// A simple undirected graph on the rows of a sample.
#[derive(Clone, Debug, PartialEq)]
pub struct GeoGraph {
    adjacency: Vec<Vec<usize>>,
    kind: GraphSpec,
}

/// The three graph averages entering the variance estimators.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphStats {
    /// `n^-1 sum_i 1/d_i`
    pub g1: f64,
    /// `n^-1 sum_{i,j} T(i,j) / (d_i d_j)`
    pub g2: f64,
    /// `n^-1 sum_{(i,j) in E} 1/(d_i d_j)`, over ordered pairs.
    pub g3: f64,
}

/// Empirical quantities behind the regularity conditions on the graph.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphDiagnostics {
    pub min_degree: usize,
    pub max_degree: usize,
    pub mean_edge_length: f64,
    pub common_neighbor_total: f64,
}

impl GeoGraph {
    /// Symmetrizes directed out-neighbor lists into a simple graph.
    pub(crate) fn from_directed(out: Vec<Vec<usize>>, kind: GraphSpec) -> Self {
        let n = out.len();
        let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (i, nbrs) in out.iter().enumerate() {
            for &j in nbrs {
                debug_assert_ne!(i, j);
                adjacency[i].push(j);
                adjacency[j].push(i);
            }
        }
        for a in &mut adjacency {
            a.sort_unstable();
            a.dedup();
        }
        Self { adjacency, kind }
    }

    /// Builds a graph from undirected edges. Used for hand-made graphs.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut out = vec![Vec::new(); n];
        for &(i, j) in edges {
            for v in [i, j] {
                if v >= n {
                    return Err(KmacError::IndexOutOfRange { index: v, len: n });
                }
            }
            if i == j {
                return Err(KmacError::InvalidParameter(format!("self-loop at {i}")));
            }
            out[i].push(j);
        }
        let g = Self::from_directed(out, GraphSpec::Mst);
        if let Some(i) = g.adjacency.iter().position(Vec::is_empty) {
            return Err(KmacError::InvalidParameter(format!(
                "vertex {i} is isolated"
            )));
        }
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.adjacency.len()
    }

    pub fn kind(&self) -> GraphSpec {
        self.kind
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.adjacency.iter().map(Vec::len).collect()
    }

    /// Number of undirected edges.
    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Undirected edges `(i, j)` with `i < j`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(i, a)| a.iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
    }

    pub fn is_connected(&self) -> bool {
        let n = self.n();
        if n == 0 {
            return true;
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for &w in &self.adjacency[v] {
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    stack.push(w);
                }
            }
        }
        count == n
    }

    /// `T(i, j)`: the number of common neighbors; `T(i, i) = d_i`.
    pub fn common_neighbors(&self, i: usize, j: usize) -> Result<usize> {
        let n = self.n();
        for v in [i, j] {
            if v >= n {
                return Err(KmacError::IndexOutOfRange { index: v, len: n });
            }
        }
        let (a, b) = (&self.adjacency[i], &self.adjacency[j]);
        let (mut p, mut q, mut c) = (0, 0, 0);
        while p < a.len() && q < b.len() {
            match a[p].cmp(&b[q]) {
                std::cmp::Ordering::Less => p += 1,
                std::cmp::Ordering::Greater => q += 1,
                std::cmp::Ordering::Equal => {
                    c += 1;
                    p += 1;
                    q += 1;
                }
            }
        }
        Ok(c)
    }

    /// Computes `g1`, `g2`, `g3` in `O(|E|)`.
    ///
    /// `g2` uses `sum_{i,j} T(i,j)/(d_i d_j) = sum_k (sum_{i ~ k} 1/d_i)^2`.
    pub fn stats(&self) -> GraphStats {
        let n = self.n() as f64;
        let inv: Vec<f64> = self
            .adjacency
            .iter()
            .map(|a| 1.0 / a.len() as f64)
            .collect();
        let g1 = pairwise_sum(&inv) / n;
        let per_vertex_g2: Vec<f64> = self
            .adjacency
            .iter()
            .map(|a| {
                let s: f64 = a.iter().map(|&i| inv[i]).sum();
                s * s
            })
            .collect();
        let per_vertex_g3: Vec<f64> = self
            .adjacency
            .iter()
            .enumerate()
            .map(|(i, a)| inv[i] * a.iter().map(|&j| inv[j]).sum::<f64>())
            .collect();
        GraphStats {
            g1,
            g2: pairwise_sum(&per_vertex_g2) / n,
            g3: pairwise_sum(&per_vertex_g3) / n,
        }
    }

    /// Degree extremes, mean Euclidean edge length and `g2` for the sample
    /// the graph was built on.
    pub fn assumption_report(&self, x: &DataMatrix) -> Result<GraphDiagnostics> {
        if x.nrows() != self.n() {
            return Err(KmacError::GraphSizeMismatch {
                graph: self.n(),
                sample: x.nrows(),
            });
        }
        let degrees = self.degrees();
        let lengths: Vec<f64> = self
            .edges()
            .map(|(i, j)| dist(x.row(i), x.row(j)))
            .collect();
        Ok(GraphDiagnostics {
            min_degree: degrees.iter().copied().min().unwrap_or(0),
            max_degree: degrees.iter().copied().max().unwrap_or(0),
            mean_edge_length: pairwise_sum(&lengths) / lengths.len().max(1) as f64,
            common_neighbor_total: self.stats().g2,
        })
    }

    /// Writes the undirected edge list as `i,j,length` rows.
    pub fn write_edge_csv(&self, x: &DataMatrix, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "i,j,length")?;
        for (i, j) in self.edges() {
            writeln!(w, "{i},{j},{:?}", dist(x.row(i), x.row(j)))?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn validate_sample(x: &DataMatrix) -> Result<()> {
    if x.nrows() < 2 {
        return Err(KmacError::TooFewRows {
            needed: 2,
            got: x.nrows(),
        });
    }
    x.check_finite()
}

/// Directed k-NN edges under Euclidean distance, symmetrized. Exact search
/// uses a k-d tree up to [`KDTREE_MAX_DIM`] dimensions and a brute-force scan
/// above that.
pub fn build_knn(x: &DataMatrix, k: usize, tie: TieRule) -> Result<GeoGraph> {
    validate_sample(x)?;
    let n = x.nrows();
    if k == 0 || k > n - 1 {
        return Err(KmacError::InvalidParameter(format!(
            "k must lie in 1..={}, got {k}",
            n - 1
        )));
    }
    let out = if x.ncols() <= KDTREE_MAX_DIM {
        knn_kdtree(x, k, tie)
    } else {
        knn_brute_force(x, k, tie)
    };
    Ok(GeoGraph::from_directed(out, GraphSpec::Knn { k, tie }))
}

/// Edge churn from replacing row `index` by `replacement`: the larger of
/// `|E \ E'|` and `|E' \ E|` over undirected edges. This is a single draw of
/// the quantity bounded by `q_n` in the regularity conditions.
pub fn replacement_churn(
    x: &DataMatrix,
    spec: GraphSpec,
    index: usize,
    replacement: &[f64],
) -> Result<usize> {
    if index >= x.nrows() {
        return Err(KmacError::IndexOutOfRange {
            index,
            len: x.nrows(),
        });
    }
    if replacement.len() != x.ncols() {
        return Err(KmacError::DimensionMismatch {
            expected: x.ncols(),
            got: replacement.len(),
        });
    }
    let before = spec.build(x)?;
    let mut values = x.as_slice().to_vec();
    values[index * x.ncols()..(index + 1) * x.ncols()].copy_from_slice(replacement);
    let after = spec.build(&DataMatrix::new(x.nrows(), x.ncols(), values)?)?;
    let e1: std::collections::BTreeSet<_> = before.edges().collect();
    let e2: std::collections::BTreeSet<_> = after.edges().collect();
    Ok(e1.difference(&e2).count().max(e2.difference(&e1).count()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path3() -> GeoGraph {
        GeoGraph::from_edges(3, &[(0, 1), (1, 2)]).unwrap()
    }

    #[test]
    fn common_neighbor_counts() {
        let g = path3();
        assert_eq!(g.common_neighbors(0, 2).unwrap(), 1);
        assert_eq!(g.common_neighbors(0, 1).unwrap(), 0);
        assert_eq!(g.common_neighbors(1, 1).unwrap(), 2);
        assert!(g.common_neighbors(0, 3).is_err());

        let clique =
            GeoGraph::from_edges(4, &[(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let expected = if i == j { 3 } else { 2 };
                assert_eq!(clique.common_neighbors(i, j).unwrap(), expected);
            }
        }
    }

    #[test]
    fn stats_on_small_graphs() {
        let e = GeoGraph::from_edges(2, &[(0, 1)]).unwrap();
        let s = e.stats();
        assert_eq!((s.g1, s.g2, s.g3), (1.0, 1.0, 1.0));

        let cycle = GeoGraph::from_edges(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]).unwrap();
        assert_eq!(cycle.stats().g1, 0.5);
    }

    /// Literal double loops over all vertex pairs.
    fn stats_oracle(g: &GeoGraph) -> GraphStats {
        let n = g.n();
        let d: Vec<f64> = g.degrees().iter().map(|&v| v as f64).collect();
        let (mut g1, mut g2, mut g3) = (0.0, 0.0, 0.0);
        for i in 0..n {
            g1 += 1.0 / d[i];
            for j in 0..n {
                g2 += g.common_neighbors(i, j).unwrap() as f64 / (d[i] * d[j]);
                if g.neighbors(i).contains(&j) {
                    g3 += 1.0 / (d[i] * d[j]);
                }
            }
        }
        GraphStats {
            g1: g1 / n as f64,
            g2: g2 / n as f64,
            g3: g3 / n as f64,
        }
    }

    #[test]
    fn stats_match_double_loop() {
        use rand::Rng;
        let mut rng = crate::rng::stream_rng(11, 0);
        for trial in 0..20 {
            let n = 5 + trial * 3;
            let rows: Vec<[f64; 2]> = (0..n).map(|_| [rng.random(), rng.random()]).collect();
            let x = DataMatrix::from_rows(&rows).unwrap();
            for spec in [GraphSpec::knn(1), GraphSpec::knn(3), GraphSpec::Mst] {
                let g = spec.build(&x).unwrap();
                let fast = g.stats();
                let slow = stats_oracle(&g);
                assert!((fast.g1 - slow.g1).abs() < 1e-12);
                assert!((fast.g2 - slow.g2).abs() < 1e-12);
                assert!((fast.g3 - slow.g3).abs() < 1e-12);
                // bounds consistent with the degree extremes
                let diag = g.assumption_report(&x).unwrap();
                let (r, t) = (diag.min_degree as f64, diag.max_degree as f64);
                assert!(fast.g1 > 0.0 && fast.g1 <= 1.0);
                assert!(fast.g3 > 0.0 && fast.g3 <= 1.0);
                assert!(fast.g2 <= (t / r).powi(2) + fast.g1 * t + 1e-12);
            }
        }
    }

    #[test]
    fn spec_strings() {
        assert_eq!("knn:k=5".parse::<GraphSpec>().unwrap(), GraphSpec::knn(5));
        assert_eq!(
            "knn:k=1,tie=random,seed=7".parse::<GraphSpec>().unwrap(),
            GraphSpec::Knn {
                k: 1,
                tie: TieRule::SeededRandom { seed: 7 }
            }
        );
        assert_eq!("mst".parse::<GraphSpec>().unwrap(), GraphSpec::Mst);
        for s in ["knn:k=5", "knn:k=1,tie=random,seed=7", "mst"] {
            assert_eq!(s.parse::<GraphSpec>().unwrap().to_string(), s);
        }
        assert!("knn".parse::<GraphSpec>().is_err());
        assert!("knn:k=0".parse::<GraphSpec>().is_err());
        assert!("delaunay".parse::<GraphSpec>().is_err());
    }

    #[test]
    fn knn_rejects_bad_input() {
        let x = DataMatrix::from_column(&[0.0, 1.0, 2.0]);
        assert!(build_knn(&x, 3, TieRule::ByIndex).is_err());
        assert!(build_knn(&x, 0, TieRule::ByIndex).is_err());
        assert!(build_knn(&DataMatrix::from_column(&[1.0]), 1, TieRule::ByIndex).is_err());
        let bad = DataMatrix::from_column(&[0.0, f64::INFINITY]);
        assert!(build_knn(&bad, 1, TieRule::ByIndex).is_err());
    }

    #[test]
    fn diagnostics_single_edge() {
        let x = DataMatrix::from_rows(&[[0.0, 0.0], [3.0, 4.0]]).unwrap();
        let g = build_knn(&x, 1, TieRule::ByIndex).unwrap();
        let d = g.assumption_report(&x).unwrap();
        assert_eq!(d.mean_edge_length, 5.0);
        assert_eq!((d.min_degree, d.max_degree), (1, 1));
    }

    #[test]
    fn churn_probe() {
        let x = DataMatrix::from_column(&[0.0, 1.0, 2.0, 3.0, 10.0]);
        // moving the outlier next to 0 rewires only a couple of edges
        let c = replacement_churn(&x, GraphSpec::knn(1), 4, &[-1.0]).unwrap();
        assert!(c >= 1 && c <= 2, "churn {c}");
        assert_eq!(
            replacement_churn(&x, GraphSpec::Mst, 4, &[10.0]).unwrap(),
            0
        );
    }

    #[test]
    fn edge_csv_dump() {
        let x = DataMatrix::from_column(&[0.0, 1.0, 3.0]);
        let g = build_mst(&x).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("edges.csv");
        g.write_edge_csv(&x, &p).unwrap();
        let text = std::fs::read_to_string(p).unwrap();
        assert_eq!(text, "i,j,length\n0,1,1.0\n1,2,2.0\n");
    }
}
