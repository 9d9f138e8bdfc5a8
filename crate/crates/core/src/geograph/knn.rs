use std::cmp::Ordering;

use rayon::prelude::*;

use super::TieRule;
use crate::data::{sq_dist, DataMatrix};
use crate::rng::mix64;

/// Largest dimension searched with the k-d tree.
pub const KDTREE_MAX_DIM: usize = 16;

const LEAF_SIZE: usize = 16;

/// Ordering key of a candidate neighbor: distance first, then the tie key,
/// then the index.
#[derive(Clone, Copy, Debug)]
struct Candidate {
    d2: f64,
    tie: u64,
    j: usize,
}

impl Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.d2
            .total_cmp(&other.d2)
            .then(self.tie.cmp(&other.tie))
            .then(self.j.cmp(&other.j))
    }
}

#[inline]
fn tie_key(tie: TieRule, i: usize, j: usize) -> u64 {
    match tie {
        TieRule::ByIndex => 0,
        TieRule::SeededRandom { seed } => mix64(seed ^ mix64(((i as u64) << 32) ^ j as u64)),
    }
}

/// Bounded sorted list holding the best `k` candidates so far.
struct Best {
    k: usize,
    items: Vec<Candidate>,
}

impl Best {
    fn new(k: usize) -> Self {
        Self {
            k,
            items: Vec::with_capacity(k + 1),
        }
    }

    fn worst_d2(&self) -> f64 {
        if self.items.len() < self.k {
            f64::INFINITY
        } else {
            self.items[self.k - 1].d2
        }
    }

    fn offer(&mut self, c: Candidate) {
        if self.items.len() == self.k && c.cmp(&self.items[self.k - 1]) != Ordering::Less {
            return;
        }
        let pos = self
            .items
            .binary_search_by(|probe| probe.cmp(&c))
            .unwrap_or_else(|p| p);
        self.items.insert(pos, c);
        self.items.truncate(self.k);
    }
}

/// Out-neighbor lists by scanning every pair.
pub fn knn_brute_force(x: &DataMatrix, k: usize, tie: TieRule) -> Vec<Vec<usize>> {
    let n = x.nrows();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let q = x.row(i);
            let mut c: Vec<Candidate> = (0..n)
                .filter(|&j| j != i)
                .map(|j| Candidate {
                    d2: sq_dist(q, x.row(j)),
                    tie: tie_key(tie, i, j),
                    j,
                })
                .collect();
            c.select_nth_unstable_by(k - 1, Candidate::cmp);
            c.truncate(k);
            c.sort_by(Candidate::cmp);
            c.into_iter().map(|c| c.j).collect()
        })
        .collect()
}

enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        dim: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

struct KdTree<'a> {
    x: &'a DataMatrix,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl<'a> KdTree<'a> {
    fn new(x: &'a DataMatrix) -> Self {
        let mut tree = Self {
            x,
            order: (0..x.nrows()).collect(),
            nodes: Vec::new(),
        };
        tree.build(0, x.nrows());
        tree
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        // split on the dimension of largest spread
        let d = self.x.ncols();
        let mut best_dim = 0;
        let mut best_spread = -1.0;
        for dim in 0..d {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for &p in &self.order[start..end] {
                let v = self.x.row(p)[dim];
                lo = lo.min(v);
                hi = hi.max(v);
            }
            if hi - lo > best_spread {
                best_spread = hi - lo;
                best_dim = dim;
            }
        }
        if best_spread <= 0.0 {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mid = start + (end - start) / 2;
        let x = self.x;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            x.row(a)[best_dim].total_cmp(&x.row(b)[best_dim])
        });
        let value = x.row(self.order[mid])[best_dim];
        self.nodes.push(Node::Leaf { start, end });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[id] = Node::Split {
            dim: best_dim,
            value,
            left,
            right,
        };
        id
    }

    fn search(&self, node: usize, i: usize, q: &[f64], tie: TieRule, best: &mut Best) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &j in &self.order[start..end] {
                    if j == i {
                        continue;
                    }
                    best.offer(Candidate {
                        d2: sq_dist(q, self.x.row(j)),
                        tie: tie_key(tie, i, j),
                        j,
                    });
                }
            }
            Node::Split {
                dim,
                value,
                left,
                right,
            } => {
                let diff = q[dim] - value;
                let (near, far) = if diff < 0.0 {
                    (left, right)
                } else {
                    (right, left)
                };
                self.search(near, i, q, tie, best);
                // `<=` keeps equal-distance candidates reachable for tie-breaking
                if diff * diff <= best.worst_d2() {
                    self.search(far, i, q, tie, best);
                }
            }
        }
    }
}

/// Out-neighbor lists via an exact k-d tree search.
pub fn knn_kdtree(x: &DataMatrix, k: usize, tie: TieRule) -> Vec<Vec<usize>> {
    let tree = KdTree::new(x);
    (0..x.nrows())
        .into_par_iter()
        .map(|i| {
            let mut best = Best::new(k);
            tree.search(0, i, x.row(i), tie, &mut best);
            best.items.into_iter().map(|c| c.j).collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geograph::build_knn;
    use rand::Rng;

    #[test]
    fn forced_neighbors_on_a_line() {
        let x = DataMatrix::from_column(&[0.0, 1.0, 10.0]);
        let g = build_knn(&x, 1, TieRule::ByIndex).unwrap();
        assert_eq!(g.neighbors(0), &[1]);
        assert_eq!(g.neighbors(1), &[0, 2]);
        assert_eq!(g.neighbors(2), &[1]);
        assert_eq!(g.degrees(), vec![1, 2, 1]);
    }

    #[test]
    fn two_nn_on_four_points() {
        let x = DataMatrix::from_column(&[0.0, 1.0, 2.0, 3.0]);
        let out = knn_brute_force(&x, 2, TieRule::ByIndex);
        // brute-force distances: 1 -> {0, 2}, 2 -> {1, 3}, 0 -> {1, 2}, 3 -> {2, 1}
        assert_eq!(out, vec![vec![1, 2], vec![0, 2], vec![1, 3], vec![2, 1]]);
        let g = build_knn(&x, 2, TieRule::ByIndex).unwrap();
        assert!(g.neighbors(1).contains(&0) && g.neighbors(1).contains(&2));
        assert!(g.neighbors(2).contains(&1) && g.neighbors(2).contains(&3));
        assert!(g.degrees().iter().all(|&d| d >= 2));
    }

    #[test]
    fn kdtree_agrees_with_brute_force() {
        let mut rng = crate::rng::stream_rng(5, 1);
        for &(n, d, k) in &[
            (200, 2, 1),
            (200, 3, 5),
            (150, 5, 20),
            (300, 1, 3),
            (64, 16, 4),
        ] {
            let v: Vec<f64> = (0..n * d).map(|_| rng.random::<f64>()).collect();
            let x = DataMatrix::new(n, d, v).unwrap();
            assert_eq!(
                knn_kdtree(&x, k, TieRule::ByIndex),
                knn_brute_force(&x, k, TieRule::ByIndex)
            );
            let tie = TieRule::SeededRandom { seed: 3 };
            assert_eq!(knn_kdtree(&x, k, tie), knn_brute_force(&x, k, tie));
        }
    }

    #[test]
    fn out_neighbors_are_the_k_smallest_distances() {
        let mut rng = crate::rng::stream_rng(8, 0);
        let n = 120;
        let v: Vec<f64> = (0..n * 2).map(|_| rng.random::<f64>()).collect();
        let x = DataMatrix::new(n, 2, v).unwrap();
        let out = knn_kdtree(&x, 4, TieRule::ByIndex);
        for i in 0..n {
            let mut row: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (sq_dist(x.row(i), x.row(j)), j))
                .collect();
            row.sort_by(|a, b| a.0.total_cmp(&b.0));
            let expect: Vec<usize> = row[..4].iter().map(|p| p.1).collect();
            assert_eq!(out[i], expect);
        }
    }

    #[test]
    fn duplicates_are_deterministic() {
        let x = DataMatrix::from_column(&[1.0, 1.0, 1.0, 2.0, 2.0, 1.0]);
        let a = build_knn(&x, 2, TieRule::ByIndex).unwrap();
        let b = build_knn(&x, 2, TieRule::ByIndex).unwrap();
        assert_eq!(a, b);
        // index order among the tied copies of 1.0
        assert_eq!(knn_kdtree(&x, 2, TieRule::ByIndex)[0], vec![1, 2]);
        let r1 = build_knn(&x, 1, TieRule::SeededRandom { seed: 9 }).unwrap();
        let r2 = build_knn(&x, 1, TieRule::SeededRandom { seed: 9 }).unwrap();
        assert_eq!(r1, r2);
    }

    #[test]
    fn random_ties_spread_over_candidates() {
        // four coincident points: the single nearest neighbor of point 0 is
        // any of the other three, chosen by the seed
        let x = DataMatrix::from_column(&[0.0, 0.0, 0.0, 0.0]);
        let picks: std::collections::BTreeSet<usize> = (0..40)
            .map(|seed| knn_kdtree(&x, 1, TieRule::SeededRandom { seed })[0][0])
            .collect();
        assert_eq!(picks.len(), 3);
    }
}
