use super::{validate_sample, GeoGraph, GraphSpec};
use crate::data::{dist, DataMatrix};
use crate::error::{KmacError, Result};

/// Size guard for the dense `O(n^2)` Prim construction.
pub const MST_MAX_POINTS: usize = 20_000;

/// Euclidean minimum spanning tree by dense Prim. Distances are evaluated
/// on the fly, so memory stays `O(n)`. Equal keys go to the lower index.
pub fn build_mst(x: &DataMatrix) -> Result<GeoGraph> {
    validate_sample(x)?;
    let n = x.nrows();
    if n > MST_MAX_POINTS {
        return Err(KmacError::InvalidParameter(format!(
            "dense MST is limited to {MST_MAX_POINTS} points, got {n}"
        )));
    }
    if (1..n).all(|i| x.row(i) == x.row(0)) {
        return Err(KmacError::DegenerateX);
    }

    let mut in_tree = vec![false; n];
    let mut key = vec![f64::INFINITY; n];
    let mut parent = vec![usize::MAX; n];
    let mut out = vec![Vec::new(); n];
    let mut current = 0;
    in_tree[0] = true;
    for _ in 1..n {
        let c = x.row(current);
        let mut next = usize::MAX;
        let mut next_key = f64::INFINITY;
        for v in 0..n {
            if in_tree[v] {
                continue;
            }
            let d = dist(c, x.row(v));
            if d < key[v] {
                key[v] = d;
                parent[v] = current;
            }
            if key[v] < next_key {
                next_key = key[v];
                next = v;
            }
        }
        in_tree[next] = true;
        out[next].push(parent[next]);
        current = next;
    }
    Ok(GeoGraph::from_directed(out, GraphSpec::Mst))
}
