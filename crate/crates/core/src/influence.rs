//! Normalized k-step influence scores, realized as random-walk landing
//! probabilities: the raw influence of `i` on `m` is `(Â^k)_{i,m}`, then each
//! target `m` is normalized over all influencing sources.

use crate::error::{Error, Result};
use crate::graph::{normalized_adjacency, Graph};

pub const DEFAULT_INFLUENCE_K: usize = 2;
pub const DEFAULT_TRUNC_EPS: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceField {
    k: usize,
    trunc_eps: f64,
    /// `rows[i]` holds `(m, I(m, i, k))` sorted by `m`, only values above `trunc_eps`.
    rows: Vec<Vec<(usize, f64)>>,
}

impl InfluenceField {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn trunc_eps(&self) -> f64 {
        self.trunc_eps
    }

    pub fn node_count(&self) -> usize {
        self.rows.len()
    }

    /// `I(m, i, k)`, zero if truncated or unreachable.
    pub fn get(&self, m: usize, i: usize) -> f64 {
        let row = &self.rows[i];
        row.binary_search_by_key(&m, |&(t, _)| t)
            .map_or(0.0, |k| row[k].1)
    }
}

/// Walk distribution `e_iᵀ Â^k` as a sorted sparse row.
fn walk_row(
    adj: &crate::graph::SparseMatrix,
    i: usize,
    k: usize,
    scratch: &mut [f64],
) -> Vec<(usize, f64)> {
    let mut frontier = vec![(i, 1.0)];
    for _ in 0..k {
        let mut touched = Vec::new();
        for &(u, mass) in &frontier {
            let (cols, vals) = adj.row(u);
            for (&v, &w) in cols.iter().zip(vals) {
                if scratch[v] == 0.0 {
                    touched.push(v);
                }
                scratch[v] += mass * w;
            }
        }
        touched.sort_unstable();
        frontier = touched
            .into_iter()
            .map(|v| (v, std::mem::take(&mut scratch[v])))
            .collect();
    }
    frontier
}

pub fn compute_influence(graph: &Graph, k: usize, trunc_eps: f64) -> Result<InfluenceField> {
    if trunc_eps.is_nan() || trunc_eps < 0.0 {
        return Err(Error::Parameter(format!(
            "trunc_eps {trunc_eps} must be >= 0"
        )));
    }
    let n = graph.node_count();
    let adj = normalized_adjacency(graph);
    let mut scratch = vec![0.0; n];
    let raw: Vec<Vec<(usize, f64)>> = (0..n).map(|i| walk_row(&adj, i, k, &mut scratch)).collect();

    let mut column_sums = vec![0.0; n];
    for row in &raw {
        for &(m, v) in row {
            column_sums[m] += v;
        }
    }
    let rows = raw
        .into_iter()
        .map(|row| {
            row.into_iter()
                .map(|(m, v)| (m, v / column_sums[m]))
                .filter(|&(_, v)| v > trunc_eps)
                .collect()
        })
        .collect();
    Ok(InfluenceField { k, trunc_eps, rows })
}

/// Sparse influence of source `i` on every node it reaches.
pub fn influence_row(field: &InfluenceField, i: usize) -> Result<&[(usize, f64)]> {
    field.rows.get(i).map(Vec::as_slice).ok_or(Error::Bounds {
        id: i,
        len: field.rows.len(),
    })
}
