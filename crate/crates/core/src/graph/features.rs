use std::borrow::Cow;

use ndarray::{Array2, ArrayView1};

use super::{normalized_adjacency, Graph};

/// Walk length of the structural surrogate used when a graph has no attributes.
pub const STRUCTURAL_STEPS: usize = 2;

/// Row `i` is the `k`-step random-walk landing distribution from node `i`
/// (row `i` of `Â^k`). With `top = Some(t)` only the `t` largest entries of
/// each row are kept; ties keep the smaller column.
pub fn structural_features(graph: &Graph, k: usize, top: Option<usize>) -> Array2<f64> {
    let n = graph.node_count();
    let a = normalized_adjacency(graph);
    let mut out = Array2::zeros((n, n));
    let mut cur = vec![0.0; n];
    let mut next = vec![0.0; n];
    for i in 0..n {
        cur.iter_mut().for_each(|x| *x = 0.0);
        cur[i] = 1.0;
        for _ in 0..k {
            next.iter_mut().for_each(|x| *x = 0.0);
            for (u, &mass) in cur.iter().enumerate() {
                if mass == 0.0 {
                    continue;
                }
                let (cols, vals) = a.row(u);
                for (&v, &w) in cols.iter().zip(vals) {
                    next[v] += mass * w;
                }
            }
            std::mem::swap(&mut cur, &mut next);
        }
        if let Some(t) = top {
            let mut idx: Vec<usize> = (0..n).filter(|&j| cur[j] > 0.0).collect();
            if idx.len() > t {
                idx.sort_by(|&a, &b| cur[b].total_cmp(&cur[a]).then(a.cmp(&b)));
                for &j in &idx[t..] {
                    cur[j] = 0.0;
                }
            }
        }
        for (j, &x) in cur.iter().enumerate() {
            out[[i, j]] = x;
        }
    }
    out
}

/// Cosine similarity; zero when either vector is zero.
pub fn cosine(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    let (na, nb) = (a.dot(&a), b.dot(&b));
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    a.dot(&b) / (na.sqrt() * nb.sqrt())
}

/// Node attributes, or the structural surrogate for attribute-less graphs.
pub fn node_features(graph: &Graph) -> Cow<'_, Array2<f64>> {
    match graph.attributes() {
        Some(x) => Cow::Borrowed(x),
        None => Cow::Owned(structural_features(graph, STRUCTURAL_STEPS, None)),
    }
}

/// Two-hop mean aggregation `Â²X` of the node features.
pub fn two_hop_features(graph: &Graph) -> Array2<f64> {
    let a = normalized_adjacency(graph);
    let x = node_features(graph);
    a.mul_dense(&a.mul_dense(&x))
}
