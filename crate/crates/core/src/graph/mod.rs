//! Undirected graphs, aligned network pairs and the adjacency/feature products
//! the alignment and selection stages consume.

mod features;
mod io;
mod noise;

use std::collections::BTreeMap;

use ndarray::Array2;

use crate::error::{Error, Result};

pub use features::{
    cosine, node_features, structural_features, two_hop_features, STRUCTURAL_STEPS,
};
pub use io::{load_attributes, load_edge_list, load_pairs};
pub use noise::{inject_structural_noise, synthesize_pair, NoiseSpec, SYNTH_ATTR_DIM};

/// Simple undirected graph in compressed sparse row form.
///
/// Neighbor lists are sorted and free of duplicates and self-loops, so every
/// undirected edge appears exactly twice in `neighbors`.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    attributes: Option<Array2<f64>>,
}

impl Graph {
    /// Builds a graph from an edge iterator. Self-loops are dropped and
    /// reversed/duplicated edges collapse to one.
    pub fn from_edges<I>(node_count: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); node_count];
        for (u, v) in edges {
            for id in [u, v] {
                if id >= node_count {
                    return Err(Error::Bounds {
                        id,
                        len: node_count,
                    });
                }
            }
            if u == v {
                continue;
            }
            adj[u].push(v);
            adj[v].push(u);
        }
        let mut offsets = Vec::with_capacity(node_count + 1);
        let mut neighbors = Vec::new();
        offsets.push(0);
        for mut list in adj {
            list.sort_unstable();
            list.dedup();
            neighbors.extend(list);
            offsets.push(neighbors.len());
        }
        Ok(Self {
            offsets,
            neighbors,
            attributes: None,
        })
    }

    pub fn empty(node_count: usize) -> Self {
        Self {
            offsets: vec![0; node_count + 1],
            neighbors: Vec::new(),
            attributes: None,
        }
    }

    /// Attaches a node-attribute matrix; its row count must equal `node_count`.
    pub fn with_attributes(mut self, attributes: Array2<f64>) -> Result<Self> {
        if attributes.nrows() != self.node_count() {
            return Err(Error::Dimension(format!(
                "attribute matrix has {} rows, graph has {} nodes",
                attributes.nrows(),
                self.node_count()
            )));
        }
        self.attributes = Some(attributes);
        Ok(self)
    }

    pub fn node_count(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Number of undirected edges.
    pub fn edge_count(&self) -> usize {
        self.neighbors.len() / 2
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.node_count() && self.neighbors(u).binary_search(&v).is_ok()
    }

    /// Each undirected edge once, as `(u, v)` with `u < v`, in sorted order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.node_count()).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .copied()
                .filter(move |&v| u < v)
                .map(move |v| (u, v))
        })
    }

    pub fn attributes(&self) -> Option<&Array2<f64>> {
        self.attributes.as_ref()
    }

    /// Relabels node `v` as `perm[v]`. Attributes follow their nodes.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.node_count();
        if perm.len() != n {
            return Err(Error::Dimension(format!(
                "permutation has length {}, graph has {n} nodes",
                perm.len()
            )));
        }
        let mut g = Self::from_edges(n, self.edges().map(|(u, v)| (perm[u], perm[v])))?;
        if let Some(x) = &self.attributes {
            let mut moved = Array2::zeros(x.raw_dim());
            for (v, &p) in perm.iter().enumerate() {
                moved.row_mut(p).assign(&x.row(v));
            }
            g.attributes = Some(moved);
        }
        Ok(g)
    }

    pub(crate) fn with_same_attributes(mut self, other: &Graph) -> Self {
        self.attributes = other.attributes.clone();
        self
    }
}

/// Row-compressed sparse real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n_cols: usize,
    offsets: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseMatrix {
    pub fn n_rows(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.offsets[i]..self.offsets[i + 1];
        (&self.cols[r.clone()], &self.vals[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map_or(0.0, |k| vals[k])
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.n_rows(), self.n_cols));
        for i in 0..self.n_rows() {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                out[[i, j]] = v;
            }
        }
        out
    }

    /// `self · dense`, where `dense` has `n_cols` rows.
    pub fn mul_dense(&self, dense: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((self.n_rows(), dense.ncols()));
        for i in 0..self.n_rows() {
            let (cols, vals) = self.row(i);
            let mut acc = out.row_mut(i);
            for (&j, &w) in cols.iter().zip(vals) {
                acc.scaled_add(w, &dense.row(j));
            }
        }
        out
    }

    /// `dense · self`, where `dense` has `n_rows` columns.
    pub fn mul_dense_right(&self, dense: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((dense.nrows(), self.n_cols));
        for (src, mut acc) in dense.rows().into_iter().zip(out.rows_mut()) {
            for (j, &x) in src.iter().enumerate() {
                if x == 0.0 {
                    continue;
                }
                let (cols, vals) = self.row(j);
                for (&c, &w) in cols.iter().zip(vals) {
                    acc[c] += x * w;
                }
            }
        }
        out
    }
}

/// Random-walk transition matrix `D⁻¹A`. Rows of isolated nodes stay empty.
pub fn normalized_adjacency(graph: &Graph) -> SparseMatrix {
    let n = graph.node_count();
    let mut vals = Vec::with_capacity(graph.neighbors.len());
    for v in 0..n {
        let d = graph.degree(v);
        vals.extend(std::iter::repeat_n(1.0 / d as f64, d));
    }
    SparseMatrix {
        n_cols: n,
        offsets: graph.offsets.clone(),
        cols: graph.neighbors.clone(),
        vals,
    }
}

/// Source graph, target graph and the known correspondence between them.
#[derive(Debug, Clone)]
pub struct NetworkPair {
    pub source: Graph,
    pub target: Graph,
    groundtruth: BTreeMap<usize, usize>,
    anchors: Vec<(usize, usize)>,
}

impl NetworkPair {
    pub fn new(
        source: Graph,
        target: Graph,
        groundtruth: impl IntoIterator<Item = (usize, usize)>,
        anchors: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        let (ns, nt) = (source.node_count(), target.node_count());
        let mut map = BTreeMap::new();
        let mut seen = vec![false; nt];
        for (s, t) in groundtruth {
            if s >= ns {
                return Err(Error::Bounds { id: s, len: ns });
            }
            if t >= nt {
                return Err(Error::Bounds { id: t, len: nt });
            }
            if seen[t] {
                return Err(Error::Consistency(format!(
                    "groundtruth maps two source nodes to target {t}"
                )));
            }
            if map.insert(s, t).is_some() {
                return Err(Error::Consistency(format!(
                    "groundtruth maps source {s} twice"
                )));
            }
            seen[t] = true;
        }
        let mut pair = Self {
            source,
            target,
            groundtruth: map,
            anchors: Vec::new(),
        };
        pair.set_anchors(anchors)?;
        Ok(pair)
    }

    pub fn groundtruth(&self) -> &BTreeMap<usize, usize> {
        &self.groundtruth
    }

    pub fn anchors(&self) -> &[(usize, usize)] {
        &self.anchors
    }

    pub fn is_true_link(&self, s: usize, t: usize) -> bool {
        self.groundtruth.get(&s) == Some(&t)
    }

    /// Replaces the anchor set; every anchor must be a groundtruth link.
    pub fn set_anchors(&mut self, anchors: impl IntoIterator<Item = (usize, usize)>) -> Result<()> {
        let mut list: Vec<(usize, usize)> = anchors.into_iter().collect();
        list.sort_unstable();
        list.dedup();
        if let Some(&(s, t)) = list.iter().find(|&&(s, t)| !self.is_true_link(s, t)) {
            return Err(Error::Consistency(format!(
                "anchor ({s}, {t}) is not a groundtruth link"
            )));
        }
        self.anchors = list;
        Ok(())
    }

    /// Draws `⌊rate · |groundtruth|⌋` anchors uniformly without replacement.
    pub fn sample_anchors(&mut self, rate: f64, seed: u64) -> Result<()> {
        use rand::seq::IteratorRandom;
        use rand::SeedableRng;

        if !(0.0..=1.0).contains(&rate) {
            return Err(Error::Parameter(format!(
                "anchor rate {rate} outside [0, 1]"
            )));
        }
        let count = (rate * self.groundtruth.len() as f64).floor() as usize;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let picked = self
            .groundtruth
            .iter()
            .map(|(&s, &t)| (s, t))
            .choose_multiple(&mut rng, count);
        self.set_anchors(picked)
    }
}
