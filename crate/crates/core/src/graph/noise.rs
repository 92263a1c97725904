use std::collections::HashSet;

use ndarray::Array2;
use rand::seq::{IteratorRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{Graph, NetworkPair};
use crate::error::{Error, Result};

/// Attribute width of synthesized pairs.
pub const SYNTH_ATTR_DIM: usize = 16;

/// Additive edge noise: `⌊ratio · |E|⌋` spurious edges, drawn from `seed`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    edge_noise_ratio: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(edge_noise_ratio: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&edge_noise_ratio) {
            return Err(Error::Parameter(format!(
                "edge noise ratio {edge_noise_ratio} outside [0, 1]"
            )));
        }
        Ok(Self {
            edge_noise_ratio,
            seed,
        })
    }

    pub fn none() -> Self {
        Self {
            edge_noise_ratio: 0.0,
            seed: 0,
        }
    }

    pub fn ratio(&self) -> f64 {
        self.edge_noise_ratio
    }

    pub fn added_edges(&self, edge_count: usize) -> usize {
        (self.edge_noise_ratio * edge_count as f64).floor() as usize
    }
}

fn slot(u: usize, v: usize) -> (usize, usize) {
    (u.min(v), u.max(v))
}

/// Adds `⌊ratio · |E|⌋` edges chosen uniformly among absent, non-loop slots.
/// Existing edges and attributes are kept.
pub fn inject_structural_noise(graph: &Graph, spec: NoiseSpec) -> Result<Graph> {
    let n = graph.node_count();
    let m = graph.edge_count();
    let requested = spec.added_edges(m);
    if requested == 0 {
        return Ok(graph.clone());
    }
    let available = n * n.saturating_sub(1) / 2 - m;
    if requested > available {
        return Err(Error::Capacity {
            requested,
            available,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let added: Vec<(usize, usize)> = if requested.saturating_mul(4) > available {
        // Near-saturated: enumerate the free slots and sample among them.
        (0..n)
            .flat_map(|u| (u + 1..n).map(move |v| (u, v)))
            .filter(|&(u, v)| !graph.has_edge(u, v))
            .choose_multiple(&mut rng, requested)
    } else {
        let mut picked = HashSet::with_capacity(requested);
        let mut order = Vec::with_capacity(requested);
        while order.len() < requested {
            let u = rng.random_range(0..n);
            let v = rng.random_range(0..n);
            if u == v || graph.has_edge(u, v) {
                continue;
            }
            if picked.insert(slot(u, v)) {
                order.push(slot(u, v));
            }
        }
        order
    };

    let noisy = Graph::from_edges(n, graph.edges().chain(added))?;
    Ok(noisy.with_same_attributes(graph))
}

/// Erdős–Rényi source graph with Gaussian attributes, and a target that is a
/// node-permuted, noise-injected copy of it. The groundtruth is the permutation.
pub fn synthesize_pair(
    n: usize,
    edge_density: f64,
    permute_seed: u64,
    noise: NoiseSpec,
) -> Result<NetworkPair> {
    if n < 2 {
        return Err(Error::Parameter(format!("need at least 2 nodes, got {n}")));
    }
    if !(edge_density > 0.0 && edge_density < 1.0) {
        return Err(Error::Parameter(format!(
            "edge density {edge_density} outside (0, 1)"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(permute_seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random::<f64>() < edge_density {
                edges.push((u, v));
            }
        }
    }
    let attrs =
        Array2::from_shape_simple_fn((n, SYNTH_ATTR_DIM), || rng.sample::<f64, _>(StandardNormal));
    let source = Graph::from_edges(n, edges)?.with_attributes(attrs)?;

    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    let target = inject_structural_noise(&source.permuted(&perm)?, noise)?;
    let groundtruth: Vec<(usize, usize)> = perm.iter().copied().enumerate().collect();
    NetworkPair::new(source, target, groundtruth, [])
}
