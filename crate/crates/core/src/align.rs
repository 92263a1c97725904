//! Base aligners. Both solve the IsoRank fixed point
//! `S ← (1−d)·Âₛᵀ S Âₜ + d·H`; the attributed variant additionally weights each
//! propagation by cross-graph attribute similarity.

use ndarray::{Array2, ArrayView1, Zip};
use serde::{Deserialize, Serialize};

use crate::denoise::LabeledPair;
use crate::error::{Error, Result};
use crate::graph::{node_features, normalized_adjacency, NetworkPair, SparseMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    #[serde(rename = "isorank")]
    IsoRank,
    FinalLite,
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "isorank" => Ok(Self::IsoRank),
            "final_lite" => Ok(Self::FinalLite),
            other => Err(Error::Config(format!("unknown model `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignerConfig {
    /// Restart weight toward the prior.
    damping: f64,
    max_iters: usize,
    tol: f64,
    /// Targets per source row over which `p_ij` is normalized.
    cand_k: usize,
    pub model_kind: ModelKind,
}

impl AlignerConfig {
    pub fn new(
        damping: f64,
        max_iters: usize,
        tol: f64,
        cand_k: usize,
        model_kind: ModelKind,
    ) -> Result<Self> {
        if !(damping > 0.0 && damping <= 1.0) {
            return Err(Error::Parameter(format!(
                "damping {damping} outside (0, 1]"
            )));
        }
        if max_iters == 0 {
            return Err(Error::Parameter("max_iters must be positive".into()));
        }
        if tol.is_nan() || tol <= 0.0 {
            return Err(Error::Parameter(format!("tol {tol} must be positive")));
        }
        if cand_k == 0 {
            return Err(Error::Parameter("cand_k must be at least 1".into()));
        }
        Ok(Self {
            damping,
            max_iters,
            tol,
            cand_k,
            model_kind,
        })
    }

    pub fn damping(&self) -> f64 {
        self.damping
    }

    pub fn max_iters(&self) -> usize {
        self.max_iters
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn cand_k(&self) -> usize {
        self.cand_k
    }
}

impl Default for AlignerConfig {
    fn default() -> Self {
        Self {
            damping: 0.85,
            max_iters: 100,
            tol: 1e-6,
            cand_k: 5,
            model_kind: ModelKind::IsoRank,
        }
    }
}

/// Non-negative, finite `N_s × N_t` score matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentMatrix(Array2<f64>);

impl AlignmentMatrix {
    pub fn new(scores: Array2<f64>) -> Result<Self> {
        if scores.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::Parameter(
                "alignment scores must be finite and non-negative".into(),
            ));
        }
        Ok(Self(scores))
    }

    pub fn scores(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.dim()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.0.row(i)
    }

    /// Zeroes the given cells.
    pub fn mask(&mut self, forbidden: &[(usize, usize)]) {
        for &(i, j) in forbidden {
            self.0[[i, j]] = 0.0;
        }
    }

    /// Column of the row maximum; ties go to the smallest column.
    pub fn argmax(&self, i: usize) -> usize {
        argmax_of(self.0.row(i).iter().copied().enumerate())
    }

    /// The `k` highest-scoring columns of row `i`, best first, ties by column.
    pub fn top_k(&self, i: usize, k: usize) -> Vec<usize> {
        let row = self.0.row(i);
        let mut idx: Vec<usize> = (0..row.len()).collect();
        let by_score = |a: &usize, b: &usize| row[*b].total_cmp(&row[*a]).then(a.cmp(b));
        let k = k.min(idx.len());
        if k < idx.len() && k > 0 {
            idx.select_nth_unstable_by(k - 1, by_score);
            idx.truncate(k);
        }
        idx.sort_by(by_score);
        idx.truncate(k);
        idx
    }
}

fn argmax_of(items: impl Iterator<Item = (usize, f64)>) -> usize {
    let mut best = (usize::MAX, f64::NEG_INFINITY);
    for (j, x) in items {
        if x > best.1 || best.0 == usize::MAX {
            best = (j, x);
        }
    }
    best.0
}

/// Restart distribution `H` plus the cells known to be negative.
#[derive(Debug, Clone, PartialEq)]
pub struct Prior {
    pub weights: Array2<f64>,
    pub positives: Vec<(usize, usize)>,
    pub forbidden: Vec<(usize, usize)>,
}

/// Encodes anchors and acquired labels as a restart distribution.
///
/// Every cell starts with background weight `1/(N_s·N_t)`; a positive label sets
/// its cell to 1, a negative label sets its cell to 0. The result is normalized
/// to unit mass. Anchors of `pair` count as positives.
pub fn build_prior(pair: &NetworkPair, labeled: &[LabeledPair]) -> Result<Prior> {
    let (ns, nt) = (pair.source.node_count(), pair.target.node_count());
    let mut positive_of: Vec<Option<usize>> = vec![None; ns];
    let mut positives = Vec::new();
    let mut forbidden = Vec::new();

    let mut add_positive =
        |i: usize, j: usize, positives: &mut Vec<(usize, usize)>| match positive_of[i] {
            Some(t) if t != j => Err(Error::Consistency(format!(
                "source {i} labeled positive for both {t} and {j}"
            ))),
            Some(_) => Ok(()),
            None => {
                positive_of[i] = Some(j);
                positives.push((i, j));
                Ok(())
            }
        };
    for &(i, j) in pair.anchors() {
        add_positive(i, j, &mut positives)?;
    }
    for l in labeled {
        if l.i >= ns {
            return Err(Error::Bounds { id: l.i, len: ns });
        }
        if l.j >= nt {
            return Err(Error::Bounds { id: l.j, len: nt });
        }
        if l.label {
            add_positive(l.i, l.j, &mut positives)?;
        } else {
            forbidden.push((l.i, l.j));
        }
    }
    if let Some(&(i, j)) = forbidden.iter().find(|&&(i, j)| positive_of[i] == Some(j)) {
        return Err(Error::Consistency(format!(
            "pair ({i}, {j}) labeled both positive and negative"
        )));
    }
    forbidden.sort_unstable();
    forbidden.dedup();

    let background = 1.0 / (ns * nt).max(1) as f64;
    let mut h = Array2::from_elem((ns, nt), background);
    for &(i, j) in &positives {
        h[[i, j]] = 1.0;
    }
    for &(i, j) in &forbidden {
        h[[i, j]] = 0.0;
    }
    let total = h.sum();
    if total > 0.0 {
        h /= total;
    }
    Ok(Prior {
        weights: h,
        positives,
        forbidden,
    })
}

/// Base-model output consumed by selection and denoising.
#[derive(Debug, Clone)]
pub struct ModelState {
    pub scores: AlignmentMatrix,
    /// Per-row candidate targets, best first.
    pub candidates: Vec<Vec<usize>>,
    /// `p_ij` over each row's candidates, parallel to `candidates`.
    pub prob: Vec<Vec<f64>>,
    pub acc: f64,
    pub iterations: usize,
    pub converged: bool,
    pub residual: f64,
}

impl ModelState {
    /// Derives candidates, probabilities and accuracy from a score matrix.
    /// Without labeled positives the smoothed accuracy is `1/2`.
    pub fn from_scores(
        scores: AlignmentMatrix,
        cand_k: usize,
        positives: &[(usize, usize)],
    ) -> Self {
        let candidates: Vec<Vec<usize>> = (0..scores.shape().0)
            .map(|i| scores.top_k(i, cand_k))
            .collect();
        let prob = row_probabilities(&scores, &candidates);
        let mut state = Self {
            scores,
            candidates,
            prob,
            acc: 0.5,
            iterations: 0,
            converged: true,
            residual: 0.0,
        };
        if let Ok(acc) = estimate_accuracy(&state, positives) {
            state.acc = acc;
        }
        state
    }

    /// `p_ij` normalized over row `i`'s candidates. A target outside the
    /// candidate set uses the same denominator.
    pub fn probability(&self, i: usize, j: usize) -> f64 {
        if let Some(k) = self.candidates[i].iter().position(|&c| c == j) {
            return self.prob[i][k];
        }
        let row = self.scores.row(i);
        let denom: f64 = self.candidates[i].iter().map(|&c| row[c]).sum();
        if denom > 0.0 {
            row[j] / denom
        } else {
            0.0
        }
    }

    /// `Acc · p_ij`.
    pub fn model_confidence(&self, i: usize, j: usize) -> f64 {
        self.acc * self.probability(i, j)
    }

    pub fn predicted_target(&self, i: usize) -> usize {
        self.scores.argmax(i)
    }
}

/// `p_ij = S_ij / Σ_{j' ∈ cand(i)} S_ij'`; an all-zero row is uniform over its candidates.
pub fn row_probabilities(scores: &AlignmentMatrix, candidates: &[Vec<usize>]) -> Vec<Vec<f64>> {
    candidates
        .iter()
        .enumerate()
        .map(|(i, cand)| {
            let row = scores.row(i);
            let denom: f64 = cand.iter().map(|&j| row[j]).sum();
            if denom > 0.0 {
                cand.iter().map(|&j| row[j] / denom).collect()
            } else {
                vec![1.0 / cand.len() as f64; cand.len()]
            }
        })
        .collect()
}

/// Smoothed in-sample hit rate `(hits + 1) / (|positives| + 2)`, where a hit is a
/// labeled source whose row-argmax is its labeled target.
pub fn estimate_accuracy(state: &ModelState, labeled_positives: &[(usize, usize)]) -> Result<f64> {
    if labeled_positives.is_empty() {
        return Err(Error::Estimation);
    }
    let hits = labeled_positives
        .iter()
        .filter(|&&(i, j)| state.scores.argmax(i) == j)
        .count();
    Ok((hits + 1) as f64 / (labeled_positives.len() + 2) as f64)
}

/// `ŷ_ij`: 1 iff `j` is the row-argmax of row `i` (ties to the smallest column).
pub fn predicted_label(state: &ModelState, i: usize, j: usize) -> bool {
    state.scores.argmax(i) == j
}

struct Propagator {
    source: SparseMatrix,
    target: SparseMatrix,
}

impl Propagator {
    fn new(pair: &NetworkPair) -> Self {
        Self {
            source: normalized_adjacency(&pair.source),
            target: normalized_adjacency(&pair.target),
        }
    }

    /// `Âₛᵀ S Âₜ`.
    fn apply(&self, s: &Array2<f64>) -> Array2<f64> {
        let right = self.target.mul_dense_right(s);
        let mut out = Array2::zeros(s.raw_dim());
        for i in 0..self.source.n_rows() {
            let (cols, vals) = self.source.row(i);
            let r = right.row(i);
            for (&a, &w) in cols.iter().zip(vals) {
                out.row_mut(a).scaled_add(w, &r);
            }
        }
        out
    }
}

fn check_prior(pair: &NetworkPair, prior: &Prior) -> Result<()> {
    let want = (pair.source.node_count(), pair.target.node_count());
    if prior.weights.dim() != want {
        return Err(Error::Dimension(format!(
            "prior is {:?}, pair is {want:?}",
            prior.weights.dim()
        )));
    }
    Ok(())
}

fn fixed_point(
    pair: &NetworkPair,
    prior: &Prior,
    cfg: &AlignerConfig,
    similarity: Option<&Array2<f64>>,
) -> Result<ModelState> {
    check_prior(pair, prior)?;
    let prop = Propagator::new(pair);
    let h = &prior.weights;
    let d = cfg.damping;
    let mut s = h.clone();
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < cfg.max_iters {
        let mut next = prop.apply(&s);
        if let Some(w) = similarity {
            next *= w;
        }
        Zip::from(&mut next)
            .and(h)
            .for_each(|x, &hv| *x = (1.0 - d) * *x + d * hv);
        residual = Zip::from(&next)
            .and(&s)
            .fold(0.0f64, |m, &a, &b| m.max((a - b).abs()));
        s = next;
        iterations += 1;
        if residual <= cfg.tol {
            break;
        }
    }
    let converged = residual <= cfg.tol;
    if !converged {
        log::warn!("aligner stopped after {iterations} iterations, residual {residual:.3e}");
    }
    s.mapv_inplace(|x| x.max(0.0));
    let mut scores = AlignmentMatrix::new(s)?;
    scores.mask(&prior.forbidden);
    let mut state = ModelState::from_scores(scores, cfg.cand_k, &prior.positives);
    state.iterations = iterations;
    state.converged = converged;
    state.residual = residual;
    Ok(state)
}

/// Topology-only IsoRank.
pub fn isorank_align(pair: &NetworkPair, prior: &Prior, cfg: &AlignerConfig) -> Result<ModelState> {
    fixed_point(pair, prior, cfg, None)
}

/// Clamped cosine similarity between every source and target feature row.
pub fn attribute_similarity(pair: &NetworkPair) -> Result<Array2<f64>> {
    let xs = node_features(&pair.source);
    let xt = node_features(&pair.target);
    if xs.ncols() != xt.ncols() {
        return Err(Error::Dimension(format!(
            "source features have width {}, target {}",
            xs.ncols(),
            xt.ncols()
        )));
    }
    let unit = |x: &Array2<f64>| {
        let mut u = x.clone();
        for mut row in u.rows_mut() {
            let norm = row.dot(&row).sqrt();
            if norm > 0.0 {
                row /= norm;
            }
        }
        u
    };
    let (us, ut) = (unit(&xs), unit(&xt));
    let mut w = us.dot(&ut.t());
    w.mapv_inplace(|c| c.clamp(0.0, 1.0));
    Ok(w)
}

/// IsoRank with every propagation elementwise-weighted by attribute similarity.
pub fn final_lite_align(
    pair: &NetworkPair,
    prior: &Prior,
    cfg: &AlignerConfig,
) -> Result<ModelState> {
    let w = attribute_similarity(pair)?;
    final_lite_with_similarity(pair, prior, cfg, &w)
}

/// [`final_lite_align`] with a caller-supplied similarity matrix.
pub fn final_lite_with_similarity(
    pair: &NetworkPair,
    prior: &Prior,
    cfg: &AlignerConfig,
    similarity: &Array2<f64>,
) -> Result<ModelState> {
    if similarity.dim() != prior.weights.dim() {
        return Err(Error::Dimension(format!(
            "similarity is {:?}, prior is {:?}",
            similarity.dim(),
            prior.weights.dim()
        )));
    }
    fixed_point(pair, prior, cfg, Some(similarity))
}

/// Dispatches on `cfg.model_kind`.
pub fn align(pair: &NetworkPair, prior: &Prior, cfg: &AlignerConfig) -> Result<ModelState> {
    match cfg.model_kind {
        ModelKind::IsoRank => isorank_align(pair, prior, cfg),
        ModelKind::FinalLite => final_lite_align(pair, prior, cfg),
    }
}
