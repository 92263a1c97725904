//! Noise-aware node-pair selection: cleanliness, three-region confidence,
//! activation sets and budgeted greedy coverage.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use fixedbitset::FixedBitSet;
use ndarray::Array2;

use crate::align::ModelState;
use crate::error::{Error, Result};
use crate::graph::{cosine, node_features, Graph, NetworkPair};
use crate::influence::InfluenceField;

/// Guard for the disagreement posteriors, whose denominator `1 − C^orc·C^m` vanishes.
const DISAGREEMENT_GUARD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionConfig {
    /// Activation threshold θ.
    pub theta: f64,
    /// Minimum acceptable model confidence γ.
    pub gamma: f64,
    pub budget: usize,
    pub batch: usize,
    pub cand_k: usize,
    /// Oracle confidence `C^orc`, the oracle accuracy α.
    pub oracle_conf: f64,
}

impl SelectionConfig {
    pub fn new(
        theta: f64,
        gamma: f64,
        budget: usize,
        batch: usize,
        cand_k: usize,
        oracle_conf: f64,
    ) -> Result<Self> {
        if theta.is_nan() || theta < 0.0 {
            return Err(Error::Parameter(format!("theta {theta} must be >= 0")));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::Parameter(format!("gamma {gamma} outside (0, 1)")));
        }
        if !(oracle_conf > 0.0 && oracle_conf <= 1.0) {
            return Err(Error::Parameter(format!(
                "oracle confidence {oracle_conf} outside (0, 1]"
            )));
        }
        if gamma >= oracle_conf {
            return Err(Error::Parameter(format!(
                "gamma {gamma} must be below oracle confidence {oracle_conf}"
            )));
        }
        if batch > budget {
            return Err(Error::Parameter(format!(
                "batch {batch} exceeds budget {budget}"
            )));
        }
        if batch == 0 && budget > 0 {
            return Err(Error::Parameter("batch must be at least 1".into()));
        }
        if cand_k == 0 {
            return Err(Error::Parameter("cand_k must be at least 1".into()));
        }
        Ok(Self {
            theta,
            gamma,
            budget,
            batch,
            cand_k,
            oracle_conf,
        })
    }
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            theta: 0.05,
            gamma: 0.01,
            budget: 100,
            batch: 10,
            cand_k: 5,
            oracle_conf: 0.8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidatePair {
    pub i: usize,
    pub j: usize,
    /// Cleanliness `cs_ij`.
    pub cs: f64,
    /// Model confidence `C^m_ij = Acc · p_ij`.
    pub cm: f64,
    /// Confidence used for ranking before the oracle is consulted.
    pub sel_conf: f64,
    /// Exact three-region confidence, set once the pair is labeled.
    pub post_conf: Option<f64>,
}

impl CandidatePair {
    pub fn new(i: usize, j: usize, cs: f64, cm: f64, cfg: &SelectionConfig) -> Self {
        let mut pair = Self {
            i,
            j,
            cs: cs.clamp(0.0, 1.0),
            cm: cm.clamp(0.0, 1.0),
            sel_conf: 0.0,
            post_conf: None,
        };
        pair.sel_conf = selection_confidence(&pair, cfg);
        pair
    }
}

/// Per-node mean neighbor cosine, clamped to `[0, 1]`; isolated nodes score 0.
pub fn node_cleanliness(graph: &Graph, features: &Array2<f64>) -> Vec<f64> {
    (0..graph.node_count())
        .map(|v| {
            let nbrs = graph.neighbors(v);
            if nbrs.is_empty() {
                return 0.0;
            }
            let total: f64 = nbrs
                .iter()
                .map(|&m| cosine(features.row(v), features.row(m)))
                .sum();
            (total / nbrs.len() as f64).clamp(0.0, 1.0)
        })
        .collect()
}

/// Precomputed node cleanliness for both sides of a pair.
#[derive(Debug, Clone)]
pub struct Cleanliness {
    pub source: Vec<f64>,
    pub target: Vec<f64>,
}

impl Cleanliness {
    pub fn compute(pair: &NetworkPair) -> Self {
        Self {
            source: node_cleanliness(&pair.source, &node_features(&pair.source)),
            target: node_cleanliness(&pair.target, &node_features(&pair.target)),
        }
    }

    pub fn score(&self, i: usize, j: usize) -> f64 {
        0.5 * (self.source[i] + self.target[j])
    }
}

/// `cs_ij`: the mean of the two endpoints' neighbor-similarity averages.
pub fn cleanliness_score((i, j): (usize, usize), source: &Graph, target: &Graph) -> f64 {
    let node = |g: &Graph, v: usize| {
        let x = node_features(g);
        let nbrs = g.neighbors(v);
        if nbrs.is_empty() {
            return 0.0;
        }
        let total: f64 = nbrs.iter().map(|&m| cosine(x.row(v), x.row(m))).sum();
        (total / nbrs.len() as f64).clamp(0.0, 1.0)
    };
    0.5 * (node(source, i) + node(target, j))
}

/// `C^m = Acc · p`.
pub fn model_confidence(acc: f64, p: f64) -> f64 {
    acc * p
}

/// Posterior that two independent annotators with accuracies `c_orc` and `c_m`
/// are correct given that they agree.
pub fn agreement_posterior(c_orc: f64, c_m: f64) -> f64 {
    let both_right = c_orc * c_m;
    let both_wrong = (1.0 - c_orc) * (1.0 - c_m);
    if both_right + both_wrong == 0.0 {
        return 0.0;
    }
    both_right / (both_right + both_wrong)
}

/// Confidence available before the oracle answers. The moderate region uses
/// the agreement posterior, since the oracle and twin labels are not known yet.
pub fn selection_confidence(pair: &CandidatePair, cfg: &SelectionConfig) -> f64 {
    let (c_orc, c_m) = (cfg.oracle_conf, pair.cm);
    if c_m >= c_orc {
        c_m
    } else if c_m > cfg.gamma {
        agreement_posterior(c_orc, c_m)
    } else {
        pair.cs.min(c_orc)
    }
}

/// Moderate-region confidence once the oracle (and, on disagreement, the twin)
/// has answered.
pub fn posterior_confidence(
    y: bool,
    y_model: bool,
    y_twin: Option<bool>,
    cm: f64,
    cfg: &SelectionConfig,
) -> Result<f64> {
    let c_orc = cfg.oracle_conf;
    if y == y_model {
        return Ok(agreement_posterior(c_orc, cm));
    }
    let y_twin = y_twin.ok_or_else(|| {
        Error::Contract("oracle and model disagree but no twin label was given".into())
    })?;
    let joint = c_orc * cm;
    if joint >= 1.0 - DISAGREEMENT_GUARD {
        return Ok(1.0);
    }
    Ok(if y_twin == y {
        c_orc * (1.0 - cm) / (1.0 - joint)
    } else {
        cm * (1.0 - c_orc) / (1.0 - joint)
    })
}

/// Nodes activated by a pair: one bit per source node and one per target node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActivationSet {
    pub src_bits: FixedBitSet,
    pub tgt_bits: FixedBitSet,
}

impl ActivationSet {
    pub fn empty(source_nodes: usize, target_nodes: usize) -> Self {
        Self {
            src_bits: FixedBitSet::with_capacity(source_nodes),
            tgt_bits: FixedBitSet::with_capacity(target_nodes),
        }
    }

    pub fn len(&self) -> usize {
        self.src_bits.count_ones(..) + self.tgt_bits.count_ones(..)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `|self \ covered|`.
    pub fn gain_over(&self, covered: &ActivationSet) -> usize {
        self.src_bits.difference(&covered.src_bits).count()
            + self.tgt_bits.difference(&covered.tgt_bits).count()
    }

    pub fn union_with(&mut self, other: &ActivationSet) {
        self.src_bits.union_with(&other.src_bits);
        self.tgt_bits.union_with(&other.tgt_bits);
    }

    pub fn is_subset(&self, other: &ActivationSet) -> bool {
        self.src_bits.is_subset(&other.src_bits) && self.tgt_bits.is_subset(&other.tgt_bits)
    }
}

/// `σ(i, j)`: source nodes `v` with `C̃·I(v, i, k) ≥ θ` and target nodes `u`
/// with `C̃·I(u, j, k) ≥ θ`. Only nodes with stored (nonzero) influence qualify.
pub fn activated_nodes(
    pair: &CandidatePair,
    (source, target): (&InfluenceField, &InfluenceField),
    cfg: &SelectionConfig,
) -> ActivationSet {
    let mut set = ActivationSet::empty(source.node_count(), target.node_count());
    let conf = pair.sel_conf;
    for (bits, field, center) in [
        (&mut set.src_bits, source, pair.i),
        (&mut set.tgt_bits, target, pair.j),
    ] {
        if let Ok(row) = crate::influence::influence_row(field, center) {
            for &(v, infl) in row {
                if conf * infl >= cfg.theta {
                    bits.insert(v);
                }
            }
        }
    }
    set
}

/// Outcome of one greedy batch.
#[derive(Debug, Clone)]
pub struct Selection {
    /// Indices into the candidate list, in pick order.
    pub picks: Vec<usize>,
    /// Marginal coverage gain of each pick.
    pub gains: Vec<usize>,
    pub covered: ActivationSet,
    /// The pool ran out before `batch` picks.
    pub short: bool,
}

#[derive(Debug, Clone, Copy)]
struct Entry {
    gain: usize,
    conf: f64,
    i: usize,
    j: usize,
    idx: usize,
    round: usize,
}

impl Entry {
    fn key_cmp(&self, other: &Self) -> Ordering {
        self.gain
            .cmp(&other.gain)
            .then(self.conf.total_cmp(&other.conf))
            .then((other.i, other.j).cmp(&(self.i, self.j)))
    }
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.key_cmp(other) == Ordering::Equal
    }
}
impl Eq for Entry {}
impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key_cmp(other)
    }
}

/// Lazy greedy maximum coverage over precomputed activation sets. Ties go to
/// higher confidence, then to the smaller `(i, j)`.
pub fn greedy_cover(
    candidates: &[CandidatePair],
    sets: &[ActivationSet],
    batch: usize,
    mut covered: ActivationSet,
) -> Selection {
    let mut heap: BinaryHeap<Entry> = candidates
        .iter()
        .zip(sets)
        .enumerate()
        .map(|(idx, (c, s))| Entry {
            gain: s.gain_over(&covered),
            conf: c.sel_conf,
            i: c.i,
            j: c.j,
            idx,
            round: 0,
        })
        .collect();
    let mut picks = Vec::with_capacity(batch);
    let mut gains = Vec::with_capacity(batch);
    while picks.len() < batch {
        let Some(mut top) = heap.pop() else { break };
        if top.round == picks.len() {
            covered.union_with(&sets[top.idx]);
            picks.push(top.idx);
            gains.push(top.gain);
        } else {
            top.gain = sets[top.idx].gain_over(&covered);
            top.round = picks.len();
            heap.push(top);
        }
    }
    Selection {
        short: picks.len() < batch,
        picks,
        gains,
        covered,
    }
}

/// Picks `cfg.batch` candidates maximizing the union of their activation sets.
pub fn greedy_select(
    candidates: &[CandidatePair],
    fields: (&InfluenceField, &InfluenceField),
    cfg: &SelectionConfig,
    already_covered: ActivationSet,
) -> Result<Selection> {
    if candidates.is_empty() {
        return Err(Error::Parameter("greedy selection needs candidates".into()));
    }
    if cfg.batch == 0 {
        return Err(Error::Parameter("batch must be at least 1".into()));
    }
    let sets: Vec<ActivationSet> = candidates
        .iter()
        .map(|c| activated_nodes(c, fields, cfg))
        .collect();
    Ok(greedy_cover(candidates, &sets, cfg.batch, already_covered))
}

/// Scores every `(i, j)` in `pool` against the current model.
pub fn score_candidates(
    pool: &[(usize, usize)],
    state: &ModelState,
    cleanliness: &Cleanliness,
    cfg: &SelectionConfig,
) -> Vec<CandidatePair> {
    pool.iter()
        .map(|&(i, j)| {
            let cm = model_confidence(state.acc, state.probability(i, j));
            CandidatePair::new(i, j, cleanliness.score(i, j), cm, cfg)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use ndarray::array;

    use super::*;
    use crate::influence::compute_influence;

    fn cfg() -> SelectionConfig {
        SelectionConfig::default()
    }

    fn cand(i: usize, j: usize, sel_conf: f64) -> CandidatePair {
        CandidatePair {
            i,
            j,
            cs: 0.0,
            cm: 0.0,
            sel_conf,
            post_conf: None,
        }
    }

    #[test]
    fn config_bounds() {
        assert!(SelectionConfig::new(0.05, 0.9, 10, 1, 5, 0.8).is_err());
        assert!(SelectionConfig::new(0.05, 0.01, 10, 11, 5, 0.8).is_err());
        assert!(SelectionConfig::new(-1.0, 0.01, 10, 1, 5, 0.8).is_err());
        assert!(SelectionConfig::new(0.05, 0.01, 0, 0, 5, 0.8).is_ok());
    }

    #[test]
    fn identical_features_give_full_cleanliness() {
        let g = Graph::from_edges(3, [(0, 1), (1, 2)])
            .unwrap()
            .with_attributes(array![[1.0, 2.0], [1.0, 2.0], [1.0, 2.0]])
            .unwrap();
        assert!((cleanliness_score((1, 0), &g, &g) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn isolated_endpoints_are_not_clean() {
        let g = Graph::empty(2)
            .with_attributes(Array2::ones((2, 3)))
            .unwrap();
        assert_eq!(cleanliness_score((0, 1), &g, &g), 0.0);
    }

    #[test]
    fn cleanliness_uses_neighbor_mean() {
        // Source node 0 has neighbors at cosine 1.0 and 0.5; target node 0 one
        // neighbor at cosine 0.9. Expected ½·(0.75 + 0.9) = 0.825.
        let c60 = (60f64).to_radians();
        let s = Graph::from_edges(3, [(0, 1), (0, 2)])
            .unwrap()
            .with_attributes(array![[1.0, 0.0], [2.0, 0.0], [c60.cos(), c60.sin()]])
            .unwrap();
        let a = 0.9f64.acos();
        let t = Graph::from_edges(2, [(0, 1)])
            .unwrap()
            .with_attributes(array![[1.0, 0.0], [a.cos(), a.sin()]])
            .unwrap();
        assert!((cleanliness_score((0, 0), &s, &t) - 0.825).abs() < 1e-12);
    }

    #[test]
    fn negative_cosines_clamp() {
        let g = Graph::from_edges(2, [(0, 1)])
            .unwrap()
            .with_attributes(array![[1.0, 0.0], [-1.0, 0.0]])
            .unwrap();
        assert_eq!(
            node_cleanliness(&g, g.attributes().unwrap()),
            vec![0.0, 0.0]
        );
    }

    #[test]
    fn model_confidence_products() {
        assert!((model_confidence(0.9, 0.8) - 0.72).abs() < 1e-15);
        assert_eq!(model_confidence(0.37, 0.0), 0.0);
        assert_eq!(model_confidence(1.0, 1.0), 1.0);
    }

    #[test]
    fn selection_confidence_regions() {
        let c = cfg();
        let mut p = cand(0, 0, 0.0);
        p.cm = 0.95;
        assert_eq!(selection_confidence(&p, &c), 0.95);
        p.cm = 0.7;
        assert!((selection_confidence(&p, &c) - 0.56 / 0.62).abs() < 1e-12);
        p.cm = 0.005;
        p.cs = 0.6;
        assert_eq!(selection_confidence(&p, &c), 0.6);
        p.cs = 0.95;
        assert_eq!(selection_confidence(&p, &c), 0.8);
    }

    #[test]
    fn posterior_cases() {
        let c = cfg();
        let agree = posterior_confidence(true, true, None, 0.7, &c).unwrap();
        assert!((agree - 0.903_225_806_451_612_9).abs() < 1e-12);
        let twin_model = posterior_confidence(false, true, Some(true), 0.7, &c).unwrap();
        assert!((twin_model - 0.14 / 0.44).abs() < 1e-12);
        let twin_oracle = posterior_confidence(false, true, Some(false), 0.7, &c).unwrap();
        assert!((twin_oracle - 0.24 / 0.44).abs() < 1e-12);
        assert!(matches!(
            posterior_confidence(true, false, None, 0.7, &c),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn disagreement_guard() {
        let c = SelectionConfig::new(0.05, 0.01, 10, 1, 5, 1.0).unwrap();
        assert_eq!(
            posterior_confidence(true, false, Some(true), 1.0, &c).unwrap(),
            1.0
        );
    }

    fn star_fields() -> (InfluenceField, InfluenceField) {
        let g = Graph::from_edges(4, [(0, 1), (0, 2), (0, 3)]).unwrap();
        let f = compute_influence(&g, 1, 0.0).unwrap();
        (f.clone(), f)
    }

    #[test]
    fn theta_zero_activates_every_reached_node() {
        let (fs, ft) = star_fields();
        let c = SelectionConfig {
            theta: 0.0,
            ..cfg()
        };
        let set = activated_nodes(&cand(0, 1, 0.3), (&fs, &ft), &c);
        assert_eq!(set.src_bits.ones().collect::<Vec<_>>(), vec![1, 2, 3]);
        assert_eq!(set.tgt_bits.ones().collect::<Vec<_>>(), vec![0]);
    }

    #[test]
    fn threshold_filters_by_scaled_influence() {
        // A leaf's only reached node is the center, with influence 1/3 at k=1.
        // 0.9·(1/3) = 0.3 passes θ = 0.25; 0.6·(1/3) = 0.2 does not.
        let (fs, ft) = star_fields();
        let c = SelectionConfig {
            theta: 0.25,
            ..cfg()
        };
        assert_eq!(activated_nodes(&cand(1, 1, 0.9), (&fs, &ft), &c).len(), 2);
        assert!(activated_nodes(&cand(1, 1, 0.6), (&fs, &ft), &c).is_empty());
    }

    #[test]
    fn zero_confidence_activates_nothing() {
        let (fs, ft) = star_fields();
        assert!(activated_nodes(&cand(0, 1, 0.0), (&fs, &ft), &cfg()).is_empty());
    }

    fn set(n: usize, src: &[usize], tgt: &[usize]) -> ActivationSet {
        let mut s = ActivationSet::empty(n, n);
        src.iter().for_each(|&v| s.src_bits.insert(v));
        tgt.iter().for_each(|&v| s.tgt_bits.insert(v));
        s
    }

    #[test]
    fn greedy_prefers_larger_coverage() {
        let cands = [cand(0, 0, 0.5), cand(1, 1, 0.5)];
        let sets = [set(10, &[0, 1], &[0]), set(10, &[2, 3, 4], &[5, 6])];
        let sel = greedy_cover(&cands, &sets, 1, ActivationSet::empty(10, 10));
        assert_eq!(sel.picks, vec![1]);
        assert_eq!(sel.gains, vec![5]);
    }

    #[test]
    fn covered_candidates_lose_to_positive_gain() {
        let cands = [cand(0, 0, 0.99), cand(1, 1, 0.1)];
        let sets = [set(5, &[0], &[0]), set(5, &[1], &[])];
        let sel = greedy_cover(&cands, &sets, 2, set(5, &[0], &[0]));
        assert_eq!(sel.picks, vec![1, 0]);
        assert_eq!(sel.gains, vec![1, 0]);
    }

    #[test]
    fn ties_break_on_confidence_then_pair_order() {
        let cands = [cand(3, 0, 0.5), cand(1, 0, 0.5), cand(2, 0, 0.7)];
        let sets = vec![ActivationSet::empty(4, 4); 3];
        let sel = greedy_cover(&cands, &sets, 3, ActivationSet::empty(4, 4));
        assert_eq!(sel.picks, vec![2, 1, 0]);
    }

    #[test]
    fn exhausted_pool_is_short() {
        let cands = [cand(0, 0, 0.5)];
        let sel = greedy_cover(&cands, &[set(2, &[0], &[])], 3, ActivationSet::empty(2, 2));
        assert!(sel.short);
        assert_eq!(sel.picks.len(), 1);
    }

    proptest::proptest! {
        #[test]
        fn confidences_stay_in_unit_interval(
            c_orc in 0.02f64..=1.0,
            cm in 0.0f64..=1.0,
            cs in 0.0f64..=1.0,
            y: bool, y_model: bool, y_twin: bool,
        ) {
            let c = SelectionConfig { oracle_conf: c_orc, gamma: 0.01, ..cfg() };
            let p = CandidatePair::new(0, 0, cs, cm, &c);
            proptest::prop_assert!((0.0..=1.0).contains(&p.sel_conf));
            let post = posterior_confidence(y, y_model, Some(y_twin), cm, &c).unwrap();
            proptest::prop_assert!((0.0..=1.0 + 1e-12).contains(&post));
        }

        #[test]
        fn activation_monotone(theta_lo in 0.0f64..0.5, dt in 0.0f64..0.5, conf in 0.0f64..1.0, dc in 0.0f64..0.5) {
            let g = Graph::from_edges(6, [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (0, 3)]).unwrap();
            let f = compute_influence(&g, 2, 0.0).unwrap();
            let lo = SelectionConfig { theta: theta_lo, ..cfg() };
            let hi = SelectionConfig { theta: theta_lo + dt, ..cfg() };
            let base = activated_nodes(&cand(1, 2, conf), (&f, &f), &lo);
            proptest::prop_assert!(activated_nodes(&cand(1, 2, conf), (&f, &f), &hi).is_subset(&base));
            let boosted = activated_nodes(&cand(1, 2, (conf + dc).min(1.0)), (&f, &f), &lo);
            proptest::prop_assert!(base.is_subset(&boosted));
        }
    }
}
