//! Label denoising: model-assisted labels, twin node pairs and the fused
//! three-region label.

use std::collections::BTreeSet;

use ndarray::Array2;
use serde::Serialize;

use crate::align::{predicted_label, ModelState};
use crate::error::{Error, Result};
use crate::oracle::Oracle;
use crate::selection::{posterior_confidence, Cleanliness, SelectionConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Oracle,
    Model,
    TwinBackedOracle,
    TwinBackedModel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    High,
    Moderate,
    Low,
}

impl Region {
    /// `Acc·p > α` is high, `Acc·p ≤ γ` is low, everything between is moderate.
    pub fn classify(model_conf: f64, alpha: f64, gamma: f64) -> Self {
        if model_conf > alpha {
            Self::High
        } else if model_conf > gamma {
            Self::Moderate
        } else {
            Self::Low
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPair {
    pub i: usize,
    pub j: usize,
    pub label: bool,
    pub provenance: Provenance,
    pub confidence: f64,
    /// `(i_twin, j_twin, y_twin)` for twin-backed labels.
    pub twin: Option<(usize, usize, bool)>,
}

impl LabeledPair {
    pub fn oracle(i: usize, j: usize, label: bool, confidence: f64) -> Self {
        Self {
            i,
            j,
            label,
            provenance: Provenance::Oracle,
            confidence,
            twin: None,
        }
    }
}

/// `ŷ_ij` when `Acc·p_ij > α`, otherwise nothing.
pub fn model_assisted_label(state: &ModelState, i: usize, j: usize, alpha: f64) -> Option<bool> {
    (state.model_confidence(i, j) > alpha).then(|| predicted_label(state, i, j))
}

/// Two-hop features with unit-norm rows, so cosine similarity is a dot product.
#[derive(Debug, Clone)]
pub struct TwinFeatures {
    source: Array2<f64>,
    target: Array2<f64>,
}

impl TwinFeatures {
    pub fn new(source: &Array2<f64>, target: &Array2<f64>) -> Self {
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
        Self {
            source: unit(source),
            target: unit(target),
        }
    }

    /// Summed cosine distance between `(i, j)` and `(a, b)` endpoint-wise.
    pub fn distance(&self, (i, j): (usize, usize), (a, b): (usize, usize)) -> f64 {
        let ds = 1.0 - self.source.row(i).dot(&self.source.row(a));
        let dt = 1.0 - self.target.row(j).dot(&self.target.row(b));
        ds + dt
    }
}

/// The pool pair closest to `pair` in two-hop feature space; ties go to the
/// lexicographically smallest pair.
pub fn find_twin_pair(
    pair: (usize, usize),
    feat: &TwinFeatures,
    pool: &[(usize, usize)],
) -> Result<(usize, usize)> {
    pool.iter()
        .copied()
        .filter(|&p| p != pair)
        .map(|p| (feat.distance(pair, p), p))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|(_, p)| p)
        .ok_or_else(|| Error::Lookup(format!("no twin candidate for {pair:?}")))
}

/// Read-only inputs for fusing labels against one model state.
#[derive(Debug, Clone, Copy)]
pub struct DenoiseContext<'a> {
    pub state: &'a ModelState,
    pub features: &'a TwinFeatures,
    pub cleanliness: &'a Cleanliness,
}

/// One fused label and how it was reached.
#[derive(Debug, Clone, PartialEq)]
pub struct Fusion {
    pub labeled: LabeledPair,
    /// The twin pair's own label, when a twin was queried.
    pub twin_label: Option<LabeledPair>,
    pub region: Region,
    pub model_label: bool,
    pub oracle_label: Option<bool>,
    pub queries: usize,
}

fn twin_pool(
    (i, j): (usize, usize),
    pool: &[(usize, usize)],
    labeled: &BTreeSet<(usize, usize)>,
) -> Vec<(usize, usize)> {
    // Pairs sharing an endpoint with (i, j) are excluded: under a one-to-one
    // mapping their label is determined by the original's, not similar to it.
    pool.iter()
        .copied()
        .filter(|&(a, b)| a != i && b != j && !labeled.contains(&(a, b)))
        .collect()
}

/// Assigns the three-region fused label to `(i, j)`.
///
/// `pool` is the unlabeled candidate pool; `labeled` holds every pair labeled so
/// far and is used to keep the twin search on fresh pairs.
pub fn fuse_labels(
    (i, j): (usize, usize),
    ctx: &DenoiseContext<'_>,
    oracle: &mut Oracle<'_>,
    cfg: &SelectionConfig,
    pool: &[(usize, usize)],
    labeled: &BTreeSet<(usize, usize)>,
) -> Result<Fusion> {
    let cm = ctx.state.model_confidence(i, j);
    let y_model = predicted_label(ctx.state, i, j);
    let alpha = cfg.oracle_conf;
    let region = Region::classify(cm, alpha, cfg.gamma);
    let fusion = |labeled, twin_label, oracle_label, queries| Fusion {
        labeled,
        twin_label,
        region,
        model_label: y_model,
        oracle_label,
        queries,
    };

    match region {
        Region::High => Ok(fusion(
            LabeledPair {
                i,
                j,
                label: y_model,
                provenance: Provenance::Model,
                confidence: cm.min(1.0),
                twin: None,
            },
            None,
            None,
            0,
        )),
        Region::Low => {
            let y = oracle.query(i, j)?;
            let conf = ctx.cleanliness.score(i, j).min(alpha);
            Ok(fusion(LabeledPair::oracle(i, j, y, conf), None, Some(y), 1))
        }
        Region::Moderate => {
            let y = oracle.query(i, j)?;
            if y == y_model {
                let conf = posterior_confidence(y, y_model, None, cm, cfg)?;
                return Ok(fusion(LabeledPair::oracle(i, j, y, conf), None, Some(y), 1));
            }
            let candidates = twin_pool((i, j), pool, labeled);
            let (ti, tj) = match find_twin_pair((i, j), ctx.features, &candidates) {
                Ok(t) => t,
                Err(e) => {
                    log::warn!("{e}; keeping the oracle label");
                    return Ok(fusion(
                        LabeledPair::oracle(i, j, y, alpha),
                        None,
                        Some(y),
                        1,
                    ));
                }
            };
            let y_twin = oracle.query(ti, tj)?;
            let conf = posterior_confidence(y, y_model, Some(y_twin), cm, cfg)?;
            let (label, provenance) = if y_twin == y {
                (y, Provenance::TwinBackedOracle)
            } else {
                (y_model, Provenance::TwinBackedModel)
            };
            Ok(fusion(
                LabeledPair {
                    i,
                    j,
                    label,
                    provenance,
                    confidence: conf,
                    twin: Some((ti, tj, y_twin)),
                },
                Some(LabeledPair::oracle(ti, tj, y_twin, alpha)),
                Some(y),
                2,
            ))
        }
    }
}

/// Labels acquired for one batch.
#[derive(Debug, Clone, Default)]
pub struct BatchOutcome {
    /// Every new label, twin side-labels included, in acquisition order.
    pub labels: Vec<LabeledPair>,
    pub fusions: Vec<Fusion>,
    /// The budget ran out before the batch was finished.
    pub exhausted: bool,
}

/// Fuses labels for `batch` in order, stopping when the oracle budget runs out.
/// Pairs already in `labeled` (for example as an earlier twin) are skipped.
pub fn label_batch(
    batch: &[(usize, usize)],
    ctx: &DenoiseContext<'_>,
    oracle: &mut Oracle<'_>,
    cfg: &SelectionConfig,
    pool: &[(usize, usize)],
    labeled: &mut BTreeSet<(usize, usize)>,
) -> BatchOutcome {
    let mut out = BatchOutcome::default();
    for &pair in batch {
        if labeled.contains(&pair) {
            continue;
        }
        match fuse_labels(pair, ctx, oracle, cfg, pool, labeled) {
            Ok(f) => {
                labeled.insert((f.labeled.i, f.labeled.j));
                out.labels.push(f.labeled.clone());
                if let Some(t) = &f.twin_label {
                    labeled.insert((t.i, t.j));
                    out.labels.push(t.clone());
                }
                out.fusions.push(f);
            }
            Err(Error::BudgetExhausted { .. }) => {
                out.exhausted = true;
                break;
            }
            Err(e) => {
                log::warn!("labeling {pair:?} failed: {e}");
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use ndarray::array;

    use super::*;
    use crate::align::AlignmentMatrix;
    use crate::graph::{synthesize_pair, NetworkPair, NoiseSpec};

    fn state_with(scores: Array2<f64>, acc: f64) -> ModelState {
        let n = scores.nrows();
        let mut s = ModelState::from_scores(AlignmentMatrix::new(scores).unwrap(), n, &[]);
        s.acc = acc;
        s
    }

    #[test]
    fn gate_passes_above_alpha() {
        let s = state_with(array![[0.9, 0.1], [0.1, 0.9]], 0.95);
        assert_eq!(model_assisted_label(&s, 0, 0, 0.8), Some(true));
        assert_eq!(model_assisted_label(&s, 0, 1, 0.8), None);
    }

    #[test]
    fn gate_fails_at_low_accuracy() {
        let s = state_with(array![[0.9, 0.1], [0.1, 0.9]], 0.5);
        assert_eq!(model_assisted_label(&s, 0, 0, 0.8), None);
    }

    #[test]
    fn perfect_oracle_never_gated_out_by_smoothed_model() {
        let s = state_with(array![[1.0, 0.0], [0.0, 1.0]], 11.0 / 12.0);
        assert_eq!(model_assisted_label(&s, 0, 0, 1.0), None);
    }

    #[test]
    fn exact_duplicate_is_twin() {
        let x = array![[1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [0.5, 0.5]];
        let f = TwinFeatures::new(&x, &x);
        let twin = find_twin_pair((0, 1), &f, &[(3, 3), (2, 1), (1, 0)]).unwrap();
        assert_eq!(twin, (2, 1));
        assert!(f.distance((0, 1), twin).abs() < 1e-15);
    }

    #[test]
    fn twin_matches_exhaustive_scan() {
        let xs = array![
            [1.0, 0.2, 0.0],
            [0.1, 1.0, 0.3],
            [0.4, 0.4, 0.9],
            [0.9, 0.1, 0.1]
        ];
        let xt = array![
            [0.0, 1.0, 0.5],
            [1.0, 0.0, 0.2],
            [0.3, 0.8, 0.1],
            [0.2, 0.2, 1.0]
        ];
        let f = TwinFeatures::new(&xs, &xt);
        let pool = [(1, 2), (2, 3), (3, 0)];
        // Independent scan with explicit cosine formula.
        let cos = |a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>| {
            a.dot(&b) / (a.dot(&a).sqrt() * b.dot(&b).sqrt())
        };
        let dist = |(a, b): (usize, usize)| {
            (1.0 - cos(xs.row(0), xs.row(a))) + (1.0 - cos(xt.row(1), xt.row(b)))
        };
        let mut best = pool[0];
        for &p in &pool[1..] {
            if dist(p) < dist(best) {
                best = p;
            }
        }
        assert_eq!(find_twin_pair((0, 1), &f, &pool).unwrap(), best);
        assert_eq!(best, (3, 0));
    }

    #[test]
    fn twin_is_order_independent() {
        let x = array![[1.0, 0.0], [1.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let f = TwinFeatures::new(&x, &x);
        let a = find_twin_pair((3, 3), &f, &[(2, 1), (1, 2), (1, 1)]).unwrap();
        let b = find_twin_pair((3, 3), &f, &[(1, 1), (2, 1), (1, 2)]).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, (1, 1));
    }

    #[test]
    fn empty_twin_pool() {
        let x = array![[1.0]];
        let f = TwinFeatures::new(&x, &x);
        assert!(matches!(
            find_twin_pair((0, 0), &f, &[(0, 0)]),
            Err(Error::Lookup(_))
        ));
    }

    #[test]
    fn regions_partition() {
        for c in [0.0, 0.005, 0.01, 0.011, 0.5, 0.8, 0.81, 1.0] {
            let r = Region::classify(c, 0.8, 0.01);
            let expect = if c > 0.8 {
                Region::High
            } else if c > 0.01 {
                Region::Moderate
            } else {
                Region::Low
            };
            assert_eq!(r, expect);
        }
    }

    struct Fixture {
        pair: NetworkPair,
        feats: TwinFeatures,
        clean: Cleanliness,
    }

    fn fixture() -> Fixture {
        let pair = synthesize_pair(6, 0.5, 4, NoiseSpec::none()).unwrap();
        let x = Array2::eye(6);
        Fixture {
            feats: TwinFeatures::new(&x, &x),
            clean: Cleanliness::compute(&pair),
            pair,
        }
    }

    fn identity_state(acc: f64, peak: f64) -> ModelState {
        let mut s = Array2::from_elem((6, 6), (1.0 - peak) / 5.0);
        s.diag_mut().fill(peak);
        state_with(s, acc)
    }

    #[test]
    fn high_region_uses_model_for_free() {
        let f = fixture();
        let state = identity_state(0.95, 0.9);
        let ctx = DenoiseContext {
            state: &state,
            features: &f.feats,
            cleanliness: &f.clean,
        };
        let mut oracle = Oracle::new(&f.pair, 0.8, 1).unwrap();
        let cfg = SelectionConfig::default();
        let out = fuse_labels((0, 0), &ctx, &mut oracle, &cfg, &[], &BTreeSet::new()).unwrap();
        assert_eq!(out.region, Region::High);
        assert_eq!(out.labeled.provenance, Provenance::Model);
        assert!(out.labeled.label);
        assert_eq!(oracle.queries_used(), 0);
    }

    fn seed_answering(pair: &NetworkPair, q: (usize, usize), answer: bool) -> u64 {
        (0..)
            .find(|&s| Oracle::new(pair, 0.8, s).unwrap().query(q.0, q.1).unwrap() == answer)
            .unwrap()
    }

    #[test]
    fn moderate_agreement_costs_one_query() {
        let f = fixture();
        let state = identity_state(0.9, 0.5);
        let ctx = DenoiseContext {
            state: &state,
            features: &f.feats,
            cleanliness: &f.clean,
        };
        let cfg = SelectionConfig::default();
        // ŷ(0,0) = 1 with Acc·p = 0.45; make the oracle agree.
        let mut oracle = Oracle::new(&f.pair, 0.8, seed_answering(&f.pair, (0, 0), true)).unwrap();
        let out = fuse_labels((0, 0), &ctx, &mut oracle, &cfg, &[], &BTreeSet::new()).unwrap();
        assert_eq!(out.region, Region::Moderate);
        assert_eq!(out.queries, 1);
        assert!(out.labeled.label);
        assert_eq!(out.labeled.provenance, Provenance::Oracle);
    }

    #[test]
    fn moderate_disagreement_queries_twin() {
        let f = fixture();
        let state = identity_state(0.9, 0.5);
        let ctx = DenoiseContext {
            state: &state,
            features: &f.feats,
            cleanliness: &f.clean,
        };
        let cfg = SelectionConfig::default();
        // ŷ(0,0) = 1; pick a seed where the oracle says 0.
        let mut oracle = Oracle::new(&f.pair, 0.8, seed_answering(&f.pair, (0, 0), false)).unwrap();
        let pool = [(0, 1), (1, 1), (2, 3), (4, 5)];
        let mut labeled = BTreeSet::new();
        let out = label_batch(&[(0, 0)], &ctx, &mut oracle, &cfg, &pool, &mut labeled);
        assert_eq!(out.labels.len(), 2);
        assert_eq!(oracle.queries_used(), 2);
        let fused = &out.labels[0];
        let (ti, tj, y_twin) = fused.twin.unwrap();
        assert!(ti != 0 && tj != 0, "twin shares no endpoint");
        assert_eq!(out.labels[1].label, y_twin);
        assert_eq!(oracle.answered(ti, tj), Some(y_twin));
        // Binary labels: the twin sides with exactly one of oracle and model.
        match fused.provenance {
            Provenance::TwinBackedOracle => assert!(!fused.label && !y_twin),
            Provenance::TwinBackedModel => assert!(fused.label && y_twin),
            p => panic!("unexpected provenance {p:?}"),
        }
    }

    #[test]
    fn budget_exhaustion_stops_batch() {
        let f = fixture();
        let state = identity_state(0.9, 0.5);
        let ctx = DenoiseContext {
            state: &state,
            features: &f.feats,
            cleanliness: &f.clean,
        };
        let cfg = SelectionConfig::default();
        let mut oracle = Oracle::new(&f.pair, 1.0, 0).unwrap().with_budget(1);
        let mut labeled = BTreeSet::new();
        let out = label_batch(
            &[(0, 0), (1, 1)],
            &ctx,
            &mut oracle,
            &cfg,
            &[],
            &mut labeled,
        );
        assert!(out.exhausted);
        assert_eq!(out.labels.len(), 1);
    }

    #[test]
    fn batch_of_high_region_pairs_is_free() {
        let f = fixture();
        let state = identity_state(0.95, 0.95);
        let ctx = DenoiseContext {
            state: &state,
            features: &f.feats,
            cleanliness: &f.clean,
        };
        let cfg = SelectionConfig::default();
        let mut oracle = Oracle::new(&f.pair, 0.8, 0).unwrap();
        let batch: Vec<_> = (0..5).map(|i| (i, i)).collect();
        let out = label_batch(&batch, &ctx, &mut oracle, &cfg, &[], &mut BTreeSet::new());
        assert_eq!(out.labels.len(), 5);
        assert!(out.labels.iter().all(|l| l.provenance == Provenance::Model));
        assert_eq!(oracle.queries_used(), 0);
    }

    #[test]
    fn perfect_oracle_labels_are_true() {
        let f = fixture();
        let state = identity_state(0.9, 0.4);
        let ctx = DenoiseContext {
            state: &state,
            features: &f.feats,
            cleanliness: &f.clean,
        };
        let cfg = SelectionConfig {
            oracle_conf: 1.0,
            ..SelectionConfig::default()
        };
        let mut oracle = Oracle::new(&f.pair, 1.0, 0).unwrap();
        let batch: Vec<_> = (0..6).flat_map(|i| (0..2).map(move |j| (i, j))).collect();
        let pool: Vec<_> = (0..6).flat_map(|i| (0..6).map(move |j| (i, j))).collect();
        let out = label_batch(&batch, &ctx, &mut oracle, &cfg, &pool, &mut BTreeSet::new());
        assert!(!out.fusions.is_empty());
        for fusion in &out.fusions {
            if fusion.labeled.provenance == Provenance::Oracle {
                let l = &fusion.labeled;
                assert_eq!(l.label, f.pair.is_true_link(l.i, l.j));
            }
        }
    }
}
