//! Alignment metrics and the uncertainty-sampling baselines.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::align::{AlignmentMatrix, ModelState};
use crate::error::{Error, Result};

pub const REPORTED_K: [usize; 3] = [1, 5, 10];

/// 1-based position of column `t` in row `row` sorted by descending score,
/// ties ordered by column index.
pub fn rank_of(row: ndarray::ArrayView1<'_, f64>, t: usize) -> usize {
    let target = row[t];
    1 + row
        .iter()
        .enumerate()
        .filter(|&(j, &x)| x > target || (x == target && j < t))
        .count()
}

fn evaluated_ranks(
    scores: &AlignmentMatrix,
    groundtruth: &BTreeMap<usize, usize>,
    exclude: &BTreeSet<usize>,
) -> Result<Vec<usize>> {
    let ranks: Vec<usize> = groundtruth
        .iter()
        .filter(|(s, _)| !exclude.contains(s))
        .map(|(&s, &t)| rank_of(scores.row(s), t))
        .collect();
    if ranks.is_empty() {
        return Err(Error::Metric(
            "no groundtruth anchors left to evaluate".into(),
        ));
    }
    Ok(ranks)
}

/// Fraction of evaluated anchors whose true target is within the top `k` of its row.
pub fn acc_at_k(
    scores: &AlignmentMatrix,
    groundtruth: &BTreeMap<usize, usize>,
    k: usize,
    exclude: &BTreeSet<usize>,
) -> Result<f64> {
    if k == 0 {
        return Err(Error::Parameter("k must be at least 1".into()));
    }
    let ranks = evaluated_ranks(scores, groundtruth, exclude)?;
    Ok(ranks.iter().filter(|&&r| r <= k).count() as f64 / ranks.len() as f64)
}

/// Mean reciprocal rank of the true target over evaluated anchors.
pub fn map_score(
    scores: &AlignmentMatrix,
    groundtruth: &BTreeMap<usize, usize>,
    exclude: &BTreeSet<usize>,
) -> Result<f64> {
    let ranks = evaluated_ranks(scores, groundtruth, exclude)?;
    Ok(ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / ranks.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub acc_at: BTreeMap<usize, f64>,
    pub map_score: f64,
    pub evaluated_on: usize,
}

impl MetricsReport {
    pub fn acc(&self, k: usize) -> f64 {
        self.acc_at[&k]
    }
}

/// Acc@{1,5,10} and MAP in a single ranking pass.
pub fn evaluate(
    scores: &AlignmentMatrix,
    groundtruth: &BTreeMap<usize, usize>,
    exclude: &BTreeSet<usize>,
) -> Result<MetricsReport> {
    let ranks = evaluated_ranks(scores, groundtruth, exclude)?;
    let n = ranks.len() as f64;
    let acc_at = REPORTED_K
        .iter()
        .map(|&k| (k, ranks.iter().filter(|&&r| r <= k).count() as f64 / n))
        .collect();
    Ok(MetricsReport {
        acc_at,
        map_score: ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / n,
        evaluated_on: ranks.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    Random,
    Entropy,
    Margin,
    LeastConfident,
}

/// Uncertainty of one probability row; larger is picked first.
fn uncertainty(strategy: Baseline, probs: &[f64]) -> f64 {
    let max = probs.iter().copied().fold(0.0, f64::max);
    match strategy {
        Baseline::Entropy => -probs
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| p * p.ln())
            .sum::<f64>(),
        Baseline::LeastConfident => 1.0 - max,
        // Smallest max − min gap first.
        Baseline::Margin => {
            let min = probs.iter().copied().fold(f64::INFINITY, f64::min);
            -(max - min)
        }
        Baseline::Random => 0.0,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineBatch {
    pub pairs: Vec<(usize, usize)>,
    /// Fewer than `b` source rows were available.
    pub short: bool,
}

/// Picks `b` source rows from `pool` by the strategy's row score and pairs
/// each with its best-scoring pool target.
pub fn baseline_select(
    strategy: Baseline,
    state: &ModelState,
    pool: &[(usize, usize)],
    b: usize,
    seed: u64,
) -> Result<BaselineBatch> {
    if pool.is_empty() {
        return Err(Error::Parameter(
            "baseline selection needs a non-empty pool".into(),
        ));
    }
    if b == 0 {
        return Err(Error::Parameter("batch must be at least 1".into()));
    }
    let mut best: BTreeMap<usize, usize> = BTreeMap::new();
    for &(i, j) in pool {
        let row = state.scores.row(i);
        best.entry(i)
            .and_modify(|cur| {
                if row[j] > row[*cur] || (row[j] == row[*cur] && j < *cur) {
                    *cur = j;
                }
            })
            .or_insert(j);
    }
    let mut rows: Vec<(usize, usize)> = best.into_iter().collect();
    match strategy {
        Baseline::Random => rows.shuffle(&mut ChaCha8Rng::seed_from_u64(seed)),
        _ => {
            let score = |i: usize| uncertainty(strategy, &state.prob[i]);
            rows.sort_by(|a, b| score(b.0).total_cmp(&score(a.0)).then(a.cmp(b)));
        }
    }
    let short = rows.len() < b;
    rows.truncate(b);
    Ok(BaselineBatch { pairs: rows, short })
}
