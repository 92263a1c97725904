//! Simulated annotator that answers anchor-link queries correctly with
//! probability α.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::graph::NetworkPair;

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform draw in `[0, 1)` that depends only on `(seed, i, j)`.
pub fn pair_coin(seed: u64, i: usize, j: usize) -> f64 {
    let h = splitmix64(splitmix64(splitmix64(seed) ^ i as u64) ^ j as u64);
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

#[derive(Debug, Clone)]
pub struct Oracle<'a> {
    pair: &'a NetworkPair,
    alpha: f64,
    seed: u64,
    budget: Option<usize>,
    answered: BTreeMap<(usize, usize), bool>,
}

impl<'a> Oracle<'a> {
    pub fn new(pair: &'a NetworkPair, alpha: f64, seed: u64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::Parameter(format!(
                "oracle accuracy {alpha} outside (0, 1]"
            )));
        }
        Ok(Self {
            pair,
            alpha,
            seed,
            budget: None,
            answered: BTreeMap::new(),
        })
    }

    /// Refuses queries for new pairs once `budget` distinct pairs were answered.
    pub fn with_budget(mut self, budget: usize) -> Self {
        self.budget = Some(budget);
        self
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn queries_used(&self) -> usize {
        self.answered.len()
    }

    pub fn remaining(&self) -> usize {
        self.budget
            .map_or(usize::MAX, |b| b.saturating_sub(self.queries_used()))
    }

    /// Previously given answer for `(i, j)`, if any.
    pub fn answered(&self, i: usize, j: usize) -> Option<bool> {
        self.answered.get(&(i, j)).copied()
    }

    /// Answer the oracle gives for `(i, j)`, without charging.
    fn answer(&self, i: usize, j: usize) -> bool {
        let truth = self.pair.is_true_link(i, j);
        if pair_coin(self.seed, i, j) < self.alpha {
            truth
        } else {
            !truth
        }
    }

    /// Labels `(i, j)`. Repeats return the stored answer and are not charged.
    pub fn query(&mut self, i: usize, j: usize) -> Result<bool> {
        let (ns, nt) = (self.pair.source.node_count(), self.pair.target.node_count());
        if i >= ns {
            return Err(Error::Bounds { id: i, len: ns });
        }
        if j >= nt {
            return Err(Error::Bounds { id: j, len: nt });
        }
        if let Some(y) = self.answered(i, j) {
            return Ok(y);
        }
        if let Some(budget) = self.budget {
            if self.queries_used() >= budget {
                return Err(Error::BudgetExhausted { budget });
            }
        }
        let y = self.answer(i, j);
        self.answered.insert((i, j), y);
        Ok(y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{synthesize_pair, NoiseSpec};

    fn pair() -> NetworkPair {
        synthesize_pair(30, 0.1, 1, NoiseSpec::none()).unwrap()
    }

    #[test]
    fn perfect_oracle_tells_truth() {
        let p = pair();
        let mut o = Oracle::new(&p, 1.0, 3).unwrap();
        for i in 0..30 {
            for j in 0..30 {
                assert_eq!(o.query(i, j).unwrap(), p.is_true_link(i, j));
            }
        }
    }

    #[test]
    fn repeat_queries_are_consistent_and_free() {
        let p = pair();
        let mut o = Oracle::new(&p, 0.6, 3).unwrap();
        let first = o.query(2, 5).unwrap();
        assert_eq!(o.query(2, 5).unwrap(), first);
        assert_eq!(o.queries_used(), 1);
    }

    #[test]
    fn budget_blocks_new_pairs_only() {
        let p = pair();
        let mut o = Oracle::new(&p, 0.8, 3).unwrap().with_budget(1);
        o.query(0, 0).unwrap();
        assert!(o.query(0, 0).is_ok());
        assert!(matches!(
            o.query(0, 1),
            Err(Error::BudgetExhausted { budget: 1 })
        ));
    }

    #[test]
    fn bounds_checked() {
        let p = pair();
        let mut o = Oracle::new(&p, 0.8, 3).unwrap();
        assert!(matches!(o.query(30, 0), Err(Error::Bounds { .. })));
        assert!(Oracle::new(&p, 0.0, 0).is_err());
    }

    #[test]
    fn answers_depend_only_on_seed_and_pair() {
        let p = pair();
        let mut a = Oracle::new(&p, 0.5, 42).unwrap();
        let mut b = Oracle::new(&p, 0.5, 42).unwrap();
        let forward: Vec<bool> = (0..30).map(|j| a.query(1, j).unwrap()).collect();
        let backward: Vec<bool> = (0..30).rev().map(|j| b.query(1, j).unwrap()).collect();
        assert_eq!(forward, backward.into_iter().rev().collect::<Vec<_>>());
    }

    #[test]
    fn empirical_accuracy_matches_alpha() {
        // 10⁵ distinct pairs on a 400×400 grid; 3σ = 3·sqrt(0.16/1e5) ≈ 0.0038.
        let p = synthesize_pair(400, 0.01, 2, NoiseSpec::none()).unwrap();
        let mut o = Oracle::new(&p, 0.8, 7).unwrap();
        let mut correct = 0usize;
        let mut total = 0usize;
        'outer: for i in 0..400 {
            for j in 0..400 {
                if total == 100_000 {
                    break 'outer;
                }
                correct += usize::from(o.query(i, j).unwrap() == p.is_true_link(i, j));
                total += 1;
            }
        }
        let acc = correct as f64 / total as f64;
        assert!((acc - 0.8).abs() <= 0.01, "empirical accuracy {acc}");
    }
}
