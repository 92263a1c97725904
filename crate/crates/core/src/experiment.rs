//! The active-learning loop, its configuration, and seeded sweeps.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::align::{align, build_prior, AlignerConfig, ModelKind, ModelState};
use crate::denoise::{label_batch, DenoiseContext, LabeledPair, Provenance, Region, TwinFeatures};
use crate::error::{Error, Result};
use crate::eval::{baseline_select, evaluate, Baseline};
use crate::graph::{
    inject_structural_noise, load_attributes, load_edge_list, load_pairs, synthesize_pair,
    two_hop_features, NetworkPair, NoiseSpec,
};
use crate::influence::{compute_influence, DEFAULT_INFLUENCE_K, DEFAULT_TRUNC_EPS};
use crate::oracle::splitmix64;
use crate::selection::{greedy_select, score_candidates, Cleanliness, SelectionConfig};

pub const CSV_HEADER: &str =
    "iteration,labeled_count,oracle_queries,model_labels,twin_queries,acc1,acc5,acc10,map";

pub const SWEEP_HEADER: &str = "training_rate,budget,alpha,edge_noise_ratio,strategy,runs,failures,\
acc1_mean,acc1_std,acc5_mean,acc5_std,acc10_mean,acc10_std,map_mean,map_std,oracle_queries_mean,error";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Rana,
    Random,
    Entropy,
    Margin,
    LeastConfident,
}

impl Strategy {
    fn baseline(self) -> Option<Baseline> {
        match self {
            Strategy::Rana => None,
            Strategy::Random => Some(Baseline::Random),
            Strategy::Entropy => Some(Baseline::Entropy),
            Strategy::Margin => Some(Baseline::Margin),
            Strategy::LeastConfident => Some(Baseline::LeastConfident),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Rana => "rana",
            Strategy::Random => "random",
            Strategy::Entropy => "entropy",
            Strategy::Margin => "margin",
            Strategy::LeastConfident => "least_confident",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rana" => Ok(Strategy::Rana),
            "random" => Ok(Strategy::Random),
            "entropy" => Ok(Strategy::Entropy),
            "margin" => Ok(Strategy::Margin),
            "least_confident" => Ok(Strategy::LeastConfident),
            other => Err(Error::Config(format!("unknown strategy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Dataset {
    /// Random graph plus a permuted noisy copy, regenerated from each run seed.
    Synthetic { nodes: usize, density: f64 },
    /// Edge lists, a groundtruth pair file and optional attribute CSVs.
    Files {
        source_edges: PathBuf,
        target_edges: PathBuf,
        groundtruth: PathBuf,
        #[serde(default)]
        source_attributes: Option<PathBuf>,
        #[serde(default)]
        target_attributes: Option<PathBuf>,
    },
}

impl Dataset {
    fn resolve_paths(&mut self, base: &Path) {
        if let Dataset::Files {
            source_edges,
            target_edges,
            groundtruth,
            source_attributes,
            target_attributes,
        } = self
        {
            let fix = |p: &mut PathBuf| {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            };
            fix(source_edges);
            fix(target_edges);
            fix(groundtruth);
            source_attributes.iter_mut().for_each(fix);
            target_attributes.iter_mut().for_each(fix);
        }
    }
}

fn default_dataset() -> Dataset {
    Dataset::Synthetic {
        nodes: 200,
        density: 0.05,
    }
}

/// Sweep axes; an empty axis keeps the base config's value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepGrid {
    pub training_rate: Vec<f64>,
    pub budget: Vec<usize>,
    pub alpha: Vec<f64>,
    pub edge_noise_ratio: Vec<f64>,
    pub strategy: Vec<Strategy>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: Dataset,
    pub model: ModelKind,
    pub training_rate: f64,
    pub budget: usize,
    pub batch: usize,
    pub alpha: f64,
    pub theta: f64,
    pub gamma: f64,
    pub influence_k: usize,
    pub cand_k: usize,
    pub edge_noise_ratio: f64,
    pub strategy: Strategy,
    pub seeds: Vec<u64>,
    pub output: Option<PathBuf>,
    pub damping: f64,
    pub max_iters: usize,
    pub tol: f64,
    /// Upper bound on refit rounds; model labels are free, so the budget alone
    /// does not bound the loop.
    pub max_rounds: usize,
    pub sweep: SweepGrid,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: default_dataset(),
            model: ModelKind::IsoRank,
            training_rate: 0.1,
            budget: 100,
            batch: 10,
            alpha: 0.8,
            theta: 0.05,
            gamma: 0.01,
            influence_k: DEFAULT_INFLUENCE_K,
            cand_k: 5,
            edge_noise_ratio: 0.1,
            strategy: Strategy::Rana,
            seeds: vec![0],
            output: None,
            damping: 0.85,
            max_iters: 100,
            tol: 1e-6,
            max_rounds: 30,
            sweep: SweepGrid::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a TOML config; relative dataset paths resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_toml_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if let Some(dir) = path.parent() {
            cfg.dataset.resolve_paths(dir);
        }
        Ok(cfg)
    }

    pub fn aligner_config(&self) -> Result<AlignerConfig> {
        AlignerConfig::new(
            self.damping,
            self.max_iters,
            self.tol,
            self.cand_k,
            self.model,
        )
    }

    pub fn selection_config(&self) -> Result<SelectionConfig> {
        SelectionConfig::new(
            self.theta,
            self.gamma,
            self.budget,
            self.batch.min(self.budget),
            self.cand_k,
            self.alpha,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.training_rate > 0.0 && self.training_rate < 1.0) {
            return Err(Error::Config(format!(
                "training_rate {} outside (0, 1)",
                self.training_rate
            )));
        }
        if self.batch == 0 {
            return Err(Error::Config("batch must be at least 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        if let Dataset::Synthetic { nodes, density } = self.dataset {
            if nodes < 2 || !(density > 0.0 && density < 1.0) {
                return Err(Error::Config(format!(
                    "synthetic dataset needs nodes >= 2 and density in (0, 1), got {nodes} and {density}"
                )));
            }
        }
        NoiseSpec::new(self.edge_noise_ratio, 0)?;
        self.aligner_config()?;
        self.selection_config()?;
        Ok(())
    }
}

/// Independent per-purpose seeds derived from one run seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunSeeds {
    pub graph: u64,
    pub noise: u64,
    pub anchors: u64,
    pub oracle: u64,
    pub baseline: u64,
}

impl RunSeeds {
    pub fn derive(seed: u64) -> Self {
        let base = splitmix64(seed);
        let stream = |k: u64| splitmix64(base ^ splitmix64(k));
        Self {
            graph: stream(1),
            noise: stream(2),
            anchors: stream(3),
            oracle: stream(4),
            baseline: stream(5),
        }
    }
}

/// Builds the network pair for one run, anchors included.
pub fn build_pair(cfg: &ExperimentConfig, seed: u64) -> Result<NetworkPair> {
    let seeds = RunSeeds::derive(seed);
    let noise = NoiseSpec::new(cfg.edge_noise_ratio, seeds.noise)?;
    let mut pair = match &cfg.dataset {
        Dataset::Synthetic { nodes, density } => {
            synthesize_pair(*nodes, *density, seeds.graph, noise)?
        }
        Dataset::Files {
            source_edges,
            target_edges,
            groundtruth,
            source_attributes,
            target_attributes,
        } => {
            let mut source = load_edge_list(source_edges, None)?;
            let mut target = load_edge_list(target_edges, None)?;
            if let Some(p) = source_attributes {
                source = load_attributes(p, source)?;
            }
            if let Some(p) = target_attributes {
                target = load_attributes(p, target)?;
            }
            let target = inject_structural_noise(&target, noise)?;
            NetworkPair::new(source, target, load_pairs(groundtruth)?, [])?
        }
    };
    pair.sample_anchors(cfg.training_rate, seeds.anchors)?;
    Ok(pair)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunRow {
    pub iteration: usize,
    pub labeled_count: usize,
    pub oracle_queries: usize,
    pub model_labels: usize,
    pub twin_queries: usize,
    pub acc1: f64,
    pub acc5: f64,
    pub acc10: f64,
    pub map: f64,
}

/// One fused labeling with the truth it can be scored against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionRecord {
    pub iteration: usize,
    pub i: usize,
    pub j: usize,
    pub region: Region,
    pub provenance: Provenance,
    pub truth: bool,
    pub oracle_label: Option<bool>,
    pub fused_label: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub seed: u64,
    pub rows: Vec<RunRow>,
    pub fusions: Vec<FusionRecord>,
}

impl RunLog {
    pub fn last(&self) -> &RunRow {
        self.rows
            .last()
            .expect("a run log always holds the initial row")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{:.6},{:.6},{:.6},{:.6}",
                r.iteration,
                r.labeled_count,
                r.oracle_queries,
                r.model_labels,
                r.twin_queries,
                r.acc1,
                r.acc5,
                r.acc10,
                r.map
            )
            .expect("writing to a String");
        }
        out
    }
}

/// Acquired labels in acquisition order. A positive that would give a source
/// (or target) a second partner is dropped; the first one wins.
#[derive(Debug, Clone, Default)]
pub struct LabelStore {
    labels: Vec<LabeledPair>,
    pos_source: BTreeMap<usize, usize>,
    pos_target: BTreeSet<usize>,
    dropped: usize,
}

impl LabelStore {
    pub fn with_anchors(anchors: &[(usize, usize)]) -> Self {
        let mut s = Self::default();
        for &(i, j) in anchors {
            s.pos_source.insert(i, j);
            s.pos_target.insert(j);
        }
        s
    }

    pub fn push(&mut self, l: LabeledPair) -> bool {
        if l.label {
            if self.pos_source.contains_key(&l.i) || self.pos_target.contains(&l.j) {
                self.dropped += 1;
                return false;
            }
            self.pos_source.insert(l.i, l.j);
            self.pos_target.insert(l.j);
        }
        self.labels.push(l);
        true
    }

    pub fn labels(&self) -> &[LabeledPair] {
        &self.labels
    }

    pub fn dropped(&self) -> usize {
        self.dropped
    }

    pub fn has_positive(&self, i: usize) -> bool {
        self.pos_source.contains_key(&i)
    }
}

/// Top-`cand_k` targets of every source row without a positive label, minus
/// pairs already labeled.
pub fn candidate_pool(
    state: &ModelState,
    store: &LabelStore,
    labeled: &BTreeSet<(usize, usize)>,
) -> Vec<(usize, usize)> {
    state
        .candidates
        .iter()
        .enumerate()
        .filter(|(i, _)| !store.has_positive(*i))
        .flat_map(|(i, row)| row.iter().map(move |&j| (i, j)))
        .filter(|p| !labeled.contains(p))
        .collect()
}

/// Runs the select/label/refit loop for one seed.
///
/// Metrics are scored on the groundtruth links that were not initial anchors,
/// so every strategy is evaluated on the same set.
pub fn run_experiment(cfg: &ExperimentConfig, seed: u64) -> Result<RunLog> {
    cfg.validate()?;
    let pair = build_pair(cfg, seed)?;
    run_on_pair(cfg, &pair, seed)
}

/// [`run_experiment`] on a prebuilt pair whose anchors are already set.
pub fn run_on_pair(cfg: &ExperimentConfig, pair: &NetworkPair, seed: u64) -> Result<RunLog> {
    let seeds = RunSeeds::derive(seed);
    let acfg = cfg.aligner_config()?;
    let scfg = cfg.selection_config()?;
    let exclude: BTreeSet<usize> = pair.anchors().iter().map(|&(i, _)| i).collect();

    let mut oracle =
        crate::oracle::Oracle::new(pair, cfg.alpha, seeds.oracle)?.with_budget(cfg.budget);
    let mut store = LabelStore::with_anchors(pair.anchors());
    let mut labeled: BTreeSet<(usize, usize)> = pair.anchors().iter().copied().collect();

    let cleanliness = Cleanliness::compute(pair);
    let rana = cfg.strategy.baseline().is_none();
    let (fields, twins) = if rana {
        let fs = compute_influence(&pair.source, cfg.influence_k, DEFAULT_TRUNC_EPS)?;
        let ft = compute_influence(&pair.target, cfg.influence_k, DEFAULT_TRUNC_EPS)?;
        let tw = TwinFeatures::new(
            &two_hop_features(&pair.source),
            &two_hop_features(&pair.target),
        );
        (Some((fs, ft)), Some(tw))
    } else {
        (None, None)
    };

    let mut log = RunLog {
        seed,
        rows: Vec::new(),
        fusions: Vec::new(),
    };
    let (mut model_labels, mut twin_queries) = (0, 0);
    for iteration in 0.. {
        let prior = build_prior(pair, store.labels())?;
        let state = align(pair, &prior, &acfg)?;
        let m = evaluate(&state.scores, pair.groundtruth(), &exclude)?;
        log.rows.push(RunRow {
            iteration,
            labeled_count: store.labels().len(),
            oracle_queries: oracle.queries_used(),
            model_labels,
            twin_queries,
            acc1: m.acc(1),
            acc5: m.acc(5),
            acc10: m.acc(10),
            map: m.map_score,
        });
        if oracle.remaining() == 0 || iteration >= cfg.max_rounds {
            break;
        }
        let pool = candidate_pool(&state, &store, &labeled);
        if pool.is_empty() {
            log::info!("seed {seed}: candidate pool empty after {iteration} rounds");
            break;
        }

        let before = labeled.len();
        match (cfg.strategy.baseline(), &fields, &twins) {
            (None, Some((fs, ft)), Some(tw)) => {
                let cands = score_candidates(&pool, &state, &cleanliness, &scfg);
                let covered = crate::selection::ActivationSet::empty(
                    pair.source.node_count(),
                    pair.target.node_count(),
                );
                let sel = greedy_select(&cands, (fs, ft), &scfg, covered)?;
                let batch: Vec<(usize, usize)> = sel
                    .picks
                    .iter()
                    .map(|&k| (cands[k].i, cands[k].j))
                    .collect();
                let ctx = DenoiseContext {
                    state: &state,
                    features: tw,
                    cleanliness: &cleanliness,
                };
                let out = label_batch(&batch, &ctx, &mut oracle, &scfg, &pool, &mut labeled);
                for f in &out.fusions {
                    if f.labeled.provenance == Provenance::Model {
                        model_labels += 1;
                    }
                    if f.twin_label.is_some() {
                        twin_queries += 1;
                    }
                    log.fusions.push(FusionRecord {
                        iteration,
                        i: f.labeled.i,
                        j: f.labeled.j,
                        region: f.region,
                        provenance: f.labeled.provenance,
                        truth: pair.is_true_link(f.labeled.i, f.labeled.j),
                        oracle_label: f.oracle_label,
                        fused_label: f.labeled.label,
                    });
                }
                for l in out.labels {
                    store.push(l);
                }
            }
            (Some(b), _, _) => {
                let round_seed = splitmix64(seeds.baseline ^ iteration as u64);
                let batch = baseline_select(b, &state, &pool, scfg.batch, round_seed)?;
                for (i, j) in batch.pairs {
                    let y = match oracle.query(i, j) {
                        Ok(y) => y,
                        Err(Error::BudgetExhausted { .. }) => break,
                        Err(e) => return Err(e),
                    };
                    labeled.insert((i, j));
                    store.push(LabeledPair::oracle(i, j, y, cfg.alpha));
                }
            }
            _ => unreachable!("rana runs precompute influence and twin features"),
        }
        if labeled.len() == before {
            log::info!("seed {seed}: no new labels in round {iteration}");
            break;
        }
    }
    if store.dropped() > 0 {
        log::debug!(
            "seed {seed}: dropped {} conflicting positives",
            store.dropped()
        );
    }
    Ok(log)
}

/// Runs every seed of `cfg` in order.
pub fn run_all(cfg: &ExperimentConfig) -> Result<Vec<RunLog>> {
    cfg.seeds.iter().map(|&s| run_experiment(cfg, s)).collect()
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub config: ExperimentConfig,
    /// Successful runs, in seed order.
    pub runs: Vec<RunLog>,
    /// `(seed, message)` for each failed run.
    pub failures: Vec<(u64, String)>,
}

impl CellResult {
    pub fn final_metric(&self, pick: impl Fn(&RunRow) -> f64) -> Vec<f64> {
        self.runs.iter().map(|r| pick(r.last())).collect()
    }

    pub fn csv_row(&self) -> String {
        let c = &self.config;
        let mut row = format!(
            "{},{},{},{},{},{},{}",
            c.training_rate,
            c.budget,
            c.alpha,
            c.edge_noise_ratio,
            c.strategy.name(),
            self.runs.len(),
            self.failures.len()
        );
        if self.runs.is_empty() {
            row.push_str(",,,,,,,,,,");
        } else {
            let metrics: [fn(&RunRow) -> f64; 5] = [
                |r| r.acc1,
                |r| r.acc5,
                |r| r.acc10,
                |r| r.map,
                |r| r.oracle_queries as f64,
            ];
            for (k, f) in metrics.iter().enumerate() {
                let (m, s) = mean_std(&self.final_metric(f));
                if k < 4 {
                    write!(row, ",{m:.6},{s:.6}").expect("writing to a String");
                } else {
                    write!(row, ",{m:.6}").expect("writing to a String");
                }
            }
        }
        let err: Vec<String> = self
            .failures
            .iter()
            .map(|(s, e)| format!("seed {s}: {e}").replace([',', '\n'], ";"))
            .collect();
        write!(row, ",{}", err.join(" | ")).expect("writing to a String");
        row
    }
}

/// Expands the grid in `cfg.sweep` into concrete configs, in row-major order
/// over training_rate, budget, alpha, edge_noise_ratio, strategy.
pub fn grid_cells(cfg: &ExperimentConfig) -> Vec<ExperimentConfig> {
    fn axis<T: Clone>(values: &[T], base: T) -> Vec<T> {
        if values.is_empty() {
            vec![base]
        } else {
            values.to_vec()
        }
    }
    let g = &cfg.sweep;
    let mut cells = Vec::new();
    for &tr in &axis(&g.training_rate, cfg.training_rate) {
        for &b in &axis(&g.budget, cfg.budget) {
            for &a in &axis(&g.alpha, cfg.alpha) {
                for &nr in &axis(&g.edge_noise_ratio, cfg.edge_noise_ratio) {
                    for &st in &axis(&g.strategy, cfg.strategy) {
                        cells.push(ExperimentConfig {
                            training_rate: tr,
                            budget: b,
                            alpha: a,
                            edge_noise_ratio: nr,
                            strategy: st,
                            sweep: SweepGrid::default(),
                            ..cfg.clone()
                        });
                    }
                }
            }
        }
    }
    cells
}

/// Runs the cross product of the sweep grid over all seeds. A failing cell or
/// seed is recorded and the sweep carries on.
pub fn sweep(cfg: &ExperimentConfig) -> Vec<CellResult> {
    grid_cells(cfg)
        .into_iter()
        .map(|cell| {
            let mut res = CellResult {
                config: cell.clone(),
                runs: Vec::new(),
                failures: Vec::new(),
            };
            if let Err(e) = cell.validate() {
                res.failures = cell.seeds.iter().map(|&s| (s, e.to_string())).collect();
                return res;
            }
            for &seed in &cell.seeds {
                match run_experiment(&cell, seed) {
                    Ok(log) => res.runs.push(log),
                    Err(e) => {
                        log::warn!("cell {} seed {seed} failed: {e}", cell.strategy.name());
                        res.failures.push((seed, e.to_string()));
                    }
                }
            }
            res
        })
        .collect()
}

pub fn sweep_csv(cells: &[CellResult]) -> String {
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for c in cells {
        out.push_str(&c.csv_row());
        out.push('\n');
    }
    out
}
