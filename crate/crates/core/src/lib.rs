//! Robust active learning for network alignment under structural and labeling noise.
//!
//! The crate is organised as the pipeline runs:
//!
//! * [`graph`] — graphs, network pairs, loaders, synthetic pairs and noise injection.
//! * [`align`] — IsoRank-style base aligners producing the alignment matrix and model confidence.
//! * [`influence`] — normalized k-step influence scores.
//! * [`selection`] — cleanliness, three-region confidence, activation sets and greedy coverage.
//! * [`oracle`] — the simulated noisy annotator.
//! * [`denoise`] — model-assisted labels, twin pairs and fused labels.
//! * [`eval`] — Acc@k, MAP and uncertainty-sampling baselines.
//! * [`experiment`] — the active-learning loop, configuration and sweeps.

pub mod align;
pub mod denoise;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod graph;
pub mod influence;
pub mod oracle;
pub mod selection;

pub use align::{AlignerConfig, AlignmentMatrix, ModelKind, ModelState, Prior};
pub use denoise::{LabeledPair, Provenance, Region};
pub use error::{Error, Result};
pub use eval::{Baseline, MetricsReport};
pub use experiment::{Dataset, ExperimentConfig, RunLog, RunRow, Strategy};
pub use graph::{Graph, NetworkPair, NoiseSpec};
pub use influence::InfluenceField;
pub use oracle::Oracle;
pub use selection::{ActivationSet, CandidatePair, SelectionConfig};
