//! Active learning for entity matching: pair representations are clustered
//! into similarity graphs, and each iteration's labeling budget is spent on
//! the most uncertain and most central pairs of every connected component.

pub mod clustering;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod matcher;
pub mod pairgraph;
pub mod scoring;
pub mod selector;
pub mod session;
pub mod synth;

pub use clustering::{select_k, ClusterBounds, Clustering, KSelection};
pub use dataset::{CandidatePair, DatasetSplit, Label, LabelStore, OracleMode, Record};
pub use error::{Error, Result};
pub use eval::{auc_f1, IterationReport, Metrics, Strategy};
pub use matcher::{BaselineMatcher, MatcherConfig, PairEncoding};
pub use pairgraph::{GraphParams, IterationGraphs, NodeKind, PairGraph};
pub use scoring::{NodeScores, ScoringParams};
pub use selector::{run_active_learning, ActiveLearner, LoopConfig, LabelOracle, GroundTruthOracle};
