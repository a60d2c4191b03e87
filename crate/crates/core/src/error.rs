use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("duplicate pair_id `{0}`")]
    DuplicatePairId(String),

    #[error("unknown pair_id `{0}`")]
    UnknownPairId(String),

    #[error("not enough labeled pairs for the seed: need {need_pos} positive / {need_neg} negative, pool has {have_pos} / {have_neg}")]
    InsufficientSeed {
        need_pos: usize,
        need_neg: usize,
        have_pos: usize,
        have_neg: usize,
    },

    #[error("pair `{0}` has no ground-truth label for the oracle")]
    MissingGroundTruth(String),

    #[error("conflicting label for pair `{pair_id}`: recorded {recorded}, got {submitted}")]
    LabelConflict {
        pair_id: String,
        recorded: u8,
        submitted: u8,
    },

    #[error("label must be 0 or 1, got {0}")]
    InvalidLabel(i64),

    #[error("training set must contain both classes (cold start): {positives} positive, {negatives} negative")]
    ColdStart { positives: usize, negatives: usize },

    #[error("infeasible cluster bounds: k={k}, n={n}, min_size={min_size}, max_size={max_size}")]
    InfeasibleBounds {
        k: usize,
        n: usize,
        min_size: usize,
        max_size: usize,
    },

    #[error("no candidate cluster count for n={n} under size fractions [{min_fraction}, {max_fraction}]")]
    EmptyCandidateRange {
        n: usize,
        min_fraction: f64,
        max_fraction: f64,
    },

    #[error("silhouette needs at least two non-empty clusters, got {0}")]
    TooFewClusters(usize),

    #[error("cosine similarity is undefined for a zero or non-finite vector")]
    ZeroVector,

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("probability {0} is outside [0, 1]")]
    ProbabilityRange(f64),

    #[error("metric inputs have different key sets")]
    KeyMismatch,

    #[error("need at least two points to integrate an F1 curve, got {0}")]
    TooFewPoints(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("labeling session closed before all labels arrived")]
    SessionClosed,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
