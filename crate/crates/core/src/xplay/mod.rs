//! Cross-play evaluation: published policies, pools, pairwise matches,
//! score aggregation and correlation between scores.

mod artifact;
mod matrix;
mod pearson;
mod scores;

use thiserror::Error;

use crate::env::EnvError;

pub use artifact::{load_policy, save_policy, IntentChoice, PolicyArtifact, FORMAT_VERSION};
pub use matrix::{
    crossplay_matrix, exact_pairing, play_match, AgentPool, CrossPlayMatrix, PairingResult,
    PoolMember,
};
pub use pearson::{pearson, pearson_matrix, pearson_pairwise};
pub use scores::{
    aggregate_scores, inter_xp, intra_xp, one_szsc_xp, self_play, Score, ScoreReport, ScoreRow,
    SCORE_NAMES,
};

#[derive(Debug, Error)]
pub enum XplayError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unsupported policy format version `{0}`")]
    Version(String),
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error("environment mismatch: expected `{expected}`, found `{found}`")]
    FingerprintMismatch { expected: String, found: String },
    #[error("role mismatch: expected {expected}, found {found}")]
    RoleMismatch { expected: &'static str, found: &'static str },
    #[error("empty score cell: {0}")]
    EmptyCell(String),
    #[error("`{0}` is in the exempt set; its one-sided score is undefined")]
    NotApplicable(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Env(#[from] EnvError),
}
