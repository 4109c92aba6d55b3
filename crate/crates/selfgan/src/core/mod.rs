//! Shared foundations: vocabulary, sequences, token distributions,
//! deterministic randomness, and dataset file I/O.

mod dataset;
mod distribution;
mod rng;
mod sequence;
mod vocab;

pub use dataset::{load_dataset, load_dataset_default, save_dataset};
pub use distribution::{sample_categorical, TokenDistribution, SUM_TOLERANCE};
pub use rng::RandomSource;
pub use sequence::{Condition, ExamplePair, Sequence, DEFAULT_MAX_LENGTH};
pub use vocab::{Vocabulary, BOS_TOKEN, EOS_TOKEN, PAD_TOKEN};

/// Index into a [`Vocabulary`].
pub type TokenId = usize;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("unknown token at byte {position} in {text:?}")]
    UnknownToken { text: String, position: usize },
    #[error("parse error at line {line}: {msg}")]
    ParseError { line: usize, msg: String },
    #[error("invariant violation{} : {msg}", record.map(|r| format!(" at record {r}")).unwrap_or_default())]
    InvariantViolation { record: Option<usize>, msg: String },
    #[error("distribution places all mass on pad")]
    DegenerateDistribution,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CoreError {
    pub(crate) fn invariant(msg: impl Into<String>) -> Self {
        CoreError::InvariantViolation { record: None, msg: msg.into() }
    }
}
