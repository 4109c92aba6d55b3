//! Small fixed-context neural scorers: a conditional next-token generator
//! (softmax head) and a prefix discriminator (sigmoid head). Both share one
//! feature encoding of (condition, prefix) and train by plain constant-rate
//! gradient descent with hand-written backprop over a flat parameter vector.

mod checkpoint;
mod discriminator;
mod generator;
mod net;
mod params;

pub use checkpoint::{
    load_discriminator, load_generator, save_discriminator, save_generator, CHECKPOINT_VERSION,
};
pub use discriminator::{
    discriminator_accuracy, discriminator_bce_loss, discriminator_bce_loss_and_grad,
    train_discriminator, DiscriminatorModel,
};
pub use generator::{
    generator_nll_loss, generator_nll_loss_and_grad, generator_weighted_loss_and_grad,
    generator_weighted_nll_loss, train_generator_mle, train_generator_weighted, GeneratorModel,
};
pub use params::ParameterVector;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::core::{Condition, TokenDistribution, TokenId};

/// Learning rate for the full-scale setup. Toy models need far larger
/// steps; see [`TOY_LEARNING_RATE`].
pub const FULL_SCALE_LEARNING_RATE: f64 = 5e-6;
/// Practical default for the desk-scale models in this crate.
pub const TOY_LEARNING_RATE: f64 = 1e-2;

/// Half-width of the uniform init for embeddings and the hidden layer.
/// Output heads start at exactly zero so an untrained generator is uniform
/// over non-pad tokens and an untrained discriminator scores exactly 0.5.
pub const INIT_RANGE: f64 = 0.05;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("prefix is already terminated")]
    PrefixTerminated,
    #[error("loss is not finite")]
    NonFiniteLoss,
    #[error("gradients are stale (zeroed since last backward)")]
    StaleGradient,
    #[error("invalid architecture: {msg}")]
    InvalidArch { msg: String },
    #[error("invalid checkpoint: {msg}")]
    InvalidCheckpoint { msg: String },
    #[error("batch mismatch: {msg}")]
    BatchMismatch { msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Architecture metadata. Serialized into checkpoints and validated on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArch {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    /// Condition tokens are laid out twice: left-aligned and right-aligned
    /// slot banks of this width (conditions longer than the bank are
    /// truncated slot-wise; the mean segment still sees every token).
    pub cond_slots: usize,
    /// How many of the most recent prefix tokens get their own slot.
    pub prefix_slots: usize,
    /// One-hot size for the next-token position index.
    pub max_positions: usize,
    pub pad_id: TokenId,
    pub eos_id: TokenId,
    pub bos_id: TokenId,
}

impl ModelArch {
    /// Default desk-scale architecture for a vocabulary.
    pub fn for_vocab(vocab: &crate::core::Vocabulary) -> ModelArch {
        ModelArch {
            vocab_size: vocab.size(),
            embed_dim: 16,
            hidden_dim: 64,
            cond_slots: 12,
            prefix_slots: 4,
            max_positions: crate::core::DEFAULT_MAX_LENGTH + 1,
            pad_id: vocab.pad_id(),
            eos_id: vocab.eos_id(),
            bos_id: vocab.bos_id(),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let err = |msg: String| Err(ModelError::InvalidArch { msg });
        if self.vocab_size < 4 {
            return err(format!("vocab_size {} below minimum 4", self.vocab_size));
        }
        if self.embed_dim == 0
            || self.hidden_dim == 0
            || self.cond_slots == 0
            || self.prefix_slots == 0
            || self.max_positions == 0
        {
            return err("zero-sized architecture dimension".into());
        }
        let ids = [self.pad_id, self.eos_id, self.bos_id];
        if ids.iter().any(|&id| id >= self.vocab_size) {
            return err("special token id outside vocabulary".into());
        }
        if ids[0] == ids[1] || ids[0] == ids[2] || ids[1] == ids[2] {
            return err("special token ids must be distinct".into());
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        (2 * self.cond_slots + self.prefix_slots + 2) * self.embed_dim + self.max_positions
    }
}

/// A condition plus the output tokens generated so far. The prefix never
/// contains eos except as its last element, at which point the state is
/// complete.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PrefixState {
    pub condition: Condition,
    pub prefix: Vec<TokenId>,
}

impl PrefixState {
    pub fn root(condition: Condition) -> PrefixState {
        PrefixState { condition, prefix: Vec::new() }
    }

    pub fn child(&self, token: TokenId) -> PrefixState {
        let mut prefix = self.prefix.clone();
        prefix.push(token);
        PrefixState { condition: self.condition.clone(), prefix }
    }

    pub fn is_complete(&self, eos_id: TokenId) -> bool {
        self.prefix.last() == Some(&eos_id)
    }
}

/// Anything that proposes next tokens. Implemented by [`GeneratorModel`];
/// tests and demos plug in hand-built tables.
pub trait Policy {
    fn vocab_size(&self) -> usize;
    fn pad_id(&self) -> TokenId;
    fn eos_id(&self) -> TokenId;
    fn next_token_distribution(&self, state: &PrefixState)
        -> Result<TokenDistribution, ModelError>;
}

/// Anything that scores a prefix in (0, 1). Implemented by
/// [`DiscriminatorModel`]; oracles and hand-built fixtures implement it too.
pub trait ValueScorer {
    fn score(&self, state: &PrefixState) -> f64;
}

/// Total log-probability a policy assigns to a sequence given its condition.
pub fn policy_log_prob<P: Policy + ?Sized>(
    policy: &P,
    condition: &Condition,
    sequence: &crate::core::Sequence,
) -> Result<f64, ModelError> {
    let mut state = PrefixState::root(condition.clone());
    let mut total = 0.0;
    for &tok in sequence.token_ids() {
        let dist = policy.next_token_distribution(&state)?;
        let p = dist.probs()[tok];
        total += p.ln();
        state = state.child(tok);
    }
    Ok(total)
}
