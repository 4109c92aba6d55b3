//! Desk-scale sequence GAN training with cooperative decoding.
//!
//! A generator proposes token sequences for a conditioning prompt and a
//! discriminator scores every prefix for human-likeness; the cooperative
//! decoders in [`decoding`] and [`mcts`] let the pair decode together, and
//! [`training`] feeds those improved outputs back to the generator.
//! [`tasks`] fabricates datasets with known-correct answers, [`evaluation`]
//! scores outputs, and [`cli`] wires the pipeline into the `selfgan` binary.
//! Small enough to run in seconds on one core; deterministic enough that
//! reruns with one seed produce identical bytes.

pub mod cli;
pub mod core;
pub mod decoding;
pub mod evaluation;
pub mod mcts;
pub mod models;
pub mod tasks;
pub mod training;

pub use crate::core::{
    Condition, CoreError, ExamplePair, RandomSource, Sequence, TokenDistribution, TokenId,
    Vocabulary,
};
