//! Validated token containers: conditions (inputs), sequences (outputs),
//! and the paired examples datasets are made of.

use super::{CoreError, TokenId, Vocabulary};

/// Default cap on generated sequence length, counting the trailing eos.
pub const DEFAULT_MAX_LENGTH: usize = 32;

/// A generated or reference output. Never contains pad; eos appears at most
/// once and only in final position; `terminated` mirrors that final eos.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Sequence {
    token_ids: Vec<TokenId>,
    terminated: bool,
}

impl Sequence {
    pub fn new(
        token_ids: Vec<TokenId>,
        vocab: &Vocabulary,
        max_length: usize,
    ) -> Result<Sequence, CoreError> {
        Sequence::from_raw_parts(
            token_ids,
            vocab.pad_id(),
            vocab.eos_id(),
            vocab.size(),
            max_length,
        )
    }

    /// Same invariants as [`Sequence::new`] for callers that know the special
    /// ids but hold no vocabulary (decoders working off a policy).
    pub(crate) fn from_raw_parts(
        token_ids: Vec<TokenId>,
        pad_id: TokenId,
        eos_id: TokenId,
        vocab_size: usize,
        max_length: usize,
    ) -> Result<Sequence, CoreError> {
        if token_ids.len() > max_length {
            return Err(CoreError::invariant(format!(
                "sequence length {} exceeds max_length {max_length}",
                token_ids.len()
            )));
        }
        for (i, &id) in token_ids.iter().enumerate() {
            if id >= vocab_size {
                return Err(CoreError::invariant(format!("token id {id} outside vocabulary")));
            }
            if id == pad_id {
                return Err(CoreError::invariant("sequence contains pad"));
            }
            if id == eos_id && i + 1 != token_ids.len() {
                return Err(CoreError::invariant("eos before final position"));
            }
        }
        let terminated = token_ids.last() == Some(&eos_id);
        Ok(Sequence { token_ids, terminated })
    }

    /// Content tokens followed by eos.
    pub fn terminated_from_content(
        content: &[TokenId],
        vocab: &Vocabulary,
        max_length: usize,
    ) -> Result<Sequence, CoreError> {
        let mut ids = content.to_vec();
        ids.push(vocab.eos_id());
        Sequence::new(ids, vocab, max_length)
    }

    pub fn token_ids(&self) -> &[TokenId] {
        &self.token_ids
    }

    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    pub fn is_terminated(&self) -> bool {
        self.terminated
    }

    /// Token ids with the trailing eos (if any) stripped.
    pub fn content(&self) -> &[TokenId] {
        if self.terminated {
            &self.token_ids[..self.token_ids.len() - 1]
        } else {
            &self.token_ids
        }
    }
}

/// Conditioning input. Non-empty and free of eos/pad.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Condition {
    token_ids: Vec<TokenId>,
}

impl Condition {
    pub fn new(token_ids: Vec<TokenId>, vocab: &Vocabulary) -> Result<Condition, CoreError> {
        if token_ids.is_empty() {
            return Err(CoreError::invariant("empty condition"));
        }
        for &id in &token_ids {
            if id >= vocab.size() {
                return Err(CoreError::invariant(format!("token id {id} outside vocabulary")));
            }
            if id == vocab.pad_id() || id == vocab.eos_id() {
                return Err(CoreError::invariant("condition contains eos/pad"));
            }
        }
        Ok(Condition { token_ids })
    }

    pub fn token_ids(&self) -> &[TokenId] {
        &self.token_ids
    }

    pub fn len(&self) -> usize {
        self.token_ids.len()
    }
}

/// One supervised example: condition plus a terminated reference.
#[derive(Debug, Clone, PartialEq)]
pub struct ExamplePair {
    pub condition: Condition,
    pub reference: Sequence,
}

impl ExamplePair {
    pub fn new(condition: Condition, reference: Sequence) -> Result<ExamplePair, CoreError> {
        if !reference.is_terminated() {
            return Err(CoreError::invariant("reference lacks eos"));
        }
        Ok(ExamplePair { condition, reference })
    }
}
