//! Synthetic conditional-generation tasks with an exactly known set of
//! admissible outputs. Copy, reverse and sort have a single correct answer
//! per condition; templated_qa carries a question-type token and a synonym
//! table, so one condition admits many surface realizations and references
//! are sampled from them.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::core::{Condition, ExamplePair, RandomSource, Sequence, TokenId, Vocabulary};

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("invalid task spec: {msg}")]
    InvalidSpec { msg: String },
}

impl TaskError {
    fn invalid(msg: impl Into<String>) -> TaskError {
        TaskError::InvalidSpec { msg: msg.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Copy,
    Reverse,
    Sort,
    TemplatedQa,
}

impl TaskKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Copy => "copy",
            TaskKind::Reverse => "reverse",
            TaskKind::Sort => "sort",
            TaskKind::TemplatedQa => "templated_qa",
        }
    }

    pub fn all() -> [TaskKind; 4] {
        [TaskKind::Copy, TaskKind::Reverse, TaskKind::Sort, TaskKind::TemplatedQa]
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = TaskError;

    fn from_str(s: &str) -> Result<TaskKind, TaskError> {
        TaskKind::all()
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| TaskError::invalid(format!("unknown task {s:?}")))
    }
}

/// Which transformation a templated_qa condition requests. The question-type
/// token is the first condition token.
const QA_TYPE_TOKENS: [&str; 2] = ["q0", "q1"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TaskSpec {
    pub name: TaskKind,
    pub alphabet_size: usize,
    /// Bounds on the letter content of a condition; templated_qa conditions
    /// are one token longer because of the leading question-type token.
    pub condition_length_range: (usize, usize),
    pub num_train: usize,
    pub num_val: usize,
    pub num_test: usize,
    /// Per-token probability that a reference uses the synonym partner
    /// instead of the canonical letter. Only templated_qa references are
    /// paraphrased; the other tasks have a unique admissible answer.
    pub noise_rate: f64,
}

impl Default for TaskSpec {
    /// The question-answering task, the one whose references are not a
    /// deterministic function of the condition.
    fn default() -> TaskSpec {
        TaskSpec::new(TaskKind::TemplatedQa)
    }
}

impl TaskSpec {
    pub fn new(name: TaskKind) -> TaskSpec {
        TaskSpec {
            name,
            alphabet_size: 8,
            condition_length_range: (4, 10),
            num_train: 5000,
            num_val: 500,
            num_test: 500,
            noise_rate: 0.2,
        }
    }

    pub fn validate(&self) -> Result<(), TaskError> {
        let (lo, hi) = self.condition_length_range;
        if lo == 0 || lo > hi {
            return Err(TaskError::invalid(format!(
                "condition length range ({lo}, {hi}) needs 1 <= min <= max"
            )));
        }
        if self.num_train == 0 || self.num_val == 0 || self.num_test == 0 {
            return Err(TaskError::invalid("split sizes must all be positive"));
        }
        if !(0.0..0.5).contains(&self.noise_rate) {
            return Err(TaskError::invalid(format!(
                "noise rate {} outside [0, 0.5)",
                self.noise_rate
            )));
        }
        if self.alphabet_size == 0 || self.alphabet_size > 26 {
            return Err(TaskError::invalid("alphabet size must be in 1..=26"));
        }
        if self.name == TaskKind::TemplatedQa && self.alphabet_size % 2 != 0 {
            // Odd alphabets would leave the last letter without a synonym
            // partner, so some conditions would have a single realization.
            return Err(TaskError::invalid(
                "templated_qa needs an even alphabet so every letter has a synonym partner",
            ));
        }
        Ok(())
    }

    /// Letters a.. plus, for templated_qa, the two question-type tokens.
    pub fn vocabulary(&self) -> Result<Vocabulary, TaskError> {
        self.validate()?;
        let mut content: Vec<String> = (0..self.alphabet_size)
            .map(|i| char::from(b'a' + i as u8).to_string())
            .collect();
        if self.name == TaskKind::TemplatedQa {
            content.extend(QA_TYPE_TOKENS.iter().map(|t| t.to_string()));
        }
        let refs: Vec<&str> = content.iter().map(|s| s.as_str()).collect();
        Vocabulary::new(&refs)
            .map_err(|e| TaskError::invalid(format!("vocabulary construction failed: {e}")))
    }

    /// Room for the longest answer, its eos, and a little overshoot so
    /// decoders can produce too-long outputs instead of being silently
    /// truncated at exactly the right length.
    pub fn suggested_max_length(&self) -> usize {
        self.condition_length_range.1 + 4
    }

    fn letter_ids(&self) -> std::ops::Range<TokenId> {
        3..3 + self.alphabet_size
    }

    fn qa_type_ids(&self) -> [TokenId; 2] {
        [3 + self.alphabet_size, 4 + self.alphabet_size]
    }
}

/// Synonym partner of a token: letters pair up (a-b, c-d, ...); a token
/// without a distinct partner maps to itself.
pub fn synonym_partner(spec: &TaskSpec, token: TokenId) -> TokenId {
    let letters = spec.letter_ids();
    if !letters.contains(&token) {
        return token;
    }
    let idx = token - letters.start;
    let partner = idx ^ 1;
    if partner < spec.alphabet_size {
        letters.start + partner
    } else {
        token
    }
}

/// Canonical answer content (no eos) for a condition, or None when a
/// templated_qa condition lacks a leading question-type token.
pub fn canonical_answer(spec: &TaskSpec, condition: &Condition) -> Option<Vec<TokenId>> {
    let ids = condition.token_ids();
    match spec.name {
        TaskKind::Copy => Some(ids.to_vec()),
        TaskKind::Reverse => Some(ids.iter().rev().copied().collect()),
        TaskKind::Sort => {
            let mut sorted = ids.to_vec();
            sorted.sort_unstable();
            Some(sorted)
        }
        TaskKind::TemplatedQa => {
            let [copy_type, reverse_type] = spec.qa_type_ids();
            let (first, content) = ids.split_first()?;
            if *first == copy_type {
                Some(content.to_vec())
            } else if *first == reverse_type {
                Some(content.iter().rev().copied().collect())
            } else {
                None
            }
        }
    }
}

/// True iff the candidate is an admissible output for the condition: the
/// exact answer, or any per-token synonym substitution of it for
/// templated_qa.
pub fn is_human_valid(spec: &TaskSpec, condition: &Condition, candidate: &Sequence) -> bool {
    if !candidate.is_terminated() {
        return false;
    }
    let Some(answer) = canonical_answer(spec, condition) else {
        return false;
    };
    let content = candidate.content();
    if content.len() != answer.len() {
        return false;
    }
    match spec.name {
        TaskKind::TemplatedQa => content
            .iter()
            .zip(&answer)
            .all(|(&got, &want)| got == want || got == synonym_partner(spec, want)),
        _ => content == &answer[..],
    }
}

/// Every admissible answer content for a condition. Grows as 2^len for
/// templated_qa; callers keep answers short.
pub fn admissible_answers(spec: &TaskSpec, condition: &Condition) -> Vec<Vec<TokenId>> {
    let Some(answer) = canonical_answer(spec, condition) else {
        return Vec::new();
    };
    if spec.name != TaskKind::TemplatedQa {
        return vec![answer];
    }
    let mut out = vec![Vec::new()];
    for &tok in &answer {
        let partner = synonym_partner(spec, tok);
        let mut next = Vec::with_capacity(out.len() * 2);
        for prefix in &out {
            let mut with_tok = prefix.clone();
            with_tok.push(tok);
            next.push(with_tok);
            if partner != tok {
                let mut with_partner = prefix.clone();
                with_partner.push(partner);
                next.push(with_partner);
            }
        }
        out = next;
    }
    out
}

/// Samples disjoint train/val/test splits. Conditions are unique across the
/// whole dataset; references are canonical answers, paraphrased token by
/// token for templated_qa.
pub fn generate_task(
    spec: &TaskSpec,
    rng: &mut RandomSource,
) -> Result<(Vec<ExamplePair>, Vec<ExamplePair>, Vec<ExamplePair>), TaskError> {
    spec.validate()?;
    let vocab = spec.vocabulary()?;
    let max_len = spec.suggested_max_length();
    let (lo, hi) = spec.condition_length_range;
    let total = spec.num_train + spec.num_val + spec.num_test;
    let mut seen: HashSet<Vec<TokenId>> = HashSet::with_capacity(total);
    let mut pairs = Vec::with_capacity(total);
    let letters: Vec<TokenId> = spec.letter_ids().collect();
    let mut attempts = 0usize;
    let attempt_cap = 200 * total + 10_000;
    while pairs.len() < total {
        attempts += 1;
        if attempts > attempt_cap {
            return Err(TaskError::invalid(format!(
                "could not draw {total} distinct conditions; condition space too small"
            )));
        }
        let len = lo + rng.below(hi - lo + 1);
        let mut ids = Vec::with_capacity(len + 1);
        if spec.name == TaskKind::TemplatedQa {
            ids.push(spec.qa_type_ids()[rng.below(2)]);
        }
        for _ in 0..len {
            ids.push(letters[rng.below(letters.len())]);
        }
        if !seen.insert(ids.clone()) {
            continue;
        }
        let condition = Condition::new(ids, &vocab)
            .expect("generated condition uses only content tokens");
        let mut answer = canonical_answer(spec, &condition)
            .expect("generated condition always has a canonical answer");
        if spec.name == TaskKind::TemplatedQa {
            for tok in answer.iter_mut() {
                if rng.next_f64() < spec.noise_rate {
                    *tok = synonym_partner(spec, *tok);
                }
            }
        }
        let reference = Sequence::terminated_from_content(&answer, &vocab, max_len)
            .expect("answer fits in suggested max length");
        pairs.push(
            ExamplePair::new(condition, reference).expect("reference is terminated"),
        );
    }
    let test = pairs.split_off(spec.num_train + spec.num_val);
    let val = pairs.split_off(spec.num_train);
    Ok((pairs, val, test))
}
