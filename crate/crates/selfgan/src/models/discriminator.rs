//! Prefix discriminator: scores every left-to-right prefix of a sequence,
//! sigmoid head, balanced BCE across the human and machine classes.

use crate::core::{Condition, RandomSource, Sequence};

use super::net::{backward_from_dlogits, forward_hidden, output_logits, sigmoid, softplus, Layout};
use super::{ModelArch, ModelError, ParameterVector, PrefixState, ValueScorer};
use super::INIT_RANGE;

/// Scores are clamped this far away from exact 0/1 so log-scores stay finite.
pub const SCORE_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct DiscriminatorModel {
    arch: ModelArch,
    params: ParameterVector,
}

impl DiscriminatorModel {
    /// Same init scheme as the generator; the zero output head makes the
    /// untrained score exactly 0.5 everywhere.
    pub fn new(arch: ModelArch, rng: &mut RandomSource) -> Result<DiscriminatorModel, ModelError> {
        arch.validate()?;
        let layout = arch.layout(1);
        let mut params = ParameterVector::zeros(layout.total);
        let values = params.values_mut();
        for v in values[layout.embed..layout.b1].iter_mut() {
            *v = rng.uniform(-INIT_RANGE, INIT_RANGE);
        }
        Ok(DiscriminatorModel { arch, params })
    }

    pub(crate) fn from_parts(arch: ModelArch, params: ParameterVector) -> DiscriminatorModel {
        DiscriminatorModel { arch, params }
    }

    pub fn arch(&self) -> &ModelArch {
        &self.arch
    }

    pub fn params(&self) -> &ParameterVector {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterVector {
        &mut self.params
    }

    fn layout(&self) -> Layout {
        self.arch.layout(1)
    }

    pub fn gradient_snapshot(&self) -> Result<Vec<f64>, ModelError> {
        self.params.gradient_snapshot()
    }

    fn logit(&self, state: &PrefixState) -> f64 {
        let layout = self.layout();
        let cache = forward_hidden(&self.arch, &layout, self.params.values(), state);
        output_logits(&layout, self.params.values(), &cache.h)[0]
    }

    /// P(human | condition, prefix), strictly inside (0, 1). Defined for the
    /// empty prefix too.
    pub fn score(&self, state: &PrefixState) -> f64 {
        sigmoid(self.logit(state)).clamp(SCORE_CLAMP, 1.0 - SCORE_CLAMP)
    }

    /// Score of a complete sequence (its full prefix).
    pub fn score_sequence(&self, condition: &Condition, sequence: &Sequence) -> f64 {
        let state = PrefixState {
            condition: condition.clone(),
            prefix: sequence.token_ids().to_vec(),
        };
        self.score(&state)
    }
}

impl ValueScorer for DiscriminatorModel {
    fn score(&self, state: &PrefixState) -> f64 {
        DiscriminatorModel::score(self, state)
    }
}

/// Balanced prefix BCE:
/// `0.5 * mean_human[ mean_prefix -ln D ] + 0.5 * mean_machine[ mean_prefix -ln(1-D) ]`.
/// Every nonempty prefix of an example contributes one uniformly weighted
/// term; a 0.5-scoring discriminator sits at exactly ln 2.
fn accumulate_bce(
    disc: &mut DiscriminatorModel,
    human: &[(&Condition, &Sequence)],
    machine: &[(&Condition, &Sequence)],
    with_grad: bool,
) -> Result<f64, ModelError> {
    if human.is_empty() || machine.is_empty() {
        return Err(ModelError::BatchMismatch {
            msg: "discriminator training needs both classes non-empty".into(),
        });
    }
    let arch = disc.arch.clone();
    let layout = arch.layout(1);
    let mut loss = 0.0;
    for (class, is_human) in [(human, true), (machine, false)] {
        let class_weight = 0.5 / class.len() as f64;
        for &(condition, sequence) in class {
            let len = sequence.len().max(1) as f64;
            let term_weight = class_weight / len;
            let mut state = PrefixState::root(condition.clone());
            for &tok in sequence.token_ids() {
                state = state.child(tok);
                let cache = forward_hidden(&arch, &layout, disc.params.values(), &state);
                let z = output_logits(&layout, disc.params.values(), &cache.h)[0];
                let (term, dz) = if is_human {
                    (softplus(-z), sigmoid(z) - 1.0)
                } else {
                    (softplus(z), sigmoid(z))
                };
                loss += term_weight * term;
                if with_grad {
                    backward_from_dlogits(
                        &arch,
                        &layout,
                        &mut disc.params,
                        &cache,
                        &[term_weight * dz],
                    );
                }
            }
        }
    }
    Ok(loss)
}

/// Pure balanced BCE over all prefixes.
pub fn discriminator_bce_loss(
    disc: &DiscriminatorModel,
    human: &[(&Condition, &Sequence)],
    machine: &[(&Condition, &Sequence)],
) -> Result<f64, ModelError> {
    let mut probe = disc.clone();
    accumulate_bce(&mut probe, human, machine, false)
}

/// Balanced BCE, leaving a fresh gradient in the model.
pub fn discriminator_bce_loss_and_grad(
    disc: &mut DiscriminatorModel,
    human: &[(&Condition, &Sequence)],
    machine: &[(&Condition, &Sequence)],
) -> Result<f64, ModelError> {
    disc.params.zero_grads();
    let loss = accumulate_bce(disc, human, machine, true)?;
    disc.params.mark_fresh();
    Ok(loss)
}

/// One discriminator step. Returns the pre-step loss.
pub fn train_discriminator(
    disc: &mut DiscriminatorModel,
    human: &[(&Condition, &Sequence)],
    machine: &[(&Condition, &Sequence)],
    lr: f64,
) -> Result<f64, ModelError> {
    let loss = discriminator_bce_loss_and_grad(disc, human, machine)?;
    if !loss.is_finite() {
        return Err(ModelError::NonFiniteLoss);
    }
    disc.params.apply_step(lr);
    Ok(loss)
}

/// Fraction of complete sequences classified correctly at threshold 0.5.
pub fn discriminator_accuracy(
    disc: &DiscriminatorModel,
    human: &[(&Condition, &Sequence)],
    machine: &[(&Condition, &Sequence)],
) -> f64 {
    let mut correct = 0usize;
    let total = human.len() + machine.len();
    for &(c, s) in human {
        if disc.score_sequence(c, s) > 0.5 {
            correct += 1;
        }
    }
    for &(c, s) in machine {
        if disc.score_sequence(c, s) <= 0.5 {
            correct += 1;
        }
    }
    correct as f64 / total.max(1) as f64
}
