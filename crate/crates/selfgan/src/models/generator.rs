//! Conditional next-token generator with a masked-softmax head.

use crate::core::{Condition, RandomSource, Sequence, TokenDistribution};

use super::net::{backward_from_dlogits, forward_hidden, output_logits, Layout};
use super::{policy_log_prob, ModelArch, ModelError, ParameterVector, Policy, PrefixState};
use super::INIT_RANGE;

#[derive(Debug, Clone)]
pub struct GeneratorModel {
    arch: ModelArch,
    params: ParameterVector,
}

impl GeneratorModel {
    /// Embeddings and hidden layer start uniform in ±[`INIT_RANGE`]; the
    /// output head starts at zero, so the untrained distribution is exactly
    /// uniform over non-pad tokens.
    pub fn new(arch: ModelArch, rng: &mut RandomSource) -> Result<GeneratorModel, ModelError> {
        arch.validate()?;
        let layout = arch.layout(arch.vocab_size);
        let mut params = ParameterVector::zeros(layout.total);
        let values = params.values_mut();
        for v in values[layout.embed..layout.b1].iter_mut() {
            *v = rng.uniform(-INIT_RANGE, INIT_RANGE);
        }
        Ok(GeneratorModel { arch, params })
    }

    pub(crate) fn from_parts(arch: ModelArch, params: ParameterVector) -> GeneratorModel {
        GeneratorModel { arch, params }
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
        self.arch.layout(self.arch.vocab_size)
    }

    pub fn gradient_snapshot(&self) -> Result<Vec<f64>, ModelError> {
        self.params.gradient_snapshot()
    }

    pub fn sequence_log_prob(
        &self,
        condition: &Condition,
        sequence: &Sequence,
    ) -> Result<f64, ModelError> {
        policy_log_prob(self, condition, sequence)
    }
}

impl Policy for GeneratorModel {
    fn vocab_size(&self) -> usize {
        self.arch.vocab_size
    }

    fn pad_id(&self) -> usize {
        self.arch.pad_id
    }

    fn eos_id(&self) -> usize {
        self.arch.eos_id
    }

    fn next_token_distribution(
        &self,
        state: &PrefixState,
    ) -> Result<TokenDistribution, ModelError> {
        if state.is_complete(self.arch.eos_id) {
            return Err(ModelError::PrefixTerminated);
        }
        let layout = self.layout();
        let cache = forward_hidden(&self.arch, &layout, self.params.values(), state);
        let logits = output_logits(&layout, self.params.values(), &cache.h);
        TokenDistribution::from_logits(&logits, self.arch.pad_id)
            .map_err(|_| ModelError::NonFiniteLoss)
    }
}

/// Sums `scale_i * NLL(token)` over every position of every sequence,
/// optionally accumulating gradients. The caller picks the per-item scales
/// (that is the only difference between plain MLE and the weighted
/// policy-gradient step).
fn accumulate_nll(
    gen: &mut GeneratorModel,
    batch: &[(&Condition, &Sequence)],
    scales: &[f64],
    with_grad: bool,
) -> Result<f64, ModelError> {
    debug_assert_eq!(batch.len(), scales.len());
    let arch = gen.arch.clone();
    let layout = arch.layout(arch.vocab_size);
    let pad = arch.pad_id;
    let mut loss = 0.0;
    for (&(condition, sequence), &scale) in batch.iter().zip(scales) {
        let mut state = PrefixState::root(condition.clone());
        for &target in sequence.token_ids() {
            let cache = forward_hidden(&arch, &layout, gen.params.values(), &state);
            let logits = output_logits(&layout, gen.params.values(), &cache.h);
            let max = logits
                .iter()
                .enumerate()
                .filter(|(v, _)| *v != pad)
                .map(|(_, &l)| l)
                .fold(f64::NEG_INFINITY, f64::max);
            let sumexp: f64 = logits
                .iter()
                .enumerate()
                .filter(|(v, _)| *v != pad)
                .map(|(_, &l)| (l - max).exp())
                .sum();
            let log_z = max + sumexp.ln();
            loss += scale * (log_z - logits[target]);
            if with_grad && scale != 0.0 {
                let mut dlogits = vec![0.0; layout.out_dim];
                for (v, dl) in dlogits.iter_mut().enumerate() {
                    if v != pad {
                        *dl = scale * (logits[v] - log_z).exp();
                    }
                }
                dlogits[target] -= scale;
                backward_from_dlogits(&arch, &layout, &mut gen.params, &cache, &dlogits);
            }
            state = state.child(target);
        }
    }
    Ok(loss)
}

fn token_count(batch: &[(&Condition, &Sequence)]) -> usize {
    batch.iter().map(|(_, s)| s.len()).sum()
}

/// Teacher-forcing loss: mean NLL per token over the batch. Pure.
pub fn generator_nll_loss(
    gen: &GeneratorModel,
    batch: &[(&Condition, &Sequence)],
) -> Result<f64, ModelError> {
    let total = token_count(batch);
    if total == 0 {
        return Err(ModelError::BatchMismatch { msg: "batch has no tokens".into() });
    }
    let scales = vec![1.0 / total as f64; batch.len()];
    let mut probe = gen.clone();
    accumulate_nll(&mut probe, batch, &scales, false)
}

/// Teacher-forcing loss with a fresh gradient left in the model.
pub fn generator_nll_loss_and_grad(
    gen: &mut GeneratorModel,
    batch: &[(&Condition, &Sequence)],
) -> Result<f64, ModelError> {
    let total = token_count(batch);
    if total == 0 {
        return Err(ModelError::BatchMismatch { msg: "batch has no tokens".into() });
    }
    let scales = vec![1.0 / total as f64; batch.len()];
    gen.params.zero_grads();
    let loss = accumulate_nll(gen, batch, &scales, true)?;
    gen.params.mark_fresh();
    Ok(loss)
}

/// One teacher-forcing step. Returns the pre-step loss; parameters are left
/// untouched when the loss is not finite.
pub fn train_generator_mle(
    gen: &mut GeneratorModel,
    batch: &[(&Condition, &Sequence)],
    lr: f64,
) -> Result<f64, ModelError> {
    let loss = generator_nll_loss_and_grad(gen, batch)?;
    if !loss.is_finite() {
        return Err(ModelError::NonFiniteLoss);
    }
    gen.params.apply_step(lr);
    Ok(loss)
}

/// Per-item weighted NLL surrogate `(1/B) * sum_i w_i * NLL(seq_i)`. With
/// `w_i = reward_i - baseline` this is the REINFORCE step. Pure version.
pub fn generator_weighted_nll_loss(
    gen: &GeneratorModel,
    batch: &[(&Condition, &Sequence)],
    weights: &[f64],
) -> Result<f64, ModelError> {
    let scales = weighted_scales(batch, weights)?;
    let mut probe = gen.clone();
    accumulate_nll(&mut probe, batch, &scales, false)
}

pub fn generator_weighted_loss_and_grad(
    gen: &mut GeneratorModel,
    batch: &[(&Condition, &Sequence)],
    weights: &[f64],
) -> Result<f64, ModelError> {
    let scales = weighted_scales(batch, weights)?;
    gen.params.zero_grads();
    let loss = accumulate_nll(gen, batch, &scales, true)?;
    gen.params.mark_fresh();
    Ok(loss)
}

pub fn train_generator_weighted(
    gen: &mut GeneratorModel,
    batch: &[(&Condition, &Sequence)],
    weights: &[f64],
    lr: f64,
) -> Result<f64, ModelError> {
    let loss = generator_weighted_loss_and_grad(gen, batch, weights)?;
    if !loss.is_finite() {
        return Err(ModelError::NonFiniteLoss);
    }
    gen.params.apply_step(lr);
    Ok(loss)
}

fn weighted_scales(
    batch: &[(&Condition, &Sequence)],
    weights: &[f64],
) -> Result<Vec<f64>, ModelError> {
    if batch.is_empty() {
        return Err(ModelError::BatchMismatch { msg: "empty batch".into() });
    }
    if batch.len() != weights.len() {
        return Err(ModelError::BatchMismatch {
            msg: format!("{} items but {} weights", batch.len(), weights.len()),
        });
    }
    let b = batch.len() as f64;
    Ok(weights.iter().map(|w| w / b).collect())
}
