//! Training loops: teacher-forced MLE, the cooperative self-training loop
//! and its beam-search ablation, and a policy-gradient comparator. Every
//! loop is bit-reproducible under a fixed seed; epochs draw their shuffle
//! and sampling randomness from per-epoch derived streams so a run resumed
//! at an epoch boundary continues identically.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::core::{Condition, CoreError, ExamplePair, RandomSource, Sequence};
use crate::decoding::{
    decode_beam, decode_das_global, decode_das_local, decode_sampling, DecodeConfig, DecodeError,
};
use crate::evaluation::humanlike_stats;
use crate::mcts::{decode_coop_mcts, MctsConfig, MctsError};
use crate::models::{
    generator_nll_loss_and_grad, train_discriminator, train_generator_mle,
    train_generator_weighted, DiscriminatorModel, GeneratorModel, ModelError, TOY_LEARNING_RATE,
};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {msg}")]
    InvalidConfig { msg: String },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("collinearity batch is empty")]
    EmptyBatch,
    #[error("a gradient vector has zero norm")]
    ZeroGradient,
    #[error("trace file does not match the expected schema: {msg}")]
    SchemaMismatch { msg: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Search(#[from] MctsError),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("trace io failed: {0}")]
    Io(#[from] std::io::Error),
}

impl TrainError {
    fn config(msg: impl Into<String>) -> TrainError {
        TrainError::InvalidConfig { msg: msg.into() }
    }

    fn schema(msg: impl Into<String>) -> TrainError {
        TrainError::SchemaMismatch { msg: msg.into() }
    }
}

/// Decoder the self-training loop uses to produce its training targets.
/// `Beam` is the generator-only ablation; the discriminator still trains on
/// its outputs but never steers them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoopDecoder {
    DasLocal,
    DasGlobal,
    CoopMcts,
    Beam,
}

impl CoopDecoder {
    pub fn as_str(self) -> &'static str {
        match self {
            CoopDecoder::DasLocal => "das_local",
            CoopDecoder::DasGlobal => "das_global",
            CoopDecoder::CoopMcts => "coop_mcts",
            CoopDecoder::Beam => "beam",
        }
    }

    pub fn all() -> [CoopDecoder; 4] {
        [CoopDecoder::DasLocal, CoopDecoder::DasGlobal, CoopDecoder::CoopMcts, CoopDecoder::Beam]
    }
}

impl fmt::Display for CoopDecoder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CoopDecoder {
    type Err = TrainError;

    fn from_str(s: &str) -> Result<CoopDecoder, TrainError> {
        CoopDecoder::all()
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| TrainError::config(format!("unknown cooperative decoder {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub gen_lr: f64,
    pub disc_lr: f64,
    pub coop_decoder: CoopDecoder,
    pub decode: DecodeConfig,
    pub mcts: MctsConfig,
    /// Sampling temperature for the policy-gradient comparator.
    pub rl_temperature: f64,
    /// Epoch interval for periodic checkpoints; 0 writes none.
    pub checkpoint_every: usize,
    /// Optimizer-step interval between trace records.
    pub log_every: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            epochs: 5,
            batch_size: 16,
            gen_lr: TOY_LEARNING_RATE,
            disc_lr: TOY_LEARNING_RATE,
            coop_decoder: CoopDecoder::CoopMcts,
            decode: DecodeConfig::default(),
            mcts: MctsConfig::default(),
            rl_temperature: 1.0,
            checkpoint_every: 0,
            log_every: 10,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.epochs == 0 {
            return Err(TrainError::config("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(TrainError::config("batch_size must be at least 1"));
        }
        for (name, lr) in [("gen_lr", self.gen_lr), ("disc_lr", self.disc_lr)] {
            if !(lr.is_finite() && lr >= 0.0) {
                return Err(TrainError::config(format!("{name} {lr} must be non-negative")));
            }
        }
        if !(self.rl_temperature.is_finite() && self.rl_temperature > 0.0) {
            return Err(TrainError::config(format!(
                "rl_temperature {} must be positive",
                self.rl_temperature
            )));
        }
        if self.log_every == 0 {
            return Err(TrainError::config("log_every must be at least 1"));
        }
        self.decode.validate()?;
        self.mcts.validate()?;
        Ok(())
    }
}

pub const TRACE_COLUMNS: [&str; 11] = [
    "step",
    "epoch",
    "gen_loss",
    "disc_loss",
    "disc_grad_norm",
    "gen_collinearity",
    "mean_d_coop",
    "mean_d_gen",
    "length_delta",
    "novelty_delta",
    "repetition3_delta",
];

/// One logged optimizer step. Quantities a mode does not produce are NaN
/// (MLE logs only its loss).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: usize,
    pub epoch: usize,
    pub gen_loss: f64,
    pub disc_loss: f64,
    pub disc_grad_norm: f64,
    pub gen_collinearity: f64,
    /// Mean discriminator score of the outputs the generator trains on.
    pub mean_d_coop: f64,
    /// Mean discriminator score of plain beam outputs on the same batch.
    pub mean_d_gen: f64,
    pub length_delta: f64,
    pub novelty_delta: f64,
    pub repetition3_delta: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingTrace {
    records: Vec<TraceRecord>,
}

impl TrainingTrace {
    pub fn new() -> TrainingTrace {
        TrainingTrace::default()
    }

    pub fn push(&mut self, record: TraceRecord) {
        debug_assert!(
            self.records.last().map(|r| r.step < record.step).unwrap_or(true),
            "step index must be monotone"
        );
        self.records.push(record);
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn extend(&mut self, other: TrainingTrace) {
        for record in other.records {
            self.push(record);
        }
    }

    /// Values of one named column, in record order.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let pick: fn(&TraceRecord) -> f64 = match name {
            "step" => |r| r.step as f64,
            "epoch" => |r| r.epoch as f64,
            "gen_loss" => |r| r.gen_loss,
            "disc_loss" => |r| r.disc_loss,
            "disc_grad_norm" => |r| r.disc_grad_norm,
            "gen_collinearity" => |r| r.gen_collinearity,
            "mean_d_coop" => |r| r.mean_d_coop,
            "mean_d_gen" => |r| r.mean_d_gen,
            "length_delta" => |r| r.length_delta,
            "novelty_delta" => |r| r.novelty_delta,
            "repetition3_delta" => |r| r.repetition3_delta,
            _ => return None,
        };
        Some(self.records.iter().map(pick).collect())
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = TRACE_COLUMNS.join(",");
        out.push('\n');
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                r.step,
                r.epoch,
                r.gen_loss,
                r.disc_loss,
                r.disc_grad_norm,
                r.gen_collinearity,
                r.mean_d_coop,
                r.mean_d_gen,
                r.length_delta,
                r.novelty_delta,
                r.repetition3_delta
            ));
        }
        out
    }

    pub fn from_csv_string(text: &str) -> Result<TrainingTrace, TrainError> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| TrainError::schema("empty trace"))?;
        if header != TRACE_COLUMNS.join(",") {
            return Err(TrainError::schema(format!("unexpected header {header:?}")));
        }
        let mut trace = TrainingTrace::new();
        for (lineno, line) in lines.enumerate() {
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != TRACE_COLUMNS.len() {
                return Err(TrainError::schema(format!(
                    "row {} has {} cells",
                    lineno + 2,
                    cells.len()
                )));
            }
            let int = |i: usize| -> Result<usize, TrainError> {
                cells[i].parse().map_err(|_| {
                    TrainError::schema(format!("row {}: bad integer {:?}", lineno + 2, cells[i]))
                })
            };
            let num = |i: usize| -> Result<f64, TrainError> {
                cells[i].parse().map_err(|_| {
                    TrainError::schema(format!("row {}: bad number {:?}", lineno + 2, cells[i]))
                })
            };
            trace.push(TraceRecord {
                step: int(0)?,
                epoch: int(1)?,
                gen_loss: num(2)?,
                disc_loss: num(3)?,
                disc_grad_norm: num(4)?,
                gen_collinearity: num(5)?,
                mean_d_coop: num(6)?,
                mean_d_gen: num(7)?,
                length_delta: num(8)?,
                novelty_delta: num(9)?,
                repetition3_delta: num(10)?,
            });
        }
        Ok(trace)
    }

    pub fn save_csv(&self, path: &Path) -> Result<(), TrainError> {
        Ok(std::fs::write(path, self.to_csv_string())?)
    }

    pub fn load_csv(path: &Path) -> Result<TrainingTrace, TrainError> {
        TrainingTrace::from_csv_string(&std::fs::read_to_string(path)?)
    }
}

/// Mean cosine similarity between the generator's NLL gradient on each
/// model output and on the matching reference, computed on a throwaway copy
/// so training state is untouched.
pub fn gradient_collinearity(
    gen: &GeneratorModel,
    batch: &[(&Condition, &Sequence, &Sequence)],
) -> Result<f64, TrainError> {
    if batch.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    let mut probe = gen.clone();
    let mut total = 0.0;
    for &(condition, model_seq, ref_seq) in batch {
        let mut grad_for = |seq: &Sequence| -> Result<Vec<f64>, TrainError> {
            generator_nll_loss_and_grad(&mut probe, &[(condition, seq)])?;
            Ok(probe.gradient_snapshot()?)
        };
        let g_model = grad_for(model_seq)?;
        let g_ref = grad_for(ref_seq)?;
        let norm = |g: &[f64]| g.iter().map(|x| x * x).sum::<f64>().sqrt();
        let (n_model, n_ref) = (norm(&g_model), norm(&g_ref));
        if n_model == 0.0 || n_ref == 0.0 {
            return Err(TrainError::ZeroGradient);
        }
        let dot: f64 = g_model.iter().zip(&g_ref).map(|(a, b)| a * b).sum();
        total += dot / (n_model * n_ref);
    }
    Ok(total / batch.len() as f64)
}

/// Distinct per-epoch randomness streams per mode, so runs with the same
/// seed across modes are uncorrelated and an epoch restart reproduces the
/// stream exactly.
fn epoch_rng(seed: u64, mode_salt: u64, epoch: usize) -> RandomSource {
    RandomSource::new(seed).derive(mode_salt.wrapping_add(epoch as u64))
}

const MLE_STREAM: u64 = 0x1000_0000;
const SELFGAN_STREAM: u64 = 0x2000_0000;
const RLGAN_STREAM: u64 = 0x3000_0000;

fn shuffled_indices(n: usize, rng: &mut RandomSource) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    order
}

fn batches_per_epoch(n: usize, batch_size: usize) -> usize {
    n.div_ceil(batch_size)
}

fn nan_record(step: usize, epoch: usize) -> TraceRecord {
    TraceRecord {
        step,
        epoch,
        gen_loss: f64::NAN,
        disc_loss: f64::NAN,
        disc_grad_norm: f64::NAN,
        gen_collinearity: f64::NAN,
        mean_d_coop: f64::NAN,
        mean_d_gen: f64::NAN,
        length_delta: f64::NAN,
        novelty_delta: f64::NAN,
        repetition3_delta: f64::NAN,
    }
}

/// One epoch of shuffled teacher forcing on the references.
pub fn mle_epoch(
    gen: &mut GeneratorModel,
    dataset: &[ExamplePair],
    config: &TrainConfig,
    epoch: usize,
    trace: &mut TrainingTrace,
) -> Result<(), TrainError> {
    let mut rng = epoch_rng(config.seed, MLE_STREAM, epoch);
    let order = shuffled_indices(dataset.len(), &mut rng);
    let per_epoch = batches_per_epoch(dataset.len(), config.batch_size);
    for (b, chunk) in order.chunks(config.batch_size).enumerate() {
        let step = epoch * per_epoch + b;
        let batch: Vec<(&Condition, &Sequence)> =
            chunk.iter().map(|&i| (&dataset[i].condition, &dataset[i].reference)).collect();
        let gen_loss = train_generator_mle(gen, &batch, config.gen_lr)?;
        if step % config.log_every == 0 {
            trace.push(TraceRecord { gen_loss, ..nan_record(step, epoch) });
        }
    }
    Ok(())
}

pub fn train_mle(
    gen: &mut GeneratorModel,
    dataset: &[ExamplePair],
    config: &TrainConfig,
) -> Result<TrainingTrace, TrainError> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut trace = TrainingTrace::new();
    for epoch in 0..config.epochs {
        mle_epoch(gen, dataset, config, epoch, &mut trace)?;
    }
    Ok(trace)
}

fn decode_coop(
    gen: &GeneratorModel,
    disc: &DiscriminatorModel,
    condition: &Condition,
    config: &TrainConfig,
    rng: &mut RandomSource,
) -> Result<Sequence, TrainError> {
    let decoded = match config.coop_decoder {
        CoopDecoder::DasLocal => decode_das_local(condition, gen, disc, &config.decode)?,
        CoopDecoder::DasGlobal => decode_das_global(condition, gen, disc, &config.decode, rng)?,
        CoopDecoder::CoopMcts => decode_coop_mcts(condition, gen, disc, &config.mcts)?,
        CoopDecoder::Beam => decode_beam(condition, gen, &config.decode)?,
    };
    Ok(decoded.sequence)
}

/// Batch quantities logged alongside the two update steps. The
/// discriminator scores come from the same discriminator state the decoder
/// saw; collinearity degenerating to a zero gradient logs as NaN instead of
/// aborting the run.
fn logged_quantities(
    gen: &GeneratorModel,
    disc: &DiscriminatorModel,
    conditions: &[&Condition],
    references: &[&Sequence],
    outputs: &[Sequence],
    decode: &DecodeConfig,
) -> Result<(f64, f64, f64, crate::evaluation::HumanlikeDeltas), TrainError> {
    let n = outputs.len() as f64;
    let mean_d_coop = conditions
        .iter()
        .zip(outputs)
        .map(|(c, s)| disc.score_sequence(c, s))
        .sum::<f64>()
        / n;
    let mut mean_d_gen = 0.0;
    for (c, _) in conditions.iter().zip(outputs) {
        let beam = decode_beam(*c, gen, decode)?;
        mean_d_gen += disc.score_sequence(c, &beam.sequence);
    }
    mean_d_gen /= n;
    let collinearity_batch: Vec<(&Condition, &Sequence, &Sequence)> = conditions
        .iter()
        .zip(outputs)
        .zip(references)
        .map(|((&c, s), &r)| (c, s, r))
        .collect();
    let collinearity = match gradient_collinearity(gen, &collinearity_batch) {
        Ok(v) => v,
        Err(TrainError::ZeroGradient) => f64::NAN,
        Err(e) => return Err(e),
    };
    let ref_seqs: Vec<Sequence> = references.iter().map(|&r| r.clone()).collect();
    let conds: Vec<Condition> = conditions.iter().map(|&c| c.clone()).collect();
    let deltas = humanlike_stats(outputs, &ref_seqs, &conds);
    Ok((mean_d_coop, mean_d_gen, collinearity, deltas))
}

/// One epoch of the cooperative loop. Per minibatch: decode the cooperative
/// outputs with the current models, take one generator MLE step on them,
/// then one discriminator step with the references as the human class and
/// those same outputs as the machine class, in that order.
pub fn selfgan_epoch(
    gen: &mut GeneratorModel,
    disc: &mut DiscriminatorModel,
    dataset: &[ExamplePair],
    config: &TrainConfig,
    epoch: usize,
    trace: &mut TrainingTrace,
) -> Result<(), TrainError> {
    let mut rng = epoch_rng(config.seed, SELFGAN_STREAM, epoch);
    let order = shuffled_indices(dataset.len(), &mut rng);
    let per_epoch = batches_per_epoch(dataset.len(), config.batch_size);
    for (b, chunk) in order.chunks(config.batch_size).enumerate() {
        let step = epoch * per_epoch + b;
        let conditions: Vec<&Condition> =
            chunk.iter().map(|&i| &dataset[i].condition).collect();
        let references: Vec<&Sequence> =
            chunk.iter().map(|&i| &dataset[i].reference).collect();
        let mut coop = Vec::with_capacity(chunk.len());
        for c in &conditions {
            coop.push(decode_coop(gen, disc, c, config, &mut rng)?);
        }

        let log = step % config.log_every == 0;
        let logged = if log {
            Some(logged_quantities(gen, disc, &conditions, &references, &coop, &config.decode)?)
        } else {
            None
        };

        let gen_batch: Vec<(&Condition, &Sequence)> =
            conditions.iter().zip(&coop).map(|(&c, s)| (c, s)).collect();
        let gen_loss = train_generator_mle(gen, &gen_batch, config.gen_lr)?;

        let human: Vec<(&Condition, &Sequence)> =
            conditions.iter().zip(&references).map(|(&c, &r)| (c, r)).collect();
        let disc_loss = train_discriminator(disc, &human, &gen_batch, config.disc_lr)?;
        let disc_grad_norm = disc.params().grad_l2_norm();

        if let Some((mean_d_coop, mean_d_gen, gen_collinearity, deltas)) = logged {
            trace.push(TraceRecord {
                step,
                epoch,
                gen_loss,
                disc_loss,
                disc_grad_norm,
                gen_collinearity,
                mean_d_coop,
                mean_d_gen,
                length_delta: deltas.length_delta,
                novelty_delta: deltas.novelty_delta,
                repetition3_delta: deltas.repetition3_delta,
            });
        }
    }
    Ok(())
}

/// Runs epochs `start_epoch..config.epochs` of the cooperative loop; with a
/// checkpointed generator and discriminator this continues a run
/// bit-identically from an epoch boundary.
pub fn train_selfgan_from(
    gen: &mut GeneratorModel,
    disc: &mut DiscriminatorModel,
    dataset: &[ExamplePair],
    config: &TrainConfig,
    start_epoch: usize,
) -> Result<TrainingTrace, TrainError> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    if start_epoch >= config.epochs {
        return Err(TrainError::config(format!(
            "start_epoch {start_epoch} is past the last epoch {}",
            config.epochs
        )));
    }
    let mut trace = TrainingTrace::new();
    for epoch in start_epoch..config.epochs {
        selfgan_epoch(gen, disc, dataset, config, epoch, &mut trace)?;
    }
    Ok(trace)
}

pub fn train_selfgan(
    gen: &mut GeneratorModel,
    disc: &mut DiscriminatorModel,
    dataset: &[ExamplePair],
    config: &TrainConfig,
) -> Result<TrainingTrace, TrainError> {
    train_selfgan_from(gen, disc, dataset, config, 0)
}

/// One epoch of the policy-gradient comparator: sample outputs at the
/// configured temperature, weight each sequence's NLL gradient by its
/// discriminator reward minus a moving-average baseline, then give the
/// discriminator the same machine examples. The baseline initializes to the
/// first batch's mean reward, so a constant reward yields exactly zero
/// generator updates from the start.
pub fn rlgan_epoch(
    gen: &mut GeneratorModel,
    disc: &mut DiscriminatorModel,
    dataset: &[ExamplePair],
    config: &TrainConfig,
    epoch: usize,
    baseline: &mut Option<f64>,
    trace: &mut TrainingTrace,
) -> Result<(), TrainError> {
    const BASELINE_DECAY: f64 = 0.99;
    let sample_config = DecodeConfig {
        temperature: config.rl_temperature,
        top_k: None,
        top_p: None,
        max_length: config.decode.max_length,
        ..DecodeConfig::default()
    };
    sample_config.validate()?;
    let mut rng = epoch_rng(config.seed, RLGAN_STREAM, epoch);
    let order = shuffled_indices(dataset.len(), &mut rng);
    let per_epoch = batches_per_epoch(dataset.len(), config.batch_size);
    for (b, chunk) in order.chunks(config.batch_size).enumerate() {
        let step = epoch * per_epoch + b;
        let conditions: Vec<&Condition> =
            chunk.iter().map(|&i| &dataset[i].condition).collect();
        let references: Vec<&Sequence> =
            chunk.iter().map(|&i| &dataset[i].reference).collect();
        let mut sampled = Vec::with_capacity(chunk.len());
        for c in &conditions {
            sampled.push(decode_sampling(c, gen, &sample_config, &mut rng)?.sequence);
        }
        let rewards: Vec<f64> = conditions
            .iter()
            .zip(&sampled)
            .map(|(c, s)| disc.score_sequence(c, s))
            .collect();
        let batch_mean = rewards.iter().sum::<f64>() / rewards.len() as f64;
        let base = *baseline.get_or_insert(batch_mean);
        let advantages: Vec<f64> = rewards.iter().map(|r| r - base).collect();

        let log = step % config.log_every == 0;
        let logged = if log {
            Some(logged_quantities(gen, disc, &conditions, &references, &sampled, &config.decode)?)
        } else {
            None
        };

        let gen_batch: Vec<(&Condition, &Sequence)> =
            conditions.iter().zip(&sampled).map(|(&c, s)| (c, s)).collect();
        let gen_loss = train_generator_weighted(gen, &gen_batch, &advantages, config.gen_lr)?;
        *baseline = Some(BASELINE_DECAY * base + (1.0 - BASELINE_DECAY) * batch_mean);

        let human: Vec<(&Condition, &Sequence)> =
            conditions.iter().zip(&references).map(|(&c, &r)| (c, r)).collect();
        let disc_loss = train_discriminator(disc, &human, &gen_batch, config.disc_lr)?;
        let disc_grad_norm = disc.params().grad_l2_norm();

        if let Some((mean_d_coop, mean_d_gen, gen_collinearity, deltas)) = logged {
            trace.push(TraceRecord {
                step,
                epoch,
                gen_loss,
                disc_loss,
                disc_grad_norm,
                gen_collinearity,
                mean_d_coop,
                mean_d_gen,
                length_delta: deltas.length_delta,
                novelty_delta: deltas.novelty_delta,
                repetition3_delta: deltas.repetition3_delta,
            });
        }
    }
    Ok(())
}

pub fn train_rlgan_baseline(
    gen: &mut GeneratorModel,
    disc: &mut DiscriminatorModel,
    dataset: &[ExamplePair],
    config: &TrainConfig,
) -> Result<TrainingTrace, TrainError> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut trace = TrainingTrace::new();
    let mut baseline = None;
    for epoch in 0..config.epochs {
        rlgan_epoch(gen, disc, dataset, config, epoch, &mut baseline, &mut trace)?;
    }
    Ok(trace)
}
