//! Command-line front end. One declarative TOML config file describes a
//! run; every leaf field is also a flag so experiments can be varied
//! without editing files. Commands validate the full config before any
//! side effect and list every artifact they wrote on success.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::core::{
    load_dataset, save_dataset, Condition, ExamplePair, RandomSource, Sequence, Vocabulary,
};
use crate::decoding::{
    decode_beam, decode_das_global, decode_das_local, decode_greedy, decode_sampling, DecodeConfig,
    Decoded,
};
use crate::evaluation::{
    discriminator_metric, evaluate_outputs, report_csv, report_table, DiscMetricConfig,
    DiscProtocol, EvalError, EvalReport, MLE_BEAM_MODEL,
};
use crate::mcts::{decode_coop_mcts_traced, MctsConfig, StepTrace};
use crate::models::{
    load_discriminator, load_generator, save_discriminator, save_generator, DiscriminatorModel,
    GeneratorModel, ModelArch,
};
use crate::tasks::{generate_task, TaskKind, TaskSpec};
use crate::training::{
    mle_epoch, rlgan_epoch, selfgan_epoch, CoopDecoder, TrainConfig, TrainingTrace,
};

pub const EXIT_CONFIG_ERROR: i32 = 2;
pub const EXIT_RUNTIME_ERROR: i32 = 3;

/// Two failure classes, matching the process exit codes: `Config` for
/// anything wrong with the declared run (files missing, invalid fields,
/// malformed inputs) and `Runtime` for failures while computing or writing.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG_ERROR,
            CliError::Runtime(_) => EXIT_RUNTIME_ERROR,
        }
    }

    fn config(msg: impl Into<String>) -> CliError {
        CliError::Config(msg.into())
    }

    fn runtime(msg: impl Into<String>) -> CliError {
        CliError::Runtime(msg.into())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "{msg}"),
            CliError::Runtime(msg) => write!(f, "{msg}"),
        }
    }
}

impl std::error::Error for CliError {}

fn bad_config(e: impl fmt::Display) -> CliError {
    CliError::config(e.to_string())
}

fn failed(e: impl fmt::Display) -> CliError {
    CliError::runtime(e.to_string())
}

/// Metric errors about the declared inputs are the caller's mistake;
/// everything surfacing from the embedded model is a runtime failure.
fn eval_err(e: EvalError) -> CliError {
    match e {
        EvalError::InvalidInput { .. } | EvalError::MissingModelEntry { .. } => bad_config(e),
        EvalError::Model(_) => failed(e),
    }
}

// Randomness streams derived from the master seed, kept apart from the
// per-epoch streams the training loops derive internally.
const TASK_STREAM: u64 = 0x7461_736b;
const GEN_INIT_STREAM: u64 = 0x6765_6e69;
const DISC_INIT_STREAM: u64 = 0x6469_7363;
const EVAL_STREAM: u64 = 0x6576_616c;
/// Per-example decode streams start here; example `i` uses `base + i`.
const DECODE_STREAM: u64 = 0x6465_6300_0000_0000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PathsConfig {
    pub data_dir: PathBuf,
    pub checkpoint_dir: PathBuf,
    pub output_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> PathsConfig {
        PathsConfig {
            data_dir: PathBuf::from("data"),
            checkpoint_dir: PathBuf::from("checkpoints"),
            output_dir: PathBuf::from("out"),
        }
    }
}

/// The `[train]` section. Decoding settings, search settings, and the seed
/// live at the top level of the config and are composed in by
/// [`RunConfig::train_config`], so they are shared with the decode command
/// rather than specified twice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub gen_lr: f64,
    pub disc_lr: f64,
    pub coop_decoder: CoopDecoder,
    pub rl_temperature: f64,
    pub checkpoint_every: usize,
    pub log_every: usize,
}

impl Default for TrainSection {
    fn default() -> TrainSection {
        let t = TrainConfig::default();
        TrainSection {
            epochs: t.epochs,
            batch_size: t.batch_size,
            gen_lr: t.gen_lr,
            disc_lr: t.disc_lr,
            coop_decoder: t.coop_decoder,
            rl_temperature: t.rl_temperature,
            checkpoint_every: t.checkpoint_every,
            log_every: t.log_every,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSection {
    /// Discriminator-as-metric protocol; omit for n-gram metrics only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub protocol: Option<DiscProtocol>,
    pub train_fraction: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for EvalSection {
    fn default() -> EvalSection {
        let d = DiscMetricConfig::default();
        EvalSection {
            protocol: None,
            train_fraction: d.train_fraction,
            epochs: d.epochs,
            batch_size: d.batch_size,
            learning_rate: d.learning_rate,
        }
    }
}

impl EvalSection {
    pub fn disc_config(&self) -> DiscMetricConfig {
        DiscMetricConfig {
            train_fraction: self.train_fraction,
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub task: TaskSpec,
    pub paths: PathsConfig,
    pub train: TrainSection,
    pub decode: DecodeConfig,
    pub mcts: MctsConfig,
    pub eval: EvalSection,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<RunConfig, CliError> {
        let Some(path) = path else { return Ok(RunConfig::default()) };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| CliError::config(format!("config {}: {e}", path.display())))
    }

    /// The full training configuration: the `[train]` section plus the
    /// shared decode/search settings and the master seed.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            gen_lr: self.train.gen_lr,
            disc_lr: self.train.disc_lr,
            coop_decoder: self.train.coop_decoder,
            decode: self.decode.clone(),
            mcts: self.mcts.clone(),
            rl_temperature: self.train.rl_temperature,
            checkpoint_every: self.train.checkpoint_every,
            log_every: self.train.log_every,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.task.validate().map_err(bad_config)?;
        self.train_config().validate().map_err(bad_config)?;
        self.eval.disc_config().validate().map_err(bad_config)?;
        Ok(())
    }
}

/// Every leaf config field as an optional flag, named after the field.
/// Exceptions, where two sections use the same leaf name: `task.name` is
/// `--task-name`, `eval.epochs` / `eval.batch_size` are `--eval-epochs` /
/// `--eval-batch-size`, and `--max-length` sets the shared cap in both the
/// decode and search sections. `condition_length_range` splits into
/// `--condition-length-min` / `--condition-length-max`. For the optional
/// fields `top_k`, `top_p`, and `block_repeat_ngram`, 0 clears the setting.
#[derive(Args, Debug, Clone, Default)]
pub struct ConfigOverrides {
    #[arg(long)]
    pub seed: Option<u64>,

    #[arg(long)]
    pub task_name: Option<String>,
    #[arg(long)]
    pub alphabet_size: Option<usize>,
    #[arg(long)]
    pub condition_length_min: Option<usize>,
    #[arg(long)]
    pub condition_length_max: Option<usize>,
    #[arg(long)]
    pub num_train: Option<usize>,
    #[arg(long)]
    pub num_val: Option<usize>,
    #[arg(long)]
    pub num_test: Option<usize>,
    #[arg(long)]
    pub noise_rate: Option<f64>,

    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint_dir: Option<PathBuf>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,

    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub gen_lr: Option<f64>,
    #[arg(long)]
    pub disc_lr: Option<f64>,
    #[arg(long)]
    pub coop_decoder: Option<String>,
    #[arg(long)]
    pub rl_temperature: Option<f64>,
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    #[arg(long)]
    pub log_every: Option<usize>,

    #[arg(long)]
    pub max_length: Option<usize>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub top_k: Option<usize>,
    #[arg(long)]
    pub top_p: Option<f64>,
    #[arg(long)]
    pub beam_size: Option<usize>,
    #[arg(long)]
    pub das_candidates: Option<usize>,
    #[arg(long)]
    pub das_alpha: Option<f64>,
    #[arg(long)]
    pub num_samples: Option<usize>,
    #[arg(long)]
    pub block_repeat_ngram: Option<usize>,
    #[arg(long)]
    pub length_penalty: Option<f64>,

    #[arg(long)]
    pub c_puct: Option<f64>,
    #[arg(long)]
    pub num_simulations: Option<usize>,
    #[arg(long)]
    pub expansion_top_p: Option<f64>,
    #[arg(long)]
    pub pi_temperature: Option<f64>,
    #[arg(long)]
    pub reuse_subtree: Option<bool>,

    /// base, base_plus, or none.
    #[arg(long)]
    pub protocol: Option<String>,
    #[arg(long)]
    pub train_fraction: Option<f64>,
    #[arg(long)]
    pub eval_epochs: Option<usize>,
    #[arg(long)]
    pub eval_batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
}

impl ConfigOverrides {
    pub fn apply(&self, config: &mut RunConfig) -> Result<(), CliError> {
        if let Some(v) = self.seed {
            config.seed = v;
        }

        if let Some(name) = &self.task_name {
            config.task.name = name.parse::<TaskKind>().map_err(bad_config)?;
        }
        if let Some(v) = self.alphabet_size {
            config.task.alphabet_size = v;
        }
        if let Some(v) = self.condition_length_min {
            config.task.condition_length_range.0 = v;
        }
        if let Some(v) = self.condition_length_max {
            config.task.condition_length_range.1 = v;
        }
        if let Some(v) = self.num_train {
            config.task.num_train = v;
        }
        if let Some(v) = self.num_val {
            config.task.num_val = v;
        }
        if let Some(v) = self.num_test {
            config.task.num_test = v;
        }
        if let Some(v) = self.noise_rate {
            config.task.noise_rate = v;
        }

        if let Some(v) = &self.data_dir {
            config.paths.data_dir = v.clone();
        }
        if let Some(v) = &self.checkpoint_dir {
            config.paths.checkpoint_dir = v.clone();
        }
        if let Some(v) = &self.output_dir {
            config.paths.output_dir = v.clone();
        }

        if let Some(v) = self.epochs {
            config.train.epochs = v;
        }
        if let Some(v) = self.batch_size {
            config.train.batch_size = v;
        }
        if let Some(v) = self.gen_lr {
            config.train.gen_lr = v;
        }
        if let Some(v) = self.disc_lr {
            config.train.disc_lr = v;
        }
        if let Some(name) = &self.coop_decoder {
            config.train.coop_decoder = name.parse::<CoopDecoder>().map_err(bad_config)?;
        }
        if let Some(v) = self.rl_temperature {
            config.train.rl_temperature = v;
        }
        if let Some(v) = self.checkpoint_every {
            config.train.checkpoint_every = v;
        }
        if let Some(v) = self.log_every {
            config.train.log_every = v;
        }

        if let Some(v) = self.max_length {
            config.decode.max_length = v;
            config.mcts.max_length = v;
        }
        if let Some(v) = self.temperature {
            config.decode.temperature = v;
        }
        if let Some(v) = self.top_k {
            config.decode.top_k = (v > 0).then_some(v);
        }
        if let Some(v) = self.top_p {
            config.decode.top_p = (v > 0.0).then_some(v);
        }
        if let Some(v) = self.beam_size {
            config.decode.beam_size = v;
        }
        if let Some(v) = self.das_candidates {
            config.decode.das_candidates = v;
        }
        if let Some(v) = self.das_alpha {
            config.decode.das_alpha = v;
        }
        if let Some(v) = self.num_samples {
            config.decode.num_samples = v;
        }
        if let Some(v) = self.block_repeat_ngram {
            config.decode.block_repeat_ngram = (v > 0).then_some(v);
        }
        if let Some(v) = self.length_penalty {
            config.decode.length_penalty = v;
        }

        if let Some(v) = self.c_puct {
            config.mcts.c_puct = v;
        }
        if let Some(v) = self.num_simulations {
            config.mcts.num_simulations = v;
        }
        if let Some(v) = self.expansion_top_p {
            config.mcts.expansion_top_p = v;
        }
        if let Some(v) = self.pi_temperature {
            config.mcts.pi_temperature = v;
        }
        if let Some(v) = self.reuse_subtree {
            config.mcts.reuse_subtree = v;
        }

        if let Some(name) = &self.protocol {
            config.eval.protocol = match name.as_str() {
                "none" => None,
                other => Some(other.parse::<DiscProtocol>().map_err(bad_config)?),
            };
        }
        if let Some(v) = self.train_fraction {
            config.eval.train_fraction = v;
        }
        if let Some(v) = self.eval_epochs {
            config.eval.epochs = v;
        }
        if let Some(v) = self.eval_batch_size {
            config.eval.batch_size = v;
        }
        if let Some(v) = self.learning_rate {
            config.eval.learning_rate = v;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMode {
    Mle,
    Selfgan,
    Rlgan,
    SelfganBeamAblation,
}

impl TrainMode {
    pub fn as_str(self) -> &'static str {
        match self {
            TrainMode::Mle => "mle",
            TrainMode::Selfgan => "selfgan",
            TrainMode::Rlgan => "rlgan",
            TrainMode::SelfganBeamAblation => "selfgan_beam_ablation",
        }
    }

    pub fn all() -> [TrainMode; 4] {
        [TrainMode::Mle, TrainMode::Selfgan, TrainMode::Rlgan, TrainMode::SelfganBeamAblation]
    }

    fn needs_init(self) -> bool {
        self != TrainMode::Mle
    }
}

impl fmt::Display for TrainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TrainMode {
    type Err = CliError;

    fn from_str(s: &str) -> Result<TrainMode, CliError> {
        TrainMode::all()
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| CliError::config(format!("unknown training mode {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecoderKind {
    Greedy,
    Sampling,
    Beam,
    DasLocal,
    DasGlobal,
    CoopMcts,
}

impl DecoderKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DecoderKind::Greedy => "greedy",
            DecoderKind::Sampling => "sampling",
            DecoderKind::Beam => "beam",
            DecoderKind::DasLocal => "das_local",
            DecoderKind::DasGlobal => "das_global",
            DecoderKind::CoopMcts => "coop_mcts",
        }
    }

    pub fn all() -> [DecoderKind; 6] {
        [
            DecoderKind::Greedy,
            DecoderKind::Sampling,
            DecoderKind::Beam,
            DecoderKind::DasLocal,
            DecoderKind::DasGlobal,
            DecoderKind::CoopMcts,
        ]
    }

    /// Cooperative decoders need a discriminator checkpoint.
    pub fn is_cooperative(self) -> bool {
        matches!(self, DecoderKind::DasLocal | DecoderKind::DasGlobal | DecoderKind::CoopMcts)
    }
}

impl fmt::Display for DecoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DecoderKind {
    type Err = CliError;

    fn from_str(s: &str) -> Result<DecoderKind, CliError> {
        DecoderKind::all()
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| CliError::config(format!("unknown decoder {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    fn file_name(self) -> String {
        format!("{}.jsonl", self.as_str())
    }
}

impl FromStr for Split {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Split, CliError> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(CliError::config(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "selfgan", version, about = "Sequence GAN training with cooperative decoding")]
pub struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate train/val/test datasets and the vocabulary file.
    GenTask {
        #[command(flatten)]
        overrides: ConfigOverrides,
    },
    /// Train a generator (and, in the adversarial modes, a discriminator).
    Train {
        /// mle, selfgan, rlgan, or selfgan_beam_ablation.
        #[arg(long)]
        mode: String,
        /// Generator checkpoint to start from; required by the adversarial
        /// modes, which continue from a pretrained generator.
        #[arg(long)]
        init: Option<PathBuf>,
        /// Discriminator checkpoint to start from; fresh when omitted.
        #[arg(long)]
        disc_init: Option<PathBuf>,
        #[command(flatten)]
        overrides: ConfigOverrides,
    },
    /// Decode a dataset split with a chosen decoder.
    Decode {
        /// Generator checkpoint.
        #[arg(long)]
        generator: PathBuf,
        /// Discriminator checkpoint; required by cooperative decoders.
        #[arg(long)]
        discriminator: Option<PathBuf>,
        /// greedy, sampling, beam, das_local, das_global, or coop_mcts.
        #[arg(long)]
        decoder: String,
        /// train, val, or test.
        #[arg(long, default_value = "test")]
        split: String,
        /// Output JSONL path; defaults to outputs_<decoder>.jsonl in the
        /// output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write a per-condition search trace (coop_mcts only).
        #[arg(long)]
        trace: Option<PathBuf>,
        #[command(flatten)]
        overrides: ConfigOverrides,
    },
    /// Score decoded outputs against a dataset split.
    Eval {
        /// Repeatable name=file pairs of decode outputs, e.g.
        /// mle_beam=out/outputs_beam.jsonl.
        #[arg(long = "outputs", value_name = "NAME=FILE")]
        outputs: Vec<String>,
        /// train, val, or test.
        #[arg(long, default_value = "test")]
        split: String,
        /// Basename for the report files written to the output directory.
        #[arg(long, default_value = "report")]
        report_prefix: String,
        #[command(flatten)]
        overrides: ConfigOverrides,
    },
    /// Emit moving-average figure data from training trace CSVs.
    Analyze {
        /// Trace CSV files produced by the train command.
        traces: Vec<PathBuf>,
        /// Trailing moving-average window, in logged steps.
        #[arg(long, default_value_t = 50)]
        window: usize,
        #[command(flatten)]
        overrides: ConfigOverrides,
    },
}

fn load_config(path: Option<&Path>, overrides: &ConfigOverrides) -> Result<RunConfig, CliError> {
    let mut config = RunConfig::load(path)?;
    overrides.apply(&mut config)?;
    config.validate()?;
    Ok(config)
}

fn require_file(path: &Path, what: &str) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::config(format!("{what} not found at {}", path.display())))
    }
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path)
        .map_err(|e| CliError::runtime(format!("cannot create {}: {e}", path.display())))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents)
        .map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))
}

fn load_vocab(config: &RunConfig) -> Result<Vocabulary, CliError> {
    let path = config.paths.data_dir.join("vocab.txt");
    require_file(&path, "vocabulary file")?;
    Vocabulary::load(&path).map_err(bad_config)
}

fn load_split(config: &RunConfig, split: Split) -> Result<(Vocabulary, Vec<ExamplePair>), CliError> {
    let vocab = load_vocab(config)?;
    let path = config.paths.data_dir.join(split.file_name());
    require_file(&path, "dataset split")?;
    let pairs = load_dataset(&path, &vocab, config.decode.max_length).map_err(bad_config)?;
    if pairs.is_empty() {
        return Err(CliError::config(format!("dataset split {} is empty", path.display())));
    }
    Ok((vocab, pairs))
}

fn load_generator_checkpoint(path: &Path, vocab: &Vocabulary) -> Result<GeneratorModel, CliError> {
    require_file(path, "generator checkpoint")?;
    let gen = load_generator(path).map_err(bad_config)?;
    if gen.arch().vocab_size != vocab.size() {
        return Err(CliError::config(format!(
            "generator checkpoint {} was trained over a {}-token vocabulary, dataset has {}",
            path.display(),
            gen.arch().vocab_size,
            vocab.size()
        )));
    }
    Ok(gen)
}

fn load_discriminator_checkpoint(
    path: &Path,
    vocab: &Vocabulary,
) -> Result<DiscriminatorModel, CliError> {
    require_file(path, "discriminator checkpoint")?;
    let disc = load_discriminator(path).map_err(bad_config)?;
    if disc.arch().vocab_size != vocab.size() {
        return Err(CliError::config(format!(
            "discriminator checkpoint {} was trained over a {}-token vocabulary, dataset has {}",
            path.display(),
            disc.arch().vocab_size,
            vocab.size()
        )));
    }
    Ok(disc)
}

pub fn cmd_gen_task(config: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    config.validate()?;
    let vocab = config.task.vocabulary().map_err(bad_config)?;
    let mut rng = RandomSource::new(config.seed).derive(TASK_STREAM);
    let (train, val, test) = generate_task(&config.task, &mut rng).map_err(bad_config)?;

    create_dir(&config.paths.data_dir)?;
    let mut artifacts = Vec::new();
    let vocab_path = config.paths.data_dir.join("vocab.txt");
    vocab.save(&vocab_path).map_err(failed)?;
    artifacts.push(vocab_path);
    for (split, pairs) in [(Split::Train, &train), (Split::Val, &val), (Split::Test, &test)] {
        let path = config.paths.data_dir.join(split.file_name());
        save_dataset(pairs, &vocab, &path).map_err(failed)?;
        artifacts.push(path);
    }
    println!(
        "generated {} examples: train {} / val {} / test {}",
        config.task.name,
        train.len(),
        val.len(),
        test.len()
    );
    Ok(artifacts)
}

struct Checkpointer<'a> {
    dir: &'a Path,
    mode: TrainMode,
    artifacts: Vec<PathBuf>,
}

impl<'a> Checkpointer<'a> {
    fn save(
        &mut self,
        tag: &str,
        gen: &GeneratorModel,
        disc: Option<&DiscriminatorModel>,
    ) -> Result<(), CliError> {
        let gen_path = self.dir.join(format!("gen_{}_{tag}.json", self.mode));
        save_generator(gen, &gen_path).map_err(failed)?;
        self.artifacts.push(gen_path);
        if let Some(disc) = disc {
            let disc_path = self.dir.join(format!("disc_{}_{tag}.json", self.mode));
            save_discriminator(disc, &disc_path).map_err(failed)?;
            self.artifacts.push(disc_path);
        }
        Ok(())
    }
}

pub fn cmd_train(
    config: &RunConfig,
    mode: TrainMode,
    init: Option<&Path>,
    disc_init: Option<&Path>,
) -> Result<Vec<PathBuf>, CliError> {
    config.validate()?;
    let (vocab, dataset) = load_split(config, Split::Train)?;
    let arch = ModelArch::for_vocab(&vocab);
    let train_config = config.train_config();

    let mut gen = match init {
        Some(path) => load_generator_checkpoint(path, &vocab)?,
        None if mode.needs_init() => {
            return Err(CliError::config(format!(
                "missing checkpoint: mode {mode} continues from a pretrained generator, pass \
                 --init"
            )));
        }
        None => {
            let mut rng = RandomSource::new(config.seed).derive(GEN_INIT_STREAM);
            GeneratorModel::new(arch.clone(), &mut rng).map_err(failed)?
        }
    };
    let mut disc = match disc_init {
        Some(_) if mode == TrainMode::Mle => {
            return Err(CliError::config("mode mle does not train a discriminator"));
        }
        Some(path) => Some(load_discriminator_checkpoint(path, &vocab)?),
        None if mode.needs_init() => {
            let mut rng = RandomSource::new(config.seed).derive(DISC_INIT_STREAM);
            Some(DiscriminatorModel::new(arch, &mut rng).map_err(failed)?)
        }
        None => None,
    };

    create_dir(&config.paths.checkpoint_dir)?;
    create_dir(&config.paths.output_dir)?;
    let mut ckpt =
        Checkpointer { dir: &config.paths.checkpoint_dir, mode, artifacts: Vec::new() };
    let mut trace = TrainingTrace::new();
    let mut baseline = None;

    let mode_config = match mode {
        // The ablation is the same loop with the discriminator ignored
        // during decoding.
        TrainMode::SelfganBeamAblation => {
            TrainConfig { coop_decoder: CoopDecoder::Beam, ..train_config.clone() }
        }
        _ => train_config.clone(),
    };
    for epoch in 0..mode_config.epochs {
        match mode {
            TrainMode::Mle => {
                mle_epoch(&mut gen, &dataset, &mode_config, epoch, &mut trace).map_err(failed)?
            }
            TrainMode::Selfgan | TrainMode::SelfganBeamAblation => selfgan_epoch(
                &mut gen,
                disc.as_mut().expect("adversarial modes hold a discriminator"),
                &dataset,
                &mode_config,
                epoch,
                &mut trace,
            )
            .map_err(failed)?,
            TrainMode::Rlgan => rlgan_epoch(
                &mut gen,
                disc.as_mut().expect("adversarial modes hold a discriminator"),
                &dataset,
                &mode_config,
                epoch,
                &mut baseline,
                &mut trace,
            )
            .map_err(failed)?,
        }
        let done = epoch + 1;
        if mode_config.checkpoint_every > 0
            && done % mode_config.checkpoint_every == 0
            && done < mode_config.epochs
        {
            ckpt.save(&format!("epoch{done}"), &gen, disc.as_ref())?;
        }
    }
    ckpt.save("final", &gen, disc.as_ref())?;

    let trace_path = config.paths.output_dir.join(format!("trace_{mode}.csv"));
    trace.save_csv(&trace_path).map_err(failed)?;
    ckpt.artifacts.push(trace_path);

    if mode == TrainMode::Mle {
        let mut exact = 0usize;
        for pair in &dataset {
            let out = decode_greedy(&pair.condition, &gen, &config.decode).map_err(failed)?;
            if out.sequence == pair.reference {
                exact += 1;
            }
        }
        println!(
            "final greedy train accuracy: {:.4} ({exact}/{})",
            exact as f64 / dataset.len() as f64,
            dataset.len()
        );
    }
    println!("trained {mode} for {} epochs on {} examples", mode_config.epochs, dataset.len());
    Ok(ckpt.artifacts)
}

/// One decoded example in the outputs JSONL file. The output string keeps
/// its `<eos>` marker, like dataset references.
#[derive(Debug, Serialize, Deserialize)]
struct OutputRecord {
    condition: String,
    output: String,
    gen_logprob: f64,
    disc_score: Option<f64>,
}

#[derive(Debug, Serialize)]
struct ConditionTrace<'a> {
    condition: &'a str,
    steps: &'a [StepTrace],
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_decode(
    config: &RunConfig,
    generator: &Path,
    discriminator: Option<&Path>,
    decoder: DecoderKind,
    split: Split,
    out: Option<&Path>,
    trace: Option<&Path>,
) -> Result<Vec<PathBuf>, CliError> {
    config.validate()?;
    if trace.is_some() && decoder != DecoderKind::CoopMcts {
        return Err(CliError::config("--trace is only produced by the coop_mcts decoder"));
    }
    let (vocab, pairs) = load_split(config, split)?;
    let gen = load_generator_checkpoint(generator, &vocab)?;
    let disc = match discriminator {
        Some(path) => Some(load_discriminator_checkpoint(path, &vocab)?),
        None if decoder.is_cooperative() => {
            return Err(CliError::config(format!(
                "missing discriminator: decoder {decoder} needs --discriminator"
            )));
        }
        None => None,
    };

    let mut lines = String::new();
    let mut trace_lines = String::new();
    for (i, pair) in pairs.iter().enumerate() {
        let condition = &pair.condition;
        let mut example_rng = RandomSource::new(config.seed).derive(DECODE_STREAM + i as u64);
        let decoded: Decoded = match decoder {
            DecoderKind::Greedy => decode_greedy(condition, &gen, &config.decode).map_err(failed)?,
            DecoderKind::Sampling => {
                decode_sampling(condition, &gen, &config.decode, &mut example_rng)
                    .map_err(failed)?
            }
            DecoderKind::Beam => decode_beam(condition, &gen, &config.decode).map_err(failed)?,
            DecoderKind::DasLocal => {
                decode_das_local(condition, &gen, disc.as_ref().unwrap(), &config.decode)
                    .map_err(failed)?
            }
            DecoderKind::DasGlobal => decode_das_global(
                condition,
                &gen,
                disc.as_ref().unwrap(),
                &config.decode,
                &mut example_rng,
            )
            .map_err(failed)?,
            DecoderKind::CoopMcts => {
                let (decoded, steps) = decode_coop_mcts_traced(
                    condition,
                    &gen,
                    disc.as_ref().unwrap(),
                    &config.mcts,
                    trace.is_some(),
                )
                .map_err(failed)?;
                if trace.is_some() {
                    let condition_text = vocab.decode(condition.token_ids());
                    let record = ConditionTrace { condition: &condition_text, steps: &steps };
                    trace_lines
                        .push_str(&serde_json::to_string(&record).expect("trace serialization"));
                    trace_lines.push('\n');
                }
                decoded
            }
        };
        let disc_score = decoded.disc_score.or_else(|| {
            disc.as_ref().map(|d| d.score_sequence(condition, &decoded.sequence))
        });
        let record = OutputRecord {
            condition: vocab.decode(condition.token_ids()),
            output: vocab.decode(decoded.sequence.token_ids()),
            gen_logprob: decoded.gen_log_prob,
            disc_score,
        };
        lines.push_str(&serde_json::to_string(&record).expect("record serialization"));
        lines.push('\n');
    }

    create_dir(&config.paths.output_dir)?;
    let out_path = match out {
        Some(p) => p.to_path_buf(),
        None => config.paths.output_dir.join(format!("outputs_{decoder}.jsonl")),
    };
    if let Some(parent) = out_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write_file(&out_path, &lines)?;
    let mut artifacts = vec![out_path];
    if let Some(trace_path) = trace {
        if let Some(parent) = trace_path.parent().filter(|p| !p.as_os_str().is_empty()) {
            create_dir(parent)?;
        }
        write_file(trace_path, &trace_lines)?;
        artifacts.push(trace_path.to_path_buf());
    }
    println!("decoded {} conditions with {decoder}", pairs.len());
    Ok(artifacts)
}

fn parse_output_args(args: &[String]) -> Result<Vec<(String, PathBuf)>, CliError> {
    let mut parsed = Vec::new();
    for arg in args {
        let (name, path) = arg.split_once('=').ok_or_else(|| {
            CliError::config(format!("outputs argument {arg:?} is not name=file"))
        })?;
        if name.is_empty() || path.is_empty() {
            return Err(CliError::config(format!("outputs argument {arg:?} is not name=file")));
        }
        if parsed.iter().any(|(n, _)| n == name) {
            return Err(CliError::config(format!("duplicate outputs name {name:?}")));
        }
        parsed.push((name.to_string(), PathBuf::from(path)));
    }
    Ok(parsed)
}

fn load_outputs_file(
    path: &Path,
    vocab: &Vocabulary,
    max_length: usize,
) -> Result<Vec<(Condition, Sequence)>, CliError> {
    require_file(path, "outputs file")?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
    let mut outputs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let context = |msg: String| {
            CliError::config(format!("{} line {}: {msg}", path.display(), i + 1))
        };
        let record: OutputRecord =
            serde_json::from_str(line).map_err(|e| context(e.to_string()))?;
        let cond_ids = vocab.encode(&record.condition).map_err(|e| context(e.to_string()))?;
        let out_ids = vocab.encode(&record.output).map_err(|e| context(e.to_string()))?;
        let condition =
            Condition::new(cond_ids, vocab).map_err(|e| context(e.to_string()))?;
        let sequence =
            Sequence::new(out_ids, vocab, max_length).map_err(|e| context(e.to_string()))?;
        outputs.push((condition, sequence));
    }
    if outputs.is_empty() {
        return Err(CliError::config(format!("outputs file {} is empty", path.display())));
    }
    Ok(outputs)
}

pub fn cmd_eval(
    config: &RunConfig,
    outputs: &[(String, PathBuf)],
    split: Split,
    report_prefix: &str,
) -> Result<Vec<PathBuf>, CliError> {
    config.validate()?;
    if outputs.is_empty() {
        return Err(CliError::config("eval needs at least one --outputs name=file"));
    }
    let (vocab, references) = load_split(config, split)?;
    let mut model_outputs: BTreeMap<String, Vec<(Condition, Sequence)>> = BTreeMap::new();
    for (name, path) in outputs {
        let loaded = load_outputs_file(path, &vocab, config.decode.max_length)?;
        model_outputs.insert(name.clone(), loaded);
    }

    let mut rows: BTreeMap<String, EvalReport> = BTreeMap::new();
    for (name, outs) in &model_outputs {
        let report = evaluate_outputs(&config.task, outs, &references).map_err(eval_err)?;
        rows.insert(name.clone(), report);
    }
    if let Some(protocol) = config.eval.protocol {
        if protocol == DiscProtocol::Base && !model_outputs.contains_key(MLE_BEAM_MODEL) {
            return Err(CliError::config(format!(
                "base protocol scores machine text from the {MLE_BEAM_MODEL:?} entry; pass \
                 --outputs {MLE_BEAM_MODEL}=<file>"
            )));
        }
        let arch = ModelArch::for_vocab(&vocab);
        let mut rng = RandomSource::new(config.seed).derive(EVAL_STREAM);
        let scores = discriminator_metric(
            protocol,
            &model_outputs,
            &references,
            arch,
            &config.eval.disc_config(),
            &mut rng,
        )
        .map_err(eval_err)?;
        for (name, score) in scores {
            if let Some(row) = rows.get_mut(&name) {
                row.pct_classified_human = Some(score);
            }
        }
    }

    create_dir(&config.paths.output_dir)?;
    let csv_path = config.paths.output_dir.join(format!("{report_prefix}.csv"));
    let table_path = config.paths.output_dir.join(format!("{report_prefix}.txt"));
    let table = report_table(&rows);
    write_file(&csv_path, &report_csv(&rows))?;
    write_file(&table_path, &table)?;
    print!("{table}");
    Ok(vec![csv_path, table_path])
}

/// Writes one CSV per figure per input trace: the moving-averaged
/// discriminator gradient norm, the collinearity curve, and the three
/// humanlike-delta curves. Steps whose value is NaN (a quantity the mode
/// does not log, or a degenerate batch) are skipped before averaging.
pub fn cmd_analyze(
    config: &RunConfig,
    traces: &[PathBuf],
    window: usize,
) -> Result<Vec<PathBuf>, CliError> {
    config.validate()?;
    if traces.is_empty() {
        return Err(CliError::config("analyze needs at least one trace CSV"));
    }
    if window == 0 {
        return Err(CliError::config("window must be at least 1"));
    }
    create_dir(&config.paths.output_dir)?;
    let mut artifacts = Vec::new();
    for path in traces {
        require_file(path, "trace CSV")?;
        let trace = TrainingTrace::load_csv(path).map_err(bad_config)?;
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| CliError::config(format!("trace path {} has no stem", path.display())))?;

        let single = |column: &str| -> (Vec<usize>, Vec<f64>) {
            let mut steps = Vec::new();
            let mut values = Vec::new();
            for r in trace.records() {
                let v = match column {
                    "disc_grad_norm" => r.disc_grad_norm,
                    "gen_collinearity" => r.gen_collinearity,
                    _ => unreachable!("fixed column set"),
                };
                if v.is_finite() {
                    steps.push(r.step);
                    values.push(v);
                }
            }
            (steps, values)
        };

        for (column, file_tag) in
            [("disc_grad_norm", "disc_grad_norm_ma"), ("gen_collinearity", "collinearity_ma")]
        {
            let (steps, values) = single(column);
            let averaged = crate::evaluation::moving_average(&values, window);
            let mut csv = format!("step,{column}_ma\n");
            for (step, v) in steps.iter().zip(&averaged) {
                csv.push_str(&format!("{step},{v}\n"));
            }
            let out = config.paths.output_dir.join(format!("{stem}_{file_tag}.csv"));
            write_file(&out, &csv)?;
            artifacts.push(out);
        }

        let mut steps = Vec::new();
        let mut columns: [Vec<f64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
        for r in trace.records() {
            let vals = [r.length_delta, r.novelty_delta, r.repetition3_delta];
            if vals.iter().all(|v| v.is_finite()) {
                steps.push(r.step);
                for (col, v) in columns.iter_mut().zip(vals) {
                    col.push(v);
                }
            }
        }
        let averaged: Vec<Vec<f64>> =
            columns.iter().map(|c| crate::evaluation::moving_average(c, window)).collect();
        let mut csv =
            String::from("step,length_delta_ma,novelty_delta_ma,repetition3_delta_ma\n");
        for (i, step) in steps.iter().enumerate() {
            csv.push_str(&format!(
                "{step},{},{},{}\n",
                averaged[0][i], averaged[1][i], averaged[2][i]
            ));
        }
        let out = config.paths.output_dir.join(format!("{stem}_humanlike_deltas_ma.csv"));
        write_file(&out, &csv)?;
        artifacts.push(out);
    }
    println!("analyzed {} trace file(s), window {window}", traces.len());
    Ok(artifacts)
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let config_path = cli.config.as_deref();
    let artifacts = match &cli.command {
        Command::GenTask { overrides } => {
            let config = load_config(config_path, overrides)?;
            cmd_gen_task(&config)?
        }
        Command::Train { mode, init, disc_init, overrides } => {
            let config = load_config(config_path, overrides)?;
            let mode = mode.parse::<TrainMode>()?;
            cmd_train(&config, mode, init.as_deref(), disc_init.as_deref())?
        }
        Command::Decode { generator, discriminator, decoder, split, out, trace, overrides } => {
            let config = load_config(config_path, overrides)?;
            let decoder = decoder.parse::<DecoderKind>()?;
            let split = split.parse::<Split>()?;
            cmd_decode(
                &config,
                generator,
                discriminator.as_deref(),
                decoder,
                split,
                out.as_deref(),
                trace.as_deref(),
            )?
        }
        Command::Eval { outputs, split, report_prefix, overrides } => {
            let config = load_config(config_path, overrides)?;
            let outputs = parse_output_args(outputs)?;
            let split = split.parse::<Split>()?;
            cmd_eval(&config, &outputs, split, report_prefix)?
        }
        Command::Analyze { traces, window, overrides } => {
            let config = load_config(config_path, overrides)?;
            cmd_analyze(&config, traces, *window)?
        }
    };
    for path in &artifacts {
        println!("wrote {}", path.display());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_round_trips_through_toml() {
        let config = RunConfig::default();
        let text = toml::to_string(&config).unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, config);
    }

    #[test]
    fn partial_toml_fills_defaults() {
        let config: RunConfig = toml::from_str(
            "seed = 7\n[task]\nname = \"reverse\"\nnum_train = 40\n[mcts]\nc_puct = 1.5\n",
        )
        .unwrap();
        assert_eq!(config.seed, 7);
        assert_eq!(config.task.name, TaskKind::Reverse);
        assert_eq!(config.task.num_train, 40);
        assert_eq!(config.task.num_val, TaskSpec::default().num_val);
        assert_eq!(config.mcts.c_puct, 1.5);
        assert_eq!(config.decode, DecodeConfig::default());
    }

    #[test]
    fn overrides_reach_every_section() {
        let mut config = RunConfig::default();
        let overrides = ConfigOverrides {
            seed: Some(9),
            task_name: Some("copy".into()),
            condition_length_min: Some(2),
            condition_length_max: Some(3),
            epochs: Some(12),
            coop_decoder: Some("das_local".into()),
            max_length: Some(20),
            top_k: Some(0),
            c_puct: Some(0.5),
            protocol: Some("base".into()),
            eval_epochs: Some(33),
            ..ConfigOverrides::default()
        };
        overrides.apply(&mut config).unwrap();
        assert_eq!(config.seed, 9);
        assert_eq!(config.task.name, TaskKind::Copy);
        assert_eq!(config.task.condition_length_range, (2, 3));
        assert_eq!(config.train.epochs, 12);
        assert_eq!(config.train.coop_decoder, CoopDecoder::DasLocal);
        assert_eq!(config.decode.max_length, 20, "--max-length sets the decode cap");
        assert_eq!(config.mcts.max_length, 20, "--max-length sets the search cap too");
        assert_eq!(config.decode.top_k, None, "0 clears the optional filter");
        assert_eq!(config.mcts.c_puct, 0.5);
        assert_eq!(config.eval.protocol, Some(DiscProtocol::Base));
        assert_eq!(config.eval.epochs, 33);

        let bad = ConfigOverrides {
            coop_decoder: Some("nonsense".into()),
            ..ConfigOverrides::default()
        };
        assert_eq!(bad.apply(&mut config).unwrap_err().exit_code(), EXIT_CONFIG_ERROR);
    }

    #[test]
    fn invalid_config_maps_to_exit_code_two() {
        let mut config = RunConfig::default();
        config.task.alphabet_size = 0;
        let err = config.validate().unwrap_err();
        assert_eq!(err.exit_code(), EXIT_CONFIG_ERROR);
    }

    #[test]
    fn mode_decoder_and_split_names_parse_exactly() {
        for mode in TrainMode::all() {
            assert_eq!(mode.as_str().parse::<TrainMode>().unwrap(), mode);
        }
        for decoder in DecoderKind::all() {
            assert_eq!(decoder.as_str().parse::<DecoderKind>().unwrap(), decoder);
        }
        assert!("mcts".parse::<DecoderKind>().is_err());
        assert_eq!("val".parse::<Split>().unwrap(), Split::Val);
        assert!("dev".parse::<Split>().is_err());
        assert!(DecoderKind::DasGlobal.is_cooperative());
        assert!(!DecoderKind::Beam.is_cooperative());
    }

    #[test]
    fn output_args_parse_and_reject_duplicates() {
        let parsed = parse_output_args(&[
            "mle_beam=out/a.jsonl".to_string(),
            "selfgan=out/b.jsonl".to_string(),
        ])
        .unwrap();
        assert_eq!(parsed[0].0, "mle_beam");
        assert_eq!(parsed[1].1, PathBuf::from("out/b.jsonl"));
        assert!(parse_output_args(&["broken".to_string()]).is_err());
        assert!(parse_output_args(&["a=x".to_string(), "a=y".to_string()]).is_err());
    }

    #[test]
    fn command_line_parses_into_subcommands() {
        let cli = Cli::try_parse_from([
            "selfgan",
            "decode",
            "--generator",
            "g.json",
            "--decoder",
            "beam",
            "--num-simulations",
            "9",
        ])
        .unwrap();
        match cli.command {
            Command::Decode { decoder, split, overrides, .. } => {
                assert_eq!(decoder, "beam");
                assert_eq!(split, "test");
                assert_eq!(overrides.num_simulations, Some(9));
            }
            other => panic!("expected decode, parsed {other:?}"),
        }
    }
}
