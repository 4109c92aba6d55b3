//! Output measurement: n-gram overlap metrics, surface statistics against
//! references, and the trained-classifier protocols that score how often a
//! model's outputs pass for human. Metrics run on content tokens; the
//! trailing eos is structural and never counted.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::core::{Condition, ExamplePair, RandomSource, Sequence, TokenId};
use crate::models::{
    train_discriminator, DiscriminatorModel, ModelArch, ModelError,
};
use crate::tasks::{is_human_valid, TaskSpec};

/// Model-entry name the base protocol trains against.
pub const MLE_BEAM_MODEL: &str = "mle_beam";

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid evaluation input: {msg}")]
    InvalidInput { msg: String },
    #[error("model entry {name:?} is required but missing")]
    MissingModelEntry { name: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl EvalError {
    fn input(msg: impl Into<String>) -> EvalError {
        EvalError::InvalidInput { msg: msg.into() }
    }
}

fn ngram_counts(tokens: &[TokenId], n: usize) -> HashMap<&[TokenId], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// Geometric mean of clipped 1..4-gram precisions with a brevity penalty
/// against the closest reference length (ties prefer the shorter). When the
/// hypothesis runs shorter than 4 tokens or any raw precision is zero, the
/// precisions for n >= 2 get one added to numerator and denominator, which
/// keeps the identity case at exactly 1.0.
pub fn bleu4(hypothesis: &Sequence, references: &[Sequence]) -> f64 {
    assert!(!references.is_empty(), "bleu4 needs at least one reference");
    let hyp = hypothesis.content();
    let h = hyp.len();
    let r = references
        .iter()
        .map(|r| r.content().len())
        .min_by_key(|&rl| ((rl as i64 - h as i64).abs(), rl))
        .expect("references is non-empty");
    if h == 0 {
        return if r == 0 { 1.0 } else { 0.0 };
    }

    let mut clipped = [0usize; 4];
    let mut totals = [0usize; 4];
    for n in 1..=4 {
        if h < n {
            continue;
        }
        totals[n - 1] = h - n + 1;
        let ref_counts: Vec<HashMap<&[TokenId], usize>> =
            references.iter().map(|r| ngram_counts(r.content(), n)).collect();
        for (gram, &count) in &ngram_counts(hyp, n) {
            let best_ref = ref_counts
                .iter()
                .map(|c| c.get(gram).copied().unwrap_or(0))
                .max()
                .expect("references is non-empty");
            clipped[n - 1] += count.min(best_ref);
        }
    }

    let smooth =
        h < 4 || (0..4).any(|i| totals[i] > 0 && clipped[i] == 0);
    let mut log_sum = 0.0;
    for n in 1..=4 {
        let (num, den) = if n >= 2 && smooth {
            (clipped[n - 1] + 1, totals[n - 1] + 1)
        } else {
            (clipped[n - 1], totals[n - 1])
        };
        if num == 0 {
            return 0.0;
        }
        log_sum += (num as f64 / den as f64).ln();
    }
    let precision = (log_sum / 4.0).exp();
    let brevity = if h >= r { 1.0 } else { (1.0 - r as f64 / h as f64).exp() };
    (brevity * precision).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RougeVariant {
    Rouge1,
    RougeL,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn lcs_length(a: &[TokenId], b: &[TokenId]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for &x in a {
        let mut prev_diag = 0;
        for (j, &y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { prev_diag + 1 } else { up.max(row[j]) };
            prev_diag = up;
        }
    }
    row[b.len()]
}

/// Unigram-overlap (rouge1) or longest-common-subsequence (rougeL)
/// precision, recall, and F1 on content tokens.
pub fn rouge(hypothesis: &Sequence, reference: &Sequence, variant: RougeVariant) -> RougeScore {
    let hyp = hypothesis.content();
    let rf = reference.content();
    if hyp.is_empty() && rf.is_empty() {
        return RougeScore { precision: 1.0, recall: 1.0, f1: 1.0 };
    }
    if hyp.is_empty() || rf.is_empty() {
        return RougeScore { precision: 0.0, recall: 0.0, f1: 0.0 };
    }
    let matched = match variant {
        RougeVariant::Rouge1 => {
            let ref_counts = ngram_counts(rf, 1);
            ngram_counts(hyp, 1)
                .iter()
                .map(|(gram, &c)| c.min(ref_counts.get(gram).copied().unwrap_or(0)))
                .sum::<usize>()
        }
        RougeVariant::RougeL => lcs_length(hyp, rf),
    };
    let precision = matched as f64 / hyp.len() as f64;
    let recall = matched as f64 / rf.len() as f64;
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    RougeScore { precision, recall, f1 }
}

/// Mean content length of a batch minus the references' (and likewise for
/// the other two surface statistics). Near zero means the outputs look
/// statistically like the references.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HumanlikeDeltas {
    pub length_delta: f64,
    pub novelty_delta: f64,
    pub repetition3_delta: f64,
}

/// Fraction of content tokens absent from the condition.
pub fn novelty_fraction(sequence: &Sequence, condition: &Condition) -> f64 {
    let content = sequence.content();
    if content.is_empty() {
        return 0.0;
    }
    let novel = content.iter().filter(|t| !condition.token_ids().contains(t)).count();
    novel as f64 / content.len() as f64
}

/// Fraction of trigram instances that occur more than once in the content.
pub fn repetition3_fraction(sequence: &Sequence) -> f64 {
    let content = sequence.content();
    if content.len() < 3 {
        return 0.0;
    }
    let total = content.len() - 2;
    let repeated: usize =
        ngram_counts(content, 3).values().filter(|&&c| c >= 2).copied().sum();
    repeated as f64 / total as f64
}

pub fn humanlike_stats(
    outputs: &[Sequence],
    references: &[Sequence],
    conditions: &[Condition],
) -> HumanlikeDeltas {
    assert!(
        !outputs.is_empty()
            && outputs.len() == references.len()
            && outputs.len() == conditions.len(),
        "humanlike_stats needs non-empty aligned lists"
    );
    let mean = |f: &dyn Fn(usize) -> f64| {
        (0..outputs.len()).map(f).sum::<f64>() / outputs.len() as f64
    };
    HumanlikeDeltas {
        length_delta: mean(&|i| outputs[i].content().len() as f64)
            - mean(&|i| references[i].content().len() as f64),
        novelty_delta: mean(&|i| novelty_fraction(&outputs[i], &conditions[i]))
            - mean(&|i| novelty_fraction(&references[i], &conditions[i])),
        repetition3_delta: mean(&|i| repetition3_fraction(&outputs[i]))
            - mean(&|i| repetition3_fraction(&references[i])),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscProtocol {
    /// Classifier trained with machine examples from the `mle_beam` entry
    /// only.
    Base,
    /// Classifier trained with machine examples pooled from every entry.
    BasePlus,
}

impl DiscProtocol {
    pub fn as_str(self) -> &'static str {
        match self {
            DiscProtocol::Base => "base",
            DiscProtocol::BasePlus => "base_plus",
        }
    }
}

impl fmt::Display for DiscProtocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DiscProtocol {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<DiscProtocol, EvalError> {
        match s {
            "base" => Ok(DiscProtocol::Base),
            "base_plus" => Ok(DiscProtocol::BasePlus),
            other => Err(EvalError::input(format!("unknown protocol {other:?}"))),
        }
    }
}

/// Training budget for the metric classifier. The zero-initialized output
/// head keeps hidden gradients dormant for on the order of a thousand steps,
/// so the epoch count must be large enough that epochs * batches clears that
/// plateau at the intended dataset scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiscMetricConfig {
    pub train_fraction: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for DiscMetricConfig {
    fn default() -> DiscMetricConfig {
        DiscMetricConfig {
            train_fraction: 0.6,
            epochs: 400,
            batch_size: 16,
            learning_rate: 0.2,
        }
    }
}

impl DiscMetricConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(EvalError::input(format!(
                "train_fraction {} outside (0, 1)",
                self.train_fraction
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(EvalError::input("epochs and batch_size must be positive"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(EvalError::input(format!(
                "learning_rate {} must be positive",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// Trains a fresh classifier (human = references, machine = model outputs
/// per the protocol) on a split of the conditions, then reports per model
/// the fraction of held-out outputs scored above 0.5. The training and
/// scoring splits share no condition index.
pub fn discriminator_metric(
    protocol: DiscProtocol,
    model_outputs: &BTreeMap<String, Vec<(Condition, Sequence)>>,
    references: &[ExamplePair],
    arch: ModelArch,
    config: &DiscMetricConfig,
    rng: &mut RandomSource,
) -> Result<BTreeMap<String, f64>, EvalError> {
    config.validate()?;
    match protocol {
        DiscProtocol::Base => {
            if !model_outputs.contains_key(MLE_BEAM_MODEL) {
                return Err(EvalError::MissingModelEntry { name: MLE_BEAM_MODEL.into() });
            }
        }
        DiscProtocol::BasePlus => {
            if model_outputs.len() < 2 {
                return Err(EvalError::input(
                    "base_plus needs outputs from at least two models",
                ));
            }
        }
    }
    let n = references.len();
    if n < 2 {
        return Err(EvalError::input("need at least two references to split"));
    }
    for (name, outputs) in model_outputs {
        if outputs.len() != n {
            return Err(EvalError::input(format!(
                "model {name:?} has {} outputs for {n} references",
                outputs.len()
            )));
        }
        for (i, (cond, _)) in outputs.iter().enumerate() {
            if cond != &references[i].condition {
                return Err(EvalError::input(format!(
                    "model {name:?} output {i} is for a different condition"
                )));
            }
        }
    }

    let mut indices: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut indices);
    let train_count = ((n as f64 * config.train_fraction).round() as usize).clamp(1, n - 1);
    let (train_idx, eval_idx) = indices.split_at(train_count);
    debug_assert!(train_idx.iter().all(|i| !eval_idx.contains(i)), "split must be disjoint");

    let machine_models: Vec<&str> = match protocol {
        DiscProtocol::Base => vec![MLE_BEAM_MODEL],
        DiscProtocol::BasePlus => model_outputs.keys().map(String::as_str).collect(),
    };
    let mut human: Vec<(&Condition, &Sequence)> = train_idx
        .iter()
        .map(|&i| (&references[i].condition, &references[i].reference))
        .collect();
    let mut machine: Vec<(&Condition, &Sequence)> = machine_models
        .iter()
        .flat_map(|name| {
            let outputs = &model_outputs[*name];
            train_idx.iter().map(|&i| (&outputs[i].0, &outputs[i].1))
        })
        .collect();

    let mut disc = DiscriminatorModel::new(arch, &mut rng.derive(1))?;
    let mut order_rng = rng.derive(2);
    for _ in 0..config.epochs {
        order_rng.shuffle(&mut human);
        order_rng.shuffle(&mut machine);
        let human_chunks: Vec<&[(&Condition, &Sequence)]> =
            human.chunks(config.batch_size).collect();
        for (b, machine_chunk) in machine.chunks(config.batch_size).enumerate() {
            let human_chunk = human_chunks[b % human_chunks.len()];
            train_discriminator(&mut disc, human_chunk, machine_chunk, config.learning_rate)?;
        }
    }

    let mut scores = BTreeMap::new();
    for (name, outputs) in model_outputs {
        let passed = eval_idx
            .iter()
            .filter(|&&i| disc.score_sequence(&outputs[i].0, &outputs[i].1) > 0.5)
            .count();
        scores.insert(name.clone(), passed as f64 / eval_idx.len() as f64);
    }
    Ok(scores)
}

/// One scored model: overlap metrics against the dataset references, the
/// trained-classifier pass rate when a protocol ran, surface-statistic
/// deltas, and the task's exact-validity rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub bleu4: f64,
    pub rouge1_f: f64,
    pub rouge_l_f: f64,
    pub pct_classified_human: Option<f64>,
    pub length_delta: f64,
    pub novelty_delta: f64,
    pub repetition3_delta: f64,
    pub task_validity_rate: f64,
}

/// Per-example means of the reference-based metrics; `pct_classified_human`
/// stays empty until a classifier protocol fills it in.
pub fn evaluate_outputs(
    spec: &TaskSpec,
    outputs: &[(Condition, Sequence)],
    references: &[ExamplePair],
) -> Result<EvalReport, EvalError> {
    if outputs.is_empty() || outputs.len() != references.len() {
        return Err(EvalError::input(format!(
            "{} outputs for {} references",
            outputs.len(),
            references.len()
        )));
    }
    for (i, (cond, _)) in outputs.iter().enumerate() {
        if cond != &references[i].condition {
            return Err(EvalError::input(format!("output {i} is for a different condition")));
        }
    }
    let n = outputs.len() as f64;
    let mut bleu_sum = 0.0;
    let mut rouge1_sum = 0.0;
    let mut rouge_l_sum = 0.0;
    let mut valid = 0usize;
    for ((cond, seq), pair) in outputs.iter().zip(references) {
        bleu_sum += bleu4(seq, std::slice::from_ref(&pair.reference));
        rouge1_sum += rouge(seq, &pair.reference, RougeVariant::Rouge1).f1;
        rouge_l_sum += rouge(seq, &pair.reference, RougeVariant::RougeL).f1;
        if is_human_valid(spec, cond, seq) {
            valid += 1;
        }
    }
    let sequences: Vec<Sequence> = outputs.iter().map(|(_, s)| s.clone()).collect();
    let refs: Vec<Sequence> = references.iter().map(|p| p.reference.clone()).collect();
    let conds: Vec<Condition> = outputs.iter().map(|(c, _)| c.clone()).collect();
    let deltas = humanlike_stats(&sequences, &refs, &conds);
    Ok(EvalReport {
        bleu4: bleu_sum / n,
        rouge1_f: rouge1_sum / n,
        rouge_l_f: rouge_l_sum / n,
        pct_classified_human: None,
        length_delta: deltas.length_delta,
        novelty_delta: deltas.novelty_delta,
        repetition3_delta: deltas.repetition3_delta,
        task_validity_rate: valid as f64 / n,
    })
}

pub const REPORT_COLUMNS: [&str; 9] = [
    "model",
    "bleu4",
    "rouge1_f",
    "rouge_l_f",
    "pct_classified_human",
    "length_delta",
    "novelty_delta",
    "repetition3_delta",
    "task_validity_rate",
];

fn report_cells(report: &EvalReport) -> [String; 8] {
    let f = |v: f64| format!("{v:.6}");
    [
        f(report.bleu4),
        f(report.rouge1_f),
        f(report.rouge_l_f),
        report.pct_classified_human.map(f).unwrap_or_default(),
        f(report.length_delta),
        f(report.novelty_delta),
        f(report.repetition3_delta),
        f(report.task_validity_rate),
    ]
}

/// One CSV row per model, sorted by model name, fixed column order.
pub fn report_csv(rows: &BTreeMap<String, EvalReport>) -> String {
    let mut out = REPORT_COLUMNS.join(",");
    out.push('\n');
    for (name, report) in rows {
        out.push_str(name);
        for cell in report_cells(report) {
            out.push(',');
            out.push_str(&cell);
        }
        out.push('\n');
    }
    out
}

/// Fixed-width text table of the same rows.
pub fn report_table(rows: &BTreeMap<String, EvalReport>) -> String {
    let name_width = rows
        .keys()
        .map(String::len)
        .chain(std::iter::once(REPORT_COLUMNS[0].len()))
        .max()
        .unwrap_or(5);
    let mut out = format!("{:<name_width$}", REPORT_COLUMNS[0]);
    for col in &REPORT_COLUMNS[1..] {
        out.push_str(&format!(" {col:>20}"));
    }
    out.push('\n');
    for (name, report) in rows {
        out.push_str(&format!("{name:<name_width$}"));
        for cell in report_cells(report) {
            let shown = if cell.is_empty() { "-" } else { &cell };
            out.push_str(&format!(" {shown:>20}"));
        }
        out.push('\n');
    }
    out
}

/// Trailing mean over an inclusive window; rows before the window fills use
/// the shorter prefix.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    assert!(window >= 1, "window must be at least 1");
    values
        .iter()
        .enumerate()
        .map(|(i, _)| {
            let start = (i + 1).saturating_sub(window);
            let slice = &values[start..=i];
            slice.iter().sum::<f64>() / slice.len() as f64
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::Vocabulary;
    use crate::tasks::{generate_task, TaskKind};

    fn vocab() -> Vocabulary {
        Vocabulary::ascii_alphabet(8).unwrap()
    }

    fn seq(text: &str) -> Sequence {
        let v = vocab();
        let ids = v.encode(text).unwrap();
        Sequence::terminated_from_content(&ids, &v, 64).unwrap()
    }

    fn cond(text: &str) -> Condition {
        let v = vocab();
        Condition::new(v.encode(text).unwrap(), &v).unwrap()
    }

    #[test]
    fn bleu_identity_is_exactly_one() {
        assert_eq!(bleu4(&seq("abcde"), &[seq("abcde")]), 1.0);
        assert_eq!(bleu4(&seq("ab"), &[seq("ab")]), 1.0, "short identity needs smoothing");
    }

    #[test]
    fn bleu_zero_unigram_overlap_is_zero() {
        assert_eq!(bleu4(&seq("abc"), &[seq("def")]), 0.0);
    }

    #[test]
    fn bleu_near_miss_matches_hand_value() {
        // Precisions 4/5, 3/4, 2/3, 1/2; equal lengths so no brevity
        // penalty; value (0.2)^(1/4).
        let got = bleu4(&seq("abcde"), &[seq("abcdf")]);
        assert!((got - 0.2f64.powf(0.25)).abs() < 1e-12, "got {got}");
    }

    #[test]
    fn bleu_multi_reference_takes_best_clip_per_reference() {
        let hyp = seq("aa");
        let single = bleu4(&hyp, &[seq("ab")]);
        let multi = bleu4(&hyp, &[seq("ab"), seq("aa")]);
        assert!(multi > single, "{multi} should beat {single}");
        assert_eq!(multi, 1.0, "second reference matches exactly");
    }

    #[test]
    fn bleu_brevity_penalty_uses_closest_reference_length() {
        // Every precision smooths to 1; only the penalty exp(1 - 4/2) remains.
        let got = bleu4(&seq("ab"), &[seq("abcd")]);
        assert!((got - (-1.0f64).exp()).abs() < 1e-12, "got {got}");
    }

    #[test]
    fn rouge1_hand_count() {
        let score = rouge(&seq("abc"), &seq("abd"), RougeVariant::Rouge1);
        assert!((score.precision - 2.0 / 3.0).abs() < 1e-12);
        assert!((score.recall - 2.0 / 3.0).abs() < 1e-12);
        assert!((score.f1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn rouge_l_uses_longest_common_subsequence() {
        let score = rouge(&seq("ac"), &seq("abc"), RougeVariant::RougeL);
        assert_eq!(score.precision, 1.0);
        assert!((score.recall - 2.0 / 3.0).abs() < 1e-12);
        assert!((score.f1 - 0.8).abs() < 1e-12);
    }

    #[test]
    fn rouge_identity_is_perfect() {
        for variant in [RougeVariant::Rouge1, RougeVariant::RougeL] {
            let score = rouge(&seq("abc"), &seq("abc"), variant);
            assert_eq!((score.precision, score.recall, score.f1), (1.0, 1.0, 1.0));
        }
    }

    #[test]
    fn identical_outputs_have_zero_deltas() {
        let outputs = vec![seq("abc"), seq("de")];
        let conditions = vec![cond("a"), cond("d")];
        let deltas = humanlike_stats(&outputs, &outputs.clone(), &conditions);
        assert_eq!(deltas.length_delta, 0.0);
        assert_eq!(deltas.novelty_delta, 0.0);
        assert_eq!(deltas.repetition3_delta, 0.0);
    }

    #[test]
    fn copying_the_condition_has_zero_novelty() {
        assert_eq!(novelty_fraction(&seq("ab"), &cond("ab")), 0.0);
        assert_eq!(novelty_fraction(&seq("cd"), &cond("ab")), 1.0);
        assert!((novelty_fraction(&seq("ad"), &cond("ab")) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn alternating_trigrams_are_fully_repeated() {
        // Trigrams: aba, bab, aba, bab; all four instances repeat.
        assert_eq!(repetition3_fraction(&seq("ababab")), 1.0);
        assert_eq!(repetition3_fraction(&seq("abcd")), 0.0);
        assert_eq!(repetition3_fraction(&seq("ab")), 0.0, "too short for trigrams");
    }

    #[test]
    fn deltas_match_hand_arithmetic() {
        let outputs = vec![seq("aaaaaa"), seq("b")];
        let references = vec![seq("abc"), seq("cde")];
        let conditions = vec![cond("a"), cond("b")];
        let deltas = humanlike_stats(&outputs, &references, &conditions);
        assert!((deltas.length_delta - (3.5 - 3.0)).abs() < 1e-12);
        // Novelty: outputs 0 and 0; references 2/3 and 1.
        assert!((deltas.novelty_delta - (0.0 - 5.0 / 6.0)).abs() < 1e-12);
        // Repetition: first output has 4 repeated trigrams of 4.
        assert!((deltas.repetition3_delta - 0.5).abs() < 1e-12);
    }

    #[test]
    fn moving_average_window_behaviour() {
        let values = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(moving_average(&values, 1), values.to_vec());
        assert_eq!(moving_average(&[2.5; 4], 3), vec![2.5; 4]);
        let got = moving_average(&values, 2);
        assert_eq!(got, vec![1.0, 1.5, 2.5, 3.5, 4.5]);
    }

    #[test]
    fn base_protocol_requires_the_mle_beam_entry() {
        let refs = vec![ExamplePair::new(cond("a"), seq("a")).unwrap(); 4];
        let outputs =
            BTreeMap::from([("other".to_string(), vec![(cond("a"), seq("b")); 4])]);
        let err = discriminator_metric(
            DiscProtocol::Base,
            &outputs,
            &refs,
            ModelArch::for_vocab(&vocab()),
            &DiscMetricConfig::default(),
            &mut RandomSource::new(0),
        )
        .unwrap_err();
        assert!(matches!(err, EvalError::MissingModelEntry { name } if name == "mle_beam"));
    }

    #[test]
    fn base_plus_needs_two_models() {
        let refs = vec![ExamplePair::new(cond("a"), seq("a")).unwrap(); 4];
        let outputs =
            BTreeMap::from([(MLE_BEAM_MODEL.to_string(), vec![(cond("a"), seq("b")); 4])]);
        let err = discriminator_metric(
            DiscProtocol::BasePlus,
            &outputs,
            &refs,
            ModelArch::for_vocab(&vocab()),
            &DiscMetricConfig::default(),
            &mut RandomSource::new(0),
        )
        .unwrap_err();
        assert!(matches!(err, EvalError::InvalidInput { .. }));
    }

    /// Machine class = constant garbage from "mle_beam"; a second model
    /// echoes the references. The trained classifier must pass the echo
    /// model far more often, and the whole protocol must be reproducible.
    #[test]
    fn metric_classifier_separates_reference_echo_from_garbage() {
        let spec = TaskSpec {
            num_train: 60,
            num_val: 1,
            num_test: 1,
            noise_rate: 0.0,
            ..TaskSpec::new(TaskKind::Reverse)
        };
        let (refs, _, _) = generate_task(&spec, &mut RandomSource::new(11)).unwrap();
        let echo: Vec<(Condition, Sequence)> =
            refs.iter().map(|p| (p.condition.clone(), p.reference.clone())).collect();
        let v = spec.vocabulary().unwrap();
        let garbage_seq =
            Sequence::terminated_from_content(&[3, 3, 3], &v, 64).unwrap();
        let garbage: Vec<(Condition, Sequence)> =
            refs.iter().map(|p| (p.condition.clone(), garbage_seq.clone())).collect();
        let outputs = BTreeMap::from([
            (MLE_BEAM_MODEL.to_string(), garbage),
            ("echo".to_string(), echo),
        ]);
        let config = DiscMetricConfig { epochs: 600, ..DiscMetricConfig::default() };
        let run = |seed: u64| {
            discriminator_metric(
                DiscProtocol::Base,
                &outputs,
                &refs,
                ModelArch::for_vocab(&v),
                &config,
                &mut RandomSource::new(seed),
            )
            .unwrap()
        };
        let scores = run(5);
        assert!(
            scores["echo"] > scores[MLE_BEAM_MODEL] + 0.4,
            "echo {} vs garbage {}",
            scores["echo"],
            scores[MLE_BEAM_MODEL]
        );
        assert_eq!(scores, run(5), "protocol must be reproducible under one seed");
    }

    #[test]
    fn evaluate_outputs_scores_perfect_model_perfectly() {
        let spec = TaskSpec {
            num_train: 6,
            num_val: 1,
            num_test: 1,
            noise_rate: 0.0,
            ..TaskSpec::new(TaskKind::Copy)
        };
        let (train, _, _) = generate_task(&spec, &mut RandomSource::new(3)).unwrap();
        let outputs: Vec<(Condition, Sequence)> = train
            .iter()
            .map(|p| (p.condition.clone(), p.reference.clone()))
            .collect();
        let report = evaluate_outputs(&spec, &outputs, &train).unwrap();
        assert_eq!(report.bleu4, 1.0);
        assert_eq!(report.rouge1_f, 1.0);
        assert_eq!(report.rouge_l_f, 1.0);
        assert_eq!(report.task_validity_rate, 1.0);
        assert_eq!(report.length_delta, 0.0);
        assert_eq!(report.pct_classified_human, None);
    }

    #[test]
    fn report_csv_and_table_have_fixed_shape() {
        let report = EvalReport {
            bleu4: 0.5,
            rouge1_f: 0.25,
            rouge_l_f: 0.125,
            pct_classified_human: None,
            length_delta: -1.0,
            novelty_delta: 0.0,
            repetition3_delta: 0.0,
            task_validity_rate: 0.75,
        };
        let mut rows = BTreeMap::new();
        rows.insert("mle_beam".to_string(), report.clone());
        rows.insert(
            "selfgan_coop_mcts".to_string(),
            EvalReport { pct_classified_human: Some(0.625), ..report },
        );
        let csv = report_csv(&rows);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], REPORT_COLUMNS.join(","));
        assert!(lines[1].starts_with("mle_beam,0.500000,"));
        assert!(lines[1].contains(",,"), "missing pct stays an empty cell");
        assert!(lines[2].contains("0.625000"));
        let table = report_table(&rows);
        assert_eq!(table.lines().count(), 3);
        assert!(table.contains(" -"), "missing pct renders as a dash");
    }
}
