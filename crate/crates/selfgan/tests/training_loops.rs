//! End-to-end training pipeline: synthetic data, MLE pretraining,
//! discriminator warmup, then the cooperative loop, checking the property
//! the loop exists for: cooperative outputs score at least as well under
//! the discriminator as the generator's own beam outputs.

use selfgan::core::{Condition, ExamplePair, RandomSource, Sequence};
use selfgan::decoding::{decode_beam, DecodeConfig};
use selfgan::models::{
    train_discriminator, DiscriminatorModel, GeneratorModel, ModelArch,
};
use selfgan::tasks::{generate_task, TaskKind, TaskSpec};
use selfgan::training::{
    train_mle, train_selfgan, CoopDecoder, TrainConfig, TrainingTrace,
};

fn reverse_task(n: usize, seed: u64) -> (Vec<ExamplePair>, ModelArch) {
    let spec = TaskSpec {
        alphabet_size: 6,
        condition_length_range: (3, 6),
        num_train: n,
        num_val: 1,
        num_test: 1,
        noise_rate: 0.0,
        ..TaskSpec::new(TaskKind::Reverse)
    };
    let (train, _, _) = generate_task(&spec, &mut RandomSource::new(seed)).unwrap();
    let arch = ModelArch::for_vocab(&spec.vocabulary().unwrap());
    (train, arch)
}

fn beam_outputs(
    gen: &GeneratorModel,
    pairs: &[ExamplePair],
    decode: &DecodeConfig,
) -> Vec<Sequence> {
    pairs
        .iter()
        .map(|p| decode_beam(&p.condition, gen, decode).unwrap().sequence)
        .collect()
}

#[test]
fn cooperative_outputs_match_or_beat_beam_under_the_discriminator() {
    let (train, arch) = reverse_task(48, 101);

    // Mediocre on purpose: the generator should be good enough that beam
    // outputs are plausible but wrong often enough for the discriminator to
    // find a separating direction.
    let mut gen = GeneratorModel::new(arch.clone(), &mut RandomSource::new(1)).unwrap();
    let pretrain = TrainConfig {
        epochs: 120,
        batch_size: 16,
        gen_lr: 0.05,
        seed: 2,
        ..TrainConfig::default()
    };
    train_mle(&mut gen, &train, &pretrain).unwrap();

    // Discriminator warmup on references versus the pretrained generator's
    // beam outputs. The budget must outlast the flat stretch the
    // zero-initialized head starts in.
    let mut disc = DiscriminatorModel::new(arch, &mut RandomSource::new(3)).unwrap();
    let decode = DecodeConfig::default();
    let machine = beam_outputs(&gen, &train, &decode);
    let mut warm_rng = RandomSource::new(4);
    for _ in 0..250 {
        let mut order: Vec<usize> = (0..train.len()).collect();
        warm_rng.shuffle(&mut order);
        for chunk in order.chunks(16) {
            let human: Vec<(&Condition, &Sequence)> =
                chunk.iter().map(|&i| (&train[i].condition, &train[i].reference)).collect();
            let fake: Vec<(&Condition, &Sequence)> =
                chunk.iter().map(|&i| (&train[i].condition, &machine[i])).collect();
            train_discriminator(&mut disc, &human, &fake, 0.2).unwrap();
        }
    }

    let config = TrainConfig {
        epochs: 3,
        batch_size: 8,
        gen_lr: 0.01,
        disc_lr: 0.05,
        coop_decoder: CoopDecoder::DasLocal,
        log_every: 1,
        seed: 5,
        ..TrainConfig::default()
    };
    let trace = train_selfgan(&mut gen, &mut disc, &train, &config).unwrap();
    assert_eq!(trace.len(), 18, "log_every 1 must record every step");

    let passes = trace
        .records()
        .iter()
        .filter(|r| r.mean_d_coop + 1e-9 >= r.mean_d_gen)
        .count();
    assert!(
        passes as f64 >= 0.9 * trace.len() as f64,
        "cooperative decoding beat beam on only {passes} of {} steps",
        trace.len()
    );
    for r in trace.records() {
        assert!(r.disc_grad_norm.is_finite() && r.disc_grad_norm >= 0.0);
        assert!((0.0..=1.0).contains(&r.mean_d_coop));
        assert!((0.0..=1.0).contains(&r.mean_d_gen));
    }

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.csv");
    trace.save_csv(&path).unwrap();
    let back = TrainingTrace::load_csv(&path).unwrap();
    assert_eq!(back, trace, "trace must survive a file round trip cell for cell");
}

#[test]
fn search_guided_loop_runs_and_logs_search_decoded_batches() {
    let (train, arch) = reverse_task(6, 102);
    let mut gen = GeneratorModel::new(arch.clone(), &mut RandomSource::new(7)).unwrap();
    let mut disc = DiscriminatorModel::new(arch, &mut RandomSource::new(8)).unwrap();
    let mut config = TrainConfig {
        epochs: 1,
        batch_size: 3,
        disc_lr: 0.0,
        coop_decoder: CoopDecoder::CoopMcts,
        log_every: 1,
        seed: 9,
        ..TrainConfig::default()
    };
    config.mcts.num_simulations = 8;
    let trace = train_selfgan(&mut gen, &mut disc, &train, &config).unwrap();
    assert_eq!(trace.len(), 2);
    for r in trace.records() {
        assert!(r.gen_loss.is_finite());
        // The untrained discriminator's zero head scores everything 0.5.
        assert!((r.mean_d_coop - 0.5).abs() < 1e-12);
        assert!((r.mean_d_gen - 0.5).abs() < 1e-12);
    }
}
