//! Runs the cooperative self-training loop after pretraining: each batch
//! is decoded cooperatively, the generator imitates those outputs, and the
//! discriminator learns to tell them from references. The printed trace
//! shows the cooperative outputs staying ahead of plain beam outputs under
//! the discriminator.

use selfgan::core::{Condition, RandomSource, Sequence};
use selfgan::decoding::{decode_beam, DecodeConfig};
use selfgan::models::{
    train_discriminator, DiscriminatorModel, GeneratorModel, ModelArch,
};
use selfgan::tasks::{generate_task, TaskKind, TaskSpec};
use selfgan::training::{train_mle, train_selfgan, CoopDecoder, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = TaskSpec {
        alphabet_size: 6,
        condition_length_range: (3, 6),
        num_train: 48,
        num_val: 4,
        num_test: 4,
        noise_rate: 0.0,
        ..TaskSpec::new(TaskKind::Reverse)
    };
    let vocab = spec.vocabulary()?;
    let (train, _, _) = generate_task(&spec, &mut RandomSource::new(41))?;
    let arch = ModelArch::for_vocab(&vocab);

    let mut gen = GeneratorModel::new(arch.clone(), &mut RandomSource::new(1))?;
    let pretrain = TrainConfig { epochs: 150, gen_lr: 0.05, seed: 2, ..TrainConfig::default() };
    train_mle(&mut gen, &train, &pretrain)?;

    // A freshly initialized discriminator scores everything at exactly 0.5,
    // so warm it up against the pretrained generator's beam outputs first.
    // Otherwise the trace would show both columns pinned at 0.5.
    let mut disc = DiscriminatorModel::new(arch, &mut RandomSource::new(3))?;
    let beam_config = DecodeConfig::default();
    let pairs: Vec<(Condition, Sequence)> = train
        .iter()
        .map(|ex| {
            let out = decode_beam(&ex.condition, &gen, &beam_config)?;
            Ok((ex.condition.clone(), out.sequence))
        })
        .collect::<Result<_, Box<dyn std::error::Error>>>()?;
    let refs: Vec<(&Condition, &Sequence)> =
        train.iter().map(|ex| (&ex.condition, &ex.reference)).collect();
    let fakes: Vec<(&Condition, &Sequence)> =
        pairs.iter().map(|(c, s)| (c, s)).collect();
    let mut warmup_rng = RandomSource::new(7);
    for _ in 0..250 {
        let mut order: Vec<usize> = (0..refs.len()).collect();
        warmup_rng.shuffle(&mut order);
        for chunk in order.chunks(16) {
            let human: Vec<_> = chunk.iter().map(|&i| refs[i]).collect();
            let machine: Vec<_> = chunk.iter().map(|&i| fakes[i]).collect();
            train_discriminator(&mut disc, &human, &machine, 0.2)?;
        }
    }

    let config = TrainConfig {
        epochs: 4,
        batch_size: 16,
        gen_lr: 0.02,
        disc_lr: 0.2,
        coop_decoder: CoopDecoder::DasLocal,
        log_every: 1,
        seed: 5,
        ..TrainConfig::default()
    };
    let trace = train_selfgan(&mut gen, &mut disc, &train, &config)?;
    println!("step  gen_loss  disc_loss  D(coop)  D(beam)  collinearity");
    for r in trace.records() {
        println!(
            "{:4}  {:8.4}  {:9.4}  {:7.3}  {:7.3}  {:12.3}",
            r.step, r.gen_loss, r.disc_loss, r.mean_d_coop, r.mean_d_gen, r.gen_collinearity
        );
    }
    Ok(())
}
