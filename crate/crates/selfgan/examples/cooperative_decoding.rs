//! Shows the discriminator steering decoding: after a mediocre pretrain
//! and a discriminator warmup, the cooperative decoders produce outputs the
//! discriminator scores higher than plain beam search outputs.

use selfgan::core::{Condition, RandomSource, Sequence};
use selfgan::decoding::{decode_beam, decode_das_global, decode_das_local, DecodeConfig};
use selfgan::models::{
    train_discriminator, DiscriminatorModel, GeneratorModel, ModelArch,
};
use selfgan::tasks::{generate_task, TaskKind, TaskSpec};
use selfgan::training::{train_mle, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = TaskSpec {
        alphabet_size: 6,
        condition_length_range: (3, 6),
        num_train: 48,
        num_val: 4,
        num_test: 12,
        noise_rate: 0.0,
        ..TaskSpec::new(TaskKind::Reverse)
    };
    let vocab = spec.vocabulary()?;
    let (train, _, test) = generate_task(&spec, &mut RandomSource::new(21))?;
    let arch = ModelArch::for_vocab(&vocab);

    let mut gen = GeneratorModel::new(arch.clone(), &mut RandomSource::new(1))?;
    let pretrain = TrainConfig { epochs: 120, gen_lr: 0.05, seed: 2, ..TrainConfig::default() };
    train_mle(&mut gen, &train, &pretrain)?;

    // Warm the discriminator on references versus the generator's own beam
    // outputs so it has a real preference to express.
    let decode = DecodeConfig::default();
    let mut disc = DiscriminatorModel::new(arch, &mut RandomSource::new(3))?;
    let machine: Vec<Sequence> = train
        .iter()
        .map(|p| decode_beam(&p.condition, &gen, &decode).map(|d| d.sequence))
        .collect::<Result<_, _>>()?;
    let mut rng = RandomSource::new(4);
    for _ in 0..250 {
        let mut order: Vec<usize> = (0..train.len()).collect();
        rng.shuffle(&mut order);
        for chunk in order.chunks(16) {
            let human: Vec<(&Condition, &Sequence)> =
                chunk.iter().map(|&i| (&train[i].condition, &train[i].reference)).collect();
            let fake: Vec<(&Condition, &Sequence)> =
                chunk.iter().map(|&i| (&train[i].condition, &machine[i])).collect();
            train_discriminator(&mut disc, &human, &fake, 0.2)?;
        }
    }

    let mut totals = [0.0f64; 3];
    for (i, pair) in test.iter().enumerate() {
        let mut sample_rng = RandomSource::new(77).derive(i as u64);
        let beam = decode_beam(&pair.condition, &gen, &decode)?;
        let local = decode_das_local(&pair.condition, &gen, &disc, &decode)?;
        let global = decode_das_global(&pair.condition, &gen, &disc, &decode, &mut sample_rng)?;
        let scores = [
            disc.score_sequence(&pair.condition, &beam.sequence),
            local.disc_score.expect("das_local scores its pick"),
            global.disc_score.expect("das_global scores its pick"),
        ];
        for (t, s) in totals.iter_mut().zip(scores) {
            *t += s;
        }
        println!(
            "{:10}  beam {:.3} -> das_local {:.3} / das_global {:.3}",
            vocab.decode(pair.condition.token_ids()),
            scores[0],
            scores[1],
            scores[2]
        );
    }
    let n = test.len() as f64;
    println!(
        "mean discriminator score: beam {:.3}, das_local {:.3}, das_global {:.3}",
        totals[0] / n,
        totals[1] / n,
        totals[2] / n
    );
    Ok(())
}
