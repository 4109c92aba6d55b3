//! Walks through a cooperative tree search step by step: for each
//! committed token, the trace shows how many simulations explored which
//! continuations and what the discriminator thought of the leaves.

use selfgan::core::{Condition, RandomSource, Sequence};
use selfgan::decoding::{decode_beam, DecodeConfig};
use selfgan::mcts::{decode_coop_mcts_traced, MctsConfig};
use selfgan::models::{
    train_discriminator, DiscriminatorModel, GeneratorModel, ModelArch,
};
use selfgan::tasks::{generate_task, TaskKind, TaskSpec};
use selfgan::training::{train_mle, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = TaskSpec {
        alphabet_size: 6,
        condition_length_range: (4, 6),
        num_train: 48,
        num_val: 4,
        num_test: 3,
        noise_rate: 0.0,
        ..TaskSpec::new(TaskKind::Reverse)
    };
    let vocab = spec.vocabulary()?;
    let (train, _, test) = generate_task(&spec, &mut RandomSource::new(31))?;
    let arch = ModelArch::for_vocab(&vocab);

    let mut gen = GeneratorModel::new(arch.clone(), &mut RandomSource::new(1))?;
    train_mle(
        &mut gen,
        &train,
        &TrainConfig { epochs: 120, gen_lr: 0.05, seed: 2, ..TrainConfig::default() },
    )?;
    let mut disc = DiscriminatorModel::new(arch, &mut RandomSource::new(3))?;
    let decode = DecodeConfig::default();
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

    let config = MctsConfig { num_simulations: 30, ..MctsConfig::default() };
    for pair in &test {
        println!("condition {}", vocab.decode(pair.condition.token_ids()));
        let beam = decode_beam(&pair.condition, &gen, &decode)?;
        println!(
            "  beam output   {}  D {:.3}",
            vocab.decode(beam.sequence.token_ids()),
            disc.score_sequence(&pair.condition, &beam.sequence)
        );
        let (decoded, steps) =
            decode_coop_mcts_traced(&pair.condition, &gen, &disc, &config, true)?;
        println!(
            "  search output {}  D {:.3}",
            vocab.decode(decoded.sequence.token_ids()),
            decoded.disc_score.expect("search scores its output")
        );
        for step in &steps {
            let mean_leaf: f64 = step.simulations.iter().map(|s| s.leaf_value).sum::<f64>()
                / step.simulations.len() as f64;
            let deepest =
                step.simulations.iter().map(|s| s.path.len()).max().unwrap_or(0);
            println!(
                "    step {}: committed {:4}  {} simulations, mean leaf D {:.3}, deepest path {}",
                step.step,
                vocab.decode(&[step.committed]),
                step.simulations.len(),
                mean_leaf,
                deepest
            );
        }
    }
    Ok(())
}
