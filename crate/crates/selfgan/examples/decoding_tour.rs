//! Decodes the same conditions with every generator-only decoder, showing
//! how greedy, sampling, and beam search trade off log-probability and
//! variety on a partially trained model.

use selfgan::core::RandomSource;
use selfgan::decoding::{decode_beam, decode_greedy, decode_sampling, DecodeConfig};
use selfgan::models::{GeneratorModel, ModelArch};
use selfgan::tasks::{generate_task, TaskKind, TaskSpec};
use selfgan::training::{train_mle, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = TaskSpec {
        alphabet_size: 6,
        condition_length_range: (3, 6),
        num_train: 60,
        num_val: 4,
        num_test: 4,
        noise_rate: 0.0,
        ..TaskSpec::new(TaskKind::Reverse)
    };
    let vocab = spec.vocabulary()?;
    let (train, _, test) = generate_task(&spec, &mut RandomSource::new(11))?;

    let mut gen = GeneratorModel::new(ModelArch::for_vocab(&vocab), &mut RandomSource::new(2))?;
    let pretrain = TrainConfig {
        epochs: 150,
        gen_lr: 0.1,
        seed: 4,
        ..TrainConfig::default()
    };
    train_mle(&mut gen, &train, &pretrain)?;

    let config = DecodeConfig { beam_size: 4, temperature: 0.8, ..DecodeConfig::default() };
    for (i, pair) in test.iter().enumerate() {
        println!(
            "condition {}  (reference {})",
            vocab.decode(pair.condition.token_ids()),
            vocab.decode(pair.reference.token_ids())
        );
        let greedy = decode_greedy(&pair.condition, &gen, &config)?;
        let beam = decode_beam(&pair.condition, &gen, &config)?;
        println!(
            "  greedy    {}  logp {:.3}",
            vocab.decode(greedy.sequence.token_ids()),
            greedy.gen_log_prob
        );
        println!(
            "  beam(4)   {}  logp {:.3}",
            vocab.decode(beam.sequence.token_ids()),
            beam.gen_log_prob
        );
        for draw in 0..3 {
            let mut rng = RandomSource::new(100 + i as u64).derive(draw);
            let sampled = decode_sampling(&pair.condition, &gen, &config, &mut rng)?;
            println!(
                "  sample #{draw} {}  logp {:.3}",
                vocab.decode(sampled.sequence.token_ids()),
                sampled.gen_log_prob
            );
        }
    }
    Ok(())
}
