//! The training-dynamics lens: gradient collinearity says whether
//! imitating the model's own outputs pulls parameters the same way as
//! imitating the references. Echoed references give exactly 1; decoded
//! outputs land below it, tracking how far the model's outputs sit from
//! what the references would teach it.

use selfgan::core::{Condition, RandomSource, Sequence};
use selfgan::decoding::{decode_beam, DecodeConfig};
use selfgan::evaluation::moving_average;
use selfgan::models::{GeneratorModel, ModelArch};
use selfgan::tasks::{generate_task, TaskKind, TaskSpec};
use selfgan::training::{gradient_collinearity, train_mle, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = TaskSpec {
        alphabet_size: 5,
        condition_length_range: (3, 5),
        num_train: 24,
        num_val: 2,
        num_test: 2,
        noise_rate: 0.0,
        ..TaskSpec::new(TaskKind::Copy)
    };
    let vocab = spec.vocabulary()?;
    let (train, _, _) = generate_task(&spec, &mut RandomSource::new(61))?;
    let mut gen = GeneratorModel::new(ModelArch::for_vocab(&vocab), &mut RandomSource::new(1))?;
    let decode = DecodeConfig::default();

    let identical: Vec<(&Condition, &Sequence, &Sequence)> =
        train.iter().map(|p| (&p.condition, &p.reference, &p.reference)).collect();
    println!(
        "collinearity of references with themselves: {:.6}",
        gradient_collinearity(&gen, &identical)?
    );

    let mut curve = Vec::new();
    for round in 0..12 {
        let config = TrainConfig {
            epochs: 40,
            gen_lr: 0.05,
            seed: 100 + round,
            ..TrainConfig::default()
        };
        train_mle(&mut gen, &train, &config)?;
        let outputs: Vec<Sequence> = train
            .iter()
            .map(|p| decode_beam(&p.condition, &gen, &decode).map(|d| d.sequence))
            .collect::<Result<_, _>>()?;
        let batch: Vec<(&Condition, &Sequence, &Sequence)> = train
            .iter()
            .zip(&outputs)
            .map(|(p, o)| (&p.condition, o, &p.reference))
            .collect();
        curve.push(gradient_collinearity(&gen, &batch)?);
    }
    let smoothed = moving_average(&curve, 3);
    println!("round  collinearity(beam output, reference)  smoothed");
    for (i, (raw, ma)) in curve.iter().zip(&smoothed).enumerate() {
        println!("{:5}  {:36.4}  {:8.4}", i, raw, ma);
    }
    Ok(())
}
