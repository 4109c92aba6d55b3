//! Generates each synthetic task, shows what its examples look like, and
//! writes one task's splits to disk in the JSONL dataset format.

use selfgan::core::{save_dataset, RandomSource};
use selfgan::tasks::{generate_task, TaskKind, TaskSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for kind in TaskKind::all() {
        let spec = TaskSpec {
            num_train: 5,
            num_val: 2,
            num_test: 2,
            condition_length_range: (3, 6),
            ..TaskSpec::new(kind)
        };
        let vocab = spec.vocabulary()?;
        let (train, _, _) = generate_task(&spec, &mut RandomSource::new(7))?;
        println!("{kind}:");
        for pair in &train {
            println!(
                "  {} -> {}",
                vocab.decode(pair.condition.token_ids()),
                vocab.decode(pair.reference.token_ids())
            );
        }
    }

    let spec = TaskSpec { num_train: 200, num_val: 40, num_test: 40, ..TaskSpec::default() };
    let vocab = spec.vocabulary()?;
    let (train, val, test) = generate_task(&spec, &mut RandomSource::new(7))?;
    let dir = std::env::temp_dir().join("selfgan_example_dataset");
    std::fs::create_dir_all(&dir)?;
    vocab.save(&dir.join("vocab.txt"))?;
    for (name, pairs) in [("train", &train), ("val", &val), ("test", &test)] {
        let path = dir.join(format!("{name}.jsonl"));
        save_dataset(pairs, &vocab, &path)?;
        println!("wrote {} examples to {}", pairs.len(), path.display());
    }
    Ok(())
}
