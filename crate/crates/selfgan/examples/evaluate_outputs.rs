//! Scores candidate outputs against references with the n-gram metrics,
//! the task validity check, and the humanlike statistics, then prints the
//! metric table for two contrasting "models": one echoing the references
//! and one producing degenerate repetition.

use selfgan::core::{Condition, RandomSource, Sequence};
use selfgan::evaluation::{bleu4, evaluate_outputs, report_table, rouge, RougeVariant};
use selfgan::tasks::{generate_task, TaskKind, TaskSpec};
use std::collections::BTreeMap;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = TaskSpec {
        alphabet_size: 6,
        condition_length_range: (4, 7),
        num_train: 4,
        num_val: 4,
        num_test: 30,
        noise_rate: 0.0,
        ..TaskSpec::new(TaskKind::Sort)
    };
    let vocab = spec.vocabulary()?;
    let (_, _, test) = generate_task(&spec, &mut RandomSource::new(51))?;

    let hyp = Sequence::terminated_from_content(&vocab.encode("abcde")?, &vocab, 32)?;
    let reference = Sequence::terminated_from_content(&vocab.encode("abcdf")?, &vocab, 32)?;
    println!("bleu4(abcde, abcdf) = {:.5}", bleu4(&hyp, std::slice::from_ref(&reference)));
    let r = rouge(&hyp, &reference, RougeVariant::RougeL);
    println!("rouge_l(abcde, abcdf): precision {:.3} recall {:.3} f1 {:.3}", r.precision, r.recall, r.f1);

    // An echo model reproduces every reference; a degenerate model repeats
    // one letter for the same number of tokens.
    let echo: Vec<(Condition, Sequence)> =
        test.iter().map(|p| (p.condition.clone(), p.reference.clone())).collect();
    let degenerate: Vec<(Condition, Sequence)> = test
        .iter()
        .map(|p| {
            let content = vec![3; p.reference.len().saturating_sub(1).max(1)];
            Ok((
                p.condition.clone(),
                Sequence::terminated_from_content(&content, &vocab, 32)?,
            ))
        })
        .collect::<Result<_, selfgan::core::CoreError>>()?;

    let mut rows = BTreeMap::new();
    rows.insert("echo".to_string(), evaluate_outputs(&spec, &echo, &test)?);
    rows.insert("degenerate".to_string(), evaluate_outputs(&spec, &degenerate, &test)?);
    print!("{}", report_table(&rows));
    Ok(())
}
