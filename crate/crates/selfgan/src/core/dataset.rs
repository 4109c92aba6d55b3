//! Dataset file I/O: UTF-8 JSON Lines, one `{"condition", "reference"}`
//! object per line. Reference strings carry their explicit `<eos>` marker so
//! the file states termination rather than implying it.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::sequence::DEFAULT_MAX_LENGTH;
use super::{Condition, CoreError, ExamplePair, Sequence, Vocabulary};

#[derive(Serialize, Deserialize)]
struct Record {
    condition: String,
    reference: String,
}

pub fn save_dataset(
    pairs: &[ExamplePair],
    vocab: &Vocabulary,
    path: &Path,
) -> Result<(), CoreError> {
    let mut out = String::new();
    for pair in pairs {
        let rec = Record {
            condition: vocab.decode(pair.condition.token_ids()),
            reference: vocab.decode(pair.reference.token_ids()),
        };
        out.push_str(&serde_json::to_string(&rec).expect("record serialization"));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn load_dataset(
    path: &Path,
    vocab: &Vocabulary,
    max_length: usize,
) -> Result<Vec<ExamplePair>, CoreError> {
    let text = std::fs::read_to_string(path)?;
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(line)
            .map_err(|e| CoreError::ParseError { line: i + 1, msg: e.to_string() })?;
        let record = pairs.len();
        let violation = |msg: String| CoreError::InvariantViolation { record: Some(record), msg };
        let cond_ids = vocab.encode(&rec.condition).map_err(|e| violation(e.to_string()))?;
        let ref_ids = vocab.encode(&rec.reference).map_err(|e| violation(e.to_string()))?;
        let condition = Condition::new(cond_ids, vocab).map_err(|e| violation(e.to_string()))?;
        let reference =
            Sequence::new(ref_ids, vocab, max_length).map_err(|e| violation(e.to_string()))?;
        let pair = ExamplePair::new(condition, reference).map_err(|e| violation(e.to_string()))?;
        pairs.push(pair);
    }
    Ok(pairs)
}

/// `load_dataset` with the default length cap.
pub fn load_dataset_default(path: &Path, vocab: &Vocabulary) -> Result<Vec<ExamplePair>, CoreError> {
    load_dataset(path, vocab, DEFAULT_MAX_LENGTH)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> Vocabulary {
        Vocabulary::ascii_alphabet(4).unwrap()
    }

    fn tmpfile(name: &str, contents: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("selfgan_dataset_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join(name);
        std::fs::write(&path, contents).unwrap();
        path
    }

    #[test]
    fn loads_three_records() {
        let path = tmpfile(
            "ok.jsonl",
            "{\"condition\":\"ab\",\"reference\":\"ba<eos>\"}\n\
             {\"condition\":\"cd\",\"reference\":\"dc<eos>\"}\n\
             {\"condition\":\"a\",\"reference\":\"a<eos>\"}\n",
        );
        let pairs = load_dataset(&path, &vocab(), 32).unwrap();
        assert_eq!(pairs.len(), 3);
        assert_eq!(pairs[0].condition.token_ids(), &[3, 4]);
        assert_eq!(pairs[0].reference.token_ids(), &[4, 3, 1]);
    }

    #[test]
    fn reference_without_eos_is_invariant_violation() {
        let path = tmpfile(
            "noeos.jsonl",
            "{\"condition\":\"ab\",\"reference\":\"ba<eos>\"}\n\
             {\"condition\":\"cd\",\"reference\":\"dc\"}\n",
        );
        match load_dataset(&path, &vocab(), 32) {
            Err(CoreError::InvariantViolation { record: Some(1), .. }) => {}
            other => panic!("expected InvariantViolation at record 1, got {other:?}"),
        }
    }

    #[test]
    fn malformed_json_reports_line_number() {
        let path = tmpfile(
            "bad.jsonl",
            "{\"condition\":\"ab\",\"reference\":\"ba<eos>\"}\nnot json\n",
        );
        match load_dataset(&path, &vocab(), 32) {
            Err(CoreError::ParseError { line: 2, .. }) => {}
            other => panic!("expected ParseError at line 2, got {other:?}"),
        }
    }

    #[test]
    fn empty_file_gives_empty_dataset() {
        let path = tmpfile("empty.jsonl", "");
        assert!(load_dataset(&path, &vocab(), 32).unwrap().is_empty());
    }

    #[test]
    fn save_load_round_trip() {
        let v = vocab();
        let pairs: Vec<ExamplePair> = vec![
            ExamplePair::new(
                Condition::new(vec![3, 4], &v).unwrap(),
                Sequence::new(vec![4, 3, 1], &v, 32).unwrap(),
            )
            .unwrap(),
            ExamplePair::new(
                Condition::new(vec![5], &v).unwrap(),
                Sequence::new(vec![1], &v, 32).unwrap(),
            )
            .unwrap(),
        ];
        let dir = std::env::temp_dir().join("selfgan_dataset_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("roundtrip.jsonl");
        save_dataset(&pairs, &v, &path).unwrap();
        let loaded = load_dataset(&path, &v, 32).unwrap();
        assert_eq!(loaded, pairs);
    }
}
