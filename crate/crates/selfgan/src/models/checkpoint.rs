//! Versioned JSON checkpoints: architecture metadata plus the flat parameter
//! vector. Loading validates dimensional consistency before building a model.

use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DiscriminatorModel, GeneratorModel, ModelArch, ModelError, ParameterVector};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format_version: u32,
    kind: String,
    arch: ModelArch,
    values: Vec<f64>,
}

fn save(path: &Path, kind: &str, arch: &ModelArch, values: &[f64]) -> Result<(), ModelError> {
    let file = CheckpointFile {
        format_version: CHECKPOINT_VERSION,
        kind: kind.to_string(),
        arch: arch.clone(),
        values: values.to_vec(),
    };
    let out = std::fs::File::create(path)?;
    serde_json::to_writer(BufWriter::new(out), &file)
        .map_err(|e| ModelError::InvalidCheckpoint { msg: e.to_string() })?;
    Ok(())
}

fn load(path: &Path, kind: &str, expected_params: impl Fn(&ModelArch) -> usize)
    -> Result<(ModelArch, ParameterVector), ModelError>
{
    let file = std::fs::File::open(path)?;
    let ckpt: CheckpointFile = serde_json::from_reader(BufReader::new(file))
        .map_err(|e| ModelError::InvalidCheckpoint { msg: e.to_string() })?;
    if ckpt.format_version != CHECKPOINT_VERSION {
        return Err(ModelError::InvalidCheckpoint {
            msg: format!("format_version {} unsupported", ckpt.format_version),
        });
    }
    if ckpt.kind != kind {
        return Err(ModelError::InvalidCheckpoint {
            msg: format!("kind {:?}, expected {kind:?}", ckpt.kind),
        });
    }
    ckpt.arch.validate()?;
    let expected = expected_params(&ckpt.arch);
    if ckpt.values.len() != expected {
        return Err(ModelError::InvalidCheckpoint {
            msg: format!("{} parameters, architecture needs {expected}", ckpt.values.len()),
        });
    }
    if ckpt.values.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::InvalidCheckpoint { msg: "non-finite parameter".into() });
    }
    let mut params = ParameterVector::zeros(expected);
    params.values_mut().copy_from_slice(&ckpt.values);
    Ok((ckpt.arch, params))
}

pub fn save_generator(gen: &GeneratorModel, path: &Path) -> Result<(), ModelError> {
    save(path, "generator", gen.arch(), gen.params().values())
}

pub fn load_generator(path: &Path) -> Result<GeneratorModel, ModelError> {
    let (arch, params) = load(path, "generator", ModelArch::generator_param_count)?;
    Ok(GeneratorModel::from_parts(arch, params))
}

pub fn save_discriminator(disc: &DiscriminatorModel, path: &Path) -> Result<(), ModelError> {
    save(path, "discriminator", disc.arch(), disc.params().values())
}

pub fn load_discriminator(path: &Path) -> Result<DiscriminatorModel, ModelError> {
    let (arch, params) = load(path, "discriminator", ModelArch::discriminator_param_count)?;
    Ok(DiscriminatorModel::from_parts(arch, params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::{RandomSource, Vocabulary};

    fn tmpdir() -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("selfgan_ckpt_test");
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn generator_round_trip_preserves_values() {
        let vocab = Vocabulary::ascii_alphabet(4).unwrap();
        let mut arch = ModelArch::for_vocab(&vocab);
        arch.embed_dim = 4;
        arch.hidden_dim = 6;
        let mut rng = RandomSource::new(5);
        let gen = GeneratorModel::new(arch, &mut rng).unwrap();
        let path = tmpdir().join("gen.json");
        save_generator(&gen, &path).unwrap();
        let loaded = load_generator(&path).unwrap();
        assert_eq!(loaded.arch(), gen.arch());
        assert_eq!(loaded.params().values(), gen.params().values());
        assert!(!loaded.params().grads_are_fresh());
    }

    #[test]
    fn kind_mismatch_is_rejected() {
        let vocab = Vocabulary::ascii_alphabet(4).unwrap();
        let mut rng = RandomSource::new(5);
        let disc = DiscriminatorModel::new(ModelArch::for_vocab(&vocab), &mut rng).unwrap();
        let path = tmpdir().join("disc.json");
        save_discriminator(&disc, &path).unwrap();
        assert!(matches!(
            load_generator(&path),
            Err(ModelError::InvalidCheckpoint { .. })
        ));
    }

    #[test]
    fn truncated_parameter_vector_is_rejected() {
        let vocab = Vocabulary::ascii_alphabet(4).unwrap();
        let mut rng = RandomSource::new(5);
        let gen = GeneratorModel::new(ModelArch::for_vocab(&vocab), &mut rng).unwrap();
        let path = tmpdir().join("gen_trunc.json");
        save_generator(&gen, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut ckpt: serde_json::Value = serde_json::from_str(&text).unwrap();
        let vals = ckpt["values"].as_array_mut().unwrap();
        vals.pop();
        std::fs::write(&path, serde_json::to_string(&ckpt).unwrap()).unwrap();
        assert!(matches!(
            load_generator(&path),
            Err(ModelError::InvalidCheckpoint { .. })
        ));
    }
}
