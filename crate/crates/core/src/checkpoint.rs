//! Checkpoint file format: a versioned JSON document holding every parameter
//! (name, shape, row-major values), the optimizer state, the vocabulary, and
//! the architecture knobs needed to rebuild the model.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::{AdamState, ParamStore, Scalar, Tensor};
use crate::data::Vocab;
use crate::error::{Error, Result};
use crate::model::ModelConfig;

pub const CHECKPOINT_VERSION: u32 = 1;

#[cfg(not(feature = "f32"))]
const PRECISION: &str = "f64";
#[cfg(feature = "f32")]
const PRECISION: &str = "f32";

#[derive(Serialize, Deserialize)]
struct TensorData {
    shape: [usize; 2],
    data: Vec<Scalar>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    version: u32,
    precision: String,
    d: usize,
    no_inter_att: bool,
    vocab: Vec<String>,
    params: BTreeMap<String, TensorData>,
    adam: AdamState,
}

pub fn save(path: &Path, params: &ParamStore, cfg: &ModelConfig, vocab: &Vocab) -> Result<()> {
    let tensors = params
        .iter()
        .map(|(name, t)| {
            (
                name.to_string(),
                TensorData {
                    shape: [t.rows(), t.cols()],
                    data: t.data().to_vec(),
                },
            )
        })
        .collect();
    let file = CheckpointFile {
        version: CHECKPOINT_VERSION,
        precision: PRECISION.to_string(),
        d: cfg.d,
        no_inter_att: cfg.no_inter_att,
        vocab: vocab.tokens().to_vec(),
        params: tensors,
        adam: params.adam.clone(),
    };
    fs::write(path, serde_json::to_string(&file)?)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<(ParamStore, ModelConfig, Vocab)> {
    let file: CheckpointFile = serde_json::from_str(&fs::read_to_string(path)?)?;
    if file.version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {} (this build reads {CHECKPOINT_VERSION})",
            file.version
        )));
    }
    if file.precision != PRECISION {
        return Err(Error::Checkpoint(format!(
            "checkpoint precision {} does not match this build ({PRECISION})",
            file.precision
        )));
    }
    let mut store = ParamStore::new(file.adam);
    for (name, t) in file.params {
        let tensor = Tensor::new(t.shape[0], t.shape[1], t.data)
            .map_err(|e| Error::Checkpoint(format!("parameter `{name}`: {e}")))?;
        store.insert(&name, tensor);
    }
    let cfg = ModelConfig {
        d: file.d,
        no_inter_att: file.no_inter_att,
    };
    Ok((store, cfg, Vocab::from_id_list(file.vocab)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_vocab, synth_corpus, SynthConfig};
    use crate::model::init_params;

    #[test]
    fn save_load_round_trip() {
        let corpus = synth_corpus(&SynthConfig {
            seed: 2,
            n_instances: 2,
            n_rows: 2,
            n_types: 2,
        })
        .unwrap();
        let vocab = build_vocab(&corpus, 1);
        let cfg = ModelConfig {
            d: 3,
            no_inter_att: false,
        };
        let params = init_params(&cfg, vocab.len(), 4, AdamState::new(0.001, 0.97));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save(&path, &params, &cfg, &vocab).unwrap();
        let (loaded, loaded_cfg, loaded_vocab) = load(&path).unwrap();
        assert_eq!(loaded_cfg, cfg);
        assert_eq!(loaded_vocab.tokens(), vocab.tokens());
        for (name, t) in params.iter() {
            assert_eq!(t, loaded.get(name), "{name}");
        }
        assert_eq!(loaded.adam.lr, params.adam.lr);
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ckpt");
        let text = r#"{"version":999,"precision":"f64","d":2,"no_inter_att":false,"vocab":[],"params":{},"adam":{"m":{},"v":{},"t":0,"beta1":0.9,"beta2":0.999,"eps":1e-8,"lr":0.001,"lr_decay":0.97}}"#;
        fs::write(&path, text).unwrap();
        assert!(matches!(load(&path), Err(Error::Checkpoint(_))));
    }
}
