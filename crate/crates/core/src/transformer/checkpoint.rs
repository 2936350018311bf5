//! Self-describing JSON checkpoints.
//!
//! ```json
//! {"format": "nasprune-checkpoint", "version": 1, "dims": {...},
//!  "tensors": [{"name": "tok_emb", "shape": [32, 32], "data": [...]}, ...]}
//! ```
//!
//! Tensors appear in canonical order with row-major data. `f64` values are
//! written with round-trip precision, so save/load is lossless.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelDims, SuperNetwork, Weights};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "nasprune-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct TensorRecord {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    dims: ModelDims,
    tensors: Vec<TensorRecord>,
}

pub fn save_checkpoint(net: &SuperNetwork, path: &Path) -> Result<()> {
    net.check_shapes()?;
    let tensors = Weights::named_shapes(&net.dims)
        .into_iter()
        .zip(net.weights.tensors())
        .map(|((name, shape), data)| TensorRecord {
            name,
            shape,
            data: data.clone(),
        })
        .collect();
    let file = CheckpointFile {
        format: CHECKPOINT_FORMAT.to_string(),
        version: CHECKPOINT_VERSION,
        dims: net.dims,
        tensors,
    };
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, serde_json::to_vec(&file)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<SuperNetwork> {
    let bytes = fs::read(path)?;
    let file: CheckpointFile = serde_json::from_slice(&bytes)?;
    if file.format != CHECKPOINT_FORMAT {
        return Err(Error::Checkpoint(format!("unknown format tag `{}`", file.format)));
    }
    if file.version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {}", file.version)));
    }
    file.dims.validate()?;
    let expected = Weights::named_shapes(&file.dims);
    if expected.len() != file.tensors.len() {
        return Err(Error::Checkpoint(format!(
            "expected {} tensors, found {}",
            expected.len(),
            file.tensors.len()
        )));
    }
    let mut weights = Weights::zeros(&file.dims);
    for (((name, shape), slot), rec) in expected.into_iter().zip(weights.tensors_mut()).zip(file.tensors) {
        if rec.name != name {
            return Err(Error::Checkpoint(format!("expected tensor `{name}`, found `{}`", rec.name)));
        }
        if rec.shape != shape || rec.data.len() != slot.len() {
            return Err(Error::shape(name, format!("{shape:?}"), format!("{:?} ({} values)", rec.shape, rec.data.len())));
        }
        *slot = rec.data;
    }
    Ok(SuperNetwork {
        dims: file.dims,
        weights,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        let net = SuperNetwork::random(ModelDims::toy(), &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        save_checkpoint(&net, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(net, back);
    }

    #[test]
    fn wrong_version_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        let net = SuperNetwork::random(ModelDims::toy(), &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        save_checkpoint(&net, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap().replacen("\"version\":1", "\"version\":7", 1);
        std::fs::write(&path, text).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Checkpoint(_))));
    }
}
