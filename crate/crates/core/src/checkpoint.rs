//! Model checkpointing.
//!
//! One file holds a JSON manifest (dimensions, seed, iteration, metric,
//! split fraction, layer shapes) followed by every weight matrix as
//! shape-prefixed little-endian `f64`, keyed by its stable parameter path
//! (e.g. `generator/T2/cluster0/layer1/W`). Round-trips are bit-exact.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{validation, Error, Result};
use crate::gcn::ModelSet;
use crate::tensor::{ParamStore, Tensor};

const MAGIC: &[u8; 8] = b"CGENCKP1";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerShape {
    pub key: String,
    pub rows: usize,
    pub cols: usize,
}

/// Everything needed to rebuild and evaluate a model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub r: usize,
    pub f: usize,
    pub m: usize,
    pub c: usize,
    pub seed: u64,
    pub iteration: u64,
    pub metric: String,
    pub train_fraction: f64,
    pub config_digest: String,
    pub layers: Vec<LayerShape>,
}

/// A manifest plus the serialized weights, in parameter-store order.
pub struct Checkpoint {
    pub manifest: Manifest,
    pub weights: Vec<(String, Tensor)>,
}

impl Checkpoint {
    /// Snapshots a parameter store under the given manifest header.
    pub fn from_store(mut manifest: Manifest, store: &ParamStore) -> Checkpoint {
        let weights: Vec<(String, Tensor)> = store
            .ids()
            .map(|id| (store.name(id).to_string(), store.get(id).clone()))
            .collect();
        manifest.layers = weights
            .iter()
            .map(|(key, t)| LayerShape {
                key: key.clone(),
                rows: t.rows(),
                cols: t.cols(),
            })
            .collect();
        Checkpoint { manifest, weights }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        out.write_all(MAGIC)?;
        let manifest = serde_json::to_vec(&self.manifest)
            .map_err(|e| Error::Validation(format!("manifest serialization failed: {e}")))?;
        out.write_all(&(manifest.len() as u64).to_le_bytes())?;
        out.write_all(&manifest)?;
        out.write_all(&(self.weights.len() as u64).to_le_bytes())?;
        for (key, tensor) in &self.weights {
            let key_bytes = key.as_bytes();
            out.write_all(&(key_bytes.len() as u64).to_le_bytes())?;
            out.write_all(key_bytes)?;
            out.write_all(&(tensor.rows() as u64).to_le_bytes())?;
            out.write_all(&(tensor.cols() as u64).to_le_bytes())?;
            for &v in tensor.data() {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 8];
        file.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(validation("not a checkpoint file (bad magic)"));
        }
        let manifest_len = read_u64(&mut file)? as usize;
        let mut manifest_bytes = vec![0u8; manifest_len];
        file.read_exact(&mut manifest_bytes)?;
        let manifest: Manifest = serde_json::from_slice(&manifest_bytes)
            .map_err(|e| Error::Validation(format!("manifest parse failed: {e}")))?;
        let count = read_u64(&mut file)? as usize;
        let mut weights = Vec::with_capacity(count);
        for _ in 0..count {
            let key_len = read_u64(&mut file)? as usize;
            let mut key_bytes = vec![0u8; key_len];
            file.read_exact(&mut key_bytes)?;
            let key = String::from_utf8(key_bytes)
                .map_err(|_| validation("checkpoint key is not UTF-8"))?;
            let rows = read_u64(&mut file)? as usize;
            let cols = read_u64(&mut file)? as usize;
            let mut data = vec![0.0; rows * cols];
            let mut buf = [0u8; 8];
            for v in &mut data {
                file.read_exact(&mut buf)?;
                *v = f64::from_le_bytes(buf);
            }
            weights.push((key, Tensor::from_vec(rows, cols, data)?));
        }
        Ok(Checkpoint { manifest, weights })
    }

    /// Rebuilds the model family, overwriting its parameters by key.
    pub fn restore_model(&self) -> Result<(ParamStore, ModelSet)> {
        let mut store = ParamStore::new();
        let model = ModelSet::new(
            &mut store,
            self.manifest.f,
            self.manifest.m,
            self.manifest.c,
            self.manifest.seed,
        )?;
        for (key, tensor) in &self.weights {
            let id = store
                .id_by_name(key)
                .ok_or_else(|| validation(format!("checkpoint key '{key}' has no parameter")))?;
            if store.get(id).shape() != tensor.shape() {
                return Err(validation(format!(
                    "checkpoint key '{key}' has shape {:?}, model expects {:?}",
                    tensor.shape(),
                    store.get(id).shape()
                )));
            }
            store
                .get_mut(id)
                .data_mut()
                .copy_from_slice(tensor.data());
        }
        if self.weights.len() != store.len() {
            return Err(validation(format!(
                "checkpoint holds {} weight matrices, model has {} parameters",
                self.weights.len(),
                store.len()
            )));
        }
        Ok((store, model))
    }
}

fn read_u64(reader: &mut impl Read) -> Result<u64> {
    let mut buf = [0u8; 8];
    reader.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

/// FNV-1a digest of a resolved-config string, for report provenance.
pub fn config_digest(text: &str) -> String {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in text.bytes() {
        hash ^= u64::from(byte);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{hash:016x}")
}
