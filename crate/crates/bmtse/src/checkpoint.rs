//! Checkpoint file format: magic bytes `BMTSE1\0`, a length-prefixed
//! JSON header (configs, epoch, best validation SI-SDRi, RNG state, and
//! the parameter table), then the raw little-endian f64 payload.
//! Values saved from an f32 model round-trip bit-exactly.

use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig};
use crate::tensor::{Scalar, Tensor};
use crate::train::TrainConfig;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

pub const MAGIC: &[u8; 7] = b"BMTSE1\0";
const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub word_pos: u128,
}

#[derive(Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
    len: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    model_config: ModelConfig,
    train_config: TrainConfig,
    epoch: usize,
    val_si_sdri: f64,
    rng: RngState,
    params: Vec<ParamEntry>,
}

/// In-memory checkpoint: parameter snapshot plus metadata.
pub struct Checkpoint {
    pub model_config: ModelConfig,
    pub train_config: TrainConfig,
    pub epoch: usize,
    pub val_si_sdri: f64,
    pub rng: RngState,
    pub params: Vec<(String, Tensor<f64>)>,
}

impl Checkpoint {
    pub fn from_model<T: Scalar>(
        model: &Model<T>,
        train_config: &TrainConfig,
        epoch: usize,
        val_si_sdri: f64,
        rng: RngState,
    ) -> Self {
        Checkpoint {
            model_config: model.cfg.clone(),
            train_config: train_config.clone(),
            epoch,
            val_si_sdri,
            rng,
            params: model
                .params
                .iter()
                .map(|(n, t)| (n.to_string(), t.to_f64()))
                .collect(),
        }
    }

    /// Rebuild a model in precision `T`. Parameter names and shapes
    /// must match the architecture the config describes.
    pub fn to_model<T: Scalar>(&self) -> Result<Model<T>> {
        let mut model = Model::<T>::init(&self.model_config, self.train_config.seed)?;
        if model.params.count() != self.params.len() {
            return Err(Error::format(format!(
                "checkpoint has {} parameters, architecture expects {}",
                self.params.len(),
                model.params.count()
            )));
        }
        for (name, tensor) in &self.params {
            let id = model.params.find(name).ok_or_else(|| {
                Error::format(format!("checkpoint parameter {name} not in architecture"))
            })?;
            if model.params.get(id).shape() != tensor.shape() {
                return Err(Error::format(format!(
                    "parameter {name}: shape {:?} vs expected {:?}",
                    tensor.shape(),
                    model.params.get(id).shape()
                )));
            }
            *model.params.get_mut(id) = Tensor::<T>::from_f64(tensor);
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut payload: Vec<f64> = Vec::new();
        let mut entries = Vec::new();
        for (name, tensor) in &self.params {
            entries.push(ParamEntry {
                name: name.clone(),
                shape: tensor.shape().to_vec(),
                offset: payload.len(),
                len: tensor.len(),
            });
            payload.extend_from_slice(tensor.data());
        }
        let header = Header {
            format_version: FORMAT_VERSION,
            model_config: self.model_config.clone(),
            train_config: self.train_config.clone(),
            epoch: self.epoch,
            val_si_sdri: self.val_si_sdri,
            rng: self.rng.clone(),
            params: entries,
        };
        let header_json = serde_json::to_vec(&header)?;

        let mut file = std::fs::File::create(path)?;
        file.write_all(MAGIC)?;
        file.write_all(&(header_json.len() as u64).to_le_bytes())?;
        file.write_all(&header_json)?;
        for v in &payload {
            file.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        if bytes.len() < MAGIC.len() + 8 || &bytes[..MAGIC.len()] != MAGIC {
            return Err(Error::format("not a checkpoint file (bad magic)".to_string()));
        }
        let header_len =
            u64::from_le_bytes(bytes[7..15].try_into().unwrap()) as usize;
        let header_end = 15usize
            .checked_add(header_len)
            .filter(|&end| end <= bytes.len())
            .ok_or_else(|| Error::format("truncated checkpoint header".to_string()))?;
        let header: Header = serde_json::from_slice(&bytes[15..header_end])?;
        if header.format_version != FORMAT_VERSION {
            return Err(Error::format(format!(
                "unsupported checkpoint version {}",
                header.format_version
            )));
        }
        let payload = &bytes[header_end..];
        let total: usize = header.params.iter().map(|p| p.len).sum();
        if payload.len() != total * 8 {
            return Err(Error::format(format!(
                "payload is {} bytes, header expects {}",
                payload.len(),
                total * 8
            )));
        }
        let values: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let mut params = Vec::with_capacity(header.params.len());
        for e in &header.params {
            let expect: usize = e.shape.iter().product();
            if expect != e.len {
                return Err(Error::format(format!("parameter {} shape/len mismatch", e.name)));
            }
            params.push((
                e.name.clone(),
                Tensor::from_vec(&e.shape, values[e.offset..e.offset + e.len].to_vec()),
            ));
        }
        Ok(Checkpoint {
            model_config: header.model_config,
            train_config: header.train_config,
            epoch: header.epoch,
            val_si_sdri: header.val_si_sdri,
            rng: header.rng,
            params,
        })
    }
}
