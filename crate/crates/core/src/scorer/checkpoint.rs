//! Checkpoint file: `GVCK` magic, u64 LE header length, JSON header, then the
//! flat parameter vector as little-endian f64.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ParamLayout, ScorerConfig, ScorerModel};
use crate::dataio::{config_hash, write_atomic};
use crate::error::{Error, Result};
use crate::types::RngSeed;

const MAGIC: &[u8; 4] = b"GVCK";
const FORMAT: &str = "glancevad-scorer";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorShape {
    pub name: String,
    pub dims: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub version: u32,
    pub scorer: ScorerConfig,
    pub shapes: Vec<TensorShape>,
    pub num_params: usize,
    pub seed: RngSeed,
    /// SHA-256 of the canonical JSON of `config`.
    pub config_hash: String,
    /// Provenance: the configuration the model was trained under.
    pub config: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub model: ScorerModel,
}

impl Checkpoint {
    pub fn new(model: ScorerModel, seed: RngSeed, config: serde_json::Value) -> Self {
        let layout = ParamLayout::new(model.config());
        let header = CheckpointHeader {
            format: FORMAT.into(),
            version: VERSION,
            scorer: *model.config(),
            shapes: layout
                .tensor_shapes()
                .into_iter()
                .map(|(name, dims)| TensorShape { name, dims })
                .collect(),
            num_params: model.num_params(),
            seed,
            config_hash: config_hash(&config),
            config,
        };
        Self { header, model }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.header).expect("header serializes");
        let mut out = Vec::with_capacity(12 + header.len() + 8 * self.model.num_params());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for p in self.model.params() {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |d: &str| Error::format(path, d);
        if bytes.len() < 12 || &bytes[..4] != MAGIC {
            return Err(bad("missing GVCK magic"));
        }
        let header_len = u64::from_le_bytes(bytes[4..12].try_into().unwrap()) as usize;
        let body = bytes
            .get(12..12usize.saturating_add(header_len))
            .ok_or_else(|| bad("truncated header"))?;
        let header: CheckpointHeader =
            serde_json::from_slice(body).map_err(|e| bad(&format!("header: {e}")))?;
        if header.format != FORMAT || header.version != VERSION {
            return Err(bad(&format!(
                "unsupported checkpoint {} v{}",
                header.format, header.version
            )));
        }
        let block = &bytes[12 + header_len..];
        if block.len() != 8 * header.num_params {
            return Err(bad(&format!(
                "parameter block has {} bytes, expected {}",
                block.len(),
                8 * header.num_params
            )));
        }
        let params = block
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let model = ScorerModel::from_params(header.scorer, params)?;
        Ok(Self { header, model })
    }
}

pub fn store_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    write_atomic(path, &checkpoint.to_bytes())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes, path)
}
