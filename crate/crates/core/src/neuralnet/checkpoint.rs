//! Model checkpoint: `DTCNN` magic, format version, length-prefixed JSON
//! header with the architecture, then the flat parameter payload as
//! little-endian `f64`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::TextCnnConfig;
use super::model::TextCnnModel;
use crate::embedding::InitKind;
use crate::error::{Error, Result};

const MAGIC: &[u8; 5] = b"DTCNN";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    config: TextCnnConfig,
    vocab_rows: usize,
    init_kind: InitKind,
    seed: u64,
    num_params: usize,
}

impl TextCnnModel {
    pub fn to_checkpoint_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&Header {
            config: self.config.clone(),
            vocab_rows: self.vocab_rows,
            init_kind: self.init_kind,
            seed: self.seed,
            num_params: self.num_params(),
        })
        .expect("header serializes");
        let mut out = Vec::with_capacity(MAGIC.len() + 8 + header.len() + 8 * self.num_params());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for p in self.params() {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn from_checkpoint_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: &str| Error::Checkpoint(msg.to_string());
        let rest = bytes
            .strip_prefix(MAGIC.as_slice())
            .ok_or_else(|| bad("bad magic"))?;
        if rest.len() < 8 {
            return Err(bad("truncated header"));
        }
        let version = u32::from_le_bytes(rest[..4].try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let header_len = u32::from_le_bytes(rest[4..8].try_into().unwrap()) as usize;
        let rest = &rest[8..];
        if rest.len() < header_len {
            return Err(bad("truncated header"));
        }
        let header: Header = serde_json::from_slice(&rest[..header_len])?;
        let payload = &rest[header_len..];
        if payload.len() != header.num_params * 8 {
            return Err(bad("payload length does not match header"));
        }
        let params = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        TextCnnModel::from_parts(
            header.config,
            header.vocab_rows,
            header.init_kind,
            header.seed,
            params,
        )
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_checkpoint_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint_bytes(&bytes)
    }
}
