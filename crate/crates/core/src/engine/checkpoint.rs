//! Run checkpoints.
//!
//! A checkpoint is a one-line header followed by a JSON body:
//!
//! ```text
//! neuroevo-checkpoint <version> <sha256 of body, hex>
//! {"config": ..., "state": ...}
//! ```
//!
//! Random streams are derived from the run seed and the generation index,
//! so the run configuration plus the generation counter fully restore them.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::RunConfig;
use super::driver::RunState;
use crate::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &str = "neuroevo-checkpoint";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub state: RunState,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let body = serde_json::to_vec(self)?;
        let digest = hex::encode(Sha256::digest(&body));
        let mut out = format!("{MAGIC} {CHECKPOINT_VERSION} {digest}\n").into_bytes();
        out.extend_from_slice(&body);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let split = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Format("checkpoint has no header line".into()))?;
        let header = std::str::from_utf8(&bytes[..split])
            .map_err(|_| Error::Format("checkpoint header is not text".into()))?;
        let body = &bytes[split + 1..];
        let mut parts = header.split(' ');
        if parts.next() != Some(MAGIC) {
            return Err(Error::Format("not a checkpoint file".into()));
        }
        let version: u32 = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Format("bad checkpoint version field".into()))?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let digest = parts.next().unwrap_or_default();
        if hex::encode(Sha256::digest(body)) != digest {
            return Err(Error::Checksum);
        }
        Ok(serde_json::from_slice(body)?)
    }

    /// Writes to a temporary sibling and renames it into place.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let tmp = path.with_extension("tmp");
        let bytes = self.to_bytes()?;
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(&bytes)
            .and_then(|_| f.sync_all())
            .map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
