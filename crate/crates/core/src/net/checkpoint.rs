//! Checkpoint container: `PCKP0001`, u32 LE header length, JSON header,
//! u64 LE parameter count, then parameters as f64 LE.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{NetConfig, NetParams};
use crate::error::{Error, Result};
use crate::field::write_atomic;
use crate::rng::RngState;

const MAGIC: &[u8; 8] = b"PCKP0001";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    config: NetConfig,
    step: u64,
    rng: Option<RngState>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    meta: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: NetParams,
    pub step: u64,
    pub rng: Option<RngState>,
    /// Named scalars stored alongside the parameters.
    pub meta: BTreeMap<String, f64>,
}

pub fn save_checkpoint(path: &Path, params: &NetParams, step: u64, rng: Option<RngState>) -> Result<()> {
    save_checkpoint_with_meta(path, params, step, rng, BTreeMap::new())
}

pub fn save_checkpoint_with_meta(
    path: &Path,
    params: &NetParams,
    step: u64,
    rng: Option<RngState>,
    meta: BTreeMap<String, f64>,
) -> Result<()> {
    let header = Header {
        config: params.config().clone(),
        step,
        rng,
        meta,
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::json(path.display().to_string(), e))?;
    let mut bytes = Vec::with_capacity(8 + 4 + json.len() + 8 + 8 * params.len());
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&(json.len() as u32).to_le_bytes());
    bytes.extend_from_slice(&json);
    bytes.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for v in params.flat() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    write_atomic(path, &bytes)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let truncated = || Error::SizeMismatch {
        path: path.to_path_buf(),
        expected: 0,
        found: bytes.len() as u64,
    };
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(Error::InvalidArgument(format!("{}: not a checkpoint file", path.display())));
    }
    let hlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = 12 + hlen;
    if bytes.len() < body + 8 {
        return Err(truncated());
    }
    let header: Header =
        serde_json::from_slice(&bytes[12..body]).map_err(|e| Error::json(path.display().to_string(), e))?;
    let count = u64::from_le_bytes(bytes[body..body + 8].try_into().unwrap()) as usize;
    let data = &bytes[body + 8..];
    if data.len() != 8 * count {
        return Err(Error::SizeMismatch {
            path: path.to_path_buf(),
            expected: (body + 8 + 8 * count) as u64,
            found: bytes.len() as u64,
        });
    }
    let flat = data.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok(Checkpoint {
        params: NetParams::from_flat(&header.config, flat)?,
        step: header.step,
        rng: header.rng,
        meta: header.meta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Padding;
    use crate::net::init_params;
    use crate::rng::RngStream;

    #[test]
    fn bit_exact_reload() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ckpt");
        let cfg = NetConfig::tiny(1, Padding::Reflect);
        let mut rng = RngStream::new(3, 4);
        let p = init_params(&cfg, &mut rng).unwrap();
        save_checkpoint(&path, &p, 42, Some(rng.state())).unwrap();
        let c = load_checkpoint(&path).unwrap();
        assert_eq!(c.step, 42);
        assert_eq!(c.rng, Some(rng.state()));
        assert!(c.params.flat().iter().zip(p.flat()).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_eq!(c.params.config(), &cfg);
    }

    #[test]
    fn truncated_file_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ckpt");
        let p = NetParams::zeros(&NetConfig::tiny(1, Padding::Zero)).unwrap();
        save_checkpoint(&path, &p, 0, None).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(load_checkpoint(&path).is_err());
    }
}
