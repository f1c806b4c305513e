//! Checkpoint layout, all integers little-endian:
//!
//! ```text
//! magic      8 bytes  "TABAUGCK"
//! version    u32
//! header_len u64
//! header     JSON: feature_dim, noise_dim, shared_trunk, per-network dims
//!            and output activation, GanConfig echo, caller extras
//! params     f64 blocks: for each network in RganModel::nets order,
//!            w0, b0, w1, b1, ... each row-major
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GanConfig, RganModel};
use crate::numeric::{Layer, Matrix, MlpParams, OutputActivation, Parameters};
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"TABAUGCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct NetHeader {
    dims: Vec<usize>,
    output: OutputActivation,
    slope: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    feature_dim: usize,
    noise_dim: usize,
    shared_trunk: bool,
    nets: Vec<NetHeader>,
    config: GanConfig,
    #[serde(default)]
    extra: serde_json::Value,
}

/// A loaded checkpoint.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: RganModel,
    pub config: GanConfig,
    /// Caller data stored alongside the weights.
    pub extra: serde_json::Value,
}

fn bad(detail: impl Into<String>) -> Error {
    Error::Checkpoint(detail.into())
}

pub fn save_checkpoint(
    path: impl AsRef<Path>,
    model: &RganModel,
    config: &GanConfig,
    extra: serde_json::Value,
) -> Result<()> {
    let path = path.as_ref();
    let nets = model.nets();
    let header = Header {
        feature_dim: model.feature_dim(),
        noise_dim: model.noise_dim(),
        shared_trunk: model.shares_trunk(),
        nets: nets
            .iter()
            .map(|n| NetHeader {
                dims: n.dims(),
                output: n.output_activation(),
                slope: n.slope(),
            })
            .collect(),
        config: config.clone(),
        extra,
    };
    let json = serde_json::to_vec(&header).map_err(|e| bad(e.to_string()))?;
    let mut bytes = Vec::new();
    bytes.extend_from_slice(CHECKPOINT_MAGIC);
    bytes.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(json.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&json);
    for net in nets {
        for t in net.tensors() {
            for v in t.as_slice() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            bad(format!("truncated at byte {} (wanted {n} more)", self.at))
        })?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

fn read_net(cur: &mut Cursor, h: &NetHeader) -> Result<MlpParams> {
    if h.dims.len() < 2 {
        return Err(bad("network with fewer than two layer widths"));
    }
    let mut layers = Vec::with_capacity(h.dims.len() - 1);
    for w in h.dims.windows(2) {
        let mut read = |r: usize, c: usize| -> Result<Matrix> {
            let data = (0..r * c).map(|_| cur.f64()).collect::<Result<Vec<_>>>()?;
            Matrix::from_vec(r, c, data)
        };
        let weight = read(w[0], w[1])?;
        let bias = read(1, w[1])?;
        layers.push(Layer { weight, bias });
    }
    MlpParams::from_layers(layers, h.output, h.slope)
}

/// Loads a checkpoint. With `expected_feature_dim`, a model for another
/// feature count is rejected.
pub fn load_checkpoint(path: impl AsRef<Path>, expected_feature_dim: Option<usize>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut cur = Cursor { bytes: &bytes, at: 0 };
    if cur.take(8)? != CHECKPOINT_MAGIC {
        return Err(bad("not a checkpoint file (bad magic)"));
    }
    let version = u32::from_le_bytes(cur.take(4)?.try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(bad(format!(
            "format version {version} is not supported (expected {CHECKPOINT_VERSION})"
        )));
    }
    let len = u64::from_le_bytes(cur.take(8)?.try_into().expect("8 bytes"));
    let len = usize::try_from(len).map_err(|_| bad("header length overflows"))?;
    let header: Header = serde_json::from_slice(cur.take(len)?).map_err(|e| bad(format!("header: {e}")))?;
    if let Some(d) = expected_feature_dim {
        if d != header.feature_dim {
            return Err(bad(format!(
                "checkpoint is for {} features, data has {d}",
                header.feature_dim
            )));
        }
    }
    let expected_nets = if header.shared_trunk { 4 } else { 5 };
    if header.nets.len() != expected_nets {
        return Err(bad(format!("{} networks listed, expected {expected_nets}", header.nets.len())));
    }
    let mut nets = header
        .nets
        .iter()
        .map(|h| read_net(&mut cur, h))
        .collect::<Result<Vec<_>>>()?
        .into_iter();
    if cur.at != bytes.len() {
        return Err(bad(format!("{} trailing bytes after the parameter blocks", bytes.len() - cur.at)));
    }
    let generator = nets.next().expect("counted");
    let critic_trunk = nets.next().expect("counted");
    let regressor_trunk = if header.shared_trunk { None } else { nets.next() };
    let critic_head = nets.next().expect("counted");
    let regressor_head = nets.next().expect("counted");
    let model = RganModel {
        generator,
        critic_trunk,
        regressor_trunk,
        critic_head,
        regressor_head,
    };
    let d = header.feature_dim;
    let consistent = model.feature_dim() == d
        && model.noise_dim() == header.noise_dim
        && model.generator.out_dim() == d + 1
        && model.critic_head.in_dim() == model.critic_trunk.out_dim() + 1
        && model.regressor_head.in_dim() == model.critic_trunk.out_dim()
        && model.regressor_trunk.as_ref().is_none_or(|t| t.dims() == model.critic_trunk.dims());
    if !consistent {
        return Err(bad("network dimensions do not fit together"));
    }
    Ok(Checkpoint {
        model,
        config: header.config,
        extra: header.extra,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        for share in [true, false] {
            let cfg = GanConfig { share_trunk: share, seed: 4, ..Default::default() };
            let model = RganModel::new(3, &cfg);
            let path = dir.path().join("m.ckpt");
            save_checkpoint(&path, &model, &cfg, serde_json::json!({"k": 1})).unwrap();
            let back = load_checkpoint(&path, Some(3)).unwrap();
            assert_eq!(back.model, model);
            assert_eq!(back.config, cfg);
            assert_eq!(back.extra["k"], 1);
        }
    }

    #[test]
    fn mismatches_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = GanConfig::default();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&path, &RganModel::new(2, &cfg), &cfg, serde_json::Value::Null).unwrap();
        assert!(matches!(load_checkpoint(&path, Some(3)), Err(Error::Checkpoint(_))));

        let mut bytes = fs::read(&path).unwrap();
        bytes[8] = 9;
        let bumped = dir.path().join("v.ckpt");
        fs::write(&bumped, &bytes).unwrap();
        let err = load_checkpoint(&bumped, None).unwrap_err().to_string();
        assert!(err.contains("version 9"), "{err}");

        let mut bytes = fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 8);
        fs::write(&bumped, &bytes).unwrap();
        assert!(matches!(load_checkpoint(&bumped, None), Err(Error::Checkpoint(_))));
    }
}
