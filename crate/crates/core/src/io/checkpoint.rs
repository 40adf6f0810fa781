//! Head checkpoints.
//!
//! ```text
//! "TFRH" | version u32 = 1 | label_mode u32 | targets u32 | n u32 | dims n x u32
//! then per layer: weights (outputs x inputs, row-major) | biases, all f64
//! ```
//!
//! Little-endian throughout. `label_mode` is 0 joint, 1 ccs-only, 2
//! ccas-only, 3 cr-only; `targets` is 0 raw, 1 calibrated.

use std::path::Path;

use super::embeddings::Cursor;
use crate::error::{Error, Result};
use crate::predictor::{Dense, LabelMode, RegressionHead, TargetSource};

pub const HEAD_MAGIC: [u8; 4] = *b"TFRH";
pub const HEAD_VERSION: u32 = 1;

/// A trained head together with what it was trained to predict.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadCheckpoint {
    pub mode: LabelMode,
    pub targets: TargetSource,
    pub head: RegressionHead,
}

pub fn encode_head(ckpt: &HeadCheckpoint) -> Vec<u8> {
    let dims = ckpt.head.layer_dims();
    let mut out = Vec::with_capacity(20 + 4 * dims.len() + 8 * ckpt.head.param_count());
    out.extend_from_slice(&HEAD_MAGIC);
    out.extend_from_slice(&HEAD_VERSION.to_le_bytes());
    out.extend_from_slice(&ckpt.mode.code().to_le_bytes());
    let targets: u32 = match ckpt.targets {
        TargetSource::Raw => 0,
        TargetSource::Calibrated => 1,
    };
    out.extend_from_slice(&targets.to_le_bytes());
    out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for d in &dims {
        out.extend_from_slice(&(*d as u32).to_le_bytes());
    }
    for layer in ckpt.head.layers() {
        for x in layer.weights.iter().chain(&layer.biases) {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

pub fn parse_head(bytes: &[u8]) -> Result<HeadCheckpoint> {
    let mut c = Cursor::new(bytes);
    let magic = c.take::<4>()?;
    if magic != HEAD_MAGIC {
        return Err(Error::BadMagic {
            expected: HEAD_MAGIC,
            found: magic,
        });
    }
    let version = c.u32()?;
    if version != HEAD_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let mode = LabelMode::from_code(c.u32()?)?;
    let targets = match c.u32()? {
        0 => TargetSource::Raw,
        1 => TargetSource::Calibrated,
        other => return Err(Error::Config(format!("unknown target source code {other}"))),
    };
    let n = c.u32()? as usize;
    if n < 2 {
        return Err(Error::Shape("a head needs at least two layer dims".into()));
    }
    if c.remaining() < 4 * n {
        return Err(Error::Truncated {
            expected: (bytes.len() - c.remaining() + 4 * n) as u64,
            actual: bytes.len() as u64,
        });
    }
    let dims = (0..n)
        .map(|_| c.u32().map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    if dims.contains(&0) {
        return Err(Error::Shape("zero layer dimension".into()));
    }
    if dims[n - 1] != mode.outputs() {
        return Err(Error::Shape(format!(
            "label mode needs {} outputs, head has {}",
            mode.outputs(),
            dims[n - 1]
        )));
    }
    let params: u128 = dims
        .windows(2)
        .map(|w| w[0] as u128 * w[1] as u128 + w[1] as u128)
        .sum();
    let expected = params * 8;
    let actual = c.remaining() as u128;
    if actual < expected {
        let header = (bytes.len() - c.remaining()) as u128;
        return Err(Error::Truncated {
            expected: (header + expected).min(u64::MAX as u128) as u64,
            actual: bytes.len() as u64,
        });
    }
    if actual > expected {
        return Err(Error::TrailingBytes((actual - expected) as u64));
    }
    let mut layers = Vec::with_capacity(n - 1);
    for w in dims.windows(2) {
        let (inputs, outputs) = (w[0], w[1]);
        let weights = (0..inputs * outputs)
            .map(|_| c.f64())
            .collect::<Result<Vec<_>>>()?;
        let biases = (0..outputs).map(|_| c.f64()).collect::<Result<Vec<_>>>()?;
        layers.push(Dense {
            inputs,
            outputs,
            weights,
            biases,
        });
    }
    Ok(HeadCheckpoint {
        mode,
        targets,
        head: RegressionHead::from_layers(layers)?,
    })
}

pub fn write_head(ckpt: &HeadCheckpoint, path: &Path) -> Result<()> {
    super::write_bytes(path, &encode_head(ckpt))
}

pub fn read_head(path: &Path) -> Result<HeadCheckpoint> {
    parse_head(&super::read_bytes(path)?)
}
