//! `KNN1` model checkpoints.
//!
//! ```text
//! "KNN1" | header length (u32 LE) | header (UTF-8 JSON)
//!        | parameters, layer order, f32 LE | CRC32 (LE) of every preceding byte
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};
use crate::graph::ModelGraph;
use crate::layers::LayerSpec;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"KNN1";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Training provenance stored alongside the weights.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub epoch: usize,
    /// Free-form caller data (architecture name, normalization, ...).
    #[serde(default)]
    pub extra: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    input_shape: Vec<usize>,
    layers: Vec<LayerSpec>,
    param_shapes: Vec<Vec<usize>>,
    #[serde(flatten)]
    meta: CheckpointMeta,
}

pub fn encode_checkpoint<T: Scalar>(model: &ModelGraph<T>, meta: &CheckpointMeta) -> Vec<u8> {
    let params = model.shaped_params();
    let header = Header {
        format_version: CHECKPOINT_VERSION,
        input_shape: model.input_shape().to_vec(),
        layers: model.specs().to_vec(),
        param_shapes: params.iter().map(|p| p.shape().to_vec()).collect(),
        meta: meta.clone(),
    };
    let header = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(12 + header.len() + model.param_count() * 4);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    for p in &params {
        for v in p.data() {
            out.extend_from_slice(&(v.f64() as f32).to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

fn bad(msg: impl Into<String>) -> NnError {
    NnError::Checkpoint(msg.into())
}

pub fn decode_checkpoint<T: Scalar>(bytes: &[u8]) -> Result<(ModelGraph<T>, CheckpointMeta)> {
    if bytes.len() < 12 {
        return Err(bad("file too short"));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(NnError::Checksum { stored, computed });
    }
    if &body[..4] != CHECKPOINT_MAGIC {
        return Err(bad("missing KNN1 magic"));
    }
    let header_len = u32::from_le_bytes(body[4..8].try_into().expect("4 bytes")) as usize;
    let header_end = 8usize
        .checked_add(header_len)
        .filter(|&e| e <= body.len())
        .ok_or_else(|| bad("header runs past the end of the file"))?;
    let header: Header = serde_json::from_slice(&body[8..header_end])?;
    if header.format_version != CHECKPOINT_VERSION {
        return Err(bad(format!(
            "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
            header.format_version
        )));
    }
    let mut payload = body[header_end..].chunks_exact(4);
    if payload.len() * 4 != body.len() - header_end {
        return Err(bad("payload is not a whole number of f32 values"));
    }
    let mut params = Vec::with_capacity(header.param_shapes.len());
    for shape in header.param_shapes {
        let n: usize = shape.iter().product();
        if payload.len() < n {
            return Err(bad("payload shorter than the declared parameters"));
        }
        let data = payload
            .by_ref()
            .take(n)
            .map(|c| T::of(f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64))
            .collect();
        params.push(Tensor::new(shape, data)?);
    }
    if payload.len() != 0 {
        return Err(bad("payload longer than the declared parameters"));
    }
    let model = ModelGraph::from_params(&header.input_shape, &header.layers, params)?;
    Ok((model, header.meta))
}

pub fn save_checkpoint<T: Scalar>(
    model: &ModelGraph<T>,
    meta: &CheckpointMeta,
    path: &Path,
) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, encode_checkpoint(model, meta))?;
    Ok(())
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<(ModelGraph<T>, CheckpointMeta)> {
    decode_checkpoint(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> ModelGraph<f32> {
        let specs = [
            LayerSpec::Conv2d {
                filters: 2,
                kernel: [3, 3],
                stride: [1, 1],
                padding: [1, 1],
            },
            LayerSpec::Relu,
            LayerSpec::Flatten { keep: 1 },
            LayerSpec::Lstm { hidden: 3 },
            LayerSpec::Dense { units: 4 },
            LayerSpec::Softmax,
        ];
        ModelGraph::new(&[2, 3, 4, 1], &specs, 9).unwrap()
    }

    #[test]
    fn round_trip_is_exact_for_f32() {
        let m = model();
        let meta = CheckpointMeta {
            seed: 9,
            epoch: 3,
            extra: serde_json::json!({"arch": "test"}),
        };
        let bytes = encode_checkpoint(&m, &meta);
        assert_eq!(&bytes[..4], b"KNN1");
        let (back, meta2) = decode_checkpoint::<f32>(&bytes).unwrap();
        assert_eq!(meta2, meta);
        assert_eq!(back.specs(), m.specs());
        for (a, b) in back.params().iter().zip(m.params()) {
            assert_eq!(a.data(), b.data());
        }
        assert_eq!(encode_checkpoint(&back, &meta), bytes);
    }

    #[test]
    fn corruption_is_detected() {
        let bytes = encode_checkpoint(&model(), &CheckpointMeta::default());
        let mut bad = bytes.clone();
        bad[20] ^= 1;
        assert!(matches!(decode_checkpoint::<f32>(&bad), Err(NnError::Checksum { .. })));
        assert!(decode_checkpoint::<f32>(&bytes[..bytes.len() - 8]).is_err());
        assert!(decode_checkpoint::<f32>(&bytes[..6]).is_err());
    }
}
