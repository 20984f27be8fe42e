//! `.kcb` instance files.
//!
//! ```text
//! "KCB1" | header length (u32 LE) | header (UTF-8 JSON)
//!        | images: camera-major, then timestep, depth plane then gray plane,
//!          each H×W f32 LE row-major
//!        | trajectory: frames×n f32 LE
//!        | CRC32 (LE) of every preceding byte
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{FramePair, GenerationParams, InstanceRecord, Labels, ManifestEntry, FORMAT_VERSION};
use crate::chain::{ChainConfig, LinkColor};
use crate::error::{Error, Result};
use crate::motion::JointTrajectory;
use crate::render::{DepthImage, GrayImage, Image};

pub const KCB_MAGIC: &[u8; 4] = b"KCB1";

#[derive(Serialize, Deserialize)]
struct Dims {
    cameras: usize,
    timesteps: usize,
    height: usize,
    width: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    id: String,
    seed: u64,
    n: usize,
    lengths: Vec<f64>,
    colors: Vec<LinkColor>,
    trajectory_fps: f64,
    dims: Dims,
    params: GenerationParams,
}

fn push_f32s(out: &mut Vec<u8>, values: &[f32]) {
    out.reserve(values.len() * 4);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode_instance(inst: &InstanceRecord) -> Vec<u8> {
    let header = Header {
        format_version: FORMAT_VERSION,
        id: inst.instance_id.clone(),
        seed: inst.seed,
        n: inst.config.n(),
        lengths: inst.config.lengths().to_vec(),
        colors: inst.config.colors().to_vec(),
        trajectory_fps: inst.trajectory.fps,
        dims: Dims {
            cameras: inst.cameras,
            timesteps: inst.timesteps,
            height: inst.height,
            width: inst.width,
        },
        params: inst.params.clone(),
    };
    let header = serde_json::to_vec(&header).expect("header serializes");
    let plane = inst.height * inst.width;
    let mut out = Vec::with_capacity(
        12 + header.len() + inst.frames.len() * plane * 8 + inst.trajectory.angles.len() * 4,
    );
    out.extend_from_slice(KCB_MAGIC);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    for frame in &inst.frames {
        push_f32s(&mut out, &frame.depth.data);
        push_f32s(&mut out, &frame.gray.data);
    }
    push_f32s(&mut out, &inst.trajectory.angles);
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, len: usize) -> Result<&[u8]> {
        let end = self
            .pos
            .checked_add(len)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format("unexpected end of data".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn f32s(&mut self, count: usize) -> Result<Vec<f32>> {
        let raw = self.take(count * 4)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }
}

pub fn decode_instance(bytes: &[u8]) -> Result<InstanceRecord> {
    if bytes.len() < 12 {
        return Err(Error::Format(format!("{} bytes is too short for a .kcb file", bytes.len())));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes([tail[0], tail[1], tail[2], tail[3]]);
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }
    if &body[..4] != KCB_MAGIC {
        return Err(Error::Format("missing KCB1 magic".into()));
    }
    let mut cur = Cursor { bytes: body, pos: 4 };
    let len_bytes = cur.take(4)?;
    let header_len = u32::from_le_bytes([len_bytes[0], len_bytes[1], len_bytes[2], len_bytes[3]]);
    let header: Header = serde_json::from_slice(cur.take(header_len as usize)?)?;
    if header.format_version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            expected: FORMAT_VERSION,
            found: header.format_version,
        });
    }
    let Dims {
        cameras,
        timesteps,
        height,
        width,
    } = header.dims;
    let plane = height * width;
    let mut frames = Vec::with_capacity(cameras * timesteps);
    for _ in 0..cameras * timesteps {
        let depth = cur.f32s(plane)?;
        let gray = cur.f32s(plane)?;
        frames.push(FramePair {
            depth: DepthImage(Image {
                width,
                height,
                data: depth,
            }),
            gray: GrayImage(Image {
                width,
                height,
                data: gray,
            }),
        });
    }
    let angles = cur.f32s(timesteps * header.n)?;
    if cur.pos != body.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes before the checksum",
            body.len() - cur.pos
        )));
    }
    let config = ChainConfig::new(header.lengths, header.colors)?;
    if config.n() != header.n {
        return Err(Error::Format("link count disagrees with lengths".into()));
    }
    Ok(InstanceRecord {
        instance_id: header.id,
        seed: header.seed,
        params: header.params,
        labels: Labels::for_config(&config)?,
        trajectory: JointTrajectory::new(timesteps, header.n, header.trajectory_fps, angles)?,
        config,
        cameras,
        timesteps,
        width,
        height,
        frames,
    })
}

/// Writes `dir/instances/<id>.kcb` and returns its manifest entry (unsplit).
pub fn write_instance(inst: &InstanceRecord, dir: &Path) -> Result<ManifestEntry> {
    let rel = format!("instances/{}.kcb", inst.instance_id);
    let path = dir.join(&rel);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let bytes = encode_instance(inst);
    fs::write(&path, &bytes)?;
    let header_len = u32::from_le_bytes([bytes[4], bytes[5], bytes[6], bytes[7]]) as u64;
    let crc = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().expect("4 bytes"));
    Ok(ManifestEntry {
        id: inst.instance_id.clone(),
        n: inst.config.n(),
        lengths: inst.config.lengths().to_vec(),
        seed: inst.seed,
        file: rel,
        bytes: bytes.len() as u64,
        payload_offset: 8 + header_len,
        crc32: crc,
        split: None,
    })
}

pub fn load_instance(entry: &ManifestEntry, dir: &Path) -> Result<InstanceRecord> {
    let bytes = fs::read(dir.join(&entry.file))?;
    let inst = decode_instance(&bytes)?;
    if inst.instance_id != entry.id {
        return Err(Error::Format(format!(
            "file {} holds instance {}, manifest expects {}",
            entry.file, inst.instance_id, entry.id
        )));
    }
    Ok(inst)
}
