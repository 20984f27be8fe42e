//! Annotated instances, network input stacks, and the on-disk dataset.

mod kcb;
mod manifest;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::chain::{
    count_label, forward_kinematics, padded_length_label, sample_config, ChainConfig, CountLabel,
    LengthLabel,
};
use crate::error::{invalid, Error, Result};
use crate::motion::{sample_trajectory, JointTrajectory, MotionParams, DEFAULT_FRAMES};
use crate::render::{
    render_views, DepthImage, GrayImage, GroundPlane, Lighting, RigParams, Scene,
    DEFAULT_CAPSULE_RADIUS,
};
use crate::seeded_rng;

pub use kcb::{decode_instance, encode_instance, load_instance, write_instance, KCB_MAGIC};
pub use manifest::{make_splits, DatasetManifest, ManifestEntry, Split, MANIFEST_FILE};

/// Version written into `.kcb` headers and `manifest.json`.
pub const FORMAT_VERSION: u32 = 1;

/// Everything besides `(seed, n)` that determines a generated instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub frames: usize,
    pub rig: RigParams,
    pub motion: MotionParams,
    pub capsule_radius: f64,
    pub lighting: Lighting,
    pub ground: Option<GroundPlane>,
}

impl Default for GenerationParams {
    fn default() -> Self {
        GenerationParams {
            frames: DEFAULT_FRAMES,
            rig: RigParams::default(),
            motion: MotionParams::default(),
            capsule_radius: DEFAULT_CAPSULE_RADIUS,
            lighting: Lighting::default(),
            ground: None,
        }
    }
}

impl GenerationParams {
    /// Reduced-resolution profile for CPU-scale experiments.
    pub fn desk_scale() -> Self {
        GenerationParams {
            rig: RigParams::default().with_resolution(64, 48),
            ..GenerationParams::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 {
            return Err(invalid("frames must be at least 1"));
        }
        if !(self.capsule_radius > 0.0) {
            return Err(invalid("capsule radius must be positive"));
        }
        self.motion.validate()?;
        self.rig.cameras()?;
        Ok(())
    }
}

/// Input channel a network consumes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Modality {
    Depth,
    Gray,
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Modality::Depth => "Depth",
            Modality::Gray => "Grey",
        })
    }
}

impl FromStr for Modality {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "depth" => Ok(Modality::Depth),
            "grey" | "gray" => Ok(Modality::Gray),
            _ => Err(invalid(format!("unknown modality {s:?}"))),
        }
    }
}

/// How frames are stacked along the network's depth axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StackMode {
    /// Consecutive frames from one camera.
    Temporal,
    /// All cameras at one timestep.
    Multiview,
}

impl fmt::Display for StackMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StackMode::Temporal => "TMP",
            StackMode::Multiview => "MV",
        })
    }
}

impl FromStr for StackMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tmp" | "temporal" => Ok(StackMode::Temporal),
            "mv" | "multiview" => Ok(StackMode::Multiview),
            _ => Err(invalid(format!("unknown stacking mode {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FramePair {
    pub depth: DepthImage,
    pub gray: GrayImage,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Labels {
    pub count: CountLabel,
    pub length: LengthLabel,
}

impl Labels {
    pub fn for_config(config: &ChainConfig) -> Result<Labels> {
        Ok(Labels {
            count: count_label(config.n())?,
            length: padded_length_label(config),
        })
    }
}

/// One generated chain with every rendered frame and its ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct InstanceRecord {
    pub instance_id: String,
    pub seed: u64,
    pub params: GenerationParams,
    pub config: ChainConfig,
    pub trajectory: JointTrajectory,
    pub cameras: usize,
    pub timesteps: usize,
    pub width: usize,
    pub height: usize,
    /// Camera-major grid: `frames[camera * timesteps + t]`.
    pub frames: Vec<FramePair>,
    pub labels: Labels,
}

/// Stable identifier derived from the generating `(n, seed)`.
pub fn instance_id(n: usize, seed: u64) -> String {
    format!("n{n}-{seed:016x}")
}

/// Samples a chain and trajectory from `seed` and renders every camera at every frame.
pub fn generate_instance(seed: u64, n: usize, params: &GenerationParams) -> Result<InstanceRecord> {
    params.validate()?;
    let mut rng = seeded_rng(seed);
    let config = sample_config(&mut rng, n)?;
    let trajectory = sample_trajectory(&mut rng, n, params.frames, &params.motion)?;
    let cams = params.rig.cameras()?;

    let scenes = (0..params.frames)
        .map(|t| {
            let poses = forward_kinematics(&config, &trajectory.angles_at(t)?)?;
            Ok(Scene::from_poses(&poses, &config, params.capsule_radius, params.ground))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut frames = Vec::with_capacity(cams.len() * params.frames);
    for cam in &cams {
        for scene in &scenes {
            let (depth, gray) = render_views(scene, cam, &params.lighting);
            frames.push(FramePair { depth, gray });
        }
    }
    Ok(InstanceRecord {
        instance_id: instance_id(n, seed),
        seed,
        labels: Labels::for_config(&config)?,
        params: params.clone(),
        config,
        trajectory,
        cameras: cams.len(),
        timesteps: params.frames,
        width: params.rig.width,
        height: params.rig.height_px,
        frames,
    })
}

impl InstanceRecord {
    pub fn frame(&self, camera: usize, t: usize) -> Result<&FramePair> {
        if camera >= self.cameras {
            return Err(Error::Index {
                index: camera,
                len: self.cameras,
            });
        }
        if t >= self.timesteps {
            return Err(Error::Index {
                index: t,
                len: self.timesteps,
            });
        }
        Ok(&self.frames[camera * self.timesteps + t])
    }

    /// Keeps every `stride`-th timestep (starting at 0) for all cameras.
    pub fn subsample(&self, stride: usize) -> InstanceRecord {
        let stride = stride.max(1);
        let kept: Vec<usize> = (0..self.timesteps).step_by(stride).collect();
        let frames = (0..self.cameras)
            .flat_map(|c| kept.iter().map(move |&t| (c, t)))
            .map(|(c, t)| self.frames[c * self.timesteps + t].clone())
            .collect();
        InstanceRecord {
            trajectory: self.trajectory.subsample(stride),
            timesteps: kept.len(),
            frames,
            ..self.clone_without_frames()
        }
    }

    fn clone_without_frames(&self) -> InstanceRecord {
        InstanceRecord {
            instance_id: self.instance_id.clone(),
            seed: self.seed,
            params: self.params.clone(),
            config: self.config.clone(),
            trajectory: self.trajectory.clone(),
            cameras: self.cameras,
            timesteps: self.timesteps,
            width: self.width,
            height: self.height,
            frames: Vec::new(),
            labels: self.labels,
        }
    }
}

/// A `D × H × W × 1` network input built from one instance.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleStack {
    pub data: Vec<f32>,
    pub depth: usize,
    pub height: usize,
    pub width: usize,
    pub modality: Modality,
    pub mode: StackMode,
    pub labels: Labels,
}

impl SampleStack {
    pub fn shape(&self) -> [usize; 4] {
        [self.depth, self.height, self.width, 1]
    }

    pub fn slice(&self, d: usize) -> &[f32] {
        let plane = self.height * self.width;
        &self.data[d * plane..(d + 1) * plane]
    }
}

fn plane(frame: &FramePair, modality: Modality) -> &[f32] {
    match modality {
        Modality::Depth => &frame.depth.data,
        Modality::Gray => &frame.gray.data,
    }
}

/// Frames of one camera in time order.
pub fn stack_temporal(inst: &InstanceRecord, camera: usize, modality: Modality) -> Result<SampleStack> {
    if camera >= inst.cameras {
        return Err(Error::Index {
            index: camera,
            len: inst.cameras,
        });
    }
    let mut data = Vec::with_capacity(inst.timesteps * inst.height * inst.width);
    for t in 0..inst.timesteps {
        data.extend_from_slice(plane(inst.frame(camera, t)?, modality));
    }
    Ok(SampleStack {
        data,
        depth: inst.timesteps,
        height: inst.height,
        width: inst.width,
        modality,
        mode: StackMode::Temporal,
        labels: inst.labels,
    })
}

/// Every camera at timestep `t`, in camera order.
pub fn stack_multiview(inst: &InstanceRecord, t: usize, modality: Modality) -> Result<SampleStack> {
    if t >= inst.timesteps {
        return Err(Error::Index {
            index: t,
            len: inst.timesteps,
        });
    }
    let mut data = Vec::with_capacity(inst.cameras * inst.height * inst.width);
    for c in 0..inst.cameras {
        data.extend_from_slice(plane(inst.frame(c, t)?, modality));
    }
    Ok(SampleStack {
        data,
        depth: inst.cameras,
        height: inst.height,
        width: inst.width,
        modality,
        mode: StackMode::Multiview,
        labels: inst.labels,
    })
}
