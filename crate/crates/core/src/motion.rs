//! Random joint-angle trajectories.
//!
//! Waypoint angles are drawn uniformly inside the joint limits every
//! `waypoint_spacing` frames and linearly interpolated. The played-back angle
//! then tracks that path with a per-frame step capped at `omega_max / fps`.
//! Angles are kept at `f32` precision so trajectories survive serialization
//! unchanged.

use rand::distributions::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::chain::{JointState, DEFAULT_JOINT_LIMITS};
use crate::error::{invalid, Error, Result};

pub const DEFAULT_FRAMES: usize = 100;
pub const DEFAULT_FPS: f64 = 10.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionParams {
    /// Joint limits `[min, max]` in radians.
    pub joint_limits: (f64, f64),
    /// Maximum joint speed in rad/s.
    pub omega_max: f64,
    /// Frames between consecutive waypoints.
    pub waypoint_spacing: usize,
    pub fps: f64,
}

impl Default for MotionParams {
    fn default() -> Self {
        MotionParams {
            joint_limits: DEFAULT_JOINT_LIMITS,
            omega_max: 1.0,
            waypoint_spacing: 20,
            fps: DEFAULT_FPS,
        }
    }
}

impl MotionParams {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.joint_limits;
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(invalid(format!("joint limits [{lo}, {hi}] are empty")));
        }
        if !(self.omega_max > 0.0) || !(self.fps > 0.0) {
            return Err(invalid("omega_max and fps must be positive"));
        }
        if self.waypoint_spacing == 0 {
            return Err(invalid("waypoint spacing must be at least one frame"));
        }
        Ok(())
    }

    /// Largest permitted change of one joint angle between consecutive frames.
    pub fn max_step(&self) -> f64 {
        self.omega_max / self.fps
    }
}

/// Joint angles for every frame, stored row-major as `frames × n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointTrajectory {
    pub frames: usize,
    pub fps: f64,
    pub n: usize,
    pub angles: Vec<f32>,
}

impl JointTrajectory {
    pub fn new(frames: usize, n: usize, fps: f64, angles: Vec<f32>) -> Result<Self> {
        if angles.len() != frames * n {
            return Err(invalid(format!(
                "{} angles do not fill a {frames}x{n} trajectory",
                angles.len()
            )));
        }
        Ok(JointTrajectory {
            frames,
            fps,
            n,
            angles,
        })
    }

    pub fn row(&self, t: usize) -> &[f32] {
        &self.angles[t * self.n..(t + 1) * self.n]
    }

    /// Joint state at frame `t`.
    pub fn angles_at(&self, t: usize) -> Result<JointState> {
        if t >= self.frames {
            return Err(Error::Index {
                index: t,
                len: self.frames,
            });
        }
        Ok(JointState::new(
            self.row(t).iter().map(|&a| f64::from(a)).collect(),
        ))
    }

    /// Keeps every `stride`-th frame, starting at frame 0.
    pub fn subsample(&self, stride: usize) -> JointTrajectory {
        let stride = stride.max(1);
        let kept: Vec<usize> = (0..self.frames).step_by(stride).collect();
        let angles = kept.iter().flat_map(|&t| self.row(t).iter().copied()).collect();
        JointTrajectory {
            frames: kept.len(),
            fps: self.fps / stride as f64,
            n: self.n,
            angles,
        }
    }
}

/// Free-function form of [`JointTrajectory::angles_at`].
pub fn angles_at(traj: &JointTrajectory, t: usize) -> Result<JointState> {
    traj.angles_at(t)
}

/// Waypoint angles for one joint at frames `0, W, 2W, ...` covering `frames`.
pub fn sample_waypoints<R: rand::Rng + ?Sized>(
    rng: &mut R,
    frames: usize,
    params: &MotionParams,
) -> Vec<f64> {
    let (lo, hi) = params.joint_limits;
    let dist = Uniform::new_inclusive(lo, hi);
    let count = (frames.saturating_sub(1)).div_ceil(params.waypoint_spacing) + 1;
    (0..count).map(|_| dist.sample(rng)).collect()
}

/// Piecewise-linear waypoint path evaluated at frame `t`.
pub fn interpolate_waypoints(waypoints: &[f64], spacing: usize, t: usize) -> f64 {
    let seg = t / spacing;
    if seg + 1 >= waypoints.len() {
        return *waypoints.last().expect("at least one waypoint");
    }
    let frac = (t - seg * spacing) as f64 / spacing as f64;
    waypoints[seg] + (waypoints[seg + 1] - waypoints[seg]) * frac
}

/// Plays back a waypoint path for one joint with the speed cap applied.
///
/// Every output is `f32`-representable, inside the joint limits, and at most
/// `params.max_step()` away from its predecessor.
pub fn follow_waypoints(waypoints: &[f64], frames: usize, params: &MotionParams) -> Vec<f32> {
    let (lo, hi) = params.joint_limits;
    let max_step = params.max_step();
    let mut out = Vec::with_capacity(frames);
    let mut current = quantize_within(waypoints[0], lo, hi);
    out.push(current as f32);
    for t in 1..frames {
        let target = interpolate_waypoints(waypoints, params.waypoint_spacing, t);
        let step = (target - current).clamp(-max_step, max_step);
        let mut next = quantize_within(current + step, lo, hi);
        // f32 rounding may push the step just past the cap; back off one ulp.
        while (next - current).abs() > max_step {
            next = f64::from(step_toward(next as f32, current as f32));
        }
        current = next;
        out.push(current as f32);
    }
    out
}

fn quantize_within(x: f64, lo: f64, hi: f64) -> f64 {
    let mut q = x.clamp(lo, hi) as f32;
    while f64::from(q) > hi {
        q = step_toward(q, f32::NEG_INFINITY);
    }
    while f64::from(q) < lo {
        q = step_toward(q, f32::INFINITY);
    }
    f64::from(q)
}

fn step_toward(x: f32, target: f32) -> f32 {
    if x == target {
        return x;
    }
    let bits = x.to_bits();
    let up = (target > x) == (x >= 0.0);
    if x == 0.0 {
        if target > 0.0 {
            f32::from_bits(1)
        } else {
            -f32::from_bits(1)
        }
    } else if up {
        f32::from_bits(bits + 1)
    } else {
        f32::from_bits(bits - 1)
    }
}

/// Samples an `n`-joint trajectory of `frames` frames.
pub fn sample_trajectory<R: rand::Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    frames: usize,
    params: &MotionParams,
) -> Result<JointTrajectory> {
    if n == 0 {
        return Err(invalid("a trajectory needs at least one joint"));
    }
    if frames == 0 {
        return Err(invalid("a trajectory needs at least one frame"));
    }
    params.validate()?;
    let per_joint: Vec<Vec<f32>> = (0..n)
        .map(|_| {
            let waypoints = sample_waypoints(rng, frames, params);
            follow_waypoints(&waypoints, frames, params)
        })
        .collect();
    let mut angles = Vec::with_capacity(frames * n);
    for t in 0..frames {
        angles.extend(per_joint.iter().map(|joint| joint[t]));
    }
    JointTrajectory::new(frames, n, params.fps, angles)
}
