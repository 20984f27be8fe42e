//! Chain configurations, forward kinematics and training labels.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Point3, Vector3};
use rand::distributions::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Largest supported number of moving links.
pub const MAX_MOVING_LINKS: usize = 6;
/// Width of the padded length label: base link plus six moving links.
pub const LENGTH_LABEL_WIDTH: usize = MAX_MOVING_LINKS + 1;
/// Total chain length above which lengths are rescaled.
pub const LENGTH_BUDGET: f64 = 3.0;

/// Sampling range of the base link length before normalization.
pub const BASE_LENGTH_RANGE: (f64, f64) = (1.3, 2.0);
/// Sampling range of every moving link length before normalization.
pub const LINK_LENGTH_RANGE: (f64, f64) = (0.3, 1.0);

/// Default revolute joint limits in radians.
pub const DEFAULT_JOINT_LIMITS: (f64, f64) = (-2.5, 2.5);

/// Color tag of a link. Stored as metadata; renderers only use its luma.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkColor {
    Black,
    White,
    Red,
    Orange,
    Blue,
    Green,
    Yellow,
    Indigo,
}

impl LinkColor {
    pub const ALL: [LinkColor; 8] = [
        LinkColor::Black,
        LinkColor::White,
        LinkColor::Red,
        LinkColor::Orange,
        LinkColor::Blue,
        LinkColor::Green,
        LinkColor::Yellow,
        LinkColor::Indigo,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LinkColor::Black => "black",
            LinkColor::White => "white",
            LinkColor::Red => "red",
            LinkColor::Orange => "orange",
            LinkColor::Blue => "blue",
            LinkColor::Green => "green",
            LinkColor::Yellow => "yellow",
            LinkColor::Indigo => "indigo",
        }
    }

    /// Linear RGB in [0, 1].
    pub fn rgb(self) -> [f64; 3] {
        match self {
            LinkColor::Black => [0.0, 0.0, 0.0],
            LinkColor::White => [1.0, 1.0, 1.0],
            LinkColor::Red => [1.0, 0.0, 0.0],
            LinkColor::Orange => [1.0, 0.5, 0.0],
            LinkColor::Blue => [0.0, 0.0, 1.0],
            LinkColor::Green => [0.0, 1.0, 0.0],
            LinkColor::Yellow => [1.0, 1.0, 0.0],
            LinkColor::Indigo => [0.29, 0.0, 0.51],
        }
    }

    /// Rec. 601 luma.
    pub fn luma(self) -> f64 {
        let [r, g, b] = self.rgb();
        0.299 * r + 0.587 * g + 0.114 * b
    }
}

impl fmt::Display for LinkColor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LinkColor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LinkColor::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| invalid(format!("unknown link color {s:?}")))
    }
}

/// A sampled chain: `n` moving links plus the base link.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    n: usize,
    lengths: Vec<f64>,
    colors: Vec<LinkColor>,
}

impl ChainConfig {
    /// Validates and builds a configuration; `lengths[0]` is the base link.
    pub fn new(lengths: Vec<f64>, colors: Vec<LinkColor>) -> Result<Self> {
        if lengths.len() < 2 || lengths.len() > LENGTH_LABEL_WIDTH {
            return Err(invalid(format!(
                "a chain needs 2..={LENGTH_LABEL_WIDTH} links, got {}",
                lengths.len()
            )));
        }
        if colors.len() != lengths.len() {
            return Err(invalid(format!(
                "{} colors for {} links",
                colors.len(),
                lengths.len()
            )));
        }
        if let Some(bad) = lengths.iter().find(|l| !(**l > 0.0) || !l.is_finite()) {
            return Err(invalid(format!("link length {bad} is not positive")));
        }
        let total: f64 = lengths.iter().sum();
        if total > LENGTH_BUDGET + 1e-9 {
            return Err(invalid(format!(
                "total length {total} exceeds the {LENGTH_BUDGET} m budget"
            )));
        }
        Ok(ChainConfig {
            n: lengths.len() - 1,
            lengths,
            colors,
        })
    }

    /// Number of moving links.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn colors(&self) -> &[LinkColor] {
        &self.colors
    }

    pub fn total_length(&self) -> f64 {
        self.lengths.iter().sum()
    }
}

fn check_moving_links(n: usize) -> Result<()> {
    if (1..=MAX_MOVING_LINKS).contains(&n) {
        Ok(())
    } else {
        Err(invalid(format!(
            "number of moving links must be in 1..={MAX_MOVING_LINKS}, got {n}"
        )))
    }
}

/// Draws the `n + 1` raw link lengths before normalization.
pub fn sample_raw_lengths<R: rand::Rng + ?Sized>(rng: &mut R, n: usize) -> Result<Vec<f64>> {
    check_moving_links(n)?;
    let base = Uniform::new_inclusive(BASE_LENGTH_RANGE.0, BASE_LENGTH_RANGE.1);
    let link = Uniform::new_inclusive(LINK_LENGTH_RANGE.0, LINK_LENGTH_RANGE.1);
    Ok((0..=n)
        .map(|i| {
            if i == 0 {
                base.sample(rng)
            } else {
                link.sample(rng)
            }
        })
        .collect())
}

/// Samples a chain with `n` moving links: raw lengths, normalization, then colors.
pub fn sample_config<R: rand::Rng + ?Sized>(rng: &mut R, n: usize) -> Result<ChainConfig> {
    let raw = sample_raw_lengths(rng, n)?;
    let lengths = normalize_lengths(&raw)?;
    let colors = (0..=n)
        .map(|_| LinkColor::ALL[rng.gen_range(0..LinkColor::ALL.len())])
        .collect();
    ChainConfig::new(lengths, colors)
}

/// Rescales lengths whose sum reaches the budget so that they sum to exactly 3 m.
pub fn normalize_lengths(raw: &[f64]) -> Result<Vec<f64>> {
    if raw.is_empty() {
        return Err(invalid("no link lengths to normalize"));
    }
    if let Some(bad) = raw.iter().find(|l| !(**l > 0.0) || !l.is_finite()) {
        return Err(invalid(format!("link length {bad} is not positive")));
    }
    let total: f64 = raw.iter().sum();
    if total < LENGTH_BUDGET {
        Ok(raw.to_vec())
    } else {
        let scale = LENGTH_BUDGET / total;
        Ok(raw.iter().map(|l| l * scale).collect())
    }
}

/// Joint angles in radians; entry `i` drives the joint between link `i` and `i + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct JointState {
    pub angles: Vec<f64>,
}

impl JointState {
    pub fn new(angles: Vec<f64>) -> Self {
        JointState { angles }
    }

    pub fn zeros(n: usize) -> Self {
        JointState {
            angles: vec![0.0; n],
        }
    }
}

/// World-space link endpoints: the root, then the distal end of every link.
#[derive(Clone, Debug, PartialEq)]
pub struct LinkPoses {
    pub endpoints: Vec<Point3<f64>>,
}

impl LinkPoses {
    /// `(proximal, distal)` endpoints of each link, base first.
    pub fn segments(&self) -> impl Iterator<Item = (Point3<f64>, Point3<f64>)> + '_ {
        self.endpoints.windows(2).map(|w| (w[0], w[1]))
    }
}

/// Axis shared by every revolute joint. Chains articulate in the plane normal to it.
pub const JOINT_AXIS: Vector3<f64> = Vector3::new(0.0, 0.0, 1.0);

/// Places the chain: root at the origin, base link along +x, every joint rotating
/// about [`JOINT_AXIS`].
pub fn forward_kinematics(config: &ChainConfig, state: &JointState) -> Result<LinkPoses> {
    if state.angles.len() != config.n() {
        return Err(invalid(format!(
            "{} joint angles for a chain with {} moving links",
            state.angles.len(),
            config.n()
        )));
    }
    let mut endpoints = Vec::with_capacity(config.n() + 2);
    let mut tip = Point3::origin();
    endpoints.push(tip);
    let mut heading = 0.0f64;
    for (i, &len) in config.lengths().iter().enumerate() {
        if i > 0 {
            heading += state.angles[i - 1];
        }
        tip += Vector3::new(heading.cos(), heading.sin(), 0.0) * len;
        endpoints.push(tip);
    }
    Ok(LinkPoses { endpoints })
}

/// One-hot class vector; class `k` encodes `k + 1` moving links.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountLabel {
    pub onehot: [f64; MAX_MOVING_LINKS],
}

impl CountLabel {
    pub fn class_index(&self) -> usize {
        self.onehot
            .iter()
            .position(|&v| v == 1.0)
            .expect("count label holds exactly one hot entry")
    }

    pub fn moving_links(&self) -> usize {
        self.class_index() + 1
    }
}

pub fn count_label(n: usize) -> Result<CountLabel> {
    check_moving_links(n)?;
    let mut onehot = [0.0; MAX_MOVING_LINKS];
    onehot[n - 1] = 1.0;
    Ok(CountLabel { onehot })
}

/// Link lengths zero-padded to seven entries.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LengthLabel {
    pub padded: [f64; LENGTH_LABEL_WIDTH],
}

pub fn padded_length_label(config: &ChainConfig) -> LengthLabel {
    let mut padded = [0.0; LENGTH_LABEL_WIDTH];
    padded[..config.lengths().len()].copy_from_slice(config.lengths());
    LengthLabel { padded }
}
