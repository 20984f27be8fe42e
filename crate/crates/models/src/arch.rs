//! Architecture names and layer stacks.

use std::fmt;
use std::str::FromStr;

use kinchain_core::chain::{LENGTH_LABEL_WIDTH, MAX_MOVING_LINKS};
use kinchain_core::dataset::{Modality, StackMode};
use kinchain_nn::LayerSpec;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, ModelError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Network {
    Conv3d,
    CnnLstm,
}

/// Network family plus the input it consumes, named like `CONV3D-Depth-MV`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Architecture {
    pub network: Network,
    pub modality: Modality,
    pub mode: StackMode,
}

impl Architecture {
    pub const fn new(network: Network, modality: Modality, mode: StackMode) -> Self {
        Architecture {
            network,
            modality,
            mode,
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let net = match self.network {
            Network::Conv3d => "CONV3D",
            Network::CnnLstm => "LSTM",
        };
        write!(f, "{net}-{}-{}", self.modality, self.mode)
    }
}

impl FromStr for Architecture {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split('-').map(str::trim).collect();
        let [net, modality, mode] = parts[..] else {
            return Err(invalid(format!(
                "architecture {s:?} is not of the form CONV3D|LSTM-Depth|Grey-TMP|MV"
            )));
        };
        let network = match net.to_ascii_lowercase().as_str() {
            "conv3d" => Network::Conv3d,
            "lstm" | "cnnlstm" | "cnn_lstm" => Network::CnnLstm,
            _ => return Err(invalid(format!("unknown network {net:?}"))),
        };
        Ok(Architecture {
            network,
            modality: modality.parse()?,
            mode: mode.parse()?,
        })
    }
}

/// What an estimator predicts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "task", content = "n", rename_all = "snake_case")]
pub enum Task {
    /// Six-way softmax over the number of moving links.
    Count,
    /// The n+1 link lengths of chains with `n` moving links.
    Lengths(usize),
    /// The zero-padded seven-vector of link lengths for any chain.
    EndToEnd,
}

impl Task {
    pub fn outputs(self) -> usize {
        match self {
            Task::Count => MAX_MOVING_LINKS,
            Task::Lengths(n) => n + 1,
            Task::EndToEnd => LENGTH_LABEL_WIDTH,
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Task::Count => f.write_str("count"),
            Task::Lengths(n) => write!(f, "lengths-n{n}"),
            Task::EndToEnd => f.write_str("end-to-end"),
        }
    }
}

pub const TRUNK_CHANNELS: [usize; 4] = [8, 16, 32, 32];
pub const ENCODER_CHANNELS: [usize; 3] = [8, 16, 32];
pub const COUNTER_HIDDEN: usize = 128;
pub const ENCODER_FEATURES: usize = 64;
pub const LSTM_HIDDEN: usize = 64;
pub const REGRESSOR_HIDDEN: usize = 512;

fn pool_window(extent: usize) -> usize {
    if extent >= 2 {
        2
    } else {
        1
    }
}

fn check_dims(d: usize, h: usize, w: usize) -> Result<()> {
    if d == 0 || h < 2 || w < 2 {
        return Err(invalid(format!(
            "input {d}×{h}×{w} is too small for the convolution stack"
        )));
    }
    Ok(())
}

/// Four 3×3×3 convolution blocks, each followed by relu and a max-pool that
/// halves every axis still at least two long. Ends flattened.
pub fn conv3d_trunk(d: usize, h: usize, w: usize) -> Result<Vec<LayerSpec>> {
    check_dims(d, h, w)?;
    let mut dims = [d, h, w];
    let mut specs = Vec::new();
    for filters in TRUNK_CHANNELS {
        specs.push(LayerSpec::Conv3d {
            filters,
            kernel: [3, 3, 3],
            stride: [1, 1, 1],
            padding: [1, 1, 1],
        });
        specs.push(LayerSpec::Relu);
        let window = dims.map(pool_window);
        specs.push(LayerSpec::MaxPool3d { window });
        for a in 0..3 {
            dims[a] /= window[a];
        }
    }
    specs.push(LayerSpec::Flatten { keep: 0 });
    Ok(specs)
}

pub fn counter_conv3d_specs(d: usize, h: usize, w: usize) -> Result<Vec<LayerSpec>> {
    let mut specs = conv3d_trunk(d, h, w)?;
    specs.extend([
        LayerSpec::Dense {
            units: COUNTER_HIDDEN,
        },
        LayerSpec::Relu,
        LayerSpec::Dense {
            units: MAX_MOVING_LINKS,
        },
        LayerSpec::Softmax,
    ]);
    Ok(specs)
}

/// Per-frame conv2d encoder shared across the D steps, then an LSTM over steps.
pub fn counter_cnn_lstm_specs(d: usize, h: usize, w: usize) -> Result<Vec<LayerSpec>> {
    check_dims(d, h, w)?;
    let mut dims = [h, w];
    let mut specs = Vec::new();
    for filters in ENCODER_CHANNELS {
        specs.push(LayerSpec::Conv2d {
            filters,
            kernel: [3, 3],
            stride: [1, 1],
            padding: [1, 1],
        });
        specs.push(LayerSpec::Relu);
        let window = dims.map(pool_window);
        specs.push(LayerSpec::MaxPool2d { window });
        dims = [dims[0] / window[0], dims[1] / window[1]];
    }
    specs.extend([
        LayerSpec::Flatten { keep: 1 },
        LayerSpec::Dense {
            units: ENCODER_FEATURES,
        },
        LayerSpec::Relu,
        LayerSpec::Lstm {
            hidden: LSTM_HIDDEN,
        },
        LayerSpec::Dense {
            units: MAX_MOVING_LINKS,
        },
        LayerSpec::Softmax,
    ]);
    Ok(specs)
}

fn regression_head(outputs: usize) -> [LayerSpec; 4] {
    [
        LayerSpec::Dense {
            units: REGRESSOR_HIDDEN,
        },
        LayerSpec::Relu,
        LayerSpec::Dense {
            units: REGRESSOR_HIDDEN,
        },
        LayerSpec::Dense { units: outputs },
    ]
}

pub fn length_regressor_specs(n: usize, d: usize, h: usize, w: usize) -> Result<Vec<LayerSpec>> {
    if !(1..=MAX_MOVING_LINKS).contains(&n) {
        return Err(invalid(format!(
            "regressors exist for 1..={MAX_MOVING_LINKS} moving links, not {n}"
        )));
    }
    let mut specs = conv3d_trunk(d, h, w)?;
    specs.extend(regression_head(n + 1));
    Ok(specs)
}

pub fn end_to_end_specs(d: usize, h: usize, w: usize) -> Result<Vec<LayerSpec>> {
    let mut specs = conv3d_trunk(d, h, w)?;
    specs.extend(regression_head(LENGTH_LABEL_WIDTH));
    Ok(specs)
}

/// Layer stack for `task` on `arch` with D×H×W single-channel input.
pub fn specs_for(task: Task, arch: Architecture, d: usize, h: usize, w: usize) -> Result<Vec<LayerSpec>> {
    match (task, arch.network) {
        (Task::Count, Network::Conv3d) => counter_conv3d_specs(d, h, w),
        (Task::Count, Network::CnnLstm) => counter_cnn_lstm_specs(d, h, w),
        (Task::Lengths(n), Network::Conv3d) => length_regressor_specs(n, d, h, w),
        (Task::EndToEnd, Network::Conv3d) => end_to_end_specs(d, h, w),
        (task, Network::CnnLstm) => Err(invalid(format!(
            "{task} estimators use the conv3d trunk, not {arch}"
        ))),
    }
}
