//! A trained or trainable network bound to its task and input convention.

use std::path::Path;

use kinchain_core::chain::{LENGTH_LABEL_WIDTH, MAX_MOVING_LINKS};
use kinchain_core::dataset::{Modality, SampleStack};
use kinchain_nn::{load_checkpoint, save_checkpoint, CheckpointMeta, ModelGraph, Tensor};
use serde::{Deserialize, Serialize};

use crate::arch::{specs_for, Architecture, Network, Task};
use crate::error::{invalid, ModelError, Result};

/// Rows per forward pass when predicting.
pub const PREDICT_CHUNK: usize = 16;

#[derive(Clone, Debug)]
pub struct Estimator {
    pub task: Task,
    pub arch: Architecture,
    /// D×H×W of the stacks this network consumes.
    pub dims: [usize; 3],
    /// Depth inputs are multiplied by this (1 / far plane); gray is used as is.
    pub depth_scale: f32,
    pub graph: ModelGraph<f32>,
}

#[derive(Serialize, Deserialize)]
struct Extra {
    task: Task,
    arch: Architecture,
    dims: [usize; 3],
    depth_scale: f32,
}

impl Estimator {
    pub fn new(
        task: Task,
        arch: Architecture,
        dims: [usize; 3],
        depth_scale: f32,
        seed: u64,
    ) -> Result<Self> {
        if !(depth_scale.is_finite() && depth_scale > 0.0) {
            return Err(invalid(format!("depth scale must be positive, got {depth_scale}")));
        }
        let [d, h, w] = dims;
        let specs = specs_for(task, arch, d, h, w)?;
        let graph = ModelGraph::new(&[d, h, w, 1], &specs, seed)?;
        Ok(Estimator {
            task,
            arch,
            dims,
            depth_scale,
            graph,
        })
    }

    pub fn param_count(&self) -> usize {
        self.graph.param_count()
    }

    fn check_stack(&self, s: &SampleStack) -> Result<()> {
        if s.modality != self.arch.modality || s.mode != self.arch.mode {
            return Err(invalid(format!(
                "{} got a {}-{} stack",
                self.arch, s.modality, s.mode
            )));
        }
        if [s.depth, s.height, s.width] != self.dims {
            return Err(invalid(format!(
                "{} expects {:?} stacks, got {:?}",
                self.arch,
                self.dims,
                [s.depth, s.height, s.width]
            )));
        }
        Ok(())
    }

    /// Batch tensor B×D×H×W×1 with input normalization applied.
    pub fn encode(&self, stacks: &[&SampleStack]) -> Result<Tensor<f32>> {
        if stacks.is_empty() {
            return Err(invalid("empty batch"));
        }
        let [d, h, w] = self.dims;
        let mut data = Vec::with_capacity(stacks.len() * d * h * w);
        for s in stacks {
            self.check_stack(s)?;
            match s.modality {
                Modality::Depth => data.extend(s.data.iter().map(|v| v * self.depth_scale)),
                Modality::Gray => data.extend_from_slice(&s.data),
            }
        }
        Ok(Tensor::new(vec![stacks.len(), d, h, w, 1], data)?)
    }

    /// Training targets B×outputs.
    pub fn targets(&self, stacks: &[&SampleStack]) -> Result<Tensor<f32>> {
        let k = self.task.outputs();
        let mut data = Vec::with_capacity(stacks.len() * k);
        for s in stacks {
            match self.task {
                Task::Count => data.extend(s.labels.count.onehot.iter().map(|&v| v as f32)),
                Task::Lengths(n) => {
                    let have = s.labels.count.moving_links();
                    if have != n {
                        return Err(invalid(format!(
                            "the n={n} regressor got a stack with {have} moving links"
                        )));
                    }
                    data.extend(s.labels.length.padded[..=n].iter().map(|&v| v as f32));
                }
                Task::EndToEnd => data.extend(s.labels.length.padded.iter().map(|&v| v as f32)),
            }
        }
        Ok(Tensor::new(vec![stacks.len(), k], data)?)
    }

    /// Raw network outputs, one row per stack.
    pub fn outputs(&mut self, stacks: &[&SampleStack]) -> Result<Vec<Vec<f32>>> {
        let mut rows = Vec::with_capacity(stacks.len());
        for chunk in stacks.chunks(PREDICT_CHUNK) {
            let y = self.graph.forward(self.encode(chunk)?)?;
            let k = self.task.outputs();
            rows.extend(y.data().chunks_exact(k).map(<[f32]>::to_vec));
        }
        Ok(rows)
    }

    /// Predicted numbers of moving links (1..=6).
    pub fn predict_counts(&mut self, stacks: &[&SampleStack]) -> Result<Vec<usize>> {
        if self.task != Task::Count {
            return Err(ModelError::InvalidState(format!("{} is not a counter", self.task)));
        }
        Ok(self.outputs(stacks)?.iter().map(|r| argmax(r) + 1).collect())
    }

    /// Zero-padded length vectors. Regressors pad their n+1 outputs; the
    /// end-to-end network returns its seven outputs unchanged.
    pub fn predict_lengths(&mut self, stacks: &[&SampleStack]) -> Result<Vec<[f64; LENGTH_LABEL_WIDTH]>> {
        let n = match self.task {
            Task::Lengths(n) => n,
            Task::EndToEnd => MAX_MOVING_LINKS,
            Task::Count => {
                return Err(ModelError::InvalidState("a counter does not predict lengths".into()))
            }
        };
        self.outputs(stacks)?
            .iter()
            .map(|r| pad_lengths(n, r))
            .collect()
    }

    pub fn save(&self, path: &Path, seed: u64, epoch: usize) -> Result<()> {
        let extra = Extra {
            task: self.task,
            arch: self.arch,
            dims: self.dims,
            depth_scale: self.depth_scale,
        };
        let meta = CheckpointMeta {
            seed,
            epoch,
            extra: serde_json::to_value(extra).expect("plain data serializes"),
        };
        save_checkpoint(&self.graph, &meta, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<(Estimator, CheckpointMeta)> {
        let (graph, meta) = load_checkpoint::<f32>(path)?;
        let extra: Extra = serde_json::from_value(meta.extra.clone()).map_err(|e| {
            ModelError::InvalidState(format!("{} is not an estimator checkpoint: {e}", path.display()))
        })?;
        let [d, h, w] = extra.dims;
        if graph.specs() != specs_for(extra.task, extra.arch, d, h, w)?.as_slice() {
            return Err(ModelError::InvalidState(format!(
                "{} holds layers that do not match {} {}",
                path.display(),
                extra.arch,
                extra.task
            )));
        }
        Ok((
            Estimator {
                task: extra.task,
                arch: extra.arch,
                dims: extra.dims,
                depth_scale: extra.depth_scale,
                graph,
            },
            meta,
        ))
    }
}

/// Index of the largest value; ties go to the smallest index.
pub fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

/// Places `n + 1` predicted lengths in a seven-vector, zeros above index `n`.
pub fn pad_lengths(n: usize, raw: &[f32]) -> Result<[f64; LENGTH_LABEL_WIDTH]> {
    if n > MAX_MOVING_LINKS || raw.len() < n + 1 {
        return Err(invalid(format!(
            "cannot pad {} outputs for n={n}",
            raw.len()
        )));
    }
    let mut out = [0.0; LENGTH_LABEL_WIDTH];
    for (o, v) in out.iter_mut().zip(&raw[..=n]) {
        *o = *v as f64;
    }
    Ok(out)
}

pub fn build_counter_conv3d(arch: Architecture, dims: [usize; 3], depth_scale: f32, seed: u64) -> Result<Estimator> {
    if arch.network != Network::Conv3d {
        return Err(invalid(format!("{arch} is not a conv3d architecture")));
    }
    Estimator::new(Task::Count, arch, dims, depth_scale, seed)
}

pub fn build_counter_cnn_lstm(arch: Architecture, dims: [usize; 3], depth_scale: f32, seed: u64) -> Result<Estimator> {
    if arch.network != Network::CnnLstm {
        return Err(invalid(format!("{arch} is not a CNN-LSTM architecture")));
    }
    Estimator::new(Task::Count, arch, dims, depth_scale, seed)
}

pub fn build_length_regressor(
    n: usize,
    arch: Architecture,
    dims: [usize; 3],
    depth_scale: f32,
    seed: u64,
) -> Result<Estimator> {
    Estimator::new(Task::Lengths(n), arch, dims, depth_scale, seed)
}

pub fn build_end_to_end(arch: Architecture, dims: [usize; 3], depth_scale: f32, seed: u64) -> Result<Estimator> {
    Estimator::new(Task::EndToEnd, arch, dims, depth_scale, seed)
}
