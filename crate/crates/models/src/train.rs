//! Mini-batch training over stacks cut from rendered instances.

use std::fmt::Write as _;

use kinchain_core::dataset::{stack_multiview, stack_temporal, InstanceRecord, Modality, SampleStack, StackMode};
use kinchain_nn::{Loss, Optimizer, OptimizerKind};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arch::Task;
use crate::error::{invalid, ModelError, Result};
use crate::estimator::Estimator;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    /// Stacks drawn at random from every training instance each epoch.
    pub stacks_per_instance: usize,
    /// Evenly spaced stacks per validation instance (0 disables validation).
    pub val_stacks_per_instance: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 16,
            optimizer: OptimizerKind::adam(1e-3),
            seed: 0,
            stacks_per_instance: 1,
            val_stacks_per_instance: 2,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.stacks_per_instance == 0 {
            return Err(invalid("epochs, batch size and stacks per instance must be positive"));
        }
        let lr = self.optimizer.lr();
        if !(lr.is_finite() && lr >= 0.0) {
            return Err(invalid(format!("learning rate must be finite and non-negative, got {lr}")));
        }
        Ok(())
    }
}

/// The stacks one input mode can cut from a set of instances: every timestep
/// for multiview input, every camera for temporal input.
#[derive(Clone, Debug)]
pub struct StackSource<'a> {
    instances: Vec<&'a InstanceRecord>,
    pub modality: Modality,
    pub mode: StackMode,
}

impl<'a> StackSource<'a> {
    pub fn new(instances: Vec<&'a InstanceRecord>, modality: Modality, mode: StackMode) -> Self {
        StackSource {
            instances,
            modality,
            mode,
        }
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn instances(&self) -> &[&'a InstanceRecord] {
        &self.instances
    }

    /// Only instances with `n` moving links.
    pub fn with_links(&self, n: usize) -> StackSource<'a> {
        StackSource {
            instances: self
                .instances
                .iter()
                .copied()
                .filter(|i| i.config.n() == n)
                .collect(),
            ..*self
        }
    }

    pub fn views(&self, i: usize) -> usize {
        let inst = self.instances[i];
        match self.mode {
            StackMode::Multiview => inst.timesteps,
            StackMode::Temporal => inst.cameras,
        }
    }

    pub fn stack(&self, i: usize, view: usize) -> Result<SampleStack> {
        let inst = self.instances[i];
        Ok(match self.mode {
            StackMode::Multiview => stack_multiview(inst, view, self.modality)?,
            StackMode::Temporal => stack_temporal(inst, view, self.modality)?,
        })
    }

    /// `per_instance` evenly spaced views of every instance (all views when
    /// an instance has fewer).
    pub fn spaced_stacks(&self, per_instance: usize) -> Result<Vec<SampleStack>> {
        let mut out = Vec::new();
        for i in 0..self.len() {
            let v = self.views(i);
            let k = per_instance.min(v);
            for j in 0..k {
                out.push(self.stack(i, j * v / k)?);
            }
        }
        Ok(out)
    }

    /// Every stack of every instance.
    pub fn all_stacks(&self) -> Result<Vec<SampleStack>> {
        self.spaced_stacks(usize::MAX)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// Accuracy for counters, mean length error for length estimators.
    pub val_metric: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub records: Vec<EpochRecord>,
}

impl History {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_metric\n");
        for r in &self.records {
            let val = r.val_metric.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(s, "{},{},{}", r.epoch, r.train_loss, val);
        }
        s
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }
}

pub fn loss_for(task: Task) -> Loss {
    match task {
        Task::Count => Loss::CrossEntropy,
        Task::Lengths(_) | Task::EndToEnd => Loss::SumSquared,
    }
}

/// Validation accuracy (counters) or mean squared length error.
pub fn quick_metric(est: &mut Estimator, stacks: &[SampleStack]) -> Result<f64> {
    let refs: Vec<&SampleStack> = stacks.iter().collect();
    if refs.is_empty() {
        return Err(invalid("no stacks to evaluate"));
    }
    Ok(match est.task {
        Task::Count => {
            let preds = est.predict_counts(&refs)?;
            let hits = preds
                .iter()
                .zip(&refs)
                .filter(|(p, s)| **p == s.labels.count.moving_links())
                .count();
            hits as f64 / refs.len() as f64
        }
        _ => {
            let preds = est.predict_lengths(&refs)?;
            let total: f64 = preds
                .iter()
                .zip(&refs)
                .map(|(p, s)| {
                    p.iter()
                        .zip(&s.labels.length.padded)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                })
                .sum();
            total / refs.len() as f64
        }
    })
}

/// Trains `est` in place; `on_epoch` sees each record as it is produced.
pub fn train(
    est: &mut Estimator,
    data: &StackSource<'_>,
    val: Option<&StackSource<'_>>,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<History> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(invalid("no training instances"));
    }
    if data.modality != est.arch.modality || data.mode != est.arch.mode {
        return Err(invalid(format!(
            "{} cannot train on {}-{} stacks",
            est.arch, data.modality, data.mode
        )));
    }
    let val_stacks = match val {
        Some(v) if !v.is_empty() && cfg.val_stacks_per_instance > 0 => {
            Some(v.spaced_stacks(cfg.val_stacks_per_instance)?)
        }
        _ => None,
    };
    let loss = loss_for(est.task);
    let mut opt = Optimizer::new(cfg.optimizer);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut history = History::default();
    for epoch in 1..=cfg.epochs {
        let mut picks = Vec::with_capacity(data.len() * cfg.stacks_per_instance);
        for i in 0..data.len() {
            for _ in 0..cfg.stacks_per_instance {
                picks.push((i, rng.gen_range(0..data.views(i))));
            }
        }
        picks.shuffle(&mut rng);
        let mut total = 0.0;
        for (b, batch) in picks.chunks(cfg.batch_size).enumerate() {
            let stacks = batch
                .iter()
                .map(|&(i, v)| data.stack(i, v))
                .collect::<Result<Vec<_>>>()?;
            let refs: Vec<&SampleStack> = stacks.iter().collect();
            let x = est.encode(&refs)?;
            let t = est.targets(&refs)?;
            est.graph.zero_grad();
            let y = est.graph.forward(x)?;
            let (l, g) = loss.evaluate(&y, &t)?;
            if !l.is_finite() {
                return Err(ModelError::NonFiniteLoss {
                    epoch,
                    batch: b,
                    loss: l as f64,
                });
            }
            est.graph.backward(g)?;
            opt.step(&mut est.graph.params_mut())?;
            total += l as f64 * batch.len() as f64;
        }
        let val_metric = match &val_stacks {
            Some(v) => Some(quick_metric(est, v)?),
            None => None,
        };
        let record = EpochRecord {
            epoch,
            train_loss: total / picks.len() as f64,
            val_metric,
        };
        on_epoch(&record);
        history.records.push(record);
    }
    Ok(history)
}
