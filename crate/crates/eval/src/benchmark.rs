//! Train-then-test runs over a split dataset, producing report rows.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use kinchain_core::chain::{LENGTH_LABEL_WIDTH, MAX_MOVING_LINKS};
use kinchain_core::dataset::{load_instance, DatasetManifest, InstanceRecord, SampleStack, Split, StackMode};
use kinchain_models::{
    train, Architecture, EpochRecord, Estimator, NaivePipeline, Network, StackSource, Task, TrainConfig,
};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, EvalError, Result};
use crate::metrics::{accuracy, confusion, mean_length_error, ConfusionMatrix};
use crate::report::{reference_value, BenchmarkReport, Evaluation, ReportRow};

/// Instances of each split, held in memory.
#[derive(Clone, Debug, Default)]
pub struct SplitData {
    pub train: Vec<InstanceRecord>,
    pub val: Vec<InstanceRecord>,
    pub test: Vec<InstanceRecord>,
}

impl SplitData {
    /// Loads every split instance, keeping every `stride`-th timestep.
    pub fn load(manifest: &DatasetManifest, dir: &Path, stride: usize) -> Result<SplitData> {
        Self::load_only(manifest, dir, stride, &[Split::Train, Split::Val, Split::Test])
    }

    /// Like [`SplitData::load`] for the listed splits only.
    pub fn load_only(manifest: &DatasetManifest, dir: &Path, stride: usize, splits: &[Split]) -> Result<SplitData> {
        let mut data = SplitData::default();
        for entry in &manifest.instances {
            let Some(split) = entry.split.filter(|s| splits.contains(s)) else { continue };
            let inst = load_instance(entry, dir)?;
            let inst = if stride > 1 { inst.subsample(stride) } else { inst };
            match split {
                Split::Train => data.train.push(inst),
                Split::Val => data.val.push(inst),
                Split::Test => data.test.push(inst),
            }
        }
        Ok(data)
    }

    fn require(&self) -> Result<()> {
        if self.train.is_empty() {
            return Err(EvalError::InvalidState("the dataset has no training split".into()));
        }
        if self.test.is_empty() {
            return Err(EvalError::InvalidState("the dataset has no test split".into()));
        }
        Ok(())
    }

    /// Stack dims for an input mode, and the depth scale (1 / far plane).
    fn input(&self, mode: StackMode) -> ([usize; 3], f32) {
        let i = &self.train[0];
        let d = match mode {
            StackMode::Multiview => i.cameras,
            StackMode::Temporal => i.timesteps,
        };
        ([d, i.height, i.width], (1.0 / i.params.rig.far) as f32)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkEntry {
    pub arch: Architecture,
    pub evaluation: Evaluation,
}

impl fmt::Display for BenchmarkEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let e = match self.evaluation {
            Evaluation::Count => "count",
            Evaluation::Lengths => "lengths",
            Evaluation::EndToEnd => "end-to-end",
        };
        write!(f, "{}:{e}", self.arch)
    }
}

/// `ARCH[:evaluation]`, e.g. `CONV3D-Depth-MV:end-to-end`; counting by default.
impl FromStr for BenchmarkEntry {
    type Err = EvalError;
    fn from_str(s: &str) -> Result<Self> {
        let (arch, evaluation) = match s.split_once(':') {
            Some((a, e)) => (a, e.parse()?),
            None => (s, Evaluation::Count),
        };
        Ok(BenchmarkEntry {
            arch: arch.parse()?,
            evaluation,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub train: TrainConfig,
    /// Evenly spaced test stacks per instance; 0 means every stack.
    pub test_stacks_per_instance: usize,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            train: TrainConfig::default(),
            test_stacks_per_instance: 0,
        }
    }
}

/// Progress notifications from [`run_benchmark`].
#[derive(Debug)]
pub enum BenchmarkEvent<'a> {
    Training { arch: Architecture, task: Task },
    Epoch { arch: Architecture, task: Task, record: &'a EpochRecord },
    Row(&'a ReportRow),
}

pub struct BenchmarkOutcome {
    pub report: BenchmarkReport,
    pub confusions: Vec<(Architecture, ConfusionMatrix)>,
    /// Every trained network, counters first within each architecture.
    pub estimators: Vec<Estimator>,
}

fn test_stacks(src: &StackSource<'_>, per_instance: usize) -> Result<Vec<SampleStack>> {
    Ok(if per_instance == 0 {
        src.all_stacks()?
    } else {
        src.spaced_stacks(per_instance)?
    })
}

struct Runner<'a, F> {
    data: &'a SplitData,
    cfg: &'a BenchmarkConfig,
    on_event: F,
    trained: Vec<Estimator>,
}

fn source(split: &[InstanceRecord], arch: Architecture) -> StackSource<'_> {
    StackSource::new(split.iter().collect(), arch.modality, arch.mode)
}

impl<F: FnMut(BenchmarkEvent<'_>)> Runner<'_, F> {

    /// Index into `trained` of a network for `(arch, task)`, training it on first use.
    fn estimator(&mut self, arch: Architecture, task: Task) -> Result<usize> {
        if let Some(i) = self.trained.iter().position(|e| e.arch == arch && e.task == task) {
            return Ok(i);
        }
        let (dims, scale) = self.data.input(arch.mode);
        let seed = self.cfg.train.seed;
        let mut est = Estimator::new(task, arch, dims, scale, seed)?;
        let (train_src, val_src) = (source(&self.data.train, arch), source(&self.data.val, arch));
        let (train_src, val_src) = match task {
            Task::Lengths(n) => (train_src.with_links(n), val_src.with_links(n)),
            _ => (train_src, val_src),
        };
        if train_src.is_empty() {
            return Err(EvalError::InvalidState(format!("no training instances for {task}")));
        }
        (self.on_event)(BenchmarkEvent::Training { arch, task });
        let on_event = &mut self.on_event;
        train(&mut est, &train_src, Some(&val_src), &self.cfg.train, |record| {
            on_event(BenchmarkEvent::Epoch { arch, task, record })
        })?;
        self.trained.push(est);
        Ok(self.trained.len() - 1)
    }

    fn row(&mut self, entry: BenchmarkEntry) -> Result<(ReportRow, Option<ConfusionMatrix>)> {
        let arch = entry.arch;
        if entry.evaluation != Evaluation::Count && arch.network != Network::Conv3d {
            return Err(invalid(format!("length estimation needs a CONV3D trunk, got {arch}")));
        }
        let per = self.cfg.test_stacks_per_instance;
        let stacks = test_stacks(&source(&self.data.test, arch), per)?;
        let refs: Vec<&SampleStack> = stacks.iter().collect();
        let truths_n: Vec<usize> = refs.iter().map(|s| s.labels.count.moving_links()).collect();
        let truths_l: Vec<[f64; LENGTH_LABEL_WIDTH]> = refs.iter().map(|s| s.labels.length.padded).collect();
        let mut row = blank_row(self.data, arch, entry.evaluation, refs.len(), self.cfg.train.stacks_per_instance);
        let mut matrix = None;
        match entry.evaluation {
            Evaluation::Count => {
                let i = self.estimator(arch, Task::Count)?;
                let preds = self.trained[i].predict_counts(&refs)?;
                row.accuracy = Some(accuracy(&preds, &truths_n)?);
                matrix = Some(confusion(&preds, &truths_n)?);
            }
            Evaluation::EndToEnd => {
                let i = self.estimator(arch, Task::EndToEnd)?;
                let preds = self.trained[i].predict_lengths(&refs)?;
                row.error = Some(mean_length_error(&truths_l, &preds)?);
            }
            Evaluation::Lengths => {
                let c = self.estimator(arch, Task::Count)?;
                let mut idx = vec![c];
                for n in 1..=MAX_MOVING_LINKS {
                    idx.push(self.estimator(arch, Task::Lengths(n))?);
                }
                let preds = naive_predict(&mut self.trained, &idx, &refs)?;
                let lengths: Vec<_> = preds.iter().map(|p| p.1).collect();
                row.error = Some(mean_length_error(&truths_l, &lengths)?);
            }
        }
        Ok((row, matrix))
    }
}

/// Runs the two-stage pipeline with `idx[0]` as counter and `idx[n]` as the n-link regressor.
fn naive_predict(
    trained: &mut [Estimator],
    idx: &[usize],
    stacks: &[&SampleStack],
) -> Result<Vec<(usize, [f64; LENGTH_LABEL_WIDTH])>> {
    let mut slots: Vec<Option<&mut Estimator>> = trained.iter_mut().map(Some).collect();
    let counter = slots[idx[0]].take().expect("distinct estimator indices");
    let regressors = idx[1..]
        .iter()
        .map(|&i| slots[i].take())
        .collect::<Vec<_>>();
    let mut pipeline = NaivePipeline::new(counter, regressors)?;
    Ok(pipeline.predict(stacks)?)
}

fn blank_row(data: &SplitData, arch: Architecture, evaluation: Evaluation, test_stacks: usize, spi: usize) -> ReportRow {
    let (dims, _) = data.input(arch.mode);
    ReportRow {
        arch,
        evaluation,
        temporal: if arch.mode == StackMode::Temporal { dims[0] } else { 0 },
        views: if arch.mode == StackMode::Multiview { dims[0] } else { 0 },
        train_instances: data.train.len(),
        test_instances: data.test.len(),
        train_stacks: data.train.len() * spi.min(dims[0]),
        test_stacks,
        accuracy: None,
        error: None,
        reference: reference_value(arch, evaluation),
    }
}

/// Scores an already trained network on the test split. A per-count
/// regressor only sees test chains of its own size.
pub fn score_estimator(
    est: &mut Estimator,
    data: &SplitData,
    cfg: &BenchmarkConfig,
) -> Result<(ReportRow, Option<ConfusionMatrix>)> {
    data.require()?;
    let arch = est.arch;
    let test = source(&data.test, arch);
    let test = match est.task {
        Task::Lengths(n) => test.with_links(n),
        _ => test,
    };
    if test.is_empty() {
        return Err(EvalError::InvalidState(format!("no test instances for {}", est.task)));
    }
    let stacks = test_stacks(&test, cfg.test_stacks_per_instance)?;
    let refs: Vec<&SampleStack> = stacks.iter().collect();
    let evaluation = match est.task {
        Task::Count => Evaluation::Count,
        Task::Lengths(_) => Evaluation::Lengths,
        Task::EndToEnd => Evaluation::EndToEnd,
    };
    let mut row = blank_row(data, arch, evaluation, refs.len(), cfg.train.stacks_per_instance);
    row.test_instances = test.len();
    let mut matrix = None;
    if est.task == Task::Count {
        let truths: Vec<usize> = refs.iter().map(|s| s.labels.count.moving_links()).collect();
        let preds = est.predict_counts(&refs)?;
        row.accuracy = Some(accuracy(&preds, &truths)?);
        matrix = Some(confusion(&preds, &truths)?);
    } else {
        let truths: Vec<[f64; LENGTH_LABEL_WIDTH]> = refs.iter().map(|s| s.labels.length.padded).collect();
        row.error = Some(mean_length_error(&truths, &est.predict_lengths(&refs)?)?);
    }
    Ok((row, matrix))
}

/// Trains what each entry needs on the train split and scores it on the test split.
///
/// Networks are shared between entries: a `Lengths` row reuses the counter
/// trained for a `Count` row of the same architecture.
pub fn run_benchmark(
    data: &SplitData,
    entries: &[BenchmarkEntry],
    cfg: &BenchmarkConfig,
    on_event: impl FnMut(BenchmarkEvent<'_>),
) -> Result<BenchmarkOutcome> {
    if entries.is_empty() {
        return Err(invalid("no architectures requested"));
    }
    cfg.train.validate()?;
    data.require()?;
    let mut runner = Runner {
        data,
        cfg,
        on_event,
        trained: Vec::new(),
    };
    let mut report = BenchmarkReport::default();
    let mut confusions = Vec::new();
    for &entry in entries {
        let (row, matrix) = runner.row(entry)?;
        (runner.on_event)(BenchmarkEvent::Row(&row));
        if let Some(m) = matrix {
            confusions.push((entry.arch, m));
        }
        report.rows.push(row);
    }
    Ok(BenchmarkOutcome {
        report,
        confusions,
        estimators: runner.trained,
    })
}
