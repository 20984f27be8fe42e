use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use clap::Args;
use kinchain_core::dataset::{DatasetManifest, Split, StackMode};
use kinchain_eval::SplitData;
use kinchain_models::{train as fit, Architecture, Estimator, StackSource, Task, TrainConfig};
use kinchain_nn::OptimizerKind;
use serde::Deserialize;

use crate::config::{data_dir, layer_fields, shell_path};

#[derive(Clone, Debug, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct TrainArgs {
    /// Dataset directory [default: $KINCHAIN_DATA]
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output directory for checkpoints and histories [default: <data>/runs]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Architecture, e.g. CONV3D-Depth-MV or LSTM-Grey-TMP
    #[arg(long)]
    pub arch: Option<String>,
    /// count, lengths:N (N = 1..6) or end-to-end
    #[arg(long)]
    pub task: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// adam or sgd
    #[arg(long)]
    pub optimizer: Option<String>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// SGD momentum
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Keep every k-th timestep when loading instances
    #[arg(long)]
    pub stride: Option<usize>,
    /// Random stacks drawn from each training instance per epoch
    #[arg(long)]
    pub stacks_per_instance: Option<usize>,
    /// Evenly spaced validation stacks per instance (0 disables validation)
    #[arg(long)]
    pub val_stacks_per_instance: Option<usize>,
}

/// Training flags shared by `train` and `eval`.
pub struct TrainFlags {
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub optimizer: Option<String>,
    pub lr: Option<f64>,
    pub momentum: Option<f64>,
    pub seed: Option<u64>,
    pub stacks_per_instance: Option<usize>,
    pub val_stacks_per_instance: Option<usize>,
}

impl TrainFlags {
    pub fn resolve(self) -> Result<TrainConfig> {
        let d = TrainConfig::default();
        let optimizer = match self.optimizer.as_deref().unwrap_or("adam") {
            "adam" => {
                ensure!(self.momentum.is_none(), "--momentum only applies to sgd");
                OptimizerKind::adam(self.lr.unwrap_or(d.optimizer.lr()))
            }
            "sgd" => OptimizerKind::Sgd {
                lr: self.lr.unwrap_or(1e-2),
                momentum: self.momentum.unwrap_or(0.9),
            },
            other => bail!("unknown optimizer {other:?} (expected adam or sgd)"),
        };
        let cfg = TrainConfig {
            epochs: self.epochs.unwrap_or(d.epochs),
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            optimizer,
            seed: self.seed.unwrap_or(d.seed),
            stacks_per_instance: self.stacks_per_instance.unwrap_or(d.stacks_per_instance),
            val_stacks_per_instance: self.val_stacks_per_instance.unwrap_or(d.val_stacks_per_instance),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn train_flags_line(cfg: &TrainConfig) -> String {
    let opt = match cfg.optimizer {
        OptimizerKind::Adam { lr, .. } => format!("--optimizer adam --lr {lr}"),
        OptimizerKind::Sgd { lr, momentum } => format!("--optimizer sgd --lr {lr} --momentum {momentum}"),
    };
    format!(
        "--epochs {} --batch-size {} {opt} --seed {} --stacks-per-instance {} --val-stacks-per-instance {}",
        cfg.epochs, cfg.batch_size, cfg.seed, cfg.stacks_per_instance, cfg.val_stacks_per_instance
    )
}

pub fn parse_task(s: &str) -> Result<Task> {
    let lower = s.trim().to_ascii_lowercase();
    Ok(match lower.as_str() {
        "count" => Task::Count,
        "end-to-end" | "e2e" => Task::EndToEnd,
        _ => match lower.strip_prefix("lengths:") {
            Some(n) => {
                let n: usize = n.parse().with_context(|| format!("task {s:?}"))?;
                ensure!((1..=6).contains(&n), "lengths:N needs N in 1..=6, got {n}");
                Task::Lengths(n)
            }
            None => bail!("unknown task {s:?} (expected count, lengths:N or end-to-end)"),
        },
    })
}

pub fn task_arg(task: Task) -> String {
    match task {
        Task::Count => "count".into(),
        Task::Lengths(n) => format!("lengths:{n}"),
        Task::EndToEnd => "end-to-end".into(),
    }
}

impl TrainArgs {
    pub fn layer(mut self, file: TrainArgs) -> TrainArgs {
        layer_fields!(self, file; data, out, arch, task, epochs, batch_size, optimizer, lr, momentum,
            seed, stride, stacks_per_instance, val_stacks_per_instance);
        self
    }

    pub fn resolve(self) -> Result<TrainRunConfig> {
        let data = data_dir(self.data, "dataset directory (--data)")?;
        let out = self.out.unwrap_or_else(|| data.join("runs"));
        let arch: Architecture = self.arch.as_deref().unwrap_or("CONV3D-Depth-MV").parse()?;
        let task = parse_task(self.task.as_deref().unwrap_or("count"))?;
        ensure!(
            task == Task::Count || arch.network == kinchain_models::Network::Conv3d,
            "{arch} only supports the count task"
        );
        let stride = self.stride.unwrap_or(1);
        ensure!(stride >= 1, "--stride must be at least 1");
        let train = TrainFlags {
            epochs: self.epochs,
            batch_size: self.batch_size,
            optimizer: self.optimizer,
            lr: self.lr,
            momentum: self.momentum,
            seed: self.seed,
            stacks_per_instance: self.stacks_per_instance,
            val_stacks_per_instance: self.val_stacks_per_instance,
        }
        .resolve()?;
        Ok(TrainRunConfig {
            data,
            out,
            arch,
            task,
            stride,
            train,
        })
    }
}

#[derive(Clone, Debug)]
pub struct TrainRunConfig {
    pub data: PathBuf,
    pub out: PathBuf,
    pub arch: Architecture,
    pub task: Task,
    pub stride: usize,
    pub train: TrainConfig,
}

impl TrainRunConfig {
    pub fn command_line(&self) -> String {
        format!(
            "kinchain train --data {} --out {} --arch {} --task {} --stride {} {}",
            shell_path(&self.data),
            shell_path(&self.out),
            self.arch,
            task_arg(self.task),
            self.stride,
            train_flags_line(&self.train)
        )
    }

    /// Checkpoint path; the history CSV sits next to it.
    pub fn checkpoint_path(&self) -> PathBuf {
        self.out.join(format!("{}_{}.knn", self.arch, task_arg(self.task).replace(':', "")))
    }
}

/// Checks that a dataset can feed `arch` before any work starts.
pub fn check_dataset(manifest: &DatasetManifest, arch: Architecture) -> Result<()> {
    if arch.mode == StackMode::Multiview && manifest.params.rig.count < 2 {
        bail!("{arch} needs at least two cameras, the dataset has {}", manifest.params.rig.count);
    }
    Ok(())
}

pub fn train(cfg: &TrainRunConfig) -> Result<()> {
    let manifest = DatasetManifest::load(&cfg.data)
        .with_context(|| format!("loading dataset {}", cfg.data.display()))?;
    check_dataset(&manifest, cfg.arch)?;
    let start = Instant::now();
    let data = SplitData::load_only(&manifest, &cfg.data, cfg.stride, &[Split::Train, Split::Val])?;
    ensure!(!data.train.is_empty(), "the dataset has no training split");
    let first = &data.train[0];
    let dims = match cfg.arch.mode {
        StackMode::Multiview => [first.cameras, first.height, first.width],
        StackMode::Temporal => [first.timesteps, first.height, first.width],
    };
    let scale = (1.0 / manifest.params.rig.far) as f32;
    let mut est = Estimator::new(cfg.task, cfg.arch, dims, scale, cfg.train.seed)?;
    let src = |v| StackSource::new(v, cfg.arch.modality, cfg.arch.mode);
    let (mut tr, mut va) = (src(data.train.iter().collect()), src(data.val.iter().collect()));
    if let Task::Lengths(n) = cfg.task {
        tr = tr.with_links(n);
        va = va.with_links(n);
    }
    println!(
        "{} {}: {} parameters, {} training instances, {} validation instances (loaded in {:.1?})",
        cfg.arch,
        cfg.task,
        est.param_count(),
        tr.len(),
        va.len(),
        start.elapsed()
    );
    let history = fit(&mut est, &tr, Some(&va), &cfg.train, |r| {
        let val = r.val_metric.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into());
        println!("epoch {:>3}  loss {:.5}  val {val}  ({:.1?})", r.epoch, r.train_loss, start.elapsed());
    })?;
    fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    let ckpt = cfg.checkpoint_path();
    est.save(&ckpt, cfg.train.seed, cfg.train.epochs)?;
    let hist = ckpt.with_file_name(format!(
        "{}_history.csv",
        ckpt.file_stem().and_then(|s| s.to_str()).unwrap_or("model")
    ));
    fs::write(&hist, history.to_csv())?;
    println!("wrote {} and {}", ckpt.display(), hist.display());
    Ok(())
}
