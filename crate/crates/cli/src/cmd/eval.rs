use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{ensure, Context, Result};
use clap::Args;
use kinchain_core::dataset::{DatasetManifest, Split};
use kinchain_eval::{
    run_benchmark, score_estimator, BenchmarkConfig, BenchmarkEntry, BenchmarkEvent, BenchmarkReport,
    ConfusionMatrix, SplitData,
};
use kinchain_models::{Architecture, Estimator};
use serde::Deserialize;

use super::train::{check_dataset, train_flags_line, TrainFlags};
use crate::config::{data_dir, layer_fields, shell_path};

#[derive(Clone, Debug, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct EvalArgs {
    /// Dataset directory [default: $KINCHAIN_DATA]
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Report directory [default: <data>/reports]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// ARCH[:count|lengths|end-to-end] to train and score; repeatable
    #[arg(long = "arch")]
    pub arch: Vec<String>,
    /// Saved estimator to score instead of training; repeatable
    #[arg(long = "checkpoint")]
    pub checkpoint: Vec<PathBuf>,
    /// Write report and confusion files
    #[arg(long)]
    #[serde(default)]
    pub report: bool,
    /// Keep every k-th timestep when loading instances
    #[arg(long)]
    pub stride: Option<usize>,
    /// Evenly spaced test stacks per instance (0 = all)
    #[arg(long)]
    pub test_stacks_per_instance: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub optimizer: Option<String>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub stacks_per_instance: Option<usize>,
    #[arg(long)]
    pub val_stacks_per_instance: Option<usize>,
}

impl EvalArgs {
    pub fn layer(mut self, file: EvalArgs) -> EvalArgs {
        layer_fields!(self, file; data, out, stride, test_stacks_per_instance, epochs, batch_size,
            optimizer, lr, momentum, seed, stacks_per_instance, val_stacks_per_instance);
        if self.arch.is_empty() {
            self.arch = file.arch;
        }
        if self.checkpoint.is_empty() {
            self.checkpoint = file.checkpoint;
        }
        self.report |= file.report;
        self
    }

    pub fn resolve(self) -> Result<EvalConfig> {
        let data = data_dir(self.data, "dataset directory (--data)")?;
        let out = self.out.unwrap_or_else(|| data.join("reports"));
        let entries = self
            .arch
            .iter()
            .map(|a| a.parse::<BenchmarkEntry>())
            .collect::<std::result::Result<Vec<_>, _>>()?;
        ensure!(
            !entries.is_empty() || !self.checkpoint.is_empty(),
            "nothing to evaluate: pass --arch or --checkpoint"
        );
        for c in &self.checkpoint {
            ensure!(c.is_file(), "checkpoint {} does not exist", c.display());
        }
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
        Ok(EvalConfig {
            data,
            out,
            entries,
            checkpoints: self.checkpoint,
            report: self.report,
            stride,
            bench: BenchmarkConfig {
                train,
                test_stacks_per_instance: self.test_stacks_per_instance.unwrap_or(0),
            },
        })
    }
}

#[derive(Clone, Debug)]
pub struct EvalConfig {
    pub data: PathBuf,
    pub out: PathBuf,
    pub entries: Vec<BenchmarkEntry>,
    pub checkpoints: Vec<PathBuf>,
    pub report: bool,
    pub stride: usize,
    pub bench: BenchmarkConfig,
}

impl EvalConfig {
    pub fn command_line(&self) -> String {
        let mut s = format!("kinchain eval --data {} --out {}", shell_path(&self.data), shell_path(&self.out));
        for e in &self.entries {
            s.push_str(&format!(" --arch {e}"));
        }
        for c in &self.checkpoints {
            s.push_str(&format!(" --checkpoint {}", shell_path(c)));
        }
        if self.report {
            s.push_str(" --report");
        }
        s.push_str(&format!(
            " --stride {} --test-stacks-per-instance {} {}",
            self.stride,
            self.bench.test_stacks_per_instance,
            train_flags_line(&self.bench.train)
        ));
        s
    }
}

pub fn eval(cfg: &EvalConfig) -> Result<BenchmarkReport> {
    let manifest = DatasetManifest::load(&cfg.data)
        .with_context(|| format!("loading dataset {}", cfg.data.display()))?;
    for e in &cfg.entries {
        check_dataset(&manifest, e.arch)?;
    }
    // checkpoints are read up front so a bad file fails before any training
    let mut loaded = Vec::new();
    for path in &cfg.checkpoints {
        let (est, _) = Estimator::load(path).with_context(|| format!("loading {}", path.display()))?;
        check_dataset(&manifest, est.arch)?;
        loaded.push(est);
    }
    let start = Instant::now();
    let splits: &[Split] = if cfg.entries.is_empty() {
        &[Split::Train, Split::Test]
    } else {
        &[Split::Train, Split::Val, Split::Test]
    };
    let data = SplitData::load_only(&manifest, &cfg.data, cfg.stride, splits)?;
    let mut report = BenchmarkReport::default();
    let mut confusions: Vec<(Architecture, ConfusionMatrix)> = Vec::new();
    if !cfg.entries.is_empty() {
        let outcome = run_benchmark(&data, &cfg.entries, &cfg.bench, |e| match e {
            BenchmarkEvent::Training { arch, task } => println!("training {arch} {task}"),
            BenchmarkEvent::Epoch { record, .. } => {
                let val = record.val_metric.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into());
                println!(
                    "  epoch {:>3}  loss {:.5}  val {val}  ({:.1?})",
                    record.epoch,
                    record.train_loss,
                    start.elapsed()
                );
            }
            BenchmarkEvent::Row(row) => println!("scored {} {}", row.arch, row.evaluation),
        })?;
        report.rows.extend(outcome.report.rows);
        confusions.extend(outcome.confusions);
    }
    for mut est in loaded {
        let (row, matrix) = score_estimator(&mut est, &data, &cfg.bench)?;
        if let Some(m) = matrix {
            confusions.push((est.arch, m));
        }
        report.rows.push(row);
    }
    print!("{}", report.to_text());
    if cfg.report {
        let path = report.write(&cfg.out)?;
        for (i, (arch, m)) in confusions.iter().enumerate() {
            let repeats = confusions[..i].iter().filter(|(a, _)| a == arch).count();
            let stem = match repeats {
                0 => format!("confusion_{arch}"),
                k => format!("confusion_{arch}_{}", k + 1),
            };
            fs::write(cfg.out.join(format!("{stem}.csv")), m.to_csv())?;
            fs::write(cfg.out.join(format!("{stem}.pgm")), m.to_pgm(32))?;
        }
        println!("wrote {}", path.display());
    }
    Ok(report)
}
