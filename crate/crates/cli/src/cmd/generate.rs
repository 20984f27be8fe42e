use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::{bail, ensure, Context, Result};
use clap::Args;
use kinchain_core::chain::MAX_MOVING_LINKS;
use kinchain_core::dataset::{
    encode_instance, generate_instance, make_splits, write_instance, DatasetManifest, GenerationParams,
    ManifestEntry, MANIFEST_FILE,
};
use rayon::prelude::*;
use serde::Deserialize;

use crate::config::{data_dir, layer_fields, parse_resolution, shell_path};

#[derive(Clone, Debug, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct GenerateArgs {
    /// Dataset directory [default: $KINCHAIN_DATA]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Instances per link count (six link counts)
    #[arg(long)]
    pub per_n: Option<usize>,
    /// Base seed; instance i uses seed XOR i
    #[arg(long)]
    pub seed: Option<u64>,
    /// `default` (128x96) or `desk` (64x48)
    #[arg(long)]
    pub profile: Option<String>,
    /// Frames per trajectory
    #[arg(long)]
    pub frames: Option<usize>,
    /// Cameras in the ring
    #[arg(long)]
    pub rig: Option<usize>,
    /// Image size as WIDTHxHEIGHT
    #[arg(long)]
    pub res: Option<String>,
    /// Link capsule radius in meters
    #[arg(long)]
    pub radius: Option<f64>,
    /// Train,val,test fractions
    #[arg(long)]
    pub splits: Option<String>,
    /// Worker threads; output does not depend on it
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Replace an existing dataset in the output directory
    #[arg(long)]
    #[serde(default)]
    pub force: bool,
    /// Re-render missing or corrupt instances of an existing dataset
    #[arg(long)]
    #[serde(default)]
    pub repair: bool,
}

impl GenerateArgs {
    pub fn layer(mut self, file: GenerateArgs) -> GenerateArgs {
        layer_fields!(self, file; out, per_n, seed, profile, frames, rig, res, radius, splits, jobs);
        self.force |= file.force;
        self.repair |= file.repair;
        self
    }

    pub fn resolve(self) -> Result<GenerateConfig> {
        let out = data_dir(self.out, "output directory (--out)")?;
        let profile = self.profile.unwrap_or_else(|| "default".into());
        let mut params = match profile.as_str() {
            "default" => GenerationParams::default(),
            "desk" => GenerationParams::desk_scale(),
            other => bail!("unknown profile {other:?} (expected default or desk)"),
        };
        if let Some(f) = self.frames {
            params.frames = f;
        }
        if let Some(r) = self.rig {
            ensure!(r >= 1, "--rig must be at least 1");
            params.rig.count = r;
        }
        if let Some(res) = &self.res {
            let (w, h) = parse_resolution(res)?;
            params.rig = params.rig.clone().with_resolution(w, h);
        }
        if let Some(r) = self.radius {
            params.capsule_radius = r;
        }
        params.validate()?;
        let per_n = self.per_n.unwrap_or(10);
        ensure!(per_n >= 1, "--per-n must be at least 1");
        let jobs = self.jobs.unwrap_or(1);
        ensure!(jobs >= 1, "--jobs must be at least 1");
        let splits = parse_splits(self.splits.as_deref().unwrap_or("0.6,0.1,0.3"))?;
        ensure!(!(self.force && self.repair), "--force and --repair are mutually exclusive");
        Ok(GenerateConfig {
            out,
            per_n,
            seed: self.seed.unwrap_or(0),
            profile,
            params,
            splits,
            jobs,
            force: self.force,
            repair: self.repair,
        })
    }
}

fn parse_splits(s: &str) -> Result<(f64, f64, f64)> {
    let parts = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .with_context(|| format!("--splits {s:?}"))?;
    let [a, b, c] = parts[..] else {
        bail!("--splits needs three comma-separated fractions, got {s:?}");
    };
    ensure!(
        [a, b, c].iter().all(|f| *f >= 0.0) && ((a + b + c) - 1.0).abs() < 1e-9,
        "--splits fractions must be non-negative and sum to 1, got {s:?}"
    );
    Ok((a, b, c))
}

#[derive(Clone, Debug)]
pub struct GenerateConfig {
    pub out: PathBuf,
    pub per_n: usize,
    pub seed: u64,
    pub profile: String,
    pub params: GenerationParams,
    pub splits: (f64, f64, f64),
    pub jobs: usize,
    pub force: bool,
    pub repair: bool,
}

impl GenerateConfig {
    pub fn command_line(&self) -> String {
        let p = &self.params;
        let mut s = format!(
            "kinchain generate --out {} --per-n {} --seed {} --profile {} --frames {} --rig {} --res {}x{} --radius {} --splits {},{},{} --jobs {}",
            shell_path(&self.out),
            self.per_n,
            self.seed,
            self.profile,
            p.frames,
            p.rig.count,
            p.rig.width,
            p.rig.height_px,
            p.capsule_radius,
            self.splits.0,
            self.splits.1,
            self.splits.2,
            self.jobs
        );
        if self.force {
            s.push_str(" --force");
        }
        if self.repair {
            s.push_str(" --repair");
        }
        s
    }

    /// `(n, seed)` of every instance, in manifest order.
    pub fn plan(&self) -> Vec<(usize, u64)> {
        (0..MAX_MOVING_LINKS * self.per_n)
            .map(|i| (i / self.per_n + 1, self.seed ^ i as u64))
            .collect()
    }
}

pub struct GenerateSummary {
    pub dir: PathBuf,
    pub per_n: Vec<usize>,
    pub written: usize,
    pub bytes: u64,
    pub elapsed: Duration,
}

impl fmt::Display for GenerateSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let counts: Vec<String> = self.per_n.iter().enumerate().map(|(i, c)| format!("n{}={c}", i + 1)).collect();
        write!(
            f,
            "{}: {} instances ({}) written {}, {:.1} MiB, {:.2?}",
            self.dir.display(),
            self.per_n.iter().sum::<usize>(),
            counts.join(" "),
            self.written,
            self.bytes as f64 / (1024.0 * 1024.0),
            self.elapsed
        )
    }
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?)
}

pub fn generate(cfg: &GenerateConfig) -> Result<GenerateSummary> {
    if cfg.repair {
        return repair(cfg);
    }
    let start = Instant::now();
    if cfg.out.join(MANIFEST_FILE).exists() && !cfg.force {
        bail!(
            "{} already holds a dataset; pass --force to replace it",
            cfg.out.display()
        );
    }
    fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    let plan = cfg.plan();
    let entries: Vec<ManifestEntry> = pool(cfg.jobs)?.install(|| {
        plan.par_iter()
            .map(|&(n, seed)| -> Result<ManifestEntry> {
                let inst = generate_instance(seed, n, &cfg.params)?;
                write_instance(&inst, &cfg.out).with_context(|| format!("writing {}", inst.instance_id))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let manifest = make_splits(&DatasetManifest::new(cfg.params.clone(), entries), cfg.splits, cfg.seed)?;
    manifest.save(&cfg.out)?;
    Ok(summary(&cfg.out, &manifest, manifest.instances.len(), start))
}

fn summary(dir: &Path, manifest: &DatasetManifest, written: usize, start: Instant) -> GenerateSummary {
    let mut per_n = vec![0; MAX_MOVING_LINKS];
    for e in &manifest.instances {
        per_n[e.n - 1] += 1;
    }
    GenerateSummary {
        dir: dir.to_path_buf(),
        per_n,
        written,
        bytes: manifest.instances.iter().map(|e| e.bytes).sum(),
        elapsed: start.elapsed(),
    }
}

fn intact(dir: &Path, e: &ManifestEntry) -> bool {
    match fs::read(dir.join(&e.file)) {
        Ok(bytes) => bytes.len() as u64 == e.bytes && crc_of(&bytes) == Some(e.crc32),
        Err(_) => false,
    }
}

fn crc_of(bytes: &[u8]) -> Option<u32> {
    let tail = bytes.len().checked_sub(4)?;
    Some(u32::from_le_bytes(bytes[tail..].try_into().ok()?))
}

/// Re-renders instances whose file is missing or does not match the manifest.
fn repair(cfg: &GenerateConfig) -> Result<GenerateSummary> {
    let start = Instant::now();
    let manifest = DatasetManifest::read(&cfg.out)
        .with_context(|| format!("reading the manifest in {}", cfg.out.display()))?;
    let broken: Vec<&ManifestEntry> = manifest.instances.iter().filter(|e| !intact(&cfg.out, e)).collect();
    pool(cfg.jobs)?.install(|| {
        broken
            .par_iter()
            .map(|e| -> Result<()> {
                let inst = manifest.regenerate(e)?;
                let bytes = encode_instance(&inst);
                ensure!(
                    crc_of(&bytes) == Some(e.crc32) && bytes.len() as u64 == e.bytes,
                    "regenerated {} does not match its manifest checksum",
                    e.id
                );
                let path = cfg.out.join(&e.file);
                if let Some(parent) = path.parent() {
                    fs::create_dir_all(parent)?;
                }
                fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
                Ok(())
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(summary(&cfg.out, &manifest, broken.len(), start))
}
