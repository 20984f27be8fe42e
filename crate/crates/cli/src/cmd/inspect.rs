use std::fs;
use std::path::PathBuf;

use anyhow::{ensure, Context, Result};
use clap::Args;
use kinchain_core::dataset::{load_instance, DatasetManifest};
use serde::Deserialize;

use crate::config::{data_dir, layer_fields, shell_path};

#[derive(Clone, Debug, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct InspectArgs {
    /// Dataset directory [default: $KINCHAIN_DATA]
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Instance id as listed in the manifest
    #[arg(long)]
    pub id: Option<String>,
    /// Timestep to dump
    #[arg(long = "t")]
    pub t: Option<usize>,
    /// Directory for the PGM files [default: <data>/inspect/<id>]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl InspectArgs {
    pub fn layer(mut self, file: InspectArgs) -> InspectArgs {
        layer_fields!(self, file; data, id, t, out);
        self
    }

    pub fn resolve(self) -> Result<InspectConfig> {
        let data = data_dir(self.data, "dataset directory (--data)")?;
        let id = self.id.context("--id is required")?;
        let out = self.out.unwrap_or_else(|| data.join("inspect").join(&id));
        Ok(InspectConfig {
            data,
            id,
            t: self.t.unwrap_or(0),
            out,
        })
    }
}

#[derive(Clone, Debug)]
pub struct InspectConfig {
    pub data: PathBuf,
    pub id: String,
    pub t: usize,
    pub out: PathBuf,
}

impl InspectConfig {
    pub fn command_line(&self) -> String {
        format!(
            "kinchain inspect --data {} --id {} --t {} --out {}",
            shell_path(&self.data),
            self.id,
            self.t,
            shell_path(&self.out)
        )
    }
}

/// Writes `depth_c<k>.pgm` and `gray_c<k>.pgm` for every camera; returns the paths.
pub fn inspect(cfg: &InspectConfig) -> Result<Vec<PathBuf>> {
    let manifest = DatasetManifest::load(&cfg.data)
        .with_context(|| format!("loading dataset {}", cfg.data.display()))?;
    let entry = manifest
        .entry(&cfg.id)
        .with_context(|| format!("no instance {} in {}", cfg.id, cfg.data.display()))?;
    ensure!(
        cfg.t < manifest.params.frames,
        "--t {} is past the last frame ({})",
        cfg.t,
        manifest.params.frames - 1
    );
    let inst = load_instance(entry, &cfg.data)?;
    ensure!(
        inst.config.lengths() == entry.lengths.as_slice(),
        "instance file lengths disagree with the manifest"
    );
    fs::create_dir_all(&cfg.out)?;
    let far = inst.params.rig.far as f32;
    let mut written = Vec::new();
    for c in 0..inst.cameras {
        let frame = inst.frame(c, cfg.t)?;
        let depth = cfg.out.join(format!("depth_c{c}.pgm"));
        frame.depth.write_pgm(&depth, 0.0, far)?;
        let gray = cfg.out.join(format!("gray_c{c}.pgm"));
        frame.gray.write_pgm(&gray, 0.0, 1.0)?;
        written.push(depth);
        written.push(gray);
    }
    let lengths: Vec<String> = inst.config.lengths().iter().map(|l| format!("{l:.4}")).collect();
    let colors: Vec<&str> = inst.config.colors().iter().map(|c| c.name()).collect();
    let angles: Vec<String> = inst
        .trajectory
        .row(cfg.t)
        .iter()
        .map(|a| format!("{a:.4}"))
        .collect();
    println!("instance {}  seed {}  split {}", inst.instance_id, inst.seed, entry.split.map(|s| s.to_string()).unwrap_or_else(|| "-".into()));
    println!("moving links   {}", inst.config.n());
    println!("lengths (m)    {}", lengths.join(" "));
    println!("colors         {}", colors.join(" "));
    println!("angles t={:<4} {}", cfg.t, angles.join(" "));
    println!("wrote {} images to {}", written.len(), cfg.out.display());
    Ok(written)
}
