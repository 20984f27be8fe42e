//! `manifest.json`: dataset-level parameters, per-instance entries and splits.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{generate_instance, GenerationParams, InstanceRecord, FORMAT_VERSION};
use crate::error::{invalid, Error, Result};
use crate::seeded_rng;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(invalid(format!("unknown split {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub n: usize,
    pub lengths: Vec<f64>,
    pub seed: u64,
    /// Path relative to the dataset directory.
    pub file: String,
    pub bytes: u64,
    /// Byte offset of the image payload inside `file`.
    pub payload_offset: u64,
    pub crc32: u32,
    pub split: Option<Split>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub params: GenerationParams,
    pub instances: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn new(params: GenerationParams, instances: Vec<ManifestEntry>) -> Self {
        DatasetManifest {
            format_version: FORMAT_VERSION,
            params,
            instances,
        }
    }

    pub fn entry(&self, id: &str) -> Option<&ManifestEntry> {
        self.instances.iter().find(|e| e.id == id)
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.instances.iter().filter(move |e| e.split == Some(split))
    }

    /// Checks version, id uniqueness, and (when `dir` is given) file presence.
    pub fn validate(&self, dir: Option<&Path>) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                expected: FORMAT_VERSION,
                found: self.format_version,
            });
        }
        let mut seen = HashSet::new();
        for e in &self.instances {
            if !seen.insert(e.id.as_str()) {
                return Err(Error::Format(format!("duplicate instance id {}", e.id)));
            }
            if let Some(dir) = dir {
                let path = dir.join(&e.file);
                if !path.is_file() {
                    return Err(Error::Format(format!("missing instance file {}", path.display())));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(MANIFEST_FILE), self.to_json())?;
        Ok(())
    }

    /// Reads and validates `dir/manifest.json`, including instance file presence.
    pub fn load(dir: &Path) -> Result<DatasetManifest> {
        let manifest = Self::read(dir)?;
        manifest.validate(Some(dir))?;
        Ok(manifest)
    }

    /// Reads `dir/manifest.json` without looking for the instance files.
    pub fn read(dir: &Path) -> Result<DatasetManifest> {
        let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
        let manifest: DatasetManifest = serde_json::from_str(&text)?;
        manifest.validate(None)?;
        Ok(manifest)
    }

    /// Re-renders an instance from its stored seed.
    pub fn regenerate(&self, entry: &ManifestEntry) -> Result<InstanceRecord> {
        let inst = generate_instance(entry.seed, entry.n, &self.params)?;
        if inst.instance_id != entry.id {
            return Err(Error::Format(format!(
                "regenerated id {} does not match {}",
                inst.instance_id, entry.id
            )));
        }
        Ok(inst)
    }
}

/// Assigns whole instances to train/val/test, stratified by link count.
///
/// Within each link-count group (ordered by id, then shuffled with `seed`) the
/// first `round(train * k)` go to train, the next `round(val * k)` to val, the
/// rest to test.
pub fn make_splits(
    manifest: &DatasetManifest,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<DatasetManifest> {
    let (train, val, test) = fractions;
    if [train, val, test].iter().any(|f| !(*f >= 0.0)) || (train + val + test - 1.0).abs() > 1e-9 {
        return Err(invalid(format!(
            "split fractions ({train}, {val}, {test}) must be non-negative and sum to 1"
        )));
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, e) in manifest.instances.iter().enumerate() {
        groups.entry(e.n).or_default().push(i);
    }
    let mut out = manifest.clone();
    let mut rng = seeded_rng(seed);
    for members in groups.values_mut() {
        members.sort_by(|&a, &b| manifest.instances[a].id.cmp(&manifest.instances[b].id));
        members.shuffle(&mut rng);
        let k = members.len();
        let n_train = ((train * k as f64).round() as usize).min(k);
        let n_val = ((val * k as f64).round() as usize).min(k - n_train);
        for (rank, &idx) in members.iter().enumerate() {
            out.instances[idx].split = Some(if rank < n_train {
                Split::Train
            } else if rank < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            });
        }
    }
    Ok(out)
}
