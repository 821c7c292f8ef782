//! Run configuration and reproducibility manifests.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cloop::DisturbanceSampler;
use crate::error::{Error, Result};

/// JSON run configuration; every field can be overridden from the command line.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub spec_path: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub sa: SaSection,
    pub grid: GridSection,
    pub quifs: QuifsSection,
    pub nn: NnSection,
    pub sim: SimSection,
    pub validate: ValidateSection,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SaSection {
    pub preset: Option<String>,
    pub iters: Option<usize>,
    pub t0: Option<f64>,
    pub decay: Option<f64>,
    pub step_scale: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub h: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuifsSection {
    pub eps: Option<f64>,
    pub l0: Option<f64>,
    pub generator: Option<String>,
    /// Fresh exact solves used for the uniform-error certificate.
    pub probes: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NnSection {
    pub width: Option<usize>,
    pub hidden: Option<usize>,
    pub lr: Option<f64>,
    pub epochs: Option<usize>,
    pub batch: Option<usize>,
    pub eps: Option<f64>,
    pub l0: Option<f64>,
    pub probes: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub x0: Option<Vec<f64>>,
    pub steps: Option<usize>,
    pub sampler: Option<DisturbanceSampler>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidateSection {
    pub p: Option<usize>,
    pub delta_h: Option<f64>,
    pub mu_crit: Option<f64>,
    pub steps: Option<usize>,
    pub rollouts_per_state: Option<usize>,
    pub sampler: Option<DisturbanceSampler>,
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Dependency(format!("cannot read config {}: {e}", path.display()))
        })?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactHash {
    pub path: String,
    pub sha256: String,
}

/// Written next to every command's outputs; contains no timestamps so reruns diff clean.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub spec_hash: String,
    /// Effective configuration after overrides.
    pub config: serde_json::Value,
    pub inputs: Vec<ArtifactHash>,
    pub outputs: Vec<ArtifactHash>,
}

impl Manifest {
    pub fn new(command: &str, spec_hash: String, config: serde_json::Value) -> Self {
        Manifest {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            spec_hash,
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn add_input(&mut self, path: impl AsRef<Path>) -> Result<()> {
        self.inputs.push(hash_artifact(path)?);
        Ok(())
    }

    pub fn add_output(&mut self, path: impl AsRef<Path>) -> Result<()> {
        self.outputs.push(hash_artifact(path)?);
        Ok(())
    }

    /// Writes `<dir>/<command>.manifest.json`, spaces in the command replaced by `_`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let path = dir
            .as_ref()
            .join(format!("{}.manifest.json", self.command.replace(' ', "_")));
        std::fs::write(&path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(path)
    }
}

pub fn sha256_file(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)
        .map_err(|e| Error::Dependency(format!("cannot read {}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// File name (not the full path, which varies between machines) and content hash.
pub fn hash_artifact(path: impl AsRef<Path>) -> Result<ArtifactHash> {
    let path = path.as_ref();
    Ok(ArtifactHash {
        path: path.file_name().map_or_else(
            || path.display().to_string(),
            |n| n.to_string_lossy().into_owned(),
        ),
        sha256: sha256_file(path)?,
    })
}
