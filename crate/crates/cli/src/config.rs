use std::fs;
use std::path::{Path, PathBuf};

use bdg_core::data::{make_domain_pair, DomainDataset, ShiftSpec};
use bdg_core::{BdgError, Result, TrainConfig};
use serde::{Deserialize, Serialize};

/// Environment variable naming the root that relative output directories
/// are resolved against.
pub const OUTPUT_ROOT_ENV: &str = "BDG_OUTPUT_ROOT";

/// A complete, reproducible experiment description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub train: TrainConfig,
    /// Synthetic pair generated when `source`/`target` are absent.
    pub data: ShiftSpec,
    pub source: Option<PathBuf>,
    pub target: Option<PathBuf>,
    pub output_dir: PathBuf,
    /// Seeds repeated by `ablate` and `sweep`.
    pub seeds: Vec<u64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            data: ShiftSpec::default(),
            source: None,
            target: None,
            output_dir: PathBuf::from("runs"),
            seeds: vec![1, 2, 3, 4, 5],
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| BdgError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| BdgError::Config(e.to_string()))
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.source.is_none() && self.target.is_none() {
            self.data.validate()?;
        }
        if self.source.is_some() != self.target.is_some() {
            return Err(BdgError::Config(
                "source and target paths must be given together".into(),
            ));
        }
        if self.seeds.is_empty() {
            return Err(BdgError::Config("seeds must not be empty".into()));
        }
        Ok(())
    }

    /// `output_dir`, under `$BDG_OUTPUT_ROOT` when relative and the variable is set.
    pub fn resolved_output(&self) -> PathBuf {
        resolve_output(&self.output_dir)
    }

    /// Loads the configured dataset files, or generates the synthetic pair.
    pub fn datasets(&self) -> Result<(DomainDataset, DomainDataset)> {
        match (&self.source, &self.target) {
            (Some(s), Some(t)) => Ok((load_dataset(s)?, load_dataset(t)?)),
            (None, None) => make_domain_pair(&self.data),
            _ => Err(BdgError::Config(
                "source and target paths must be given together".into(),
            )),
        }
    }
}

pub fn resolve_output(dir: &Path) -> PathBuf {
    match std::env::var_os(OUTPUT_ROOT_ENV) {
        Some(root) if dir.is_relative() => PathBuf::from(root).join(dir),
        _ => dir.to_path_buf(),
    }
}

fn load_dataset(path: &Path) -> Result<DomainDataset> {
    DomainDataset::load(path).map_err(|e| match e {
        BdgError::Io(m) => BdgError::Io(format!("{}: {m}", path.display())),
        BdgError::Parse { line, msg } => BdgError::Parse {
            line,
            msg: format!("{}: {msg}", path.display()),
        },
        other => other,
    })
}

pub fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| BdgError::Io(format!("{}: {e}", dir.display())))
}
