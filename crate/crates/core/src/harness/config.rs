//! Experiment configuration files.
//!
//! Configs are TOML. Top-level keys:
//!
//! ```toml
//! kind = "sweep"          # train (default) | sweep | convergence | batch-scaling | sampling | datasize
//! dataset = "mnist"       # mnist | fashion | cifar10 | synthetic
//! epsilon = 3.0           # target budget; omit to train at a fixed run.sigma
//! delta = 1e-5
//! seeds = [0, 1, 2, 3, 4] # default
//! output = "results/mnist.csv"
//!
//! [scatter]               # default J = 2, L = 8
//! scales = 2
//! orientations = 8
//!
//! [run]                   # one DP-SGD run; dataset size and seed are filled in
//! batch_size = 4096
//! clip = 0.1
//! base_lr = 1.0
//! momentum = 0.9          # default
//! epochs = 40
//! sampler = "poisson"     # default
//! normalization = { kind = "data", c1 = 0.2, c2 = 0.05, sigma_norm = 8.0 }
//! # sigma = 1.2           # fixed noise multiplier instead of solving for epsilon
//!
//! [grid]                  # optional axes; a missing axis uses the [run] value
//! batch_size = [512, 1024]
//! base_lr = [0.5, 1.0]
//! epochs = [15, 25, 40]
//! normalization = [{ kind = "group", groups = 27 }]
//! sampler = ["poisson", "shuffle"]
//! dataset_size = [10000, 25000, 50000]   # datasize experiment only
//!
//! [synthetic]             # dataset = "synthetic" only
//! train = 2000
//! test = 500
//! ```
//!
//! Any key can be overridden with `path.to.key=value`, where the value is
//! parsed as a TOML value (bare words fall back to strings).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{DatasetId, ScatterParams};
use crate::error::{Error, Result};
use crate::sgd::{DpSgdConfig, Normalization, SamplerKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Train,
    Sweep,
    Convergence,
    BatchScaling,
    Sampling,
    Datasize,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Train => "train",
            ExperimentKind::Sweep => "sweep",
            ExperimentKind::Convergence => "convergence",
            ExperimentKind::BatchScaling => "batch-scaling",
            ExperimentKind::Sampling => "sampling",
            ExperimentKind::Datasize => "datasize",
        }
    }
}

impl std::str::FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "train" => ExperimentKind::Train,
            "sweep" => ExperimentKind::Sweep,
            "convergence" => ExperimentKind::Convergence,
            "batch-scaling" => ExperimentKind::BatchScaling,
            "sampling" => ExperimentKind::Sampling,
            "datasize" => ExperimentKind::Datasize,
            other => return Err(Error::Config(format!("unknown experiment kind '{other}'"))),
        })
    }
}

fn default_kind() -> ExperimentKind {
    ExperimentKind::Train
}

fn default_seeds() -> Vec<u64> {
    (0..5).collect()
}

fn default_delta() -> f64 {
    1e-5
}

fn default_momentum() -> f64 {
    0.9
}

fn default_sampler() -> SamplerKind {
    SamplerKind::Poisson
}

fn default_normalization() -> Normalization {
    Normalization::None
}

/// Fixed fields of a DP-SGD run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub batch_size: usize,
    pub clip: f64,
    pub base_lr: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    pub epochs: usize,
    #[serde(default = "default_sampler")]
    pub sampler: SamplerKind,
    #[serde(default = "default_normalization")]
    pub normalization: Normalization,
    /// Fixed noise multiplier; when absent it is solved from the target epsilon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
}

impl RunSpec {
    /// Complete run config with a placeholder sigma of 0.
    pub fn to_config(&self, dataset_size: usize, seed: u64) -> DpSgdConfig {
        DpSgdConfig {
            dataset_size,
            batch_size: self.batch_size,
            clip: self.clip,
            sigma: self.sigma.unwrap_or(0.0),
            base_lr: self.base_lr,
            momentum: self.momentum,
            epochs: self.epochs,
            sampler: self.sampler,
            normalization: self.normalization,
            seed,
        }
    }
}

/// Sweep axes. `None` means "use the run value".
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_lr: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epochs: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalization: Option<Vec<Normalization>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampler: Option<Vec<SamplerKind>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset_size: Option<Vec<usize>>,
}

/// Size of the generated dataset when `dataset = "synthetic"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub train: usize,
    pub test: usize,
    #[serde(default = "default_image_size")]
    pub size: usize,
    #[serde(default = "default_noise")]
    pub noise: f64,
}

fn default_image_size() -> usize {
    28
}

fn default_noise() -> f64 {
    0.9
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self { train: 2000, test: 500, size: default_image_size(), noise: default_noise() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_kind")]
    pub kind: ExperimentKind,
    pub dataset: DatasetId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub scatter: ScatterParams,
    pub run: RunSpec,
    #[serde(default)]
    pub grid: Grid,
    #[serde(default)]
    pub synthetic: SyntheticSpec,
}

fn non_empty<T>(axis: &Option<Vec<T>>, name: &str) -> Result<()> {
    match axis {
        Some(v) if v.is_empty() => Err(Error::Config(format!("grid axis '{name}' is empty"))),
        _ => Ok(()),
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Self::from_toml_with(text, &[])
    }

    /// Parses `text` after applying `key=value` overrides.
    pub fn from_toml_with(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e| Error::Config(format!("{e}")))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: ExperimentConfig = table.try_into().map_err(|e| Error::Config(format!("{e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| Error::Config(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_toml_with(&text, overrides)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Config(format!("delta must be in (0, 1), got {}", self.delta)));
        }
        match (self.epsilon, self.run.sigma) {
            (None, None) => {
                return Err(Error::Config("set either epsilon or run.sigma".into()));
            }
            (Some(e), _) if !(e > 0.0) => {
                return Err(Error::Config(format!("epsilon must be > 0, got {e}")));
            }
            _ => {}
        }
        non_empty(&self.grid.batch_size, "batch_size")?;
        non_empty(&self.grid.base_lr, "base_lr")?;
        non_empty(&self.grid.epochs, "epochs")?;
        non_empty(&self.grid.normalization, "normalization")?;
        non_empty(&self.grid.sampler, "sampler")?;
        non_empty(&self.grid.dataset_size, "dataset_size")?;
        if self.dataset == DatasetId::Synthetic && (self.synthetic.train == 0 || self.synthetic.test == 0) {
            return Err(Error::Config("synthetic train and test sizes must be >= 1".into()));
        }
        Ok(())
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn parse_value(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match wrapped.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Sets `a.b.c=value` in `table`, creating intermediate tables.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override '{spec}' is not key=value")))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Error::Config(format!("bad override key '{path}'")));
    }
    let (last, parents) = keys.split_last().expect("non-empty");
    let mut cur = table;
    for k in parents {
        let entry = cur
            .entry(k.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override path '{path}' crosses a non-table key '{k}'")))?;
    }
    cur.insert(last.to_string(), parse_value(raw.trim()));
    Ok(())
}
