//! TOML experiment configuration.
//!
//! Relative paths are resolved against the directory of the config file.
//! Every run writes back a fully resolved copy (explicit seeds, absolute
//! paths, crate version) that reproduces the run when fed back in.
//!
//! ```toml
//! [data]
//! dataset = "pool.csv"
//! test_subsets = ["Target1:A"]   # or: test_dataset = "test.csv"
//!
//! [backend]
//! spec = "builtin"               # or "external:python3 adapter.py", "external:tcp://127.0.0.1:7000"
//! k_neighbors = 64
//!
//! [ensemble]
//! n_models = 400
//! k_max = 20
//! fraction = 0.10
//! seeds = [11, 12, 13]
//!
//! [run]
//! workers = 8
//! output_dir = "out"
//! ```

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{Backend, BackendError, BackendSpec, KnnQuantile, DEFAULT_QUANTILES};
use crate::dataio::{DatasetFormat, Strictness};
use crate::ensemble::{
    ExperimentConfig, FailurePolicy, RunOptions, DEFAULT_FRACTION, DEFAULT_K_MAX, DEFAULT_N_MODELS,
};
use crate::evalcal::default_coverage_grid;
use crate::features::ThermoTables;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config {path}: {source}")]
    Parse {
        path: PathBuf,
        source: toml::de::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub dataset: PathBuf,
    #[serde(default)]
    pub format: DatasetFormat,
    #[serde(default)]
    pub strictness: Strictness,
    /// Subsets of `dataset` held out as the test set.
    #[serde(default)]
    pub test_subsets: Vec<String>,
    /// Separate test file; used instead of `test_subsets` when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_dataset: Option<PathBuf>,
    /// Whether test-set efficacy values are real labels. When false the
    /// column is ignored and no metrics are computed.
    #[serde(default = "yes")]
    pub test_labeled: bool,
    /// Use -14.88 instead of -14.882 for the GC stacking enthalpy.
    #[serde(default)]
    pub rounded_gc_enthalpy: bool,
}

impl DataSection {
    pub fn thermo_tables(&self) -> ThermoTables {
        if self.rounded_gc_enthalpy {
            ThermoTables::with_rounded_gc_enthalpy()
        } else {
            ThermoTables::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendSection {
    #[serde(default = "default_backend")]
    pub spec: String,
    #[serde(default = "default_k_neighbors")]
    pub k_neighbors: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bandwidth: Option<f64>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

impl Default for BackendSection {
    fn default() -> Self {
        Self {
            spec: default_backend(),
            k_neighbors: default_k_neighbors(),
            bandwidth: None,
            timeout_secs: default_timeout(),
        }
    }
}

impl BackendSection {
    pub fn build(&self) -> Result<Backend, ConfigError> {
        let spec: BackendSpec = self.spec.parse()?;
        let knn = KnnQuantile::new(self.k_neighbors, self.bandwidth)?;
        Ok(Backend::from_spec(&spec, knn, Duration::from_secs(self.timeout_secs)))
    }
}

fn yes() -> bool {
    true
}

fn default_backend() -> String {
    "builtin".into()
}

fn default_k_neighbors() -> usize {
    64
}

fn default_timeout() -> u64 {
    600
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            workers: default_workers(),
            output_dir: default_output(),
        }
    }
}

fn default_workers() -> usize {
    1
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSection {
    #[serde(default = "default_n_models")]
    pub n_models: usize,
    #[serde(default = "default_k_max")]
    pub k_max: usize,
    #[serde(default = "default_fraction")]
    pub fraction: f64,
    /// Used when `seeds` is empty: repeats get `seed, seed + 1, ...`.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_repeats")]
    pub n_repeats: usize,
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default = "default_quantiles")]
    pub quantiles: Vec<f64>,
    #[serde(default)]
    pub failure_policy: FailurePolicy,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        Self {
            n_models: default_n_models(),
            k_max: default_k_max(),
            fraction: default_fraction(),
            seed: 0,
            n_repeats: default_repeats(),
            seeds: Vec::new(),
            quantiles: default_quantiles(),
            failure_policy: FailurePolicy::Abort,
        }
    }
}

fn default_n_models() -> usize {
    DEFAULT_N_MODELS
}

fn default_k_max() -> usize {
    DEFAULT_K_MAX
}

fn default_fraction() -> f64 {
    DEFAULT_FRACTION
}

fn default_repeats() -> usize {
    3
}

fn default_quantiles() -> Vec<f64> {
    DEFAULT_QUANTILES.to_vec()
}

impl EnsembleSection {
    /// Make the per-repeat seeds explicit.
    pub fn resolve_seeds(&mut self) {
        if self.seeds.is_empty() {
            self.seeds = (0..self.n_repeats as u64).map(|i| self.seed + i).collect();
        }
        self.n_repeats = self.seeds.len();
    }

    pub fn experiment(&self, workers: usize) -> Result<ExperimentConfig, ConfigError> {
        if self.seeds.is_empty() {
            return Err(ConfigError::Invalid("no seeds (n_repeats = 0?)".into()));
        }
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(ConfigError::Invalid(format!("fraction {} outside (0, 1]", self.fraction)));
        }
        let lo = self.quantiles.first().copied().unwrap_or(f64::NAN);
        let hi = self.quantiles.last().copied().unwrap_or(f64::NAN);
        Ok(ExperimentConfig {
            n_models: self.n_models,
            k_max: self.k_max,
            fraction: self.fraction,
            seeds: self.seeds.clone(),
            run: RunOptions {
                quantiles: self.quantiles.clone(),
                iqr_band: (lo, hi),
                workers,
                failure_policy: self.failure_policy,
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub version: Option<String>,
    pub data: DataSection,
    #[serde(default)]
    pub backend: BackendSection,
    #[serde(default)]
    pub ensemble: EnsembleSection,
    #[serde(default)]
    pub run: RunSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSection {
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_coverage_grid")]
    pub grid: Vec<f64>,
    #[serde(default = "default_iqr_bins")]
    pub iqr_bins: usize,
}

impl Default for CalibrationSection {
    fn default() -> Self {
        Self {
            train_fraction: default_train_fraction(),
            seed: 0,
            grid: default_coverage_grid(),
            iqr_bins: default_iqr_bins(),
        }
    }
}

fn default_train_fraction() -> f64 {
    0.7
}

fn default_iqr_bins() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrateFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub version: Option<String>,
    pub data: DataSection,
    #[serde(default)]
    pub backend: BackendSection,
    #[serde(default)]
    pub calibration: CalibrationSection,
    #[serde(default)]
    pub run: RunSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrossvalSection {
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for CrossvalSection {
    fn default() -> Self {
        Self {
            folds: default_folds(),
            seed: 0,
        }
    }
}

fn default_folds() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrossvalFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub version: Option<String>,
    pub data: DataSection,
    #[serde(default)]
    pub backend: BackendSection,
    #[serde(default)]
    pub crossval: CrossvalSection,
    #[serde(default)]
    pub run: RunSection,
}

/// Config files that carry data paths and an output directory.
pub trait RunFile: Serialize + DeserializeOwned {
    fn data_mut(&mut self) -> &mut DataSection;
    fn run_mut(&mut self) -> &mut RunSection;
    fn version_mut(&mut self) -> &mut Option<String>;

    /// Make paths absolute against `base` and stamp the crate version.
    fn resolve(&mut self, base: &Path) {
        let abs = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        let data = self.data_mut();
        data.dataset = abs(&data.dataset);
        data.test_dataset = data.test_dataset.as_deref().map(abs);
        let run = self.run_mut();
        run.output_dir = abs(&run.output_dir);
        *self.version_mut() = Some(VERSION.to_string());
    }

    fn to_toml(&self) -> Result<String, ConfigError> {
        toml::to_string_pretty(self).map_err(|e| ConfigError::Invalid(e.to_string()))
    }
}

macro_rules! run_file {
    ($t:ty) => {
        impl RunFile for $t {
            fn data_mut(&mut self) -> &mut DataSection {
                &mut self.data
            }
            fn run_mut(&mut self) -> &mut RunSection {
                &mut self.run
            }
            fn version_mut(&mut self) -> &mut Option<String> {
                &mut self.version
            }
        }
    };
}

run_file!(EnsembleFile);
run_file!(CalibrateFile);
run_file!(CrossvalFile);

/// Parse a config file and resolve its relative paths.
pub fn load<T: RunFile>(path: &Path) -> Result<T, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let mut cfg: T = toml::from_str(&text).map_err(|source| ConfigError::Parse {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map_or_else(|| PathBuf::from("."), Path::to_path_buf);
    let base = std::fs::canonicalize(&base).unwrap_or(base);
    cfg.resolve(&base);
    Ok(cfg)
}
