use std::env;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::SyntheticKind;
use crate::error::{Error, Result};
use crate::net::{Activation, Spatial};
use crate::ucb::ExploreConfig;

/// Environment variable naming the default dataset directory.
pub const DATA_DIR_ENV: &str = "CNNUCB_DATA_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dataset {
    Mnist,
    Notmnist,
    Cifar10,
    Synthetic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    CnnUcb,
    FcUcb,
    Linucb,
    Kernelucb,
    Random,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::CnnUcb => "cnn-ucb",
            Algorithm::FcUcb => "fc-ucb",
            Algorithm::Linucb => "linucb",
            Algorithm::Kernelucb => "kernelucb",
            Algorithm::Random => "random",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub dataset: Dataset,
    pub algorithms: Vec<Algorithm>,
    pub rounds: usize,
    pub repeats: usize,
    /// Repeat `r` uses seed `seed + r`.
    pub seed: u64,
    /// Fill the `wallclock_ms` column; off keeps outputs byte-reproducible.
    pub record_timing: bool,
    /// Keep `g(x_t; theta_0)/sqrt(m)` of played arms for the log-det report.
    pub store_init_features: bool,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            dataset: Dataset::Mnist,
            algorithms: vec![Algorithm::CnnUcb],
            rounds: 2000,
            repeats: 5,
            seed: 0,
            record_timing: false,
            store_init_features: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    /// Directory holding the dataset files; falls back to `$CNNUCB_DATA_DIR`.
    pub dir: Option<PathBuf>,
    pub images: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub batches: Option<Vec<PathBuf>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSection {
    pub kind: SyntheticKind,
    pub arms: usize,
    pub dim: usize,
    pub noise: f64,
}

impl Default for SyntheticSection {
    fn default() -> Self {
        Self {
            kind: SyntheticKind::Linear,
            arms: 4,
            dim: 8,
            noise: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CnnSection {
    pub layers: usize,
    pub channels: usize,
    /// Kernel side `k`: a `k x k` window on images, `k` pixels on vectors.
    pub kernel: usize,
    pub activation: Activation,
}

impl Default for CnnSection {
    fn default() -> Self {
        Self {
            layers: 3,
            channels: 20,
            kernel: 4,
            activation: Activation::Sigmoid,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FcSection {
    pub depth: usize,
    pub width: usize,
    pub activation: Activation,
}

impl Default for FcSection {
    fn default() -> Self {
        Self {
            depth: 4,
            width: 100,
            activation: Activation::Sigmoid,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrecisionMode {
    Full,
    Diagonal,
    /// Full while `d <= full_limit`, diagonal above.
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BanditSection {
    pub lambda: f64,
    pub eta: f64,
    /// `k = t` while `t <= k_threshold`, then `k_after`.
    pub k_threshold: usize,
    pub k_after: usize,
    /// Continue training from the previous round's parameters instead of
    /// restarting from the initialisation.
    pub warm_start: bool,
    /// Observations per gradient step; absent means the whole history.
    pub batch_size: Option<usize>,
    pub precision: PrecisionMode,
    pub full_limit: usize,
}

impl Default for BanditSection {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            eta: 0.001,
            k_threshold: 200,
            k_after: 100,
            warm_start: false,
            batch_size: None,
            precision: PrecisionMode::Auto,
            full_limit: 12_000,
        }
    }
}

impl BanditSection {
    /// Gradient steps after the `t`-th observation.
    pub fn steps(&self, t: usize) -> usize {
        if t <= self.k_threshold {
            t
        } else {
            self.k_after
        }
    }

    pub fn use_full(&self, d: usize) -> bool {
        match self.precision {
            PrecisionMode::Full => true,
            PrecisionMode::Diagonal => false,
            PrecisionMode::Auto => d <= self.full_limit,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Bandwidth {
    /// `gamma = 1 / input dimension`.
    InverseDim,
    /// `gamma = 1 / median squared distance` among the first round's arms.
    Median,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinUcbSection {
    /// Exploration scale; absent means `1 + sqrt(ln(2/delta)/2)`.
    pub alpha: Option<f64>,
}

impl Default for LinUcbSection {
    fn default() -> Self {
        Self { alpha: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelUcbSection {
    pub gamma: Option<f64>,
    pub bandwidth: Bandwidth,
    /// Exploration scale; absent means the LinUCB alpha.
    pub beta: Option<f64>,
    pub capacity: usize,
}

impl Default for KernelUcbSection {
    fn default() -> Self {
        Self {
            gamma: None,
            bandwidth: Bandwidth::InverseDim,
            beta: None,
            capacity: 500,
        }
    }
}

/// A full run description. Every field has a default, so an empty file is a
/// valid configuration.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub data: DataSection,
    pub synthetic: SyntheticSection,
    pub cnn: CnnSection,
    pub fc: FcSection,
    pub bandit: BanditSection,
    pub explore: ExploreConfig,
    pub linucb: LinUcbSection,
    pub kernelucb: KernelUcbSection,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serialises")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        let e = &self.experiment;
        if e.rounds == 0 {
            return bad("rounds must be at least 1");
        }
        if e.repeats == 0 {
            return bad("repeats must be at least 1");
        }
        if e.algorithms.is_empty() {
            return bad("at least one algorithm is required");
        }
        let b = &self.bandit;
        if !(b.lambda > 0.0 && b.lambda.is_finite()) {
            return bad("lambda must be positive");
        }
        if !(b.eta > 0.0 && b.eta.is_finite()) {
            return bad("eta must be positive");
        }
        if b.batch_size == Some(0) {
            return bad("batch_size must be positive");
        }
        if self.cnn.layers == 0 || self.cnn.channels == 0 || self.cnn.kernel == 0 {
            return bad("cnn layers, channels and kernel must be positive");
        }
        if self.fc.depth < 2 || self.fc.width == 0 {
            return bad("fc depth must be at least 2 and width positive");
        }
        let s = &self.synthetic;
        if s.arms == 0 || s.dim == 0 || !(s.noise >= 0.0) {
            return bad("synthetic arms and dim must be positive, noise non-negative");
        }
        if self.kernelucb.capacity == 0 {
            return bad("kernelucb capacity must be positive");
        }
        if let Some(g) = self.kernelucb.gamma {
            if !(g > 0.0) {
                return bad("kernelucb gamma must be positive");
            }
        }
        self.explore.validate()
    }

    /// Arm shape `(input channels, layout)` the dataset produces: image
    /// arms stack one channel block per class.
    pub fn arm_shape(&self) -> (usize, Spatial) {
        match self.experiment.dataset {
            Dataset::Mnist | Dataset::Notmnist => (10, Spatial::Grid { height: 28, width: 28 }),
            Dataset::Cifar10 => (30, Spatial::Grid { height: 32, width: 32 }),
            Dataset::Synthetic => (1, Spatial::Line(self.synthetic.dim)),
        }
    }

    /// Dataset directory from the config or the environment.
    pub fn data_dir(&self) -> Option<PathBuf> {
        self.data
            .dir
            .clone()
            .or_else(|| env::var_os(DATA_DIR_ENV).map(PathBuf::from))
    }

    fn resolve(&self, explicit: &Option<PathBuf>, default_name: &str) -> Result<PathBuf> {
        match (explicit, self.data_dir()) {
            (Some(p), _) if p.is_absolute() => Ok(p.clone()),
            (Some(p), Some(dir)) => Ok(dir.join(p)),
            (Some(p), None) => Ok(p.clone()),
            (None, Some(dir)) => Ok(dir.join(default_name)),
            (None, None) => Err(Error::Config(format!(
                "no data directory: set data.dir or ${DATA_DIR_ENV}"
            ))),
        }
    }

    /// Image and label IDX paths.
    pub fn idx_paths(&self) -> Result<(PathBuf, PathBuf)> {
        Ok((
            self.resolve(&self.data.images, "train-images-idx3-ubyte")?,
            self.resolve(&self.data.labels, "train-labels-idx1-ubyte")?,
        ))
    }

    pub fn cifar_paths(&self) -> Result<Vec<PathBuf>> {
        match &self.data.batches {
            Some(list) => list.iter().map(|p| self.resolve(&Some(p.clone()), "")).collect(),
            None => (1..=5)
                .map(|i| self.resolve(&None, &format!("data_batch_{i}.bin")))
                .collect(),
        }
    }
}
