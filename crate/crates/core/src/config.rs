//! The declarative run configuration shared by every pipeline stage.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::behavior::{DEFAULT_BINS, MAX_CONTEXT};
use crate::error::{Error, Result};
use crate::eval::DEFAULT_N;
use crate::mfm::MfmConfig;
use crate::session::{FilterParams, SupplementParams};
use crate::synth::SyntheticConfig;
use crate::trainer::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    /// Drop records outside the validity window of each session.
    pub filter: bool,
    /// Add one positive from the social graph for under-represented users.
    pub supplement: bool,
    pub filter_params: FilterParams,
    pub supplement_params: SupplementParams,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            filter: true,
            supplement: true,
            filter_params: FilterParams::default(),
            supplement_params: SupplementParams::default(),
        }
    }
}

impl PreprocessConfig {
    pub fn filter(&self) -> Option<&FilterParams> {
        self.filter.then_some(&self.filter_params)
    }

    pub fn supplement(&self) -> Option<&SupplementParams> {
        self.supplement.then_some(&self.supplement_params)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BehaviorConfig {
    pub bins: usize,
    /// Laplace pseudo-count added to positives and negatives of every cell.
    pub smoothing: f64,
}

impl Default for BehaviorConfig {
    fn default() -> Self {
        Self {
            bins: DEFAULT_BINS,
            smoothing: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnsembleConfig {
    /// Days of training data used for the level-1 models; the rest fits the blend.
    pub boundary_days: i64,
    /// Widest duration context blended in; 0 blends the model score alone.
    pub r_max: usize,
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Items kept per user in the final ranking.
    pub top_n: usize,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            boundary_days: 23,
            r_max: MAX_CONTEXT,
            tolerance: 1e-6,
            max_iterations: 10_000,
            top_n: DEFAULT_N,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Master seed; copied into every seeded sub-config by [`RunConfig::resolve`].
    pub seed: u64,
    /// Holds the six dataset files and `test_log.tsv`.
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    pub synthetic: SyntheticConfig,
    pub preprocess: PreprocessConfig,
    pub model: MfmConfig,
    pub train: TrainConfig,
    pub behavior: BehaviorConfig,
    pub ensemble: EnsembleConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            data_dir: PathBuf::from("data"),
            out_dir: PathBuf::from("out"),
            synthetic: SyntheticConfig::default(),
            preprocess: PreprocessConfig::default(),
            model: MfmConfig::default(),
            train: TrainConfig::default(),
            behavior: BehaviorConfig::default(),
            ensemble: EnsembleConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Propagates the master seed.
    pub fn resolve(&mut self) {
        self.synthetic.seed = self.seed;
        self.model.seed = self.seed;
        self.train.seed = self.seed;
    }

    /// Every invalid field, one diagnostic per line.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        let checks = [
            self.synthetic.validate(),
            self.preprocess.filter_params.validate(),
            self.preprocess.supplement_params.validate(),
            self.model.validate(),
            self.train.validate(),
        ];
        for c in checks {
            if let Err(Error::Config(m)) = c {
                problems.push(m);
            }
        }
        if self.behavior.bins == 0 {
            problems.push("behavior.bins must be >= 1".into());
        }
        if !(self.behavior.smoothing >= 0.0) {
            problems.push("behavior.smoothing must be >= 0".into());
        }
        let e = &self.ensemble;
        if e.r_max > MAX_CONTEXT {
            problems.push(format!("ensemble.r_max must be <= {MAX_CONTEXT}"));
        }
        if e.boundary_days < 1 {
            problems.push("ensemble.boundary_days must be >= 1".into());
        }
        if !(e.tolerance > 0.0) || e.max_iterations == 0 {
            problems.push("ensemble.tolerance must be > 0 and max_iterations >= 1".into());
        }
        if e.top_n == 0 {
            problems.push("ensemble.top_n must be >= 1".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("\n")))
        }
    }

    /// SHA-256 over every setting except the two directories, so moving
    /// a run does not change its identity.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.data_dir = PathBuf::new();
        c.out_dir = PathBuf::new();
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}
