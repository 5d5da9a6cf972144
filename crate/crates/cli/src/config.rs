use std::path::{Path, PathBuf};

use mpg_core::random::GeneratorSpec;
use mpg_core::LearnConfig;
use mpg_drive::{EnvConfig, Surrounding, TrainConfig};
use serde::{Deserialize, Serialize};

pub const DEFAULT_SEED: u64 = 0;
/// Scenario sets for studies come from a seed far from the training batch seeds.
pub const DEFAULT_STUDY_SEED: u64 = 1_000_000;
pub const DEFAULT_TRIALS: usize = 100;
pub const DEFAULT_SCENARIOS: usize = 100;

/// Everything a command may read, from the `--config` file with flags layered on top.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub game: Option<PathBuf>,
    pub generator: Option<GeneratorSpec>,
    pub trials: Option<usize>,
    pub certify_tol: Option<f64>,
    pub identity_tol: Option<f64>,
    pub learn: LearnConfig,
    pub env: Option<EnvConfig>,
    pub train: TrainConfig,
    pub checkpoint: Option<PathBuf>,
    pub ne_checkpoint: Option<PathBuf>,
    pub marl_checkpoint: Option<PathBuf>,
    pub single_checkpoint: Option<PathBuf>,
    pub scenarios: Option<usize>,
    pub surrounding: Option<Surrounding>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("invalid config {}: {e}", path.display()))
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }
}
