//! Batch gradient ascent on differentiable rollouts.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adam::{adam_step, AdamState};
use crate::bptt::{rollout_objective_and_gradient, Control, Objective, Others};
use crate::env::{EnvConfig, IntersectionState};
use crate::error::{invalid, DriveError, Result};
use crate::mlp::MlpPolicy;
use crate::sampling::sample_scenarios;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainKind {
    /// One network drives every vehicle and ascends the potential.
    Marl,
    /// The network drives the ego against rule-based traffic and ascends J_ego.
    SingleAgent,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub batch_size: usize,
    pub max_episodes: usize,
    /// Stop once the batch-gradient norm drops below this.
    pub grad_tol: f64,
    /// Fixed input normalization: positions and velocities are divided by these.
    pub position_scale: f64,
    pub velocity_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            lr: 1e-3,
            batch_size: 16,
            max_episodes: 5000,
            grad_tol: 1e-3,
            position_scale: 30.0,
            velocity_scale: 5.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(invalid("batch_size must be at least 1"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(invalid(format!("lr must be positive, got {}", self.lr)));
        }
        if !(self.grad_tol >= 0.0) {
            return Err(invalid("grad_tol must be non-negative"));
        }
        if !(self.position_scale > 0.0 && self.velocity_scale > 0.0) {
            return Err(invalid("input scales must be positive"));
        }
        if self.hidden.contains(&0) {
            return Err(invalid("hidden layer widths must be positive"));
        }
        Ok(())
    }

    pub fn layer_sizes(&self, n_vehicles: usize) -> Vec<usize> {
        let mut s = vec![2 * n_vehicles];
        s.extend(&self.hidden);
        s.push(n_vehicles);
        s
    }

    pub fn input_scale(&self, n_vehicles: usize) -> Vec<f64> {
        (0..n_vehicles).flat_map(|_| [self.position_scale, self.velocity_scale]).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub kind: TrainKind,
    pub seed: u64,
    pub env: EnvConfig,
    pub train: TrainConfig,
    /// Batch-mean objective before each update.
    pub objectives: Vec<f64>,
    pub grad_norms: Vec<f64>,
    pub converged: bool,
    pub fault: Option<String>,
    pub wall_clock_secs: f64,
    pub final_params: Vec<f64>,
}

impl TrainReport {
    pub fn episodes(&self) -> usize {
        self.objectives.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub kind: TrainKind,
    pub seed: u64,
    pub episodes: usize,
    pub sizes: Vec<usize>,
    pub input_scale: Vec<f64>,
    pub params: Vec<f64>,
    pub adam: AdamState,
    pub env: EnvConfig,
    pub train: TrainConfig,
}

impl Checkpoint {
    pub fn policy(&self) -> Result<MlpPolicy> {
        MlpPolicy::from_parts(&self.sizes, self.params.clone(), self.input_scale.clone())
    }

    /// Rejects a checkpoint whose network cannot drive `env`'s vehicles.
    pub fn check_env(&self, env: &EnvConfig) -> Result<()> {
        let n = env.n_vehicles();
        if self.sizes.first() != Some(&(2 * n)) || self.sizes.last() != Some(&n) {
            return Err(DriveError::ShapeMismatch(format!(
                "checkpoint network {:?} does not fit {} vehicles",
                self.sizes, n
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text).map_err(|e| DriveError::Parse(e.to_string()))?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(DriveError::Parse(format!("unsupported checkpoint version {}", ck.version)));
        }
        ck.policy()?;
        if ck.adam.m.len() != ck.params.len() || ck.adam.v.len() != ck.params.len() {
            return Err(DriveError::ShapeMismatch("adam moments do not match parameters".into()));
        }
        Ok(ck)
    }

    /// Writes to a temporary sibling and renames it into place.
    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        Self::from_json(&text)
    }
}

fn io_err(path: &Path, source: std::io::Error) -> DriveError {
    DriveError::Io { path: path.display().to_string(), source }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = std::path::PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp).map_err(|e| io_err(&tmp, e))?;
    f.write_all(bytes).and_then(|_| f.sync_all()).map_err(|e| io_err(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub report: TrainReport,
    pub checkpoint: Checkpoint,
}

/// Batch-mean objective and gradient. Rollouts run in parallel; the reduction is
/// sequential in scenario order, so results do not depend on thread count.
pub fn batch_objective_and_gradient(
    net: &MlpPolicy,
    batch: &[IntersectionState],
    env: &EnvConfig,
    objective: Objective,
    control: Control,
) -> Result<(f64, Vec<f64>)> {
    let parts: Vec<_> = batch
        .par_iter()
        .map(|s0| rollout_objective_and_gradient(net, s0, env, objective, control))
        .collect::<Result<_>>()?;
    let k = batch.len() as f64;
    let mut grad = vec![0.0; net.params().len()];
    let mut obj = 0.0;
    for p in &parts {
        obj += p.objective;
        for (g, x) in grad.iter_mut().zip(&p.gradient) {
            *g += x;
        }
    }
    grad.iter_mut().for_each(|g| *g /= k);
    Ok((obj / k, grad))
}

/// Seed of the training batch used at `episode`.
pub fn batch_seed(seed: u64, episode: usize) -> u64 {
    seed.wrapping_add(1 + episode as u64)
}

pub fn train_marl(env: &EnvConfig, train: &TrainConfig, seed: u64) -> Result<TrainOutcome> {
    train_with(TrainKind::Marl, env, train, seed, |_, _, _| {})
}

pub fn train_single_agent(env: &EnvConfig, train: &TrainConfig, seed: u64) -> Result<TrainOutcome> {
    train_with(TrainKind::SingleAgent, env, train, seed, |_, _, _| {})
}

/// Shared training loop; `progress(episode, objective, grad_norm)` is called
/// once per episode. A numerical fault stops training and is recorded in the
/// report rather than returned as an error.
pub fn train_with<F>(kind: TrainKind, env: &EnvConfig, train: &TrainConfig, seed: u64, mut progress: F) -> Result<TrainOutcome>
where
    F: FnMut(usize, f64, f64),
{
    env.validate()?;
    train.validate()?;
    let n = env.n_vehicles();
    let start = Instant::now();
    let mut net = MlpPolicy::init(&train.layer_sizes(n), train.input_scale(n), seed)?;
    let mut adam = AdamState::new(net.params().len(), train.lr);
    let (objective, control) = match kind {
        TrainKind::Marl => (Objective::Potential, Control::Centralized),
        TrainKind::SingleAgent => (Objective::Agent(env.ego), Control::Ego(Others::Rule)),
    };
    let mut objectives = Vec::new();
    let mut grad_norms = Vec::new();
    let mut converged = false;
    let mut fault = None;
    for episode in 0..train.max_episodes {
        let batch = sample_scenarios(train.batch_size, env, batch_seed(seed, episode))?;
        let (obj, grad) = match batch_objective_and_gradient(&net, &batch, env, objective, control) {
            Ok(r) => r,
            Err(e @ DriveError::NumericalFault { .. }) => {
                fault = Some(format!("episode {episode}: {e}"));
                break;
            }
            Err(e) => return Err(e),
        };
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        objectives.push(obj);
        grad_norms.push(norm);
        progress(episode, obj, norm);
        if norm < train.grad_tol {
            converged = true;
            break;
        }
        adam_step(net.params_mut(), &grad, &mut adam, true)?;
    }
    let report = TrainReport {
        kind,
        seed,
        env: env.clone(),
        train: train.clone(),
        converged,
        fault,
        wall_clock_secs: start.elapsed().as_secs_f64(),
        final_params: net.params().to_vec(),
        objectives,
        grad_norms,
    };
    let checkpoint = Checkpoint {
        version: CHECKPOINT_VERSION,
        kind,
        seed,
        episodes: report.episodes(),
        sizes: net.sizes().to_vec(),
        input_scale: net.input_scale().to_vec(),
        params: net.params().to_vec(),
        adam,
        env: env.clone(),
        train: train.clone(),
    };
    Ok(TrainOutcome { report, checkpoint })
}
