//! Seeded generators for random games and reward structures.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::builder::{build_mixed_game, BuiltGame, Construction, PairwiseTerm, RewardStructure};
use crate::error::{invalid, Result};
use crate::game::{FactoredTransition, JointSpace, LocalKernel, MarkovGame};
use crate::policy::random_row;

/// A random game with fully coupled transitions, rewards in `[-1, 1]` and a
/// full-support initial distribution.
pub fn random_game<R: Rng + ?Sized>(rng: &mut R, local_states: &[usize], action_counts: &[usize], gamma: f64) -> MarkovGame {
    let ns: usize = local_states.iter().product();
    let na: usize = action_counts.iter().product();
    let transition: Vec<f64> = (0..ns * na).flat_map(|_| random_row(ns, rng)).collect();
    let rewards = (0..local_states.len())
        .map(|_| (0..ns * na).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let rho = random_row(ns, rng);
    MarkovGame::new(local_states.to_vec(), action_counts.to_vec(), transition, rewards, gamma, rho)
        .expect("generated game satisfies invariants")
}

pub fn random_factored<R: Rng + ?Sized>(rng: &mut R, local_states: &[usize], action_counts: &[usize]) -> FactoredTransition {
    let locals = local_states
        .iter()
        .zip(action_counts)
        .map(|(&ns, &na)| {
            let probs = (0..ns * na).flat_map(|_| random_row(ns, rng)).collect();
            LocalKernel::new(ns, na, probs).expect("generated kernel is stochastic")
        })
        .collect();
    FactoredTransition::new(locals).expect("at least one agent")
}

pub fn random_local_rhos<R: Rng + ?Sized>(rng: &mut R, local_states: &[usize]) -> Vec<Vec<f64>> {
    local_states.iter().map(|&ns| random_row(ns, rng)).collect()
}

/// Self terms and one pairwise term per unordered pair, entries in `[-1, 1]`.
pub fn random_reward_structure<R: Rng + ?Sized>(
    rng: &mut R,
    local_states: &[usize],
    action_counts: &[usize],
    alpha: f64,
    beta: f64,
) -> RewardStructure {
    let n = local_states.len();
    let self_terms = (0..n)
        .map(|i| (0..local_states[i] * action_counts[i]).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let mut pairwise = Vec::new();
    for j in 0..n {
        for i in (j + 1)..n {
            let len = local_states[i] * local_states[j] * action_counts[i] * action_counts[j];
            pairwise.push(PairwiseTerm { i: j, j: i, values: (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect() });
        }
    }
    RewardStructure { self_terms, pairwise, alpha, beta }
}

/// Parameters for generating a certified game from scratch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub construction: Construction,
    pub local_states: Vec<usize>,
    pub local_actions: Vec<usize>,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "one")]
    pub alpha: f64,
    #[serde(default = "one")]
    pub beta: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_gamma() -> f64 {
    0.9
}
fn one() -> f64 {
    1.0
}

impl GeneratorSpec {
    pub fn generate(&self) -> Result<BuiltGame> {
        if self.local_states.len() != self.local_actions.len() || self.local_states.is_empty() {
            return Err(invalid("generator needs matching, non-empty state and action lists"));
        }
        JointSpace::new(self.local_states.clone())?;
        JointSpace::new(self.local_actions.clone())?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let locals = random_factored(&mut rng, &self.local_states, &self.local_actions);
        let rhos = random_local_rhos(&mut rng, &self.local_states);
        let (alpha, beta) = match self.construction {
            Construction::SelfReward => (self.alpha, 0.0),
            Construction::Joint => (0.0, self.beta),
            Construction::Mixed => (self.alpha, self.beta),
        };
        let structure = random_reward_structure(&mut rng, &self.local_states, &self.local_actions, alpha, beta);
        let mut built = build_mixed_game(&locals, &structure, self.gamma, &rhos)?;
        built.certificate.construction = Some(self.construction);
        Ok(built)
    }
}
