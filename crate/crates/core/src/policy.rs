use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::game::{check_distribution, MarkovGame};
use crate::simplex::project_simplex;

/// Direct parameterization: `params[i][s * |A_i| + a_i] = π_i(a_i | s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularPolicy {
    n_states: usize,
    action_counts: Vec<usize>,
    params: Vec<Vec<f64>>,
}

impl TabularPolicy {
    pub fn new(n_states: usize, action_counts: Vec<usize>, params: Vec<Vec<f64>>) -> Result<Self> {
        if params.len() != action_counts.len() {
            return Err(invalid(format!("{} parameter blocks for {} agents", params.len(), action_counts.len())));
        }
        for (i, (block, &na)) in params.iter().zip(&action_counts).enumerate() {
            if block.len() != n_states * na {
                return Err(invalid(format!("agent {i} block has {} entries, expected {}", block.len(), n_states * na)));
            }
            for s in 0..n_states {
                check_distribution(&block[s * na..(s + 1) * na], &format!("policy row (agent={i}, s={s})"))?;
            }
        }
        Ok(Self { n_states, action_counts, params })
    }

    pub fn uniform(game: &MarkovGame) -> Self {
        let counts: Vec<usize> = (0..game.n_agents()).map(|i| game.n_actions(i)).collect();
        let params = counts.iter().map(|&na| vec![1.0 / na as f64; game.n_states() * na]).collect();
        Self { n_states: game.n_states(), action_counts: counts, params }
    }

    /// Deterministic policy from per-agent action choices `choice[i][s]`.
    pub fn deterministic(game: &MarkovGame, choice: &[Vec<usize>]) -> Result<Self> {
        let ns = game.n_states();
        let mut params = Vec::with_capacity(game.n_agents());
        for i in 0..game.n_agents() {
            let na = game.n_actions(i);
            let mut block = vec![0.0; ns * na];
            for s in 0..ns {
                let a = *choice.get(i).and_then(|c| c.get(s)).ok_or_else(|| invalid("choice table too small"))?;
                if a >= na {
                    return Err(invalid(format!("agent {i} action {a} out of range at state {s}")));
                }
                block[s * na + a] = 1.0;
            }
            params.push(block);
        }
        Self::new(ns, (0..game.n_agents()).map(|i| game.n_actions(i)).collect(), params)
    }

    /// Every row drawn by normalizing i.i.d. uniform(0,1) entries.
    pub fn random<R: Rng + ?Sized>(game: &MarkovGame, rng: &mut R) -> Self {
        let mut policy = Self::uniform(game);
        for i in 0..game.n_agents() {
            policy.params[i] = random_block(game.n_states(), game.n_actions(i), rng);
        }
        policy
    }

    /// Policy whose agent-`i` rows depend only on agent `i`'s own local state.
    pub fn random_local<R: Rng + ?Sized>(game: &MarkovGame, rng: &mut R) -> Self {
        let mut policy = Self::uniform(game);
        for i in 0..game.n_agents() {
            policy.params[i] = random_local_block(game, i, rng);
        }
        policy
    }

    pub fn n_agents(&self) -> usize {
        self.params.len()
    }
    pub fn n_states(&self) -> usize {
        self.n_states
    }
    pub fn n_actions(&self, agent: usize) -> usize {
        self.action_counts[agent]
    }
    pub fn block(&self, agent: usize) -> &[f64] {
        &self.params[agent]
    }
    pub fn row(&self, agent: usize, s: usize) -> &[f64] {
        let na = self.action_counts[agent];
        &self.params[agent][s * na..(s + 1) * na]
    }
    pub fn prob(&self, agent: usize, s: usize, a: usize) -> f64 {
        self.params[agent][s * self.action_counts[agent] + a]
    }

    /// Replaces agent `i`'s block, checking the simplex constraint row by row.
    pub fn with_block(&self, agent: usize, block: Vec<f64>) -> Result<Self> {
        if agent >= self.n_agents() {
            return Err(invalid(format!("agent {agent} out of range")));
        }
        let mut params = self.params.clone();
        params[agent] = block;
        Self::new(self.n_states, self.action_counts.clone(), params)
    }

    /// Adds `step * direction` to agent `i`'s block, then projects each row.
    pub fn projected_update(&self, agent: usize, direction: &[f64], step: f64) -> Result<Vec<f64>> {
        let na = self.action_counts[agent];
        let mut out = Vec::with_capacity(self.n_states * na);
        for s in 0..self.n_states {
            let moved: Vec<f64> =
                (0..na).map(|a| self.params[agent][s * na + a] + step * direction[s * na + a]).collect();
            out.extend(project_simplex(&moved)?);
        }
        Ok(out)
    }

    /// Checks shape compatibility with a game.
    pub fn check_matches(&self, game: &MarkovGame) -> Result<()> {
        let fits = self.n_states == game.n_states()
            && self.n_agents() == game.n_agents()
            && (0..game.n_agents()).all(|i| self.action_counts[i] == game.n_actions(i));
        if fits {
            Ok(())
        } else {
            Err(invalid("policy shape does not match the game"))
        }
    }

    /// `π(a|s) = Π_i θ_{i,(s,a_i)}` for joint action index `a`.
    pub fn joint_prob(&self, game: &MarkovGame, s: usize, a: usize) -> Result<f64> {
        if s >= game.n_states() || a >= game.n_joint_actions() {
            return Err(invalid(format!("state {s} or joint action {a} out of range")));
        }
        let actions = game.action_space();
        Ok((0..self.n_agents()).map(|i| self.prob(i, s, actions.component(a, i))).product())
    }

    /// Joint action distribution at state `s` (length `|A|`).
    pub fn joint_distribution(&self, game: &MarkovGame, s: usize) -> Vec<f64> {
        let actions = game.action_space();
        (0..game.n_joint_actions())
            .map(|a| (0..self.n_agents()).map(|i| self.prob(i, s, actions.component(a, i))).product())
            .collect()
    }
}

pub(crate) fn random_row<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

pub(crate) fn random_block<R: Rng + ?Sized>(n_states: usize, n_actions: usize, rng: &mut R) -> Vec<f64> {
    (0..n_states).flat_map(|_| random_row(n_actions, rng)).collect()
}

pub(crate) fn random_local_block<R: Rng + ?Sized>(game: &MarkovGame, agent: usize, rng: &mut R) -> Vec<f64> {
    let states = game.state_space();
    let na = game.n_actions(agent);
    let local_rows: Vec<Vec<f64>> = (0..states.dims()[agent]).map(|_| random_row(na, rng)).collect();
    (0..game.n_states()).flat_map(|s| local_rows[states.component(s, agent)].clone()).collect()
}
