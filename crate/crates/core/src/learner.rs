//! Projected gradient dynamics and Nash-equilibrium diagnostics.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, MpgError, Result};
use crate::eval::{gradient_for_reward, max_linear_improvement, total_for_reward, total_reward};
use crate::game::MarkovGame;
use crate::policy::TabularPolicy;

/// Sweep cap for best-response value iteration.
pub const VALUE_ITERATION_CAP: usize = 100_000;
pub const VALUE_ITERATION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LearnMode {
    /// Each agent ascends its own objective.
    Independent,
    /// Every agent ascends the shared total potential.
    Potential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnConfig {
    pub eta: f64,
    pub max_iters: usize,
    pub stationarity_tol: f64,
    pub mode: LearnMode,
}

impl Default for LearnConfig {
    fn default() -> Self {
        Self { eta: 0.01, max_iters: 50_000, stationarity_tol: 1e-4, mode: LearnMode::Potential }
    }
}

impl LearnConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0) {
            return Err(invalid(format!("eta must be positive, got {}", self.eta)));
        }
        if !(self.stationarity_tol > 0.0) {
            return Err(invalid(format!("stationarity_tol must be positive, got {}", self.stationarity_tol)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub potential: Option<f64>,
    pub totals: Vec<f64>,
    pub gap: f64,
    pub step_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnTrace {
    pub records: Vec<TraceRecord>,
    pub policy: TabularPolicy,
    pub converged: bool,
}

impl LearnTrace {
    /// Row-per-iteration table: `iteration,phi,J_1..J_N,gap,step_norm`.
    pub fn to_table(&self) -> String {
        let n = self.records.first().map_or(0, |r| r.totals.len());
        let mut out = String::from("iteration,phi");
        for i in 0..n {
            let _ = write!(out, ",J_{}", i + 1);
        }
        out.push_str(",gap,step_norm\n");
        for r in &self.records {
            let _ = write!(out, "{},{}", r.iteration, r.potential.map_or_else(String::new, |p| format!("{p:.17e}")));
            for j in &r.totals {
                let _ = write!(out, ",{j:.17e}");
            }
            let _ = writeln!(out, ",{:.17e},{:.17e}", r.gap, r.step_norm);
        }
        out
    }
}

fn own_gradients(game: &MarkovGame, policy: &TabularPolicy) -> Result<Vec<Vec<f64>>> {
    (0..game.n_agents()).map(|i| gradient_for_reward(game, policy, i, game.rewards(i))).collect()
}

fn potential_gradients(game: &MarkovGame, phi: &[f64], policy: &TabularPolicy) -> Result<Vec<Vec<f64>>> {
    if phi.len() != game.n_states() * game.n_joint_actions() {
        return Err(invalid("potential does not match the game"));
    }
    (0..game.n_agents()).map(|i| gradient_for_reward(game, policy, i, phi)).collect()
}

fn apply_step(policy: &TabularPolicy, grads: &[Vec<f64>], eta: f64) -> Result<TabularPolicy> {
    let mut out = policy.clone();
    for (i, g) in grads.iter().enumerate() {
        let block = policy.projected_update(i, g, eta)?;
        out = out.with_block(i, block)?;
    }
    Ok(out)
}

/// Simultaneous projected ascent of every agent on its own objective.
pub fn independent_gradient_step(game: &MarkovGame, policy: &TabularPolicy, eta: f64) -> Result<TabularPolicy> {
    if !(eta >= 0.0) {
        return Err(invalid(format!("eta must be non-negative, got {eta}")));
    }
    apply_step(policy, &own_gradients(game, policy)?, eta)
}

/// Projected ascent of every agent on the total potential.
pub fn potential_ascent_step(game: &MarkovGame, phi: &[f64], policy: &TabularPolicy, eta: f64) -> Result<TabularPolicy> {
    if !(eta >= 0.0) {
        return Err(invalid(format!("eta must be non-negative, got {eta}")));
    }
    apply_step(policy, &potential_gradients(game, phi, policy)?, eta)
}

fn gap_from(game: &MarkovGame, policy: &TabularPolicy, grads: &[Vec<f64>]) -> f64 {
    grads
        .iter()
        .enumerate()
        .map(|(i, g)| max_linear_improvement(policy.block(i), g, game.n_actions(i)))
        .fold(0.0, f64::max)
}

/// `max_i max_{θ_i'} (θ_i' - θ_i)ᵀ ∇_{θ_i} J_i(θ)`; zero exactly at first-order stationary points.
pub fn stationarity_gap(game: &MarkovGame, policy: &TabularPolicy) -> Result<f64> {
    policy.check_matches(game)?;
    Ok(gap_from(game, policy, &own_gradients(game, policy)?))
}

/// Agent `i`'s induced single-agent MDP with everyone else frozen.
struct InducedMdp {
    n_states: usize,
    n_actions: usize,
    /// `[s][a_i][s']`
    transition: Vec<f64>,
    /// `[s][a_i]`
    reward: Vec<f64>,
}

fn induced_mdp(game: &MarkovGame, policy: &TabularPolicy, agent: usize) -> InducedMdp {
    let (ns, na) = (game.n_states(), game.n_joint_actions());
    let na_i = game.n_actions(agent);
    let actions = game.action_space();
    let mut transition = vec![0.0; ns * na_i * ns];
    let mut reward = vec![0.0; ns * na_i];
    for s in 0..ns {
        for a in 0..na {
            let w: f64 = (0..game.n_agents())
                .filter(|&j| j != agent)
                .map(|j| policy.prob(j, s, actions.component(a, j)))
                .product();
            if w == 0.0 {
                continue;
            }
            let ai = actions.component(a, agent);
            reward[s * na_i + ai] += w * game.reward(agent, s, a);
            let base = (s * na_i + ai) * ns;
            for (next, &p) in game.transition_row(s, a).iter().enumerate() {
                transition[base + next] += w * p;
            }
        }
    }
    InducedMdp { n_states: ns, n_actions: na_i, transition, reward }
}

impl InducedMdp {
    fn q(&self, gamma: f64, v: &[f64], s: usize, a: usize) -> f64 {
        let base = (s * self.n_actions + a) * self.n_states;
        let cont: f64 = self.transition[base..base + self.n_states].iter().zip(v).map(|(p, x)| p * x).sum();
        self.reward[s * self.n_actions + a] + gamma * cont
    }

    fn greedy(&self, gamma: f64, v: &[f64]) -> Vec<usize> {
        (0..self.n_states)
            .map(|s| {
                let qs: Vec<f64> = (0..self.n_actions).map(|a| self.q(gamma, v, s, a)).collect();
                let best = qs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let slack = 1e-12 * best.abs().max(1.0);
                qs.iter().position(|&q| q >= best - slack).expect("non-empty action set")
            })
            .collect()
    }
}

/// Deterministic best response of `agent` against the others' current policies.
///
/// Returns agent `i`'s new parameter block and the exact objective it attains.
pub fn best_response(game: &MarkovGame, policy: &TabularPolicy, agent: usize) -> Result<(Vec<f64>, f64)> {
    policy.check_matches(game)?;
    if agent >= game.n_agents() {
        return Err(invalid(format!("agent {agent} out of range")));
    }
    let mdp = induced_mdp(game, policy, agent);
    let gamma = game.gamma();
    let mut v = vec![0.0; mdp.n_states];
    let mut converged = false;
    for _ in 0..VALUE_ITERATION_CAP {
        let next: Vec<f64> = (0..mdp.n_states)
            .map(|s| (0..mdp.n_actions).map(|a| mdp.q(gamma, &v, s, a)).fold(f64::NEG_INFINITY, f64::max))
            .collect();
        let delta = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let scale = next.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        v = next;
        if delta <= VALUE_ITERATION_TOL * scale {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(MpgError::Internal(format!("value iteration did not converge in {VALUE_ITERATION_CAP} sweeps")));
    }
    let choice = mdp.greedy(gamma, &v);
    let mut block = vec![0.0; mdp.n_states * mdp.n_actions];
    for (s, &a) in choice.iter().enumerate() {
        block[s * mdp.n_actions + a] = 1.0;
    }
    let responded = policy.with_block(agent, block.clone())?;
    let value = total_reward(game, &responded, agent)?;
    Ok((block, value))
}

/// Best-response value minus current value, per agent.
pub fn exploitability(game: &MarkovGame, policy: &TabularPolicy) -> Result<Vec<f64>> {
    (0..game.n_agents())
        .map(|i| {
            let (_, best) = best_response(game, policy, i)?;
            Ok(best - total_reward(game, policy, i)?)
        })
        .collect()
}

/// Runs the configured dynamics from the uniform policy.
pub fn train(game: &MarkovGame, phi: Option<&[f64]>, config: &LearnConfig) -> Result<LearnTrace> {
    train_from(game, phi, config, TabularPolicy::uniform(game))
}

pub fn train_from(
    game: &MarkovGame,
    phi: Option<&[f64]>,
    config: &LearnConfig,
    initial: TabularPolicy,
) -> Result<LearnTrace> {
    config.validate()?;
    initial.check_matches(game)?;
    if config.mode == LearnMode::Potential && phi.is_none() {
        return Err(invalid("potential mode requires a potential function"));
    }
    let mut policy = initial;
    let mut records = Vec::new();
    let mut converged = false;
    for iteration in 0..config.max_iters {
        let own = own_gradients(game, &policy)?;
        let gap = gap_from(game, &policy, &own);
        let totals = (0..game.n_agents()).map(|i| total_reward(game, &policy, i)).collect::<Result<Vec<_>>>()?;
        let potential = match phi {
            Some(p) => Some(total_for_reward(game, &policy, p)?),
            None => None,
        };
        if gap < config.stationarity_tol {
            records.push(TraceRecord { iteration, potential, totals, gap, step_norm: 0.0 });
            converged = true;
            break;
        }
        let grads = match config.mode {
            LearnMode::Independent => own,
            LearnMode::Potential => potential_gradients(game, phi.expect("checked above"), &policy)?,
        };
        let next = apply_step(&policy, &grads, config.eta)?;
        let step_norm = (0..game.n_agents())
            .flat_map(|i| next.block(i).iter().zip(policy.block(i)).map(|(a, b)| (a - b).powi(2)).collect::<Vec<_>>())
            .sum::<f64>()
            .sqrt();
        records.push(TraceRecord { iteration, potential, totals, gap, step_norm });
        policy = next;
    }
    Ok(LearnTrace { records, policy, converged })
}
