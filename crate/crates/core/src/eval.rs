//! Closed-form evaluation on tabular games.
//!
//! Everything here reduces to the policy-induced chain `M(s,s') = Σ_a π(a|s) P(s'|s,a)`
//! and dense LU solves against `I - γM`.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, MpgError, Result};
use crate::game::MarkovGame;
use crate::policy::TabularPolicy;

/// Below this visitation mass a state counts as unreachable.
pub const MIN_VISITATION: f64 = 1e-14;

pub fn induced_transition(game: &MarkovGame, policy: &TabularPolicy) -> DMatrix<f64> {
    let ns = game.n_states();
    let mut m = DMatrix::zeros(ns, ns);
    for s in 0..ns {
        let pi = policy.joint_distribution(game, s);
        for (a, &w) in pi.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (next, &p) in game.transition_row(s, a).iter().enumerate() {
                m[(s, next)] += w * p;
            }
        }
    }
    m
}

/// `r̄(s) = Σ_a π(a|s) r(s,a)` for a reward tensor flattened `[s][a]`.
fn policy_reward(game: &MarkovGame, policy: &TabularPolicy, reward: &[f64]) -> DVector<f64> {
    let na = game.n_joint_actions();
    DVector::from_iterator(
        game.n_states(),
        (0..game.n_states()).map(|s| {
            let pi = policy.joint_distribution(game, s);
            pi.iter().zip(&reward[s * na..(s + 1) * na]).map(|(w, r)| w * r).sum::<f64>()
        }),
    )
}

fn resolvent(game: &MarkovGame, policy: &TabularPolicy) -> nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn> {
    let ns = game.n_states();
    let a = DMatrix::identity(ns, ns) - induced_transition(game, policy) * game.gamma();
    a.lu()
}

/// Solves `(I - γM) V = r̄` for an arbitrary reward tensor.
pub fn value_for_reward(game: &MarkovGame, policy: &TabularPolicy, reward: &[f64]) -> Result<Vec<f64>> {
    policy.check_matches(game)?;
    if reward.len() != game.n_states() * game.n_joint_actions() {
        return Err(invalid("reward tensor does not match the game"));
    }
    let rhs = policy_reward(game, policy, reward);
    let v = resolvent(game, policy)
        .solve(&rhs)
        .ok_or_else(|| MpgError::Internal("singular value system".into()))?;
    if v.iter().any(|x| !x.is_finite()) {
        return Err(MpgError::Internal("non-finite value solution".into()));
    }
    Ok(v.iter().copied().collect())
}

pub fn value_function(game: &MarkovGame, policy: &TabularPolicy, agent: usize) -> Result<Vec<f64>> {
    check_agent(game, agent)?;
    value_for_reward(game, policy, game.rewards(agent))
}

/// `ρ · V` for an arbitrary reward tensor.
pub fn total_for_reward(game: &MarkovGame, policy: &TabularPolicy, reward: &[f64]) -> Result<f64> {
    let v = value_for_reward(game, policy, reward)?;
    Ok(game.rho().iter().zip(&v).map(|(p, x)| p * x).sum())
}

pub fn total_reward(game: &MarkovGame, policy: &TabularPolicy, agent: usize) -> Result<f64> {
    check_agent(game, agent)?;
    total_for_reward(game, policy, game.rewards(agent))
}

/// `d = (1-γ) ρᵀ (I - γM)^{-1}`, computed as a transposed solve.
pub fn visitation_measure(game: &MarkovGame, policy: &TabularPolicy) -> Result<Vec<f64>> {
    policy.check_matches(game)?;
    let ns = game.n_states();
    let a = DMatrix::identity(ns, ns) - induced_transition(game, policy) * game.gamma();
    let rhs = DVector::from_iterator(ns, game.rho().iter().map(|p| (1.0 - game.gamma()) * p));
    let d = a
        .transpose()
        .lu()
        .solve(&rhs)
        .ok_or_else(|| MpgError::Internal("singular visitation system".into()))?;
    Ok(d.iter().map(|&x| x.max(0.0)).collect())
}

/// `∂J/∂θ_{i,(s,a_i)} = d(s) Q̄(s,a_i) / (1-γ)` for an arbitrary reward tensor,
/// flattened `[s][a_i]`.
pub fn gradient_for_reward(
    game: &MarkovGame,
    policy: &TabularPolicy,
    agent: usize,
    reward: &[f64],
) -> Result<Vec<f64>> {
    check_agent(game, agent)?;
    let v = value_for_reward(game, policy, reward)?;
    let d = visitation_measure(game, policy)?;
    let q_bar = marginal_q(game, policy, agent, reward, &v);
    let na_i = game.n_actions(agent);
    let scale = 1.0 / (1.0 - game.gamma());
    Ok((0..game.n_states() * na_i).map(|k| scale * d[k / na_i] * q_bar[k]).collect())
}

/// `Q̄_i(s,a_i) = Σ_{a_{-i}} Π_{j≠i} θ_j(a_j|s) [r(s,a) + γ Σ_{s'} P(s'|s,a) V(s')]`.
pub(crate) fn marginal_q(game: &MarkovGame, policy: &TabularPolicy, agent: usize, reward: &[f64], v: &[f64]) -> Vec<f64> {
    let (ns, na) = (game.n_states(), game.n_joint_actions());
    let actions = game.action_space();
    let na_i = game.n_actions(agent);
    let mut q_bar = vec![0.0; ns * na_i];
    for s in 0..ns {
        for a in 0..na {
            let others: f64 = (0..game.n_agents())
                .filter(|&j| j != agent)
                .map(|j| policy.prob(j, s, actions.component(a, j)))
                .product();
            if others == 0.0 {
                continue;
            }
            let cont: f64 = game.transition_row(s, a).iter().zip(v).map(|(p, x)| p * x).sum();
            let q = reward[s * na + a] + game.gamma() * cont;
            q_bar[s * na_i + actions.component(a, agent)] += others * q;
        }
    }
    q_bar
}

pub fn exact_policy_gradient(game: &MarkovGame, policy: &TabularPolicy, agent: usize) -> Result<Vec<f64>> {
    check_agent(game, agent)?;
    gradient_for_reward(game, policy, agent, game.rewards(agent))
}

/// `max_{θ̄ ∈ Δ^{|S|}} (θ̄ - θ)ᵀ g`, which splits into a per-state vertex choice.
pub fn max_linear_improvement(block: &[f64], grad: &[f64], n_actions: usize) -> f64 {
    block
        .chunks(n_actions)
        .zip(grad.chunks(n_actions))
        .map(|(row, g)| {
            let best = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let current: f64 = row.iter().zip(g).map(|(p, x)| p * x).sum();
            best - current
        })
        .sum()
}

/// Right-hand side minus left-hand side of the gradient-domination inequality
/// for a unilateral deviation of `agent` to `deviation`.
pub fn gradient_domination_slack(
    game: &MarkovGame,
    policy: &TabularPolicy,
    agent: usize,
    deviation: &[f64],
) -> Result<f64> {
    check_agent(game, agent)?;
    let deviated = policy.with_block(agent, deviation.to_vec())?;
    let d = visitation_measure(game, policy)?;
    if let Some(s) = d.iter().position(|&x| x < MIN_VISITATION) {
        return Err(MpgError::PreconditionFailed(format!(
            "state {s} has visitation {:e}; every state must be visited",
            d[s]
        )));
    }
    let d_dev = visitation_measure(game, &deviated)?;
    let mismatch = d_dev.iter().zip(&d).map(|(a, b)| a / b).fold(0.0, f64::max);
    let grad = exact_policy_gradient(game, policy, agent)?;
    let first_order = max_linear_improvement(policy.block(agent), &grad, game.n_actions(agent));
    let lhs = total_reward(game, &deviated, agent)? - total_reward(game, policy, agent)?;
    Ok(mismatch * first_order - lhs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    pub satisfied: bool,
    pub policies_checked: usize,
    pub min_visitation: f64,
}

/// Samples random full-support and random deterministic policies and checks
/// that every state keeps positive visitation mass under all of them.
pub fn assumption_one_holds(game: &MarkovGame, n_policies: usize, seed: u64) -> Result<AssumptionReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut min_visitation = f64::INFINITY;
    for k in 0..n_policies {
        let policy = if k % 2 == 0 {
            TabularPolicy::random(game, &mut rng)
        } else {
            random_deterministic(game, &mut rng)
        };
        let d = visitation_measure(game, &policy)?;
        min_visitation = d.iter().copied().fold(min_visitation, f64::min);
    }
    Ok(AssumptionReport { satisfied: min_visitation >= MIN_VISITATION, policies_checked: n_policies, min_visitation })
}

fn random_deterministic<R: rand::Rng>(game: &MarkovGame, rng: &mut R) -> TabularPolicy {
    let choice: Vec<Vec<usize>> = (0..game.n_agents())
        .map(|i| (0..game.n_states()).map(|_| rng.gen_range(0..game.n_actions(i))).collect())
        .collect();
    TabularPolicy::deterministic(game, &choice).expect("choices drawn in range")
}

fn check_agent(game: &MarkovGame, agent: usize) -> Result<()> {
    if agent >= game.n_agents() {
        return Err(invalid(format!("agent {agent} out of range (n_agents = {})", game.n_agents())));
    }
    Ok(())
}
