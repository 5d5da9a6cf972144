//! Reference computations that share no code path with the evaluator.
//!
//! Values come from plain fixed-point iteration on raw (possibly off-simplex)
//! parameters, so finite differences can perturb single entries.

#![allow(dead_code)]

use mpg_core::{MarkovGame, TabularPolicy};

/// `V ← r̄ + γ M V` iterated until the contraction residual is below 1e-15.
pub fn raw_value(game: &MarkovGame, params: &[Vec<f64>], reward: &[f64]) -> Vec<f64> {
    let (ns, na, n) = (game.n_states(), game.n_joint_actions(), game.n_agents());
    let dims: Vec<usize> = (0..n).map(|i| game.n_actions(i)).collect();
    let mut weights = vec![0.0; ns * na];
    for s in 0..ns {
        for a in 0..na {
            let mut rest = a;
            let mut parts = vec![0; n];
            for k in (0..n).rev() {
                parts[k] = rest % dims[k];
                rest /= dims[k];
            }
            weights[s * na + a] = (0..n).map(|i| params[i][s * dims[i] + parts[i]]).product();
        }
    }
    let mut v = vec![0.0; ns];
    let gamma = game.gamma();
    let sweeps = if gamma == 0.0 { 1 } else { ((1e-17f64).ln() / gamma.ln()).ceil() as usize + 10 };
    for _ in 0..sweeps {
        let mut next = vec![0.0; ns];
        for s in 0..ns {
            let mut acc = 0.0;
            for a in 0..na {
                let w = weights[s * na + a];
                if w == 0.0 {
                    continue;
                }
                let mut cont = 0.0;
                for (t, &p) in game.transition_row(s, a).iter().enumerate() {
                    cont += p * v[t];
                }
                acc += w * (reward[s * na + a] + gamma * cont);
            }
            next[s] = acc;
        }
        v = next;
    }
    v
}

pub fn raw_total(game: &MarkovGame, params: &[Vec<f64>], reward: &[f64]) -> f64 {
    raw_value(game, params, reward).iter().zip(game.rho()).map(|(v, p)| v * p).sum()
}

pub fn blocks(policy: &TabularPolicy) -> Vec<Vec<f64>> {
    (0..policy.n_agents()).map(|i| policy.block(i).to_vec()).collect()
}

/// Central differences of the total reward w.r.t. every entry of agent `i`'s block.
pub fn fd_gradient(game: &MarkovGame, policy: &TabularPolicy, agent: usize, reward: &[f64], h: f64) -> Vec<f64> {
    let base = blocks(policy);
    (0..base[agent].len())
        .map(|k| {
            let mut up = base.clone();
            let mut down = base.clone();
            up[agent][k] += h;
            down[agent][k] -= h;
            (raw_total(game, &up, reward) - raw_total(game, &down, reward)) / (2.0 * h)
        })
        .collect()
}

/// All deterministic blocks for one agent: `|A_i|^{|S|}` vertices of its product of simplices.
pub fn deterministic_blocks(n_states: usize, n_actions: usize) -> Vec<Vec<f64>> {
    let count = n_actions.pow(n_states as u32);
    (0..count)
        .map(|mut code| {
            let mut block = vec![0.0; n_states * n_actions];
            for s in 0..n_states {
                block[s * n_actions + code % n_actions] = 1.0;
                code /= n_actions;
            }
            block
        })
        .collect()
}

/// LP optimum of `(θ̄ - θ)ᵀ g` over the product of simplices, by vertex enumeration.
pub fn brute_force_linear_max(block: &[f64], grad: &[f64], n_states: usize, n_actions: usize) -> f64 {
    let current: f64 = block.iter().zip(grad).map(|(p, g)| p * g).sum();
    deterministic_blocks(n_states, n_actions)
        .iter()
        .map(|v| v.iter().zip(grad).map(|(p, g)| p * g).sum::<f64>() - current)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Every deterministic joint profile of the game.
pub fn deterministic_profiles(game: &MarkovGame) -> Vec<TabularPolicy> {
    let per_agent: Vec<Vec<Vec<f64>>> =
        (0..game.n_agents()).map(|i| deterministic_blocks(game.n_states(), game.n_actions(i))).collect();
    let mut out = Vec::new();
    let mut idx = vec![0usize; game.n_agents()];
    loop {
        let mut p = TabularPolicy::uniform(game);
        for (i, &k) in idx.iter().enumerate() {
            p = p.with_block(i, per_agent[i][k].clone()).unwrap();
        }
        out.push(p);
        let mut carry = game.n_agents();
        for i in (0..game.n_agents()).rev() {
            idx[i] += 1;
            if idx[i] < per_agent[i].len() {
                carry = i;
                break;
            }
            idx[i] = 0;
        }
        if carry == game.n_agents() {
            break;
        }
    }
    out
}

/// Exploitability by exhaustive search over deterministic deviations.
pub fn brute_force_exploitability(game: &MarkovGame, policy: &TabularPolicy) -> Vec<f64> {
    (0..game.n_agents())
        .map(|i| {
            let current = raw_total(game, &blocks(policy), game.rewards(i));
            deterministic_blocks(game.n_states(), game.n_actions(i))
                .into_iter()
                .map(|b| {
                    let mut params = blocks(policy);
                    params[i] = b;
                    raw_total(game, &params, game.rewards(i)) - current
                })
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}
