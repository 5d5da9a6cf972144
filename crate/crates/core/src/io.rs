//! Game description files.
//!
//! JSON documents of the form
//!
//! ```json
//! {
//!   "n_agents": 2,
//!   "agents": [{"states": ["l", "r"], "actions": ["stay", "go"]}, ...],
//!   "transition": {"factored": [[[[1.0, 0.0], ...]]]},
//!   "rewards": [[[0.0, 1.0, ...], ...], ...],
//!   "gamma": 0.9,
//!   "rho_local": [[0.5, 0.5], [1.0, 0.0]],
//!   "potential": [[...], ...]
//! }
//! ```
//!
//! `transition` is either `{"full": [s][a][s']}` over global indices or
//! `{"factored": [agent][s_i][a_i][s_i']}`; the initial distribution is either
//! `rho` (global) or `rho_local` (per agent, combined as a product).
//! Global states and joint actions are enumerated row-major over agents.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, MpgError, Result};
use crate::game::{FactoredTransition, LocalKernel, MarkovGame};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentSpec {
    pub states: Vec<String>,
    pub actions: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransitionSpec {
    Full(Vec<Vec<Vec<f64>>>),
    Factored(Vec<Vec<Vec<Vec<f64>>>>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameFile {
    pub n_agents: usize,
    pub agents: Vec<AgentSpec>,
    pub transition: TransitionSpec,
    pub rewards: Vec<Vec<Vec<f64>>>,
    pub gamma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho_local: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub potential: Option<Vec<Vec<f64>>>,
}

/// A validated game plus the optional potential stored with it.
#[derive(Debug, Clone)]
pub struct LoadedGame {
    pub game: MarkovGame,
    pub phi: Option<Vec<f64>>,
}

impl GameFile {
    pub fn into_game(self) -> Result<LoadedGame> {
        if self.agents.len() != self.n_agents {
            return Err(invalid(format!("n_agents = {} but {} agent entries", self.n_agents, self.agents.len())));
        }
        let local_states: Vec<usize> = self.agents.iter().map(|a| a.states.len()).collect();
        let action_counts: Vec<usize> = self.agents.iter().map(|a| a.actions.len()).collect();
        let ns: usize = local_states.iter().product();
        let na: usize = action_counts.iter().product();

        let (transition, factored) = match &self.transition {
            TransitionSpec::Full(t) => (flatten3(t, ns, na, ns, "transition")?, false),
            TransitionSpec::Factored(locals) => {
                if locals.len() != self.n_agents {
                    return Err(invalid(format!("{} factored kernels for {} agents", locals.len(), self.n_agents)));
                }
                let kernels = locals
                    .iter()
                    .enumerate()
                    .map(|(i, k)| {
                        let kernel = LocalKernel::from_nested(k).map_err(|e| prefix(e, &format!("agent {i}")))?;
                        if kernel.n_states != local_states[i] || kernel.n_actions != action_counts[i] {
                            return Err(invalid(format!(
                                "agent {i}: kernel is {}x{}, labels say {}x{}",
                                kernel.n_states, kernel.n_actions, local_states[i], action_counts[i]
                            )));
                        }
                        Ok(kernel)
                    })
                    .collect::<Result<Vec<_>>>()?;
                (FactoredTransition::new(kernels)?.expand(), true)
            }
        };
        if self.rewards.len() != self.n_agents {
            return Err(invalid(format!("{} reward tensors for {} agents", self.rewards.len(), self.n_agents)));
        }
        let rewards = self
            .rewards
            .iter()
            .enumerate()
            .map(|(i, r)| flatten2(r, ns, na, &format!("rewards[{i}]")))
            .collect::<Result<Vec<_>>>()?;
        let rho = match (&self.rho, &self.rho_local) {
            (Some(r), None) => r.clone(),
            (None, Some(locals)) => {
                if locals.len() != self.n_agents {
                    return Err(invalid(format!("{} local rho vectors for {} agents", locals.len(), self.n_agents)));
                }
                let space = crate::game::JointSpace::new(local_states.clone())?;
                for (i, r) in locals.iter().enumerate() {
                    if r.len() != local_states[i] {
                        return Err(invalid(format!("rho_local[{i}] has {} entries, expected {}", r.len(), local_states[i])));
                    }
                    crate::game::check_distribution(r, &format!("rho_local[{i}]"))?;
                }
                (0..ns).map(|s| space.decode(s).iter().enumerate().map(|(i, &si)| locals[i][si]).product()).collect()
            }
            (Some(_), Some(_)) => return Err(invalid("give either rho or rho_local, not both")),
            (None, None) => return Err(invalid("missing initial distribution (rho or rho_local)")),
        };
        let phi = self.potential.as_ref().map(|p| flatten2(p, ns, na, "potential")).transpose()?;
        let mut game = MarkovGame::new(local_states, action_counts, transition, rewards, self.gamma, rho)?
            .with_labels(
                self.agents.iter().map(|a| a.states.clone()).collect(),
                self.agents.iter().map(|a| a.actions.clone()).collect(),
            )?;
        if factored {
            game = game.mark_factored();
        }
        Ok(LoadedGame { game, phi })
    }

    /// Full-transition description of an existing game.
    pub fn from_game(game: &MarkovGame, phi: Option<&[f64]>) -> Self {
        let (ns, na) = (game.n_states(), game.n_joint_actions());
        let agents = (0..game.n_agents())
            .map(|i| AgentSpec { states: game.state_labels()[i].clone(), actions: game.action_labels()[i].clone() })
            .collect();
        let transition = (0..ns).map(|s| (0..na).map(|a| game.transition_row(s, a).to_vec()).collect()).collect();
        let nest = |flat: &[f64]| -> Vec<Vec<f64>> { flat.chunks(na).map(|c| c.to_vec()).collect() };
        Self {
            n_agents: game.n_agents(),
            agents,
            transition: TransitionSpec::Full(transition),
            rewards: (0..game.n_agents()).map(|i| nest(game.rewards(i))).collect(),
            gamma: game.gamma(),
            rho: Some(game.rho().to_vec()),
            rho_local: None,
            potential: phi.map(nest),
        }
    }
}

pub fn parse_game(text: &str) -> Result<LoadedGame> {
    let file: GameFile = serde_json::from_str(text).map_err(|e| MpgError::Parse(e.to_string()))?;
    file.into_game()
}

pub fn load_game(path: &Path) -> Result<LoadedGame> {
    let text = std::fs::read_to_string(path).map_err(|e| MpgError::Parse(format!("{}: {e}", path.display())))?;
    parse_game(&text)
}

pub fn game_to_json(game: &MarkovGame, phi: Option<&[f64]>) -> String {
    serde_json::to_string_pretty(&GameFile::from_game(game, phi)).expect("game file serializes")
}

fn prefix(err: MpgError, what: &str) -> MpgError {
    match err {
        MpgError::InvalidArgument(m) => MpgError::InvalidArgument(format!("{what}: {m}")),
        other => other,
    }
}

fn flatten2(t: &[Vec<f64>], rows: usize, cols: usize, what: &str) -> Result<Vec<f64>> {
    if t.len() != rows {
        return Err(invalid(format!("{what} has {} rows, expected {rows}", t.len())));
    }
    let mut out = Vec::with_capacity(rows * cols);
    for (r, row) in t.iter().enumerate() {
        if row.len() != cols {
            return Err(invalid(format!("{what}[{r}] has {} entries, expected {cols}", row.len())));
        }
        out.extend_from_slice(row);
    }
    Ok(out)
}

fn flatten3(t: &[Vec<Vec<f64>>], d0: usize, d1: usize, d2: usize, what: &str) -> Result<Vec<f64>> {
    if t.len() != d0 {
        return Err(invalid(format!("{what} has {} states, expected {d0}", t.len())));
    }
    let mut out = Vec::with_capacity(d0 * d1 * d2);
    for (i, m) in t.iter().enumerate() {
        out.extend(flatten2(m, d1, d2, &format!("{what}[{i}]"))?);
    }
    Ok(out)
}
