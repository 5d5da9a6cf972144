use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Construction-time tolerance for stochastic rows.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// Row-major mixed-radix indexing over a product of finite sets.
///
/// The first component is the most significant digit, so `(x_1, ..., x_N)`
/// maps to `((x_1 * d_2 + x_2) * d_3 + x_3) ...`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JointSpace {
    dims: Vec<usize>,
}

impl JointSpace {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() {
            return Err(invalid("joint space needs at least one component"));
        }
        if let Some(k) = dims.iter().position(|&d| d == 0) {
            return Err(invalid(format!("component {k} has zero cardinality")));
        }
        Ok(Self { dims })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn size(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn encode(&self, parts: &[usize]) -> usize {
        debug_assert_eq!(parts.len(), self.dims.len());
        parts.iter().zip(&self.dims).fold(0, |acc, (&x, &d)| acc * d + x)
    }

    pub fn decode(&self, mut index: usize) -> Vec<usize> {
        let mut parts = vec![0; self.dims.len()];
        for k in (0..self.dims.len()).rev() {
            parts[k] = index % self.dims[k];
            index /= self.dims[k];
        }
        parts
    }

    /// Component `k` of the decoded index without allocating.
    pub fn component(&self, index: usize, k: usize) -> usize {
        let stride: usize = self.dims[k + 1..].iter().product();
        (index / stride) % self.dims[k]
    }
}

/// Per-agent local transition kernels `P_i(s_i' | s_i, a_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalKernel {
    pub n_states: usize,
    pub n_actions: usize,
    /// Flattened `[s_i][a_i][s_i']`.
    pub probs: Vec<f64>,
}

impl LocalKernel {
    pub fn new(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(invalid("local kernel needs at least one state and one action"));
        }
        if probs.len() != n_states * n_actions * n_states {
            return Err(invalid(format!(
                "local kernel has {} entries, expected {}",
                probs.len(),
                n_states * n_actions * n_states
            )));
        }
        for s in 0..n_states {
            for a in 0..n_actions {
                let row = &probs[(s * n_actions + a) * n_states..(s * n_actions + a + 1) * n_states];
                check_distribution(row, &format!("local row (s={s}, a={a})"))?;
            }
        }
        Ok(Self { n_states, n_actions, probs })
    }

    /// Builds a kernel from nested `[s][a][s']` vectors.
    pub fn from_nested(nested: &[Vec<Vec<f64>>]) -> Result<Self> {
        let n_states = nested.len();
        let n_actions = nested.first().map_or(0, |r| r.len());
        let mut probs = Vec::with_capacity(n_states * n_actions * n_states);
        for (s, per_action) in nested.iter().enumerate() {
            if per_action.len() != n_actions {
                return Err(invalid(format!("local state {s} has {} actions, expected {n_actions}", per_action.len())));
            }
            for (a, row) in per_action.iter().enumerate() {
                if row.len() != n_states {
                    return Err(invalid(format!("row (s={s}, a={a}) has length {}, expected {n_states}", row.len())));
                }
                probs.extend_from_slice(row);
            }
        }
        Self::new(n_states, n_actions, probs)
    }

    pub fn prob(&self, s: usize, a: usize, next: usize) -> f64 {
        self.probs[(s * self.n_actions + a) * self.n_states + next]
    }
}

/// Decoupled dynamics: the global kernel is the product of the local ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactoredTransition {
    pub locals: Vec<LocalKernel>,
}

impl FactoredTransition {
    pub fn new(locals: Vec<LocalKernel>) -> Result<Self> {
        if locals.is_empty() {
            return Err(invalid("factored transition needs at least one agent"));
        }
        Ok(Self { locals })
    }

    pub fn state_space(&self) -> JointSpace {
        JointSpace { dims: self.locals.iter().map(|k| k.n_states).collect() }
    }

    pub fn action_space(&self) -> JointSpace {
        JointSpace { dims: self.locals.iter().map(|k| k.n_actions).collect() }
    }

    /// Global `P(s'|s,a) = Π_i P_i(s_i'|s_i,a_i)`, flattened `[s][a][s']`.
    pub fn expand(&self) -> Vec<f64> {
        let states = self.state_space();
        let actions = self.action_space();
        let (ns, na) = (states.size(), actions.size());
        let mut out = vec![0.0; ns * na * ns];
        for s in 0..ns {
            let sp = states.decode(s);
            for a in 0..na {
                let ap = actions.decode(a);
                let base = (s * na + a) * ns;
                for next in 0..ns {
                    let np = states.decode(next);
                    out[base + next] = self
                        .locals
                        .iter()
                        .enumerate()
                        .map(|(i, k)| k.prob(sp[i], ap[i], np[i]))
                        .product();
                }
            }
        }
        out
    }
}

/// A finite N-agent Markov game over the product state space `S_1 × ... × S_N`.
///
/// Agents with no local state of their own have a single local state, so a
/// game with an unstructured global state can put all of it on agent 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovGame {
    states: JointSpace,
    actions: JointSpace,
    state_labels: Vec<Vec<String>>,
    action_labels: Vec<Vec<String>>,
    /// Flattened `[s][a][s']`.
    transition: Vec<f64>,
    /// Per agent, flattened `[s][a]`.
    rewards: Vec<Vec<f64>>,
    gamma: f64,
    rho: Vec<f64>,
    factored: bool,
}

impl MarkovGame {
    /// Validates every invariant and reports the first violation with indices.
    pub fn new(
        local_states: Vec<usize>,
        action_counts: Vec<usize>,
        transition: Vec<f64>,
        rewards: Vec<Vec<f64>>,
        gamma: f64,
        rho: Vec<f64>,
    ) -> Result<Self> {
        if local_states.len() != action_counts.len() {
            return Err(invalid(format!(
                "{} local state spaces but {} action spaces",
                local_states.len(),
                action_counts.len()
            )));
        }
        let states = JointSpace::new(local_states)?;
        let actions = JointSpace::new(action_counts)?;
        let (ns, na) = (states.size(), actions.size());
        if !(0.0..1.0).contains(&gamma) {
            return Err(invalid(format!("gamma = {gamma} outside [0, 1)")));
        }
        if transition.len() != ns * na * ns {
            return Err(invalid(format!("transition has {} entries, expected {}", transition.len(), ns * na * ns)));
        }
        for s in 0..ns {
            for a in 0..na {
                let row = &transition[(s * na + a) * ns..(s * na + a + 1) * ns];
                check_distribution(row, &format!("transition row (s={s}, a={a})"))?;
            }
        }
        if rewards.len() != states.dims().len() {
            return Err(invalid(format!("{} reward tensors for {} agents", rewards.len(), states.dims().len())));
        }
        for (i, r) in rewards.iter().enumerate() {
            if r.len() != ns * na {
                return Err(invalid(format!("reward of agent {i} has {} entries, expected {}", r.len(), ns * na)));
            }
            if let Some(k) = r.iter().position(|x| !x.is_finite()) {
                return Err(invalid(format!("reward of agent {i} is non-finite at (s={}, a={})", k / na, k % na)));
            }
        }
        if rho.len() != ns {
            return Err(invalid(format!("rho has {} entries, expected {ns}", rho.len())));
        }
        check_distribution(&rho, "rho")?;
        let state_labels = default_labels(states.dims(), "s");
        let action_labels = default_labels(actions.dims(), "a");
        Ok(Self { states, actions, state_labels, action_labels, transition, rewards, gamma, rho, factored: false })
    }

    pub fn with_labels(mut self, state_labels: Vec<Vec<String>>, action_labels: Vec<Vec<String>>) -> Result<Self> {
        let fits = |labels: &[Vec<String>], dims: &[usize]| {
            labels.len() == dims.len() && labels.iter().zip(dims).all(|(l, &d)| l.len() == d)
        };
        if !fits(&state_labels, self.states.dims()) || !fits(&action_labels, self.actions.dims()) {
            return Err(invalid("label lists do not match the state/action cardinalities"));
        }
        self.state_labels = state_labels;
        self.action_labels = action_labels;
        Ok(self)
    }

    /// Marks the game as built from a per-agent factored kernel.
    pub(crate) fn mark_factored(mut self) -> Self {
        self.factored = true;
        self
    }

    pub fn n_agents(&self) -> usize {
        self.states.dims().len()
    }
    pub fn n_states(&self) -> usize {
        self.states.size()
    }
    pub fn n_joint_actions(&self) -> usize {
        self.actions.size()
    }
    pub fn n_actions(&self, agent: usize) -> usize {
        self.actions.dims()[agent]
    }
    pub fn state_space(&self) -> &JointSpace {
        &self.states
    }
    pub fn action_space(&self) -> &JointSpace {
        &self.actions
    }
    pub fn state_labels(&self) -> &[Vec<String>] {
        &self.state_labels
    }
    pub fn action_labels(&self) -> &[Vec<String>] {
        &self.action_labels
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    pub fn rho(&self) -> &[f64] {
        &self.rho
    }
    pub fn is_factored(&self) -> bool {
        self.factored
    }
    pub fn transition(&self) -> &[f64] {
        &self.transition
    }
    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let ns = self.n_states();
        let base = (s * self.n_joint_actions() + a) * ns;
        &self.transition[base..base + ns]
    }
    pub fn prob(&self, s: usize, a: usize, next: usize) -> f64 {
        self.transition_row(s, a)[next]
    }
    /// Agent `i`'s reward tensor flattened `[s][a]`.
    pub fn rewards(&self, agent: usize) -> &[f64] {
        &self.rewards[agent]
    }
    pub fn reward(&self, agent: usize, s: usize, a: usize) -> f64 {
        self.rewards[agent][s * self.n_joint_actions() + a]
    }

    /// Same dynamics, different per-agent rewards.
    pub fn with_rewards(&self, rewards: Vec<Vec<f64>>) -> Result<Self> {
        if rewards.len() != self.n_agents() || rewards.iter().any(|r| r.len() != self.n_states() * self.n_joint_actions())
        {
            return Err(invalid("replacement rewards do not match the game dimensions"));
        }
        Ok(Self { rewards, ..self.clone() })
    }

    /// Draws a successor state from `P(·|s,a)` using a generator seeded with `seed`.
    pub fn sample_transition(&self, s: usize, a: usize, seed: u64) -> Result<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_transition_with(s, a, &mut rng)
    }

    pub fn sample_transition_with<R: Rng + ?Sized>(&self, s: usize, a: usize, rng: &mut R) -> Result<usize> {
        if s >= self.n_states() || a >= self.n_joint_actions() {
            return Err(invalid(format!("state {s} or joint action {a} out of range")));
        }
        Ok(sample_index(self.transition_row(s, a), rng.gen::<f64>()))
    }
}

/// Inverse-CDF lookup; the last index with positive mass absorbs rounding.
pub(crate) fn sample_index(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (k, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last = k;
            acc += p;
            if u < acc {
                return k;
            }
        }
    }
    last
}

fn default_labels(dims: &[usize], prefix: &str) -> Vec<Vec<String>> {
    dims.iter().map(|&d| (0..d).map(|k| format!("{prefix}{k}")).collect()).collect()
}

pub(crate) fn check_distribution(row: &[f64], what: &str) -> Result<()> {
    if let Some(k) = row.iter().position(|&p| !(p >= 0.0) || !p.is_finite()) {
        return Err(invalid(format!("{what}: entry {k} = {} is negative or non-finite", row[k])));
    }
    let total: f64 = row.iter().sum();
    if (total - 1.0).abs() > STOCHASTIC_TOL {
        return Err(invalid(format!("{what}: sums to {total}, expected 1")));
    }
    Ok(())
}
