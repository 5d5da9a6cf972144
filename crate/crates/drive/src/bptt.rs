//! Exact reverse-mode gradients of discounted rollout objectives with respect
//! to the policy network's parameters.

use serde::{Deserialize, Serialize};

use crate::env::{potential_step_value, step_dynamics, total_step_reward, EnvConfig, IntersectionState};
use crate::error::{invalid, DriveError, Result};
use crate::mlp::{ForwardCache, MlpPolicy};
use crate::policies::{constant_speed_policy, rule_based_policy};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "agent")]
pub enum Objective {
    Potential,
    Agent(usize),
}

/// Behaviour of the vehicles the trained network does not drive.
#[derive(Clone, Copy, Debug)]
pub enum Others<'a> {
    Network(&'a MlpPolicy),
    Rule,
    Constant,
}

/// Which vehicles the differentiated network controls.
#[derive(Clone, Copy, Debug)]
pub enum Control<'a> {
    /// The network outputs every vehicle's action.
    Centralized,
    /// The network drives the ego; the others act as fixed environment behaviour.
    Ego(Others<'a>),
}

impl Control<'_> {
    fn drives(&self, i: usize, config: &EnvConfig) -> bool {
        match self {
            Control::Centralized => true,
            Control::Ego(_) => i == config.ego,
        }
    }
}

/// Joint action under `control`, before clamping.
pub fn joint_action(net: &MlpPolicy, control: Control, state: &IntersectionState, config: &EnvConfig) -> Result<Vec<f64>> {
    let own = net.forward(&state.to_vector())?;
    joint_from(own, control, state, config)
}

fn joint_from(own: Vec<f64>, control: Control, state: &IntersectionState, config: &EnvConfig) -> Result<Vec<f64>> {
    let others = match control {
        Control::Centralized => return Ok(own),
        Control::Ego(Others::Network(n)) => n.forward(&state.to_vector())?,
        Control::Ego(Others::Rule) => rule_based_policy(state, config),
        Control::Ego(Others::Constant) => constant_speed_policy(state),
    };
    let mut a = others;
    a[config.ego] = own[config.ego];
    Ok(a)
}

fn step_objective(state: &IntersectionState, objective: Objective, config: &EnvConfig) -> f64 {
    match objective {
        Objective::Potential => potential_step_value(state, config),
        Objective::Agent(i) => total_step_reward(state, i, config),
    }
}

/// Adds `scale * dR/dp` and `scale * dR/dv` of the per-step objective.
fn step_objective_gradient(
    state: &IntersectionState,
    objective: Objective,
    config: &EnvConfig,
    scale: f64,
    gp: &mut [f64],
    gv: &mut [f64],
) {
    let n = state.n_vehicles();
    let w1 = config.omega1 * scale;
    let w2 = config.omega2 * scale;
    let mut self_term = |i: usize| gv[i] += -2.0 * (state.v[i] - config.desired_speeds[i]) * w1;
    match objective {
        Objective::Potential => (0..n).for_each(&mut self_term),
        Objective::Agent(i) => self_term(i),
    }
    let mut pair = |i: usize, j: usize| {
        let (xi, yi) = config.world_position(state, i);
        let (xj, yj) = config.world_position(state, j);
        let (dx, dy) = (xi - xj, yi - yj);
        let d = (dx * dx + dy * dy).sqrt();
        if d == 0.0 {
            return;
        }
        let dr_dd = w2 / (d + config.epsilon).powi(2);
        let (ei, fi) = config.lanes[i].direction();
        let (ej, fj) = config.lanes[j].direction();
        gp[i] += dr_dd * (dx * ei + dy * fi) / d;
        gp[j] -= dr_dd * (dx * ej + dy * fj) / d;
    };
    match objective {
        Objective::Potential => {
            for i in 0..n {
                for j in 0..i {
                    pair(i, j);
                }
            }
        }
        Objective::Agent(i) => (0..n).filter(|&j| j != i).for_each(|j| pair(i, j)),
    }
}

#[derive(Clone, Debug)]
pub struct RolloutGradient {
    pub objective: f64,
    pub gradient: Vec<f64>,
}

/// Runs the clamped closed-loop rollout from `s0` and returns the discounted
/// objective with its exact gradient. Only channels the network drives are
/// differentiated; a channel whose action was clamped contributes nothing.
pub fn rollout_objective_and_gradient(
    net: &MlpPolicy,
    s0: &IntersectionState,
    config: &EnvConfig,
    objective: Objective,
    control: Control,
) -> Result<RolloutGradient> {
    config.validate()?;
    let n = config.n_vehicles();
    if net.input_dim() != 2 * n || net.output_dim() != n {
        return Err(DriveError::ShapeMismatch(format!(
            "network {:?} does not fit {} vehicles",
            net.sizes(),
            n
        )));
    }
    if let Objective::Agent(i) = objective {
        if i >= n {
            return Err(invalid(format!("objective agent {i} out of range")));
        }
    }
    let h = config.horizon_steps;
    let mut caches = Vec::with_capacity(h);
    let mut states = Vec::with_capacity(h);
    let mut live = Vec::with_capacity(h);
    let mut discounts = Vec::with_capacity(h);
    let mut state = s0.clone();
    let mut objective_value = 0.0;
    let mut discount = 1.0;
    for t in 0..h {
        let mut cache = ForwardCache::default();
        let own = net
            .forward_cached(&state.to_vector(), &mut cache)
            .map_err(|e| DriveError::NumericalFault { step: t, msg: e.to_string() })?;
        let raw = joint_from(own, control, &state, config)?;
        if let Some(i) = raw.iter().position(|a| a.is_nan()) {
            return Err(DriveError::NumericalFault { step: t, msg: format!("NaN action for vehicle {i}") });
        }
        let a: Vec<f64> = raw.iter().map(|a| a.clamp(-config.g, config.g)).collect();
        live.push((0..n).map(|i| control.drives(i, config) && raw[i].abs() <= config.g).collect::<Vec<bool>>());
        objective_value += discount * step_objective(&state, objective, config);
        if !objective_value.is_finite() {
            return Err(DriveError::NumericalFault { step: t, msg: "non-finite objective".into() });
        }
        let next = step_dynamics(&state, &a, config)?;
        caches.push(cache);
        discounts.push(discount);
        states.push(std::mem::replace(&mut state, next));
        discount *= config.gamma;
    }

    let mut grad = vec![0.0; net.params().len()];
    let mut lp = vec![0.0; n];
    let mut lv = vec![0.0; n];
    let mut ga = vec![0.0; n];
    for t in (0..h).rev() {
        for i in 0..n {
            ga[i] = if live[t][i] { lv[i] * config.dt } else { 0.0 };
        }
        let gx = if ga.iter().any(|&g| g != 0.0) {
            net.backward(&caches[t], &ga, &mut grad)
        } else {
            vec![0.0; 2 * n]
        };
        let mut gp = vec![0.0; n];
        let mut gv = vec![0.0; n];
        step_objective_gradient(&states[t], objective, config, discounts[t], &mut gp, &mut gv);
        for i in 0..n {
            let p_next = lp[i];
            lp[i] = p_next + gp[i] + gx[2 * i];
            lv[i] = p_next * config.dt + lv[i] + gv[i] + gx[2 * i + 1];
        }
        if lp.iter().chain(&lv).any(|x| !x.is_finite()) {
            return Err(DriveError::NumericalFault { step: t, msg: "non-finite adjoint".into() });
        }
    }
    if grad.iter().any(|x| !x.is_finite()) {
        return Err(DriveError::NumericalFault { step: 0, msg: "non-finite parameter gradient".into() });
    }
    Ok(RolloutGradient { objective: objective_value, gradient: grad })
}
