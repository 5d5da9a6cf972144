//! Point-mass four-way intersection.
//!
//! Each vehicle moves along a fixed straight lane; its state is the signed
//! coordinate `p` along the lane axis and the signed velocity `v`. Lanes cross
//! at the origin. Vehicle indices are 0-based here; the ego vehicle is the
//! second vehicle (index 1).

use serde::{Deserialize, Serialize};

use crate::error::{invalid, DriveError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Horizontal,
    Vertical,
}

/// A straight lane: the vehicle's coordinate runs along `axis`, the lane is
/// shifted by `offset` on the other axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lane {
    pub axis: Axis,
    pub offset: f64,
}

impl Lane {
    pub fn world(&self, p: f64) -> (f64, f64) {
        match self.axis {
            Axis::Horizontal => (p, self.offset),
            Axis::Vertical => (self.offset, p),
        }
    }

    /// Derivative of the world position with respect to `p`.
    pub fn direction(&self) -> (f64, f64) {
        match self.axis {
            Axis::Horizontal => (1.0, 0.0),
            Axis::Vertical => (0.0, 1.0),
        }
    }
}

/// Ranges for initial-state sampling, expressed in each vehicle's travel frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitRanges {
    /// Distance before the lane center, meters.
    pub distance: (f64, f64),
    /// Speed as a fraction of |v_d|.
    pub speed_fraction: (f64, f64),
    pub strata: usize,
}

impl Default for InitRanges {
    fn default() -> Self {
        Self { distance: (12.0, 30.0), speed_fraction: (0.6, 1.2), strata: 2 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub dt: f64,
    pub horizon_steps: usize,
    pub gamma: f64,
    pub g: f64,
    pub epsilon: f64,
    pub desired_speeds: Vec<f64>,
    pub omega1: f64,
    pub omega2: f64,
    pub d_col: f64,
    pub lanes: Vec<Lane>,
    pub ego: usize,
    /// Proportional speed-tracking gain of the rule-based policy, 1/s.
    pub rule_gain: f64,
    /// Half-width of the square conflict zone around the origin, meters.
    pub conflict_half_width: f64,
    /// Distance kept between a yielding vehicle and the conflict zone.
    pub stop_margin: f64,
    pub init: InitRanges,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            dt: 0.5,
            horizon_steps: 40,
            gamma: 0.99,
            g: 9.81,
            epsilon: 1e-5,
            desired_speeds: vec![5.0, -5.0, -5.0, 5.0],
            omega1: 1.0,
            omega2: 400.0,
            d_col: 2.0,
            lanes: vec![
                Lane { axis: Axis::Vertical, offset: 1.75 },
                Lane { axis: Axis::Horizontal, offset: 1.75 },
                Lane { axis: Axis::Vertical, offset: -1.75 },
                Lane { axis: Axis::Horizontal, offset: -1.75 },
            ],
            ego: 1,
            rule_gain: 2.0,
            conflict_half_width: 4.0,
            stop_margin: 1.0,
            init: InitRanges::default(),
        }
    }
}

impl EnvConfig {
    pub fn n_vehicles(&self) -> usize {
        self.desired_speeds.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_vehicles();
        if n == 0 {
            return Err(invalid("at least one vehicle is required"));
        }
        if self.lanes.len() != n {
            return Err(invalid(format!("{} lanes for {} vehicles", self.lanes.len(), n)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(invalid(format!("dt must be positive, got {}", self.dt)));
        }
        if self.horizon_steps == 0 {
            return Err(invalid("horizon_steps must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(invalid(format!("gamma must lie in [0, 1], got {}", self.gamma)));
        }
        if !(self.g > 0.0 && self.g.is_finite()) {
            return Err(invalid(format!("g must be positive, got {}", self.g)));
        }
        if !(self.epsilon > 0.0) {
            return Err(invalid(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.d_col >= 0.0) {
            return Err(invalid(format!("d_col must be non-negative, got {}", self.d_col)));
        }
        if self.ego >= n {
            return Err(invalid(format!("ego index {} out of range for {} vehicles", self.ego, n)));
        }
        if self.desired_speeds.iter().any(|v| !v.is_finite())
            || self.lanes.iter().any(|l| !l.offset.is_finite())
            || ![self.omega1, self.omega2, self.rule_gain, self.conflict_half_width, self.stop_margin]
                .iter()
                .all(|x| x.is_finite())
        {
            return Err(invalid("non-finite constant in env config"));
        }
        let r = &self.init;
        if r.strata == 0 {
            return Err(invalid("init.strata must be at least 1"));
        }
        if !(r.distance.0 <= r.distance.1 && r.speed_fraction.0 <= r.speed_fraction.1) {
            return Err(invalid("init ranges must satisfy lo <= hi"));
        }
        Ok(())
    }

    /// +1 or -1: the sign of travel along the lane axis.
    pub fn travel_sign(&self, i: usize) -> f64 {
        if self.desired_speeds[i] < 0.0 {
            -1.0
        } else {
            1.0
        }
    }

    /// Distance still to cover before reaching the lane center (negative once past).
    pub fn distance_to_center(&self, state: &IntersectionState, i: usize) -> f64 {
        -state.p[i] * self.travel_sign(i)
    }

    pub fn world_position(&self, state: &IntersectionState, i: usize) -> (f64, f64) {
        self.lanes[i].world(state.p[i])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntersectionState {
    pub p: Vec<f64>,
    pub v: Vec<f64>,
}

impl IntersectionState {
    pub fn new(p: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if p.len() != v.len() {
            return Err(invalid(format!("{} positions but {} velocities", p.len(), v.len())));
        }
        if let Some(k) = p.iter().chain(&v).position(|x| !x.is_finite()) {
            return Err(invalid(format!("non-finite state entry at index {k}")));
        }
        Ok(Self { p, v })
    }

    pub fn n_vehicles(&self) -> usize {
        self.p.len()
    }

    /// Interleaved `(p_1, v_1, p_2, v_2, ...)`.
    pub fn to_vector(&self) -> Vec<f64> {
        self.p.iter().zip(&self.v).flat_map(|(&p, &v)| [p, v]).collect()
    }

    pub fn from_vector(x: &[f64]) -> Result<Self> {
        if x.len() % 2 != 0 {
            return Err(invalid(format!("state vector of odd length {}", x.len())));
        }
        Self::new(x.iter().step_by(2).copied().collect(), x.iter().skip(1).step_by(2).copied().collect())
    }
}

fn check_state(state: &IntersectionState, config: &EnvConfig) -> Result<()> {
    if state.p.len() != config.n_vehicles() || state.v.len() != config.n_vehicles() {
        return Err(invalid(format!(
            "state has {} vehicles, config has {}",
            state.p.len(),
            config.n_vehicles()
        )));
    }
    Ok(())
}

/// One Euler step: positions advance with the old velocities, then velocities
/// take the accelerations.
pub fn step_dynamics(state: &IntersectionState, actions: &[f64], config: &EnvConfig) -> Result<IntersectionState> {
    check_state(state, config)?;
    if actions.len() != state.n_vehicles() {
        return Err(invalid(format!("{} actions for {} vehicles", actions.len(), state.n_vehicles())));
    }
    if let Some(i) = actions.iter().position(|a| !(a.abs() <= config.g)) {
        return Err(invalid(format!("action {} of vehicle {} outside [-g, g]", actions[i], i)));
    }
    let p = state.p.iter().zip(&state.v).map(|(p, v)| p + v * config.dt).collect();
    let v = state.v.iter().zip(actions).map(|(v, a)| v + a * config.dt).collect();
    Ok(IntersectionState { p, v })
}

pub fn self_reward(state: &IntersectionState, i: usize, config: &EnvConfig) -> f64 {
    let e = state.v[i] - config.desired_speeds[i];
    -(e * e)
}

pub fn distance(state: &IntersectionState, i: usize, j: usize, config: &EnvConfig) -> f64 {
    let (a, b) = if i < j { (i, j) } else { (j, i) };
    let (xa, ya) = config.world_position(state, a);
    let (xb, yb) = config.world_position(state, b);
    ((xa - xb).powi(2) + (ya - yb).powi(2)).sqrt()
}

/// `-1 / (|x_i - x_j| + eps)`, evaluated with the pair in canonical order so the
/// value is bitwise symmetric.
pub fn pairwise_reward(state: &IntersectionState, i: usize, j: usize, config: &EnvConfig) -> f64 {
    -1.0 / (distance(state, i, j, config) + config.epsilon)
}

pub fn total_step_reward(state: &IntersectionState, i: usize, config: &EnvConfig) -> f64 {
    let joint: f64 = (0..state.n_vehicles()).filter(|&j| j != i).map(|j| pairwise_reward(state, i, j, config)).sum();
    config.omega1 * self_reward(state, i, config) + config.omega2 * joint
}

pub fn potential_step_value(state: &IntersectionState, config: &EnvConfig) -> f64 {
    let n = state.n_vehicles();
    let own: f64 = (0..n).map(|i| self_reward(state, i, config)).sum();
    let mut joint = 0.0;
    for i in 0..n {
        for j in 0..i {
            joint += pairwise_reward(state, i, j, config);
        }
    }
    config.omega1 * own + config.omega2 * joint
}

/// First vehicle (lowest index) whose center is strictly closer than `d_col` to
/// the ego. Returns `(ego, other)`.
pub fn detect_collision(state: &IntersectionState, config: &EnvConfig) -> Option<(usize, usize)> {
    let e = config.ego;
    (0..state.n_vehicles())
        .filter(|&j| j != e)
        .find(|&j| distance(state, e, j, config) < config.d_col)
        .map(|j| (e, j))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollisionEvent {
    /// Index of the first state (0 = initial) at which the collision is seen.
    pub step: usize,
    pub pair: (usize, usize),
}

/// `states` has `horizon_steps + 1` entries; `actions[t]` and `rewards[t]` belong
/// to the transition out of `states[t]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<IntersectionState>,
    pub actions: Vec<Vec<f64>>,
    pub rewards: Vec<Vec<f64>>,
    pub returns: Vec<f64>,
    pub potential_return: f64,
    pub collision: Option<CollisionEvent>,
}

impl Trajectory {
    pub fn collided(&self) -> bool {
        self.collision.is_some()
    }

    pub fn transitions(&self) -> usize {
        self.actions.len()
    }

    /// Time-mean of |v_i| over all visited states.
    pub fn mean_speed(&self, i: usize) -> f64 {
        self.states.iter().map(|s| s.v[i].abs()).sum::<f64>() / self.states.len() as f64
    }
}

/// Deterministic closed-loop rollout over the full horizon. Actions are clamped
/// to `[-g, g]` before the dynamics; the collision flag latches and the episode
/// continues to the horizon.
pub fn rollout<F>(mut policy: F, s0: &IntersectionState, config: &EnvConfig) -> Result<Trajectory>
where
    F: FnMut(&IntersectionState) -> Vec<f64>,
{
    config.validate()?;
    check_state(s0, config)?;
    let n = config.n_vehicles();
    let h = config.horizon_steps;
    let mut states = Vec::with_capacity(h + 1);
    let mut actions = Vec::with_capacity(h);
    let mut rewards = Vec::with_capacity(h);
    let mut returns = vec![0.0; n];
    let mut potential_return = 0.0;
    let mut collision = None;
    let mut state = s0.clone();
    let mut discount = 1.0;
    for t in 0..h {
        if collision.is_none() {
            collision = detect_collision(&state, config).map(|pair| CollisionEvent { step: t, pair });
        }
        let raw = policy(&state);
        if raw.len() != n {
            return Err(DriveError::PolicyFault { step: t, msg: format!("{} actions for {n} vehicles", raw.len()) });
        }
        if let Some(i) = raw.iter().position(|a| a.is_nan()) {
            return Err(DriveError::PolicyFault { step: t, msg: format!("NaN action for vehicle {i}") });
        }
        let a: Vec<f64> = raw.iter().map(|a| a.clamp(-config.g, config.g)).collect();
        let r: Vec<f64> = (0..n).map(|i| total_step_reward(&state, i, config)).collect();
        for (acc, ri) in returns.iter_mut().zip(&r) {
            *acc += discount * ri;
        }
        potential_return += discount * potential_step_value(&state, config);
        let next = step_dynamics(&state, &a, config)?;
        if next.p.iter().chain(&next.v).any(|x| !x.is_finite()) {
            return Err(DriveError::NumericalFault { step: t, msg: "non-finite state".into() });
        }
        states.push(std::mem::replace(&mut state, next));
        actions.push(a);
        rewards.push(r);
        discount *= config.gamma;
    }
    if collision.is_none() {
        collision = detect_collision(&state, config).map(|pair| CollisionEvent { step: h, pair });
    }
    states.push(state);
    Ok(Trajectory { states, actions, rewards, returns, potential_return, collision })
}
