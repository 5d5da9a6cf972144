//! Scenario studies: a trained ego policy against different surrounding traffic.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bptt::{joint_action, Control, Others};
use crate::env::{rollout, EnvConfig, IntersectionState};
use crate::error::{invalid, Result};
use crate::mlp::MlpPolicy;

pub const SPEED_DEFINITION: &str = "average ego speed = scenario mean of the time-mean of |v_ego| over the 41 visited states";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Surrounding {
    Ne,
    Rule,
    Constant,
}

impl Surrounding {
    pub const ALL: [Surrounding; 3] = [Surrounding::Ne, Surrounding::Rule, Surrounding::Constant];
}

impl fmt::Display for Surrounding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Surrounding::Ne => "ne",
            Surrounding::Rule => "rule",
            Surrounding::Constant => "constant",
        })
    }
}

impl FromStr for Surrounding {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "ne" => Ok(Surrounding::Ne),
            "rule" => Ok(Surrounding::Rule),
            "constant" => Ok(Surrounding::Constant),
            _ => Err(format!("unknown surrounding policy {s:?} (expected ne, rule or constant)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRecord {
    pub scenario: usize,
    pub initial: IntersectionState,
    pub collision: bool,
    pub collision_step: Option<usize>,
    pub mean_speeds: Vec<f64>,
    pub returns: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchupRow {
    pub surrounding: Surrounding,
    pub collisions: usize,
    pub scenarios: usize,
    pub avg_ego_speed: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MatchupResult {
    pub row: MatchupRow,
    pub records: Vec<ScenarioRecord>,
}

/// Rolls out every scenario with `ego` driving the ego vehicle. Under `Ne` the
/// other vehicles follow `ne` (or `ego` itself when `ne` is `None`).
pub fn run_matchup(
    ego: &MlpPolicy,
    ne: Option<&MlpPolicy>,
    surrounding: Surrounding,
    scenarios: &[IntersectionState],
    env: &EnvConfig,
) -> Result<MatchupResult> {
    if scenarios.is_empty() {
        return Err(invalid("a study needs at least one scenario"));
    }
    let others = match surrounding {
        Surrounding::Ne => Others::Network(ne.unwrap_or(ego)),
        Surrounding::Rule => Others::Rule,
        Surrounding::Constant => Others::Constant,
    };
    let control = Control::Ego(others);
    let records: Vec<ScenarioRecord> = scenarios
        .par_iter()
        .enumerate()
        .map(|(k, s0)| {
            let policy = |s: &IntersectionState| {
                joint_action(ego, control, s, env).unwrap_or_else(|_| vec![f64::NAN; env.n_vehicles()])
            };
            let tr = rollout(policy, s0, env)?;
            Ok(ScenarioRecord {
                scenario: k,
                initial: s0.clone(),
                collision: tr.collided(),
                collision_step: tr.collision.as_ref().map(|c| c.step),
                mean_speeds: (0..env.n_vehicles()).map(|i| tr.mean_speed(i)).collect(),
                returns: tr.returns,
            })
        })
        .collect::<Result<_>>()?;
    let collisions = records.iter().filter(|r| r.collision).count();
    let avg_ego_speed = records.iter().map(|r| r.mean_speeds[env.ego]).sum::<f64>() / records.len() as f64;
    Ok(MatchupResult {
        row: MatchupRow { surrounding, collisions, scenarios: records.len(), avg_ego_speed },
        records,
    })
}

/// Per-scenario rows as comma-separated text with a header line.
pub fn records_csv(records: &[ScenarioRecord]) -> String {
    let n = records.first().map_or(0, |r| r.mean_speeds.len());
    let mut out = String::from("scenario,collision,collision_step");
    for i in 1..=n {
        out += &format!(",p{i}_0,v{i}_0");
    }
    for i in 1..=n {
        out += &format!(",mean_speed_{i}");
    }
    for i in 1..=n {
        out += &format!(",return_{i}");
    }
    out.push('\n');
    for r in records {
        out += &format!(
            "{},{},{}",
            r.scenario,
            r.collision as u8,
            r.collision_step.map_or(String::new(), |s| s.to_string())
        );
        for (p, v) in r.initial.p.iter().zip(&r.initial.v) {
            out += &format!(",{p},{v}");
        }
        for x in r.mean_speeds.iter().chain(&r.returns) {
            out += &format!(",{x}");
        }
        out.push('\n');
    }
    out
}
