//! Four-way intersection driving game with a differentiable point-mass
//! simulator, a shared MLP policy trained by backpropagation through whole
//! episodes, and scenario studies against baseline traffic.

pub mod adam;
pub mod bptt;
pub mod env;
pub mod error;
pub mod mlp;
pub mod policies;
pub mod sampling;
pub mod study;
pub mod train;

pub use adam::{adam_step, AdamState};
pub use bptt::{joint_action, rollout_objective_and_gradient, Control, Objective, Others, RolloutGradient};
pub use env::{
    detect_collision, pairwise_reward, potential_step_value, rollout, self_reward, step_dynamics, total_step_reward,
    Axis, EnvConfig, InitRanges, IntersectionState, Lane, Trajectory,
};
pub use error::{DriveError, Result};
pub use mlp::MlpPolicy;
pub use policies::{constant_speed_policy, rule_based_policy};
pub use sampling::{sample_initial_states, sample_scenarios};
pub use study::{run_matchup, MatchupResult, MatchupRow, ScenarioRecord, Surrounding};
pub use train::{train_marl, train_single_agent, train_with, Checkpoint, TrainConfig, TrainKind, TrainOutcome, TrainReport};
