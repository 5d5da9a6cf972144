//! Tabular Markov potential games.
//!
//! The crate covers the full tabular pipeline: game representation with
//! direct (simplex) policy parameterization, closed-form evaluation of values,
//! visitation measures and policy gradients, constructive builders for games
//! with self / pairwise-symmetric / mixed reward structure together with their
//! potential functions, numeric certification of the potential property, and
//! projected gradient dynamics for finding Nash equilibria.

pub mod builder;
pub mod error;
pub mod eval;
pub mod game;
pub mod io;
pub mod learner;
pub mod policy;
pub mod random;
pub mod simplex;

pub use builder::{
    build_mixed_game, build_pairwise_symmetric_game, build_self_reward_game, potential_gradient_identity_check,
    potential_value, verify_mpg, BuiltGame, Construction, GradientIdentityReport, PairwiseTerm, PotentialCertificate,
    RewardStructure, TrialRecord,
};
pub use error::{MpgError, Result};
pub use eval::{
    assumption_one_holds, exact_policy_gradient, gradient_domination_slack, induced_transition, total_reward,
    value_function, visitation_measure,
};
pub use game::{FactoredTransition, JointSpace, MarkovGame};
pub use learner::{
    best_response, exploitability, independent_gradient_step, potential_ascent_step, stationarity_gap, train,
    LearnConfig, LearnMode, LearnTrace, TraceRecord,
};
pub use policy::TabularPolicy;
pub use simplex::project_simplex;
