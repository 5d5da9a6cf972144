//! Constructive Markov potential games.
//!
//! Every builder takes decoupled per-agent dynamics and per-agent initial
//! distributions, expands them to a global game and returns the game together
//! with its state-action potential `φ(s,a)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::eval::{gradient_for_reward, total_for_reward, total_reward};
use crate::game::{check_distribution, FactoredTransition, MarkovGame};
use crate::policy::{random_block, TabularPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Construction {
    #[serde(rename = "self")]
    SelfReward,
    Joint,
    Mixed,
}

/// Interaction reward `r_ij(s_i, s_j, a_i, a_j)` for one pair of agents,
/// flattened `[s_i][s_j][a_i][a_j]`. The counterpart `r_ji` is implied by symmetry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseTerm {
    pub i: usize,
    pub j: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardStructure {
    /// Per agent, flattened `[s_i][a_i]`.
    pub self_terms: Vec<Vec<f64>>,
    pub pairwise: Vec<PairwiseTerm>,
    pub alpha: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub agent: usize,
    /// `J_i(θ_i', θ_{-i}) - J_i(θ)`.
    pub lhs: f64,
    /// `Φ(θ_i', θ_{-i}) - Φ(θ)`.
    pub rhs: f64,
    pub violation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialCertificate {
    pub construction: Option<Construction>,
    /// Flattened `[s][a]`.
    pub phi: Vec<f64>,
    pub trials: Vec<TrialRecord>,
    pub max_violation: f64,
    pub tol: Option<f64>,
    pub passed: Option<bool>,
}

impl PotentialCertificate {
    fn unverified(construction: Construction, phi: Vec<f64>) -> Self {
        Self { construction: Some(construction), phi, trials: Vec::new(), max_violation: 0.0, tol: None, passed: None }
    }
}

#[derive(Debug, Clone)]
pub struct BuiltGame {
    pub game: MarkovGame,
    pub phi: Vec<f64>,
    pub certificate: PotentialCertificate,
}

/// Lookup for pairwise terms keyed by unordered pair.
struct PairTable<'a> {
    n: usize,
    /// `terms[p * n + q]` for `p < q` holds `r_pq` in `[s_p][s_q][a_p][a_q]` order.
    terms: Vec<Option<&'a [f64]>>,
}

impl<'a> PairTable<'a> {
    fn new(n: usize, pairs: &'a [PairwiseTerm], locals: &FactoredTransition) -> Result<Self> {
        let mut terms: Vec<Option<&'a [f64]>> = vec![None; n * n];
        let mut reversed: Vec<&PairwiseTerm> = Vec::new();
        for t in pairs {
            if t.i == t.j || t.i >= n || t.j >= n {
                return Err(invalid(format!("pairwise term ({}, {}) is not a pair of distinct agents", t.i, t.j)));
            }
            let expected = pair_len(locals, t.i, t.j);
            if t.values.len() != expected {
                return Err(invalid(format!(
                    "pairwise term ({}, {}) has {} entries, expected {expected}",
                    t.i,
                    t.j,
                    t.values.len()
                )));
            }
            if t.i < t.j {
                if terms[t.i * n + t.j].is_some() {
                    return Err(invalid(format!("pairwise term ({}, {}) supplied twice", t.i, t.j)));
                }
                terms[t.i * n + t.j] = Some(&t.values);
            } else {
                reversed.push(t);
            }
        }
        for t in reversed {
            let (p, q) = (t.j, t.i);
            match terms[p * n + q] {
                Some(stored) => check_symmetric(locals, p, q, stored, &t.values)?,
                None => {
                    return Err(invalid(format!(
                        "pairwise term ({}, {}) given only in descending order; supply ({p}, {q})",
                        t.i, t.j
                    )))
                }
            }
        }
        Ok(Self { n, terms })
    }

    /// `r_ij(s_i, s_j, a_i, a_j)` for any ordered pair, via symmetry when `i > j`.
    fn value(&self, locals: &FactoredTransition, i: usize, j: usize, s: &[usize], a: &[usize]) -> f64 {
        let (p, q) = if i < j { (i, j) } else { (j, i) };
        match self.terms[p * self.n + q] {
            Some(values) => values[pair_index(locals, p, q, s[p], s[q], a[p], a[q])],
            None => 0.0,
        }
    }
}

fn pair_len(locals: &FactoredTransition, i: usize, j: usize) -> usize {
    let (li, lj) = (&locals.locals[i], &locals.locals[j]);
    li.n_states * lj.n_states * li.n_actions * lj.n_actions
}

fn pair_index(locals: &FactoredTransition, p: usize, q: usize, sp: usize, sq: usize, ap: usize, aq: usize) -> usize {
    let (lp, lq) = (&locals.locals[p], &locals.locals[q]);
    ((sp * lq.n_states + sq) * lp.n_actions + ap) * lq.n_actions + aq
}

fn check_symmetric(locals: &FactoredTransition, p: usize, q: usize, forward: &[f64], backward: &[f64]) -> Result<()> {
    let (lp, lq) = (&locals.locals[p], &locals.locals[q]);
    for sp in 0..lp.n_states {
        for sq in 0..lq.n_states {
            for ap in 0..lp.n_actions {
                for aq in 0..lq.n_actions {
                    let f = forward[pair_index(locals, p, q, sp, sq, ap, aq)];
                    let b = backward[pair_index(locals, q, p, sq, sp, aq, ap)];
                    if f != b {
                        return Err(invalid(format!(
                            "asymmetric pairwise reward: r_{p}{q}(s={sp},{sq}; a={ap},{aq}) = {f} but r_{q}{p}(s={sq},{sp}; a={aq},{ap}) = {b}"
                        )));
                    }
                }
            }
        }
    }
    Ok(())
}

fn product_rho(locals: &FactoredTransition, rho_locals: &[Vec<f64>]) -> Result<Vec<f64>> {
    if rho_locals.len() != locals.locals.len() {
        return Err(invalid(format!(
            "{} local initial distributions for {} agents",
            rho_locals.len(),
            locals.locals.len()
        )));
    }
    for (i, (rho, k)) in rho_locals.iter().zip(&locals.locals).enumerate() {
        if rho.len() != k.n_states {
            return Err(invalid(format!("local rho of agent {i} has {} entries, expected {}", rho.len(), k.n_states)));
        }
        check_distribution(rho, &format!("local rho of agent {i}"))?;
    }
    let states = locals.state_space();
    Ok((0..states.size())
        .map(|s| states.decode(s).iter().enumerate().map(|(i, &si)| rho_locals[i][si]).product())
        .collect())
}

enum Terms<'a> {
    SelfOnly(&'a [Vec<f64>]),
    PairOnly(&'a [PairwiseTerm]),
    Mixed(&'a RewardStructure),
}

fn assemble(locals: &FactoredTransition, terms: Terms<'_>, gamma: f64, rho_locals: &[Vec<f64>]) -> Result<(MarkovGame, Vec<f64>)> {
    let n = locals.locals.len();
    let states = locals.state_space();
    let actions = locals.action_space();
    let (ns, na) = (states.size(), actions.size());

    let self_terms = match &terms {
        Terms::SelfOnly(t) => Some(*t),
        Terms::Mixed(r) => Some(r.self_terms.as_slice()),
        Terms::PairOnly(_) => None,
    };
    if let Some(st) = self_terms {
        if st.len() != n {
            return Err(invalid(format!("{} self terms for {n} agents", st.len())));
        }
        for (i, t) in st.iter().enumerate() {
            let expected = locals.locals[i].n_states * locals.locals[i].n_actions;
            if t.len() != expected {
                return Err(invalid(format!("self term of agent {i} has {} entries, expected {expected}", t.len())));
            }
        }
    }
    let pairs = match &terms {
        Terms::PairOnly(p) => Some(PairTable::new(n, p, locals)?),
        Terms::Mixed(r) => Some(PairTable::new(n, &r.pairwise, locals)?),
        Terms::SelfOnly(_) => None,
    };
    let self_at = |i: usize, s: &[usize], a: &[usize]| {
        self_terms.map_or(0.0, |st| st[i][s[i] * locals.locals[i].n_actions + a[i]])
    };

    let mut rewards = vec![vec![0.0; ns * na]; n];
    let mut phi = vec![0.0; ns * na];
    for s in 0..ns {
        let sp = states.decode(s);
        for a in 0..na {
            let ap = actions.decode(a);
            let k = s * na + a;
            let pair_sum = |i: usize| -> f64 {
                let table = pairs.as_ref().expect("pair table present");
                (0..n).filter(|&j| j != i).map(|j| table.value(locals, i, j, &sp, &ap)).sum()
            };
            let pair_potential = || -> f64 {
                let table = pairs.as_ref().expect("pair table present");
                (0..n).map(|i| (0..i).map(|j| table.value(locals, i, j, &sp, &ap)).sum::<f64>()).sum()
            };
            match &terms {
                Terms::SelfOnly(_) => {
                    for (i, r) in rewards.iter_mut().enumerate() {
                        r[k] = self_at(i, &sp, &ap);
                    }
                    phi[k] = (0..n).map(|i| self_at(i, &sp, &ap)).sum();
                }
                Terms::PairOnly(_) => {
                    for (i, r) in rewards.iter_mut().enumerate() {
                        r[k] = pair_sum(i);
                    }
                    phi[k] = pair_potential();
                }
                Terms::Mixed(st) => {
                    for (i, r) in rewards.iter_mut().enumerate() {
                        r[k] = st.alpha * self_at(i, &sp, &ap) + st.beta * pair_sum(i);
                    }
                    let self_potential: f64 = (0..n).map(|i| self_at(i, &sp, &ap)).sum();
                    phi[k] = st.alpha * self_potential + st.beta * pair_potential();
                }
            }
        }
    }
    let rho = product_rho(locals, rho_locals)?;
    let game = MarkovGame::new(states.dims().to_vec(), actions.dims().to_vec(), locals.expand(), rewards, gamma, rho)?
        .mark_factored();
    Ok((game, phi))
}

/// Rewards `r_i(s,a) = r_i^self(s_i, a_i)`, potential `Σ_i r_i^self`.
pub fn build_self_reward_game(
    locals: &FactoredTransition,
    self_terms: &[Vec<f64>],
    gamma: f64,
    rho_locals: &[Vec<f64>],
) -> Result<BuiltGame> {
    let (game, phi) = assemble(locals, Terms::SelfOnly(self_terms), gamma, rho_locals)?;
    let certificate = PotentialCertificate::unverified(Construction::SelfReward, phi.clone());
    Ok(BuiltGame { game, phi, certificate })
}

/// Rewards `r_i = Σ_{j≠i} r_ij` with symmetric pairs, potential `Σ_i Σ_{j<i} r_ij`.
pub fn build_pairwise_symmetric_game(
    locals: &FactoredTransition,
    pairwise: &[PairwiseTerm],
    gamma: f64,
    rho_locals: &[Vec<f64>],
) -> Result<BuiltGame> {
    let (game, phi) = assemble(locals, Terms::PairOnly(pairwise), gamma, rho_locals)?;
    let certificate = PotentialCertificate::unverified(Construction::Joint, phi.clone());
    Ok(BuiltGame { game, phi, certificate })
}

/// Rewards `α r_i^self + β Σ_{j≠i} r_ij`, potential `α φ^self + β φ^joint`.
pub fn build_mixed_game(
    locals: &FactoredTransition,
    structure: &RewardStructure,
    gamma: f64,
    rho_locals: &[Vec<f64>],
) -> Result<BuiltGame> {
    let (game, phi) = assemble(locals, Terms::Mixed(structure), gamma, rho_locals)?;
    let certificate = PotentialCertificate::unverified(Construction::Mixed, phi.clone());
    Ok(BuiltGame { game, phi, certificate })
}

fn check_phi(game: &MarkovGame, phi: &[f64]) -> Result<()> {
    if phi.len() != game.n_states() * game.n_joint_actions() {
        return Err(invalid(format!(
            "potential has {} entries, expected {}",
            phi.len(),
            game.n_states() * game.n_joint_actions()
        )));
    }
    Ok(())
}

/// Total potential `Φ(θ)`: the ρ-weighted discounted value of `φ`.
pub fn potential_value(game: &MarkovGame, policy: &TabularPolicy, phi: &[f64]) -> Result<f64> {
    check_phi(game, phi)?;
    total_for_reward(game, policy, phi)
}

/// How the non-deviating agents' policies are drawn in [`verify_mpg`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DeviationSampling {
    /// Every agent's rows are i.i.d. over global states.
    FullState,
    /// Non-deviating agents condition only on their own local state; the
    /// deviating agent's base and deviated policies remain arbitrary.
    #[default]
    LocalOthers,
}

/// Checks `J_i(θ_i',θ_{-i}) - J_i(θ) = Φ(θ_i',θ_{-i}) - Φ(θ)` on random triples.
pub fn verify_mpg(game: &MarkovGame, phi: &[f64], n_trials: usize, seed: u64, tol: f64) -> Result<PotentialCertificate> {
    verify_mpg_with(game, phi, n_trials, seed, tol, DeviationSampling::default())
}

pub fn verify_mpg_with(
    game: &MarkovGame,
    phi: &[f64],
    n_trials: usize,
    seed: u64,
    tol: f64,
    sampling: DeviationSampling,
) -> Result<PotentialCertificate> {
    check_phi(game, phi)?;
    if n_trials == 0 {
        return Err(invalid("verify_mpg needs at least one trial"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trials = Vec::with_capacity(n_trials);
    for trial in 0..n_trials {
        let agent = rand::Rng::gen_range(&mut rng, 0..game.n_agents());
        let base = sample_profile(game, agent, sampling, &mut rng);
        let deviation = random_block(game.n_states(), game.n_actions(agent), &mut rng);
        trials.push(deviation_trial(game, phi, &base, agent, deviation, trial)?);
    }
    Ok(certificate_from_trials(phi, trials, tol))
}

fn sample_profile(game: &MarkovGame, agent: usize, sampling: DeviationSampling, rng: &mut ChaCha8Rng) -> TabularPolicy {
    match sampling {
        DeviationSampling::FullState => TabularPolicy::random(game, rng),
        DeviationSampling::LocalOthers => {
            let mut policy = TabularPolicy::random_local(game, rng);
            let own = random_block(game.n_states(), game.n_actions(agent), rng);
            policy = policy.with_block(agent, own).expect("random block is feasible");
            policy
        }
    }
}

/// Evaluates a single unilateral deviation.
pub fn deviation_trial(
    game: &MarkovGame,
    phi: &[f64],
    base: &TabularPolicy,
    agent: usize,
    deviation: Vec<f64>,
    trial: usize,
) -> Result<TrialRecord> {
    let deviated = base.with_block(agent, deviation)?;
    let lhs = total_reward(game, &deviated, agent)? - total_reward(game, base, agent)?;
    let rhs = total_for_reward(game, &deviated, phi)? - total_for_reward(game, base, phi)?;
    Ok(TrialRecord { trial, agent, lhs, rhs, violation: (lhs - rhs).abs() })
}

pub fn certificate_from_trials(phi: &[f64], trials: Vec<TrialRecord>, tol: f64) -> PotentialCertificate {
    let max_violation = trials.iter().map(|t| t.violation).fold(0.0, f64::max);
    PotentialCertificate {
        construction: None,
        phi: phi.to_vec(),
        trials,
        max_violation,
        tol: Some(tol),
        passed: Some(max_violation < tol),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientIdentityReport {
    /// Per agent, max difference of the row-centered gradients.
    pub per_agent_max_diff: Vec<f64>,
    /// Max difference of the raw gradients, including the per-row shift.
    pub raw_max_diff: f64,
    pub max_diff: f64,
    pub tol: f64,
    pub passed: bool,
}

/// Compares `∇_{θ_i} J_i` with `∇_{θ_i} Φ` for every agent.
///
/// Gradients are compared after removing each row's mean: a constant shift
/// along `(1, ..., 1)` is orthogonal to the simplex and changes neither the
/// projected step nor the stationarity gap.
pub fn potential_gradient_identity_check(
    game: &MarkovGame,
    phi: &[f64],
    policy: &TabularPolicy,
    tol: f64,
) -> Result<GradientIdentityReport> {
    check_phi(game, phi)?;
    let mut per_agent_max_diff = Vec::with_capacity(game.n_agents());
    let mut raw_max_diff = 0.0f64;
    for i in 0..game.n_agents() {
        let na = game.n_actions(i);
        let gj = gradient_for_reward(game, policy, i, game.rewards(i))?;
        let gp = gradient_for_reward(game, policy, i, phi)?;
        let diff: Vec<f64> = gj.iter().zip(&gp).map(|(a, b)| a - b).collect();
        raw_max_diff = diff.iter().fold(raw_max_diff, |m, d| m.max(d.abs()));
        let centered = diff
            .chunks(na)
            .flat_map(|row| {
                let mean = row.iter().sum::<f64>() / na as f64;
                row.iter().map(move |d| (d - mean).abs())
            })
            .fold(0.0, f64::max);
        per_agent_max_diff.push(centered);
    }
    let max_diff = per_agent_max_diff.iter().copied().fold(0.0, f64::max);
    Ok(GradientIdentityReport { per_agent_max_diff, raw_max_diff, max_diff, tol, passed: max_diff < tol })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{random_factored, random_local_rhos, random_reward_structure};

    fn setup(seed: u64, states: &[usize], actions: &[usize]) -> (FactoredTransition, Vec<Vec<f64>>, RewardStructure) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let locals = random_factored(&mut rng, states, actions);
        let rhos = random_local_rhos(&mut rng, states);
        let structure = random_reward_structure(&mut rng, states, actions, 1.0, 1.0);
        (locals, rhos, structure)
    }

    #[test]
    fn single_agent_self_potential_is_the_reward() {
        let (locals, rhos, st) = setup(1, &[3], &[2]);
        let built = build_self_reward_game(&locals, &st.self_terms, 0.9, &rhos).unwrap();
        assert_eq!(built.phi, st.self_terms[0]);
        assert_eq!(built.game.rewards(0), st.self_terms[0].as_slice());
        assert_eq!(built.certificate.construction, Some(Construction::SelfReward));
    }

    #[test]
    fn self_game_certifies() {
        let (locals, rhos, st) = setup(2, &[2, 2], &[2, 2]);
        let built = build_self_reward_game(&locals, &st.self_terms, 0.9, &rhos).unwrap();
        let cert = verify_mpg(&built.game, &built.phi, 50, 3, 1e-8).unwrap();
        assert!(cert.passed.unwrap(), "max violation {}", cert.max_violation);
    }

    #[test]
    fn zero_self_rewards() {
        let (locals, rhos, _) = setup(3, &[2, 2], &[2, 2]);
        let built = build_self_reward_game(&locals, &[vec![0.0; 4], vec![0.0; 4]], 0.9, &rhos).unwrap();
        assert!(built.phi.iter().all(|&x| x == 0.0));
        let p = TabularPolicy::uniform(&built.game);
        assert_eq!(total_reward(&built.game, &p, 1).unwrap(), 0.0);
    }

    #[test]
    fn two_agent_pairwise_is_identical_interest() {
        let (locals, rhos, st) = setup(4, &[2, 3], &[2, 2]);
        let built = build_pairwise_symmetric_game(&locals, &st.pairwise, 0.9, &rhos).unwrap();
        assert_eq!(built.game.rewards(0), built.game.rewards(1));
        assert_eq!(built.game.rewards(0), built.phi.as_slice());
    }

    #[test]
    fn three_agent_pairwise_certifies() {
        let (locals, rhos, st) = setup(5, &[2, 2, 2], &[2, 2, 2]);
        let built = build_pairwise_symmetric_game(&locals, &st.pairwise, 0.9, &rhos).unwrap();
        let cert = verify_mpg(&built.game, &built.phi, 100, 6, 1e-8).unwrap();
        assert!(cert.passed.unwrap(), "max violation {}", cert.max_violation);
    }

    #[test]
    fn constant_pairs_count() {
        let (locals, rhos, mut st) = setup(6, &[2, 2, 2], &[2, 2, 2]);
        let c = 0.75;
        for t in &mut st.pairwise {
            t.values.iter_mut().for_each(|x| *x = c);
        }
        let built = build_pairwise_symmetric_game(&locals, &st.pairwise, 0.9, &rhos).unwrap();
        assert!(built.game.rewards(2).iter().all(|&r| r == 2.0 * c));
        assert!(built.phi.iter().all(|&p| p == 3.0 * c));
    }

    #[test]
    fn mixed_degenerates_to_components() {
        let (locals, rhos, st) = setup(7, &[2, 3], &[3, 2]);
        let selfish = build_self_reward_game(&locals, &st.self_terms, 0.9, &rhos).unwrap();
        let mixed = build_mixed_game(&locals, &RewardStructure { alpha: 1.0, beta: 0.0, ..st.clone() }, 0.9, &rhos).unwrap();
        assert_eq!(mixed.phi, selfish.phi);
        assert_eq!(mixed.game.rewards(1), selfish.game.rewards(1));
        let joint = build_pairwise_symmetric_game(&locals, &st.pairwise, 0.9, &rhos).unwrap();
        let mixed = build_mixed_game(&locals, &RewardStructure { alpha: 0.0, beta: 1.0, ..st }, 0.9, &rhos).unwrap();
        assert_eq!(mixed.phi, joint.phi);
        assert_eq!(mixed.game.rewards(0), joint.game.rewards(0));
    }

    #[test]
    fn mixed_certifies_and_scales() {
        let (locals, rhos, st) = setup(8, &[2, 2], &[2, 2]);
        let built = build_mixed_game(&locals, &st, 0.9, &rhos).unwrap();
        let cert = verify_mpg(&built.game, &built.phi, 100, 9, 1e-8).unwrap();
        assert!(cert.passed.unwrap());
        let scaled =
            build_mixed_game(&locals, &RewardStructure { alpha: 2.5 * st.alpha, beta: 2.5 * st.beta, ..st.clone() }, 0.9, &rhos)
                .unwrap();
        for (a, b) in scaled.phi.iter().zip(&built.phi) {
            assert!((a - 2.5 * b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn broken_symmetry_is_refuted() {
        let (locals, rhos, st) = setup(10, &[2, 2], &[2, 2]);
        let built = build_mixed_game(&locals, &st, 0.9, &rhos).unwrap();
        // perturb agent 1's view of the pair only, keeping φ
        let mut rewards: Vec<Vec<f64>> = (0..2).map(|i| built.game.rewards(i).to_vec()).collect();
        rewards[1][5] += 0.1;
        let broken = built.game.with_rewards(rewards).unwrap();
        let cert = verify_mpg(&broken, &built.phi, 100, 11, 1e-8).unwrap();
        assert!(!cert.passed.unwrap() && cert.max_violation > 1e-4);
        let p = TabularPolicy::uniform(&broken);
        assert!(!potential_gradient_identity_check(&broken, &built.phi, &p, 1e-6).unwrap().passed);
    }

    #[test]
    fn identical_deviation_has_zero_violation() {
        let (locals, rhos, st) = setup(12, &[2, 2], &[2, 2]);
        let built = build_mixed_game(&locals, &st, 0.9, &rhos).unwrap();
        let p = TabularPolicy::random(&built.game, &mut ChaCha8Rng::seed_from_u64(1));
        let t = deviation_trial(&built.game, &built.phi, &p, 0, p.block(0).to_vec(), 0).unwrap();
        assert_eq!((t.lhs, t.rhs, t.violation), (0.0, 0.0, 0.0));
        let cert = certificate_from_trials(&built.phi, vec![t], 1e-8);
        assert_eq!(cert.max_violation, 0.0);
        assert!(cert.passed.unwrap());
    }

    #[test]
    fn potential_value_cases() {
        let (locals, rhos, st) = setup(13, &[2, 2], &[2, 2]);
        let built = build_self_reward_game(&locals, &st.self_terms, 0.8, &rhos).unwrap();
        let p = TabularPolicy::random_local(&built.game, &mut ChaCha8Rng::seed_from_u64(2));
        let n = built.phi.len();
        assert_eq!(potential_value(&built.game, &p, &vec![0.0; n]).unwrap(), 0.0);
        assert!((potential_value(&built.game, &p, &vec![1.0; n]).unwrap() - 5.0).abs() < 1e-10);
        let total: f64 = (0..2).map(|i| total_reward(&built.game, &p, i).unwrap()).sum();
        assert!((potential_value(&built.game, &p, &built.phi).unwrap() - total).abs() < 1e-10);
        assert!(potential_value(&built.game, &p, &[0.0; 3]).is_err());
    }

    #[test]
    fn gradient_identity_on_local_policies() {
        let (locals, rhos, st) = setup(14, &[2, 2, 2], &[2, 2, 2]);
        let built = build_mixed_game(&locals, &st, 0.9, &rhos).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let p = TabularPolicy::random_local(&built.game, &mut rng);
            let report = potential_gradient_identity_check(&built.game, &built.phi, &p, 1e-6).unwrap();
            assert!(report.passed, "{report:?}");
        }
        let zero = built.game.with_rewards(vec![vec![0.0; built.phi.len()]; 3]).unwrap();
        let report =
            potential_gradient_identity_check(&zero, &vec![0.0; built.phi.len()], &TabularPolicy::uniform(&zero), 1e-12)
                .unwrap();
        assert_eq!(report.raw_max_diff, 0.0);
    }

    #[test]
    fn full_state_sampling_exposes_observation_coupling() {
        let (locals, rhos, st) = setup(15, &[2, 2], &[2, 2]);
        let built = build_self_reward_game(&locals, &st.self_terms, 0.9, &rhos).unwrap();
        let cert = verify_mpg_with(&built.game, &built.phi, 50, 1, 1e-8, DeviationSampling::FullState).unwrap();
        assert!(cert.max_violation > 1e-4);
    }

    #[test]
    fn asymmetric_ordered_pairs_rejected() {
        let (locals, rhos, st) = setup(16, &[2, 2], &[2, 2]);
        let forward = st.pairwise[0].clone();
        let mut backward = vec![0.0; forward.values.len()];
        for s0 in 0..2 {
            for s1 in 0..2 {
                for a0 in 0..2 {
                    for a1 in 0..2 {
                        backward[((s1 * 2 + s0) * 2 + a1) * 2 + a0] = forward.values[((s0 * 2 + s1) * 2 + a0) * 2 + a1];
                    }
                }
            }
        }
        let symmetric = vec![forward.clone(), PairwiseTerm { i: 1, j: 0, values: backward.clone() }];
        let a = build_pairwise_symmetric_game(&locals, &symmetric, 0.9, &rhos).unwrap();
        let b = build_pairwise_symmetric_game(&locals, &[forward.clone()], 0.9, &rhos).unwrap();
        assert_eq!(a.phi, b.phi);
        backward[3] += 0.5;
        let err = build_pairwise_symmetric_game(&locals, &[forward, PairwiseTerm { i: 1, j: 0, values: backward }], 0.9, &rhos)
            .unwrap_err();
        assert!(err.to_string().contains("asymmetric"), "{err}");
    }

    #[test]
    fn rejects_bad_local_rho() {
        let (locals, _, st) = setup(17, &[2, 2], &[2, 2]);
        let err = build_self_reward_game(&locals, &st.self_terms, 0.9, &[vec![0.6, 0.6], vec![1.0, 0.0]]).unwrap_err();
        assert!(err.to_string().contains("local rho of agent 0"));
    }
}
