use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use mpg_core::io::load_game;
use mpg_core::learner::{best_response, exploitability, stationarity_gap, train, LearnMode};
use mpg_core::{potential_gradient_identity_check, verify_mpg, Construction, MarkovGame, TabularPolicy};
use mpg_drive::study::{records_csv, SPEED_DEFINITION};
use mpg_drive::train::write_atomic;
use mpg_drive::{run_matchup, sample_scenarios, Checkpoint, EnvConfig, MatchupRow, Surrounding, TrainKind};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{RunConfig, DEFAULT_SCENARIOS, DEFAULT_SEED, DEFAULT_STUDY_SEED, DEFAULT_TRIALS};

/// Failure classes with stable exit codes.
#[derive(Debug)]
pub enum Failure {
    CertificationFailed(String),
    Input(String),
    NotConverged(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::CertificationFailed(_) => 1,
            Failure::Input(_) => 2,
            Failure::NotConverged(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::CertificationFailed(m) => write!(f, "certification failed: {m}"),
            Failure::Input(m) => write!(f, "{m}"),
            Failure::NotConverged(m) => write!(f, "not converged: {m}"),
        }
    }
}

fn input<E: fmt::Display>(e: E) -> Failure {
    Failure::Input(e.to_string())
}

fn write_file(dir: &Path, name: &str, text: &str) -> Result<PathBuf, Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::Input(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    write_atomic(&path, text.as_bytes()).map_err(input)?;
    Ok(path)
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf, Failure> {
    write_file(dir, name, &serde_json::to_string_pretty(value).expect("report serializes"))
}

struct TabularInput {
    game: MarkovGame,
    phi: Option<Vec<f64>>,
    construction: Option<Construction>,
}

fn tabular_input(cfg: &RunConfig) -> Result<TabularInput, Failure> {
    match (&cfg.game, &cfg.generator) {
        (Some(path), None) => {
            let loaded = load_game(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
            Ok(TabularInput { game: loaded.game, phi: loaded.phi, construction: None })
        }
        (None, Some(spec)) => {
            let built = spec.generate().map_err(input)?;
            Ok(TabularInput { game: built.game, phi: Some(built.phi), construction: Some(spec.construction) })
        }
        (Some(_), Some(_)) => Err(Failure::Input("give either a game file or a generator, not both".into())),
        (None, None) => Err(Failure::Input("no game: pass --game <file> or set `generator` in --config".into())),
    }
}

#[derive(Serialize)]
struct CertifyReport<'a> {
    seed: u64,
    config: &'a RunConfig,
    passed: bool,
    certificate: mpg_core::PotentialCertificate,
    gradient_identity: mpg_core::GradientIdentityReport,
}

pub fn certify(cfg: &RunConfig) -> Result<(), Failure> {
    let seed = cfg.seed.unwrap_or(DEFAULT_SEED);
    let trials = cfg.trials.unwrap_or(DEFAULT_TRIALS);
    let tol = cfg.certify_tol.unwrap_or(1e-8);
    let identity_tol = cfg.identity_tol.unwrap_or(1e-6);
    let inp = tabular_input(cfg)?;
    let phi = inp
        .phi
        .ok_or_else(|| Failure::Input("the game has no potential table to certify against".into()))?;
    let mut certificate = verify_mpg(&inp.game, &phi, trials, seed, tol).map_err(input)?;
    certificate.construction = inp.construction;
    let policy = TabularPolicy::random_local(&inp.game, &mut ChaCha8Rng::seed_from_u64(seed));
    let identity = potential_gradient_identity_check(&inp.game, &phi, &policy, identity_tol).map_err(input)?;
    let passed = certificate.passed == Some(true) && identity.passed;
    println!(
        "trials={} max_violation={:.3e} gradient_identity_max_diff={:.3e} passed={}",
        certificate.trials.len(),
        certificate.max_violation,
        identity.max_diff,
        passed
    );
    let msg = format!("max violation {:.3e}, gradient identity {:.3e}", certificate.max_violation, identity.max_diff);
    let report = CertifyReport { seed, config: cfg, passed, certificate, gradient_identity: identity };
    let path = write_json(&cfg.out_dir(), "certificate.json", &report)?;
    println!("wrote {}", path.display());
    if passed {
        Ok(())
    } else {
        Err(Failure::CertificationFailed(msg))
    }
}

#[derive(Serialize)]
struct TabularSummary<'a> {
    seed: u64,
    config: &'a RunConfig,
    iterations: usize,
    converged: bool,
    final_gap: f64,
    exploitability: Vec<f64>,
    best_response_values: Vec<f64>,
    policy: Vec<Vec<f64>>,
}

pub fn train_tabular(cfg: &RunConfig) -> Result<(), Failure> {
    let seed = cfg.seed.unwrap_or(DEFAULT_SEED);
    let inp = tabular_input(cfg)?;
    cfg.learn.validate().map_err(input)?;
    let phi = match cfg.learn.mode {
        LearnMode::Potential => Some(
            inp.phi
                .as_deref()
                .ok_or_else(|| Failure::Input("potential mode needs a game with a potential table".into()))?,
        ),
        LearnMode::Independent => None,
    };
    let trace = train(&inp.game, phi, &cfg.learn).map_err(input)?;
    let game = &inp.game;
    let final_gap = stationarity_gap(game, &trace.policy).map_err(input)?;
    let expl = exploitability(game, &trace.policy).map_err(input)?;
    let br = (0..game.n_agents())
        .map(|i| best_response(game, &trace.policy, i).map(|(_, v)| v))
        .collect::<Result<Vec<_>, _>>()
        .map_err(input)?;
    let dir = cfg.out_dir();
    write_file(&dir, "trace.csv", &trace.to_table())?;
    let summary = TabularSummary {
        seed,
        config: cfg,
        iterations: trace.records.len().saturating_sub(1),
        converged: trace.converged,
        final_gap,
        exploitability: expl.clone(),
        best_response_values: br,
        policy: (0..game.n_agents()).map(|i| trace.policy.block(i).to_vec()).collect(),
    };
    write_json(&dir, "summary.json", &summary)?;
    let worst = expl.iter().copied().fold(0.0, f64::max);
    println!(
        "iterations={} converged={} stationarity_gap={:.3e} exploitability={:.3e}",
        summary.iterations, trace.converged, final_gap, worst
    );
    if trace.converged {
        Ok(())
    } else {
        Err(Failure::NotConverged(format!(
            "stationarity gap {final_gap:.3e} after {} iterations",
            cfg.learn.max_iters
        )))
    }
}

pub fn train_driving(cfg: &RunConfig, kind: TrainKind) -> Result<(), Failure> {
    let seed = cfg.seed.unwrap_or(DEFAULT_SEED);
    let env = cfg.env.clone().unwrap_or_default();
    let out = mpg_drive::train_with(kind, &env, &cfg.train, seed, |e, obj, norm| {
        if e % 500 == 0 {
            eprintln!("episode {e:>5}  objective {obj:>12.4}  grad_norm {norm:.4e}");
        }
    })
    .map_err(input)?;
    let dir = cfg.out_dir();
    let rep = &out.report;
    let trace: String = std::iter::once("episode,objective,grad_norm\n".to_string())
        .chain(rep.objectives.iter().zip(&rep.grad_norms).enumerate().map(|(e, (o, g))| format!("{e},{o},{g}\n")))
        .collect();
    write_file(&dir, "train_trace.csv", &trace)?;
    write_json(&dir, "train_report.json", &serde_json::json!({ "config": cfg, "report": rep }))?;
    fs::create_dir_all(&dir).map_err(input)?;
    let ck = dir.join("checkpoint.json");
    out.checkpoint.save(&ck).map_err(input)?;
    println!(
        "episodes={} first_objective={:.4} final_objective={:.4} final_grad_norm={:.4e} wall_clock={:.1}s",
        rep.episodes(),
        rep.objectives.first().copied().unwrap_or(f64::NAN),
        rep.objectives.last().copied().unwrap_or(f64::NAN),
        rep.grad_norms.last().copied().unwrap_or(f64::NAN),
        rep.wall_clock_secs
    );
    println!("wrote {}", ck.display());
    match &rep.fault {
        Some(f) => Err(Failure::NotConverged(f.clone())),
        None => Ok(()),
    }
}

fn load_checkpoint(path: Option<&PathBuf>, what: &str) -> Result<Checkpoint, Failure> {
    let path = path.ok_or_else(|| Failure::Input(format!("missing {what} checkpoint")))?;
    Checkpoint::load(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

#[derive(Serialize)]
struct StudyReport<'a> {
    seed: u64,
    scenarios: usize,
    checkpoint_kind: TrainKind,
    checkpoint_seed: u64,
    speed_definition: &'static str,
    scenario_note: &'static str,
    env: &'a EnvConfig,
    config: &'a RunConfig,
    rows: Vec<MatchupRow>,
}

const SCENARIO_NOTE: &str =
    "one stratified scenario set per (seed, scenarios); every matchup and policy uses the same set";

fn study_env(cfg: &RunConfig, ck: &Checkpoint) -> Result<EnvConfig, Failure> {
    let env = cfg.env.clone().unwrap_or_else(|| ck.env.clone());
    env.validate().map_err(input)?;
    ck.check_env(&env).map_err(input)?;
    Ok(env)
}

fn print_rows(label: &str, rows: &[MatchupRow]) {
    for r in rows {
        println!(
            "{label:<8} surrounding={:<8} collisions={}/{} avg_ego_speed={:.4}",
            r.surrounding.to_string(),
            r.collisions,
            r.scenarios,
            r.avg_ego_speed
        );
    }
}

pub fn study(cfg: &RunConfig) -> Result<(), Failure> {
    let seed = cfg.seed.unwrap_or(DEFAULT_STUDY_SEED);
    let n = cfg.scenarios.unwrap_or(DEFAULT_SCENARIOS);
    let ck = load_checkpoint(cfg.checkpoint.as_ref(), "--checkpoint")?;
    let env = study_env(cfg, &ck)?;
    let ego = ck.policy().map_err(input)?;
    let ne = match &cfg.ne_checkpoint {
        Some(p) => {
            let c = load_checkpoint(Some(p), "--ne-checkpoint")?;
            c.check_env(&env).map_err(input)?;
            Some(c.policy().map_err(input)?)
        }
        None => None,
    };
    let scenarios = sample_scenarios(n, &env, seed).map_err(input)?;
    let tags: Vec<Surrounding> = cfg.surrounding.map_or(Surrounding::ALL.to_vec(), |s| vec![s]);
    let dir = cfg.out_dir();
    let mut rows = Vec::new();
    for tag in tags {
        let res = run_matchup(&ego, ne.as_ref(), tag, &scenarios, &env).map_err(input)?;
        write_file(&dir, &format!("study_{tag}.csv"), &records_csv(&res.records))?;
        rows.push(res.row);
    }
    print_rows("study", &rows);
    let report = StudyReport {
        seed,
        scenarios: n,
        checkpoint_kind: ck.kind,
        checkpoint_seed: ck.seed,
        speed_definition: SPEED_DEFINITION,
        scenario_note: SCENARIO_NOTE,
        env: &env,
        config: cfg,
        rows,
    };
    write_json(&dir, "study.json", &report)?;
    Ok(())
}

#[derive(Serialize)]
struct CompareReport<'a> {
    seed: u64,
    scenarios: usize,
    speed_definition: &'static str,
    scenario_note: &'static str,
    env: &'a EnvConfig,
    config: &'a RunConfig,
    marl: Vec<MatchupRow>,
    single_agent: Vec<MatchupRow>,
}

pub fn compare(cfg: &RunConfig) -> Result<(), Failure> {
    let seed = cfg.seed.unwrap_or(DEFAULT_STUDY_SEED);
    let n = cfg.scenarios.unwrap_or(DEFAULT_SCENARIOS);
    let marl_ck = load_checkpoint(cfg.marl_checkpoint.as_ref(), "--marl")?;
    let single_ck = load_checkpoint(cfg.single_checkpoint.as_ref(), "--single")?;
    let env = study_env(cfg, &marl_ck)?;
    single_ck.check_env(&env).map_err(input)?;
    let marl = marl_ck.policy().map_err(input)?;
    let single = single_ck.policy().map_err(input)?;
    let scenarios = sample_scenarios(n, &env, seed).map_err(input)?;
    let dir = cfg.out_dir();
    let mut grid = [Vec::new(), Vec::new()];
    for (k, (label, net)) in [("marl", &marl), ("single", &single)].into_iter().enumerate() {
        for tag in Surrounding::ALL {
            let res = run_matchup(net, Some(&marl), tag, &scenarios, &env).map_err(input)?;
            write_file(&dir, &format!("compare_{label}_{tag}.csv"), &records_csv(&res.records))?;
            grid[k].push(res.row);
        }
        print_rows(label, &grid[k]);
    }
    let [marl_rows, single_rows] = grid;
    let report = CompareReport {
        seed,
        scenarios: n,
        speed_definition: SPEED_DEFINITION,
        scenario_note: SCENARIO_NOTE,
        env: &env,
        config: cfg,
        marl: marl_rows,
        single_agent: single_rows,
    };
    write_json(&dir, "compare.json", &report)?;
    Ok(())
}
