use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mpg_drive::Surrounding;

mod commands;
mod config;

use commands::Failure;
use config::RunConfig;

#[derive(Parser)]
#[command(name = "mpg", version, about = "Markov potential games: certification, learning and driving studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// JSON run configuration
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: out)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Check the potential property of a game file or generated game
    Certify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        game: Option<PathBuf>,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Projected gradient learning on a tabular game
    TrainTabular {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        game: Option<PathBuf>,
    },
    /// Train the shared driving policy by potential ascent
    TrainMarl {
        #[command(flatten)]
        common: Common,
    },
    /// Train the ego policy against rule-based traffic
    TrainSingle {
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate a checkpoint over sampled scenarios
    Study {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Checkpoint driving the surrounding vehicles under `ne` (default: the evaluated one)
        #[arg(long)]
        ne_checkpoint: Option<PathBuf>,
        #[arg(long)]
        scenarios: Option<usize>,
        /// ne | rule | constant (default: all three)
        #[arg(long)]
        surrounding: Option<Surrounding>,
    },
    /// MARL vs single-agent checkpoints across all surrounding policies
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        marl: Option<PathBuf>,
        #[arg(long)]
        single: Option<PathBuf>,
        #[arg(long)]
        scenarios: Option<usize>,
    },
}

fn base_config(common: &Common) -> Result<RunConfig, Failure> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p).map_err(Failure::Input)?,
        None => RunConfig::default(),
    };
    if common.seed.is_some() {
        cfg.seed = common.seed;
    }
    if common.out.is_some() {
        cfg.out = common.out.clone();
    }
    Ok(cfg)
}

fn set<T>(slot: &mut Option<T>, flag: Option<T>) {
    if flag.is_some() {
        *slot = flag;
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Certify { common, game, trials } => {
            let mut cfg = base_config(&common)?;
            set(&mut cfg.game, game);
            set(&mut cfg.trials, trials);
            commands::certify(&cfg)
        }
        Command::TrainTabular { common, game } => {
            let mut cfg = base_config(&common)?;
            set(&mut cfg.game, game);
            commands::train_tabular(&cfg)
        }
        Command::TrainMarl { common } => commands::train_driving(&base_config(&common)?, mpg_drive::TrainKind::Marl),
        Command::TrainSingle { common } => {
            commands::train_driving(&base_config(&common)?, mpg_drive::TrainKind::SingleAgent)
        }
        Command::Study { common, checkpoint, ne_checkpoint, scenarios, surrounding } => {
            let mut cfg = base_config(&common)?;
            set(&mut cfg.checkpoint, checkpoint);
            set(&mut cfg.ne_checkpoint, ne_checkpoint);
            set(&mut cfg.scenarios, scenarios);
            set(&mut cfg.surrounding, surrounding);
            commands::study(&cfg)
        }
        Command::Compare { common, marl, single, scenarios } => {
            let mut cfg = base_config(&common)?;
            set(&mut cfg.marl_checkpoint, marl);
            set(&mut cfg.single_checkpoint, single);
            set(&mut cfg.scenarios, scenarios);
            commands::compare(&cfg)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}
