use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use lirl::harness::config::ExperimentConfig;
use lirl::harness::run::{execute, Command};
use lirl::Result;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Cmd {
    Train,
    Evaluate,
    Baseline,
    Ablation,
    Robustness,
    Report,
    Gantt,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Train => Command::Train,
            Cmd::Evaluate => Command::Evaluate,
            Cmd::Baseline => Command::Baseline,
            Cmd::Ablation => Command::Ablation,
            Cmd::Robustness => Command::Robustness,
            Cmd::Report => Command::Report,
            Cmd::Gantt => Command::Gantt,
        }
    }
}

/// Projection-based hybrid-action RL experiments on the reducer assembly line.
#[derive(Debug, Parser)]
#[command(name = "lirl", version)]
struct Cli {
    #[arg(value_enum)]
    command: Cmd,
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated seed list overriding the configuration.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Objective weight on makespan, one of 0.1, 0.2, ..., 0.9.
    #[arg(long)]
    alpha: Option<f64>,
    /// Problem scale label such as J10R3.
    #[arg(long)]
    scale: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = ExperimentConfig::load(&cli.config)?;
    if let Some(s) = cli.seeds {
        cfg.seeds = s;
    }
    if let Some(a) = cli.alpha {
        cfg.alpha = a;
    }
    if let Some(s) = cli.scale {
        cfg.scale = s.parse()?;
    }
    if let Some(o) = cli.out {
        cfg.output_dir = o;
    }
    cfg.validate()?;
    execute(cli.command.into(), &cfg, &cfg.output_dir)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lirl: {e}");
            ExitCode::from(if e.is_config() {
                2
            } else if e.is_numerical() {
                3
            } else {
                1
            })
        }
    }
}
