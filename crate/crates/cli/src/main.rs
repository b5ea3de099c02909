use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use saa_cli::commands::{self, Run};
use saa_cli::{CliError, ExperimentConfig};

#[derive(Parser)]
#[command(name = "saa", version, about = "Sample average approximation experiments for PDE-constrained control")]
struct Cli {
    /// Experiment configuration (TOML, or JSON by extension).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the base seed and shifts the seed list.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; defaults to `output.dir` of the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for sample-parallel work.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Adjoint gradients against central differences.
    Gradcheck,
    /// Stability and envelope margins on random (u, xi).
    Bounds,
    /// SAA optimal values and solutions against the exact problem.
    Consistency,
    /// Epsilon-optimal ball of the noncompact example.
    Appendix,
    /// One SAA solve; writes u*, state and adjoint.
    Solve,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let path = cli
        .config
        .ok_or_else(|| CliError::Config("--config is required".into()))?;
    let mut cfg = ExperimentConfig::load(&path)?;
    if let Some(s) = cli.seed {
        cfg.override_seed(s);
    }
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let run = Run::new(cfg, cli.out);
    match cli.command {
        Command::Gradcheck => commands::gradcheck(&run),
        Command::Bounds => commands::bounds(&run),
        Command::Consistency => commands::consistency(&run),
        Command::Appendix => commands::appendix(&run),
        Command::Solve => commands::solve(&run),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
