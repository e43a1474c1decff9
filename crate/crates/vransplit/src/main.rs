use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use vransplit::cli::{
    cmd_compare, cmd_generate, cmd_gradcheck, cmd_infer, cmd_solve_exact, cmd_train,
    exit_code_for, ExperimentConfig, SweepSpec,
};

/// Functional split placement for virtualized RANs.
#[derive(Parser)]
#[command(name = "vransplit", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment config JSON; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed override; propagates to every stage.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory override.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a topology file plus capacity and latency eCDF summaries.
    Generate {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Train the agent and critic; writes curve.csv and checkpoints.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        /// Resume from this checkpoint.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Sample-search a trained policy on the configured instance.
    Infer {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Solve the configured instance exactly with branch-and-bound.
    SolveExact {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Gap and cost comparison against the oracle, D-RAN, and C-RAN.
    Compare {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Sweep override, e.g. lambda=10:150:10 or cost_scale=0.1:1:0.1.
        #[arg(long)]
        sweep: Option<String>,
    },
    /// Run the finite-difference gradient suite.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 160)]
        coords: usize,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
}

fn resolve_config(common: &CommonArgs) -> vransplit::Result<ExperimentConfig> {
    let mut config = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(out) = &common.out {
        config.out_dir = out.clone();
    }
    config.propagate_seed();
    Ok(config)
}

fn run() -> vransplit::Result<i32> {
    let cli = Cli::parse();
    match cli.command {
        Command::Generate { common } => cmd_generate(&resolve_config(&common)?),
        Command::Train { common, checkpoint } => {
            cmd_train(&resolve_config(&common)?, checkpoint.as_deref())
        }
        Command::Infer { common, checkpoint } => {
            cmd_infer(&resolve_config(&common)?, &checkpoint)
        }
        Command::SolveExact { common } => cmd_solve_exact(&resolve_config(&common)?),
        Command::Compare {
            common,
            checkpoint,
            sweep,
        } => {
            let spec = sweep.as_deref().map(SweepSpec::parse).transpose()?;
            cmd_compare(&resolve_config(&common)?, &checkpoint, spec)
        }
        Command::Gradcheck {
            seed,
            coords,
            tolerance,
        } => cmd_gradcheck(seed, coords, tolerance),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err) as u8)
        }
    }
}
