use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use minibab::cli::{exit_code_for, run, Command, RunManifest};

#[derive(Parser)]
#[command(
    name = "minibab",
    version,
    about = "Branch-and-bound ReLU network verifier with conflict reuse across refined queries"
)]
struct CliArgs {
    #[command(subcommand)]
    command: CommandArg,
}

#[derive(Args)]
struct CommonArgs {
    /// Network document (JSON).
    #[arg(long)]
    network: PathBuf,
    /// Query or task configuration document (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Conflict pool to inherit from an earlier run.
    #[arg(long)]
    pool_in: Option<PathBuf>,
    /// Where to write the updated conflict pool.
    #[arg(long)]
    pool_out: Option<PathBuf>,
    /// Where to write the stats document (stdout when omitted).
    #[arg(long)]
    stats_out: Option<PathBuf>,
    /// Per-query timeout override in seconds (initial timeout for `split`).
    #[arg(long)]
    timeout: Option<f64>,
    /// Skip enforcing driver refinement checks before inheriting.
    #[arg(long)]
    trusted_refinement: bool,
    /// Reserved for test-network generation tooling; solving itself is
    /// deterministic.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum CommandArg {
    /// Solve one verification query.
    Verify(CommonArgs),
    /// Bracket the local robustness radius around a reference input.
    Radius(CommonArgs),
    /// Verify with recursive input splitting on timeouts.
    Split(CommonArgs),
    /// Extract a minimal sufficient feature set.
    Explain(CommonArgs),
    /// Brute-force phase enumeration (ground truth for small networks).
    Oracle(CommonArgs),
}

fn main() -> ExitCode {
    env_logger::init();
    let args = CliArgs::parse();
    let (command, common) = match args.command {
        CommandArg::Verify(c) => (Command::Verify, c),
        CommandArg::Radius(c) => (Command::Radius, c),
        CommandArg::Split(c) => (Command::Split, c),
        CommandArg::Explain(c) => (Command::Explain, c),
        CommandArg::Oracle(c) => (Command::Oracle, c),
    };
    if let Some(seed) = common.seed {
        log::debug!("seed {seed} noted; no generation step uses it in this command");
    }
    let manifest = RunManifest {
        command,
        network: common.network,
        config: common.config,
        pool_in: common.pool_in,
        pool_out: common.pool_out,
        stats_out: common.stats_out,
        timeout_s: common.timeout,
        trusted_refinement: common.trusted_refinement,
    };
    match run(&manifest) {
        Ok(_) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("minibab: {err}");
            ExitCode::from(exit_code_for(&err) as u8)
        }
    }
}
