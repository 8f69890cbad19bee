use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use vacuum_euler::scenario::{execute, load_config, Command};

/// Moving-domain gas simulator with a vacuum interface: simulation,
/// convergence and stability studies, and self-checks, driven by a JSON
/// config.
#[derive(Parser)]
#[command(name = "vacuum-euler", version, about)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct CommonArgs {
    /// JSON configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (default: config `outputs`, else the current dir).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the configured step size.
    #[arg(long)]
    eps: Option<f64>,
    /// Override the configured node count.
    #[arg(long)]
    nodes: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one scenario and record energy series and snapshots.
    Simulate(CommonArgs),
    /// Sweep step sizes and measure convergence ratios against the exact
    /// profile family.
    Convergence(CommonArgs),
    /// Evolve two nearby initial states and monitor their distance.
    Compare(CommonArgs),
    /// Propagate a linearized perturbation along a recorded background.
    Linearize(CommonArgs),
    /// Measure smoothing error decay across scales.
    Regstudy(CommonArgs),
    /// Integrate the exact profile family and report its first integral.
    Oracle(CommonArgs),
    /// Evaluate the weighted-inequality corpus on two grids.
    InterpCheck(CommonArgs),
}

impl Cmd {
    fn split(&self) -> (Command, &CommonArgs) {
        match self {
            Cmd::Simulate(a) => (Command::Simulate, a),
            Cmd::Convergence(a) => (Command::Convergence, a),
            Cmd::Compare(a) => (Command::Compare, a),
            Cmd::Linearize(a) => (Command::Linearize, a),
            Cmd::Regstudy(a) => (Command::RegStudy, a),
            Cmd::Oracle(a) => (Command::Oracle, a),
            Cmd::InterpCheck(a) => (Command::InterpCheck, a),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = cli.cmd.split();

    let mut cfg = match load_config(&args.config) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(u8::try_from(e.exit_code()).unwrap_or(1));
        }
    };
    if let Some(eps) = args.eps {
        cfg.step.eps = eps;
    }
    if let Some(nodes) = args.nodes {
        cfg.node_count = nodes;
    }
    let out_dir = args
        .out
        .clone()
        .or_else(|| cfg.outputs.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));

    match execute(command, &cfg, &out_dir) {
        Ok(outcome) => {
            println!("{:#}", outcome.summary);
            ExitCode::from(u8::try_from(outcome.exit_code).unwrap_or(1))
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(u8::try_from(e.exit_code()).unwrap_or(1))
        }
    }
}
