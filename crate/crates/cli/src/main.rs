use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod output;

#[derive(Parser, Debug)]
#[command(name = "meshfd", version, about = "Meshless finite differences on overlap splines")]
struct Cli {
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for assembly and evaluation (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Directory for all outputs.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,

    /// Record wall-clock timings in report.json (makes reports run-dependent).
    #[arg(long, global = true)]
    timings: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct ConfigArg {
    /// Run config (TOML, JSON, or a previous report.json).
    config: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the configured node set to nodes.csv.
    Generate(ConfigArg),
    /// Compute one stencil row; writes stencil.json.
    Stencil {
        #[command(flatten)]
        cfg: ConfigArg,
        /// Node index (overrides [stencil]).
        #[arg(long, conflicts_with = "point")]
        node: Option<usize>,
        /// Comma-separated coordinates (overrides [stencil]).
        #[arg(long, value_delimiter = ',')]
        point: Option<Vec<f64>>,
    },
    /// Dimension analysis of the overlap spline space; writes dim.json.
    Dim(ConfigArg),
    /// Assemble and solve; writes solution.csv.
    Solve(ConfigArg),
    /// Convergence study; writes converge.csv.
    Converge {
        #[command(flatten)]
        cfg: ConfigArg,
        /// Refinement levels (overrides [converge]).
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<usize>>,
    },
    /// Solve, then blend with a partition of unity on a grid; writes pum.csv.
    PumEval {
        #[command(flatten)]
        cfg: ConfigArg,
        /// Evaluation points per axis (overrides [pum]).
        #[arg(long)]
        grid: Option<usize>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.kind());
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(1)
        }
    }
}
