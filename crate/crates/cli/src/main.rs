//! `csma`: run experiments, analyse graphs exactly, list presets.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand};

use csma_core::Error;

mod analyze;
mod run;

#[derive(Parser)]
#[command(name = "csma", version, about = "Adaptive CSMA scheduling and congestion control simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config for one or more seeds.
    Run(RunArgs),
    /// Print an exact-analysis report for a graph.
    Analyze(AnalyzeArgs),
    /// List the built-in graph presets.
    Presets,
}

#[derive(Args)]
pub struct RunArgs {
    /// Experiment config (JSON).
    pub config: PathBuf,
    /// Master seed; defaults to the config's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of consecutive seeds starting at the master seed.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub seeds: u64,
    /// Output directory.
    #[arg(long, env = "CSMA_OUT_DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
#[command(group(ArgGroup::new("input").required(true).args(["lambda", "utilities"])))]
pub struct AnalyzeArgs {
    /// Preset name or path to an edge-list file.
    #[arg(long)]
    pub graph: String,
    /// Arrival rates: one value for every node, or a comma-separated list.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub lambda: Option<Vec<f64>>,
    /// Utilities: a family name (`log-shifted`), or JSON for one utility or a per-node array.
    #[arg(long)]
    pub utilities: Option<String>,
    #[arg(long)]
    pub beta: Option<f64>,
    /// Admissibility margin; also sets the default beta = 4n/epsilon.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Target accuracy for the mixing-time estimates.
    #[arg(long, default_value_t = 0.01)]
    pub delta: f64,
    /// Multiplier inside the exponential mixing bound.
    #[arg(long, default_value_t = 1.0)]
    pub c: f64,
}

pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Numeric { .. } | Error::Diverged { .. } | Error::NotConverged { .. } => 3,
        Error::Io(_) => 1,
        _ => 2,
    }
}

/// Writes a report to stdout; a closed pipe is not an error.
pub fn emit(text: &str) -> csma_core::Result<()> {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{text}").and_then(|()| out.flush()) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

pub fn load_graph(spec: &str) -> csma_core::Result<csma_core::ConflictGraph> {
    let path = Path::new(spec);
    if path.is_file() {
        csma_core::ConflictGraph::parse_edge_list(&std::fs::read_to_string(path)?)
    } else {
        csma_core::ConflictGraph::preset(spec)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run::cmd_run(&args),
        Command::Analyze(args) => analyze::cmd_analyze(&args),
        Command::Presets => {
            let lines: Vec<String> = csma_core::conflict_graph::PRESETS.iter().map(|(n, d)| format!("{n}\t{d}")).collect();
            emit(&lines.join("\n"))
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
