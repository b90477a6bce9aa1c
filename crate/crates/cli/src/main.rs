mod commands;
mod config;

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use gdan::eval::CurveMode;
use gdan::hetgraph::Split;

/// Heterogeneous graph node classification with dimension attention, and
/// entropy-based edge importance.
#[derive(Debug, Parser)]
#[command(name = "gdan", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check graph files and print dataset statistics.
    Validate(ValidateArgs),
    /// Train a model and save its checkpoint and training report.
    Train {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Score a checkpoint on one label split.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value = "test")]
        split: Split,
    },
    /// K-means on learned node representations, scored by NMI and ARI.
    Cluster {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Cluster count; defaults to the number of classes.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, default_value_t = 10)]
        repeats: usize,
    },
    /// Score every edge by importance.
    Explain {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum, default_value_t = Method::Distshift)]
        method: Method,
    },
    /// Retrain while deleting or adding edges in score order.
    Curve {
        #[command(flatten)]
        run: RunArgs,
        /// Edge score CSV written by `explain`.
        #[arg(long)]
        scores: PathBuf,
        #[arg(long, value_parser = parse_mode)]
        mode: CurveMode,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Use the graph-convolution base with dimension attention plugged in,
    /// overriding the configured architecture.
    #[arg(long, value_enum)]
    base: Option<Base>,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    /// Run configuration naming the data files; statistics are also saved
    /// to its run directory.
    #[arg(long, conflicts_with_all = ["nodes", "edges", "labels"])]
    config: Option<PathBuf>,
    #[arg(long, requires_all = ["edges", "labels"])]
    nodes: Option<PathBuf>,
    #[arg(long, requires_all = ["nodes", "labels"])]
    edges: Option<PathBuf>,
    #[arg(long, requires_all = ["nodes", "edges"])]
    labels: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Base {
    Gc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    Distshift,
    Loo,
}

fn parse_mode(s: &str) -> Result<CurveMode, String> {
    s.parse().map_err(|e: gdan::Error| e.to_string())
}

/// Usage and config problems exit with 2, everything else with 1.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<gdan::Error> for Failure {
    fn from(e: gdan::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn thread_count() -> Result<usize, Failure> {
    match std::env::var("GDAN_THREADS") {
        Err(_) => Ok(1),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(Failure::Usage(format!(
                "GDAN_THREADS must be a positive integer, got `{v}`"
            ))),
        },
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let threads = thread_count()?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Failure::Runtime(e.to_string()))?;
    let ctx = commands::Context { threads };
    match cli.command {
        Command::Validate(a) => {
            commands::validate(&ctx, a.config, a.nodes.zip(a.edges).zip(a.labels))
        }
        Command::Train { run } => commands::train(&ctx, &run.config, run.base.is_some()),
        Command::Eval {
            run,
            checkpoint,
            split,
        } => commands::eval(&ctx, &run.config, run.base.is_some(), checkpoint, split),
        Command::Cluster {
            run,
            checkpoint,
            k,
            repeats,
        } => commands::cluster(
            &ctx,
            &run.config,
            run.base.is_some(),
            checkpoint,
            k,
            repeats,
        ),
        Command::Explain { run, method } => {
            commands::explain(&ctx, &run.config, run.base.is_some(), method == Method::Loo)
        }
        Command::Curve { run, scores, mode } => {
            commands::curve(&ctx, &run.config, run.base.is_some(), &scores, mode)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
