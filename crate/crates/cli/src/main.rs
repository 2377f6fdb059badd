mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kgt_core::eval::EvalSplit;

/// Error caused by the invocation rather than by the program; exits 2.
#[derive(Debug)]
pub struct UserError(pub String);

impl std::fmt::Display for UserError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UserError {}

#[derive(Parser)]
#[command(name = "kgt", version, about = "Knowledge graph completion with relational transformers")]
struct Cli {
    /// Cap on worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model from a configuration file.
    Train(TrainArgs),
    /// Rank a split with a trained checkpoint.
    Eval(EvalArgs),
    /// Top-k tails for a (head, relation) query.
    Predict(PredictArgs),
    /// Numerical and structural diagnostics.
    #[command(subcommand)]
    Diagnose(DiagnoseCommand),
}

#[derive(Args)]
pub struct TrainArgs {
    /// `key = value` file with [data], [model], [train] and [run] sections.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (overrides run.out).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Extra `section.key=value` overrides, applied after the file.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Train once per point of the learning-rate, weight-decay and
    /// negative-count grids and keep the best by validation MRR.
    #[arg(long)]
    pub grid: bool,
    /// Continue from `last.ckpt` in the output directory.
    #[arg(long, conflicts_with = "grid")]
    pub resume: bool,
}

#[derive(Args)]
pub struct EvalArgs {
    pub checkpoint: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: EvalSplit,
    /// Write one JSON record per query to this file.
    #[arg(long, value_name = "FILE")]
    pub per_query: Option<PathBuf>,
    /// Unfiltered ranking.
    #[arg(long)]
    pub raw: bool,
    /// Repeat with this many noise draws and report the MRR spread.
    #[arg(long, default_value_t = 1)]
    pub noise_seeds: u64,
    /// Also report the MRR spread over 3 noise draws.
    #[arg(short, long)]
    pub verbose: bool,
    /// Dataset directory, if it moved since training.
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Args)]
pub struct PredictArgs {
    pub checkpoint: PathBuf,
    /// Head entity token.
    pub head: String,
    /// Relation token; append `^-1` for the inverse direction.
    pub relation: String,
    #[arg(short, long, default_value_t = 10)]
    pub k: usize,
    /// Treat the fact `(head, relation, TAIL)` as unseen: hide it and its
    /// inverse from message passing and leave out the other known tails.
    #[arg(long, value_name = "TAIL")]
    pub holdout: Option<String>,
    /// Print JSON instead of a table.
    #[arg(long)]
    pub json: bool,
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Subcommand)]
pub enum DiagnoseCommand {
    /// Worst-case gap between the linear and exponential kernels.
    KernelError {
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 32)]
        dim: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Entities each top answer attends to, from the dense attention matrix.
    Attention {
        checkpoint: PathBuf,
        #[arg(long)]
        head: String,
        #[arg(long)]
        relation: String,
        /// Attended entities listed per answer and layer.
        #[arg(long, default_value_t = 5)]
        top: usize,
        /// Number of top-scoring answers to inspect.
        #[arg(long, default_value_t = 3)]
        answers: usize,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Finite-difference audit of every parameter gradient on a toy graph.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 8)]
        dim: usize,
        #[arg(long, default_value_t = 1e-5)]
        step: f64,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
    /// Color classes of relational refinement anchored at a head entity.
    Wl {
        /// Dataset directory; its training facts form the graph.
        #[arg(long, default_value = "data/umls")]
        data: PathBuf,
        #[arg(long)]
        head: String,
        #[arg(long, default_value_t = 100)]
        rounds: usize,
    },
    /// Forward time on chain graphs, linear and dense attention.
    Scaling {
        #[arg(long, value_delimiter = ',', default_value = "1000,2000,4000,8000")]
        sizes: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "250,500,1000,2000")]
        dense_sizes: Vec<usize>,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        #[arg(long, default_value_t = 32)]
        dim: usize,
    },
}

/// 2 for bad input, 1 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    use kgt_core::Error as E;
    for cause in err.chain() {
        if cause.is::<UserError>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::Io { .. }
                | E::Parse { .. }
                | E::Vocabulary { .. }
                | E::Config(_)
                | E::Sampling { .. }
                | E::OracleScope { .. }
                | E::Checkpoint(_) => 2,
                _ => 1,
            };
        }
    }
    1
}

/// The error chain joined by `: `, skipping causes whose text an
/// earlier message already includes.
fn describe(err: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if out.contains(&text) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&text);
    }
    out
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    if let Some(n) = cli.threads {
        if n == 0 {
            anyhow::bail!(UserError("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Train(args) => commands::train(args),
        Command::Eval(args) => commands::eval(args),
        Command::Predict(args) => commands::predict(args),
        Command::Diagnose(cmd) => commands::diagnose(cmd),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        // A diagnostic ran but its check failed.
        Ok(false) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {}", describe(&err));
            ExitCode::from(exit_code(&err))
        }
    }
}
