//! `backdoor-mip`: command-line driver for the pseudo-backdoor experiment
//! lifecycle.

mod commands;
mod failure;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "backdoor-mip", version, about = "Learn and evaluate pseudo-backdoors for MIP branching")]
struct Cli {
    /// Root directory for default input and output paths.
    #[arg(long, global = true, env = "BACKDOOR_MIP_DATA", default_value = "data")]
    data: PathBuf,

    /// Overwrite outputs that already exist with different content.
    #[arg(long, global = true)]
    force: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate GISP instance files from a preset.
    GenInstances(GenArgs),
    /// Solve one instance, optionally with branching priorities.
    Solve(SolveArgs),
    /// Sample candidate sets for every instance in a directory.
    Sample(SampleArgs),
    /// Run default and candidate solves and append them to a record store.
    Collect(CollectArgs),
    /// Train the candidate scorer on ranking pairs from collected records.
    TrainScorer(TrainScorerArgs),
    /// Train the accept/decline classifier on the scorer's picks.
    TrainClassifier(TrainClassifierArgs),
    /// Compare default, scorer and scorer+classifier on a test split.
    Evaluate(EvaluateArgs),
    /// Print a saved evaluation report.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct GenArgs {
    /// toy, easy or hard.
    #[arg(long)]
    preset: String,
    #[arg(long)]
    count: usize,
    #[arg(long)]
    seed: u64,
    /// Output directory [default: <data>/instances/<preset>-s<seed>].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[arg(long)]
    instance: PathBuf,
    /// JSON file `{"priority": [..]}` with one entry per variable.
    #[arg(long, conflicts_with = "candidates")]
    priorities: Option<PathBuf>,
    /// Candidate file; use with --candidate-id.
    #[arg(long, requires = "candidate_id")]
    candidates: Option<PathBuf>,
    #[arg(long)]
    candidate_id: Option<usize>,
    #[command(flatten)]
    solver: SolverArgs,
    /// Write one JSON line per processed node here.
    #[arg(long)]
    run_log: Option<PathBuf>,
}

#[derive(Debug, Args, Clone)]
struct SolverArgs {
    #[arg(long, default_value_t = 100_000)]
    node_limit: usize,
    /// Wall-clock limit in seconds.
    #[arg(long)]
    time_limit: Option<f64>,
    /// Record wall seconds instead of node counts (not reproducible).
    #[arg(long)]
    wall_seconds: bool,
}

#[derive(Debug, Args, Clone)]
struct CandidateArgs {
    /// Directory of instance files.
    #[arg(long)]
    instances: PathBuf,
    /// Base seed for candidate sampling.
    #[arg(long)]
    seed: u64,
    /// Candidates per instance.
    #[arg(long, default_value_t = 50)]
    candidates: usize,
    /// Fraction of integer variables in each candidate.
    #[arg(long, default_value_t = 0.01)]
    fraction: f64,
}

#[derive(Debug, Args)]
struct SampleArgs {
    #[command(flatten)]
    run: CandidateArgs,
    /// Output directory [default: <data>/candidates/<instances dir name>].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CollectArgs {
    #[command(flatten)]
    run: CandidateArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// Record store [default: <data>/records/<instances dir name>.jsonl].
    #[arg(long)]
    records: Option<PathBuf>,
    /// Concurrent solves.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Debug, Args, Clone)]
struct TrainArgs {
    /// Seed for initialization and shuffling.
    #[arg(long)]
    seed: u64,
    /// Defaults: 20 for the scorer, 400 for the classifier.
    #[arg(long)]
    epochs: Option<usize>,
    /// Defaults: 1e-3 for the scorer, 3e-4 for the classifier.
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Defaults: 32 for the scorer, 8 for the classifier.
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long, default_value_t = 0.1)]
    margin: f64,
    #[arg(long, default_value_t = 32)]
    hidden: usize,
    #[arg(long, default_value_t = 4)]
    heads: usize,
    #[arg(long, default_value_t = 2)]
    rounds: usize,
    /// Write the per-epoch loss history here as JSON.
    #[arg(long)]
    history: Option<PathBuf>,
}

#[derive(Debug, Args, Clone)]
struct RecordArgs {
    /// Directory of instance files the records were collected on.
    #[arg(long)]
    instances: PathBuf,
    #[arg(long)]
    records: PathBuf,
    /// The --seed given to `collect`.
    #[arg(long)]
    collect_seed: u64,
    #[arg(long, default_value_t = 50)]
    candidates: usize,
    #[arg(long, default_value_t = 0.01)]
    fraction: f64,
}

#[derive(Debug, Args)]
struct TrainScorerArgs {
    #[command(flatten)]
    data: RecordArgs,
    #[command(flatten)]
    train: TrainArgs,
    /// Maximum ranking pairs per instance; 0 keeps all.
    #[arg(long, default_value_t = 300)]
    pair_cap: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainClassifierArgs {
    #[command(flatten)]
    data: RecordArgs,
    #[command(flatten)]
    train: TrainArgs,
    #[arg(long)]
    scorer: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[command(flatten)]
    run: CandidateArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long)]
    scorer: PathBuf,
    #[arg(long)]
    classifier: PathBuf,
    /// Report JSON; the text table goes next to it with a .txt extension.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[arg(long)]
    report: PathBuf,
    /// Print the JSON form instead of the table.
    #[arg(long)]
    json: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let ctx = commands::Context {
        data: cli.data,
        force: cli.force,
    };
    let result = match cli.command {
        Command::GenInstances(a) => commands::gen_instances(&ctx, a),
        Command::Solve(a) => commands::solve(&ctx, a),
        Command::Sample(a) => commands::sample(&ctx, a),
        Command::Collect(a) => commands::collect(&ctx, a),
        Command::TrainScorer(a) => commands::train_scorer(&ctx, a),
        Command::TrainClassifier(a) => commands::train_classifier(&ctx, a),
        Command::Evaluate(a) => commands::evaluate(&ctx, a),
        Command::Report(a) => commands::report(&ctx, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => f.report(),
    }
}
