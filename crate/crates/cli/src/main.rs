//! `avin`: world generation, datasets, training, evaluation and rendering.

mod commands;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand};

use avin::{Domain, ModelKind};

#[derive(Parser)]
#[command(name = "avin", version, about = "Value iteration networks on multiple levels of abstraction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a file of random-obstacle worlds or mazes.
    GenWorlds(GenWorldsArgs),
    /// Sample planning tasks and expert-labelled training samples.
    GenDataset(GenDatasetArgs),
    /// Train a planner by imitation of the expert.
    Train(TrainArgs),
    /// Roll out a trained planner (or the expert) on held-out worlds.
    Eval(EvalArgs),
    /// Draw a world with expert and model paths as a PPM image.
    Render(RenderArgs),
}

#[derive(Args)]
#[command(group(ArgGroup::new("kind").required(true).args(["maze", "random"])))]
pub struct GenWorldsArgs {
    #[arg(long, default_value = "grid2d")]
    pub domain: Domain,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub count: usize,
    /// Depth-first mazes (grid2d only).
    #[arg(long)]
    pub maze: bool,
    /// Random rectangular obstacles.
    #[arg(long)]
    pub random: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct GenDatasetArgs {
    #[arg(long)]
    pub worlds: PathBuf,
    /// Planning tasks per world.
    #[arg(long, default_value_t = 7)]
    pub tasks: usize,
    /// Random sub-paths sampled per task path.
    #[arg(long, default_value_t = 0)]
    pub subpaths: usize,
    /// Let diagonal grid2d moves pass between two blocked side cells.
    #[arg(long)]
    pub corner_cutting: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct TrainArgs {
    #[arg(long, default_value = "avin")]
    pub model: ModelKind,
    /// Abstraction levels (AVIN only; default 3).
    #[arg(long)]
    pub levels: Option<usize>,
    /// Defaults to the domain of the training worlds.
    #[arg(long)]
    pub domain: Option<Domain>,
    /// Input side; defaults to the side of the training worlds.
    #[arg(long)]
    pub n: Option<usize>,
    /// Worlds the dataset samples refer to.
    #[arg(long)]
    pub worlds: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    /// Held-out worlds for validation success at each cycle end.
    #[arg(long)]
    pub val_worlds: Option<PathBuf>,
    #[arg(long, default_value_t = 7)]
    pub val_tasks: usize,
    #[arg(long, default_value_t = 1)]
    pub val_seed: u64,
    #[arg(long, default_value_t = 48)]
    pub epochs: usize,
    #[arg(long, default_value_t = 128)]
    pub batch: usize,
    #[arg(long, default_value_t = 0.001)]
    pub lr: f64,
    /// Length of the first learning-rate cycle, in epochs.
    #[arg(long, default_value_t = 48)]
    pub cycle: usize,
    /// Seeds parameter initialization and shuffling.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Train one model per seed (comma-separated); outputs get a `.seed<k>`
    /// suffix before the extension.
    #[arg(long, value_delimiter = ',', conflicts_with_all = ["seed", "resume"])]
    pub seeds: Vec<u64>,
    /// Let diagonal grid2d moves pass between two blocked side cells.
    #[arg(long)]
    pub corner_cutting: bool,
    /// Continue from a checkpoint, including optimizer and schedule state.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Also write the training log here.
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long)]
    pub out_ckpt: PathBuf,
}

#[derive(Args)]
#[command(group(ArgGroup::new("planner").required(true).args(["ckpt", "oracle"])))]
pub struct EvalArgs {
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    /// Evaluate the expert itself.
    #[arg(long)]
    pub oracle: bool,
    #[arg(long)]
    pub worlds: PathBuf,
    #[arg(long, default_value_t = 7)]
    pub tasks: usize,
    /// Seeds the task draw.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Report file; printed to stdout when absent.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Add per-task planning times of the planner and of A*.
    #[arg(long)]
    pub compare_expert: bool,
    /// Write one trace file per task into this directory.
    #[arg(long)]
    pub trace_dir: Option<PathBuf>,
    /// Rollouts advanced together per network call.
    #[arg(long, default_value_t = 64)]
    pub batch: usize,
    /// Let diagonal grid2d moves pass between two blocked side cells.
    #[arg(long)]
    pub corner_cutting: bool,
}

#[derive(Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub world: PathBuf,
    /// World within the file; defaults to the world of the first trace.
    #[arg(long)]
    pub index: Option<usize>,
    /// Trace files, drawn in palette order.
    #[arg(long = "trace", alias = "traces", num_args = 1..)]
    pub traces: Vec<PathBuf>,
    /// Start pose `x,y,theta`; defaults to the first trace's start.
    #[arg(long)]
    pub start: Option<String>,
    /// Goal pose `x,y,theta`; defaults to the first trace's goal.
    #[arg(long)]
    pub goal: Option<String>,
    /// Skip the expert path.
    #[arg(long)]
    pub no_expert: bool,
    /// Let diagonal grid2d moves pass between two blocked side cells.
    #[arg(long)]
    pub corner_cutting: bool,
    /// Pixels per cell.
    #[arg(long, default_value_t = 8)]
    pub scale: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Checkpoint whose finest-level value map at the start is drawn to
    /// `--values-out`.
    #[arg(long, requires = "values_out")]
    pub ckpt: Option<PathBuf>,
    #[arg(long, requires = "ckpt")]
    pub values_out: Option<PathBuf>,
}

/// Bad flags or input files (exit code 2).
#[derive(Debug)]
pub struct InputError(pub String);

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.is::<InputError>() || cause.is::<std::io::Error>() {
            return 2;
        }
        if let Some(err) = cause.downcast_ref::<avin::Error>() {
            return match err {
                avin::Error::Io(_) | avin::Error::Format(_) | avin::Error::Config(_) | avin::Error::OutsideWorld { .. } => 2,
                _ => 1,
            };
        }
    }
    1
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenWorlds(a) => commands::gen_worlds(&a),
        Command::GenDataset(a) => commands::gen_dataset(&a),
        Command::Train(a) => commands::train(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Render(a) => commands::render(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
