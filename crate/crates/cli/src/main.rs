//! Command-line driver for hybrid RBF + hash-grid neural fields.
//!
//! Subcommands: `fit-image`, `fit-sdf`, `eval`, `init-inspect`,
//! `print-defaults`. Exit codes are stable API: 0 success, 1 config error,
//! 2 I/O error, 3 training abort (non-finite loss or gradient), 4
//! non-watertight mesh. Log verbosity comes from `NEURBF_LOG`
//! (error|info|debug, default error).

mod artifacts;
mod ops;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use neurbf_core::config::Task;
use neurbf_core::error::Error;

#[derive(Parser)]
#[command(name = "neurbf", version, about = "Fit images and signed distance fields with an adaptive RBF + hash-grid hybrid model")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Fit an RGB image; writes checkpoint, report, reconstruction and
    /// error map into the output directory.
    FitImage(RunArgs),
    /// Fit a signed distance field from a watertight mesh or an analytic
    /// shape; writes checkpoint, report and a cross-section image.
    FitSdf(RunArgs),
    /// Recompute metrics for a checkpoint without training and print them
    /// as JSON.
    Eval(EvalArgs),
    /// Run initialization only (image task) and write the centers, shapes
    /// and an ellipse overlay.
    InitInspect(RunArgs),
    /// Print the built-in defaults for a task as TOML.
    PrintDefaults {
        #[arg(long, value_enum, default_value_t = TaskArg::Image)]
        task: TaskArg,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    Image,
    Sdf,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Task {
        match t {
            TaskArg::Image => Task::Image,
            TaskArg::Sdf => Task::Sdf,
        }
    }
}

#[derive(Args)]
pub(crate) struct RunArgs {
    /// Config file; TOML, or JSON when the extension is .json.
    #[arg(long)]
    pub(crate) config: Option<PathBuf>,
    /// Override the config's seed.
    #[arg(long)]
    pub(crate) seed: Option<u64>,
    /// Override the config's output directory.
    #[arg(long)]
    pub(crate) out: Option<PathBuf>,
    /// Worker threads; 0 means all logical cores.
    #[arg(long)]
    pub(crate) threads: Option<usize>,
    /// Override the config's step count.
    #[arg(long)]
    pub(crate) steps: Option<usize>,
    /// Override the config's parameter budget.
    #[arg(long)]
    pub(crate) budget: Option<usize>,
}

#[derive(Args)]
pub(crate) struct EvalArgs {
    /// Checkpoint file to evaluate.
    pub(crate) checkpoint: PathBuf,
    /// Fit target; defaults to the input recorded in the checkpoint.
    #[arg(long)]
    pub(crate) target: Option<PathBuf>,
    /// Worker threads; 0 means all logical cores.
    #[arg(long)]
    pub(crate) threads: Option<usize>,
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) => 1,
        Error::Io(_)
        | Error::Image(_)
        | Error::Json(_)
        | Error::Checkpoint(_)
        | Error::MeshFormat { .. } => 2,
        Error::NonFiniteLoss { .. } | Error::NonFiniteGradient { .. } => 3,
        Error::NotWatertight(_) => 4,
        // Internal invariant failures; no dedicated code.
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("NEURBF_LOG", "error"))
        .format_timestamp(None)
        .init();
    let result = match &cli.cmd {
        Cmd::FitImage(args) => ops::fit_image(args),
        Cmd::FitSdf(args) => ops::fit_sdf(args),
        Cmd::Eval(args) => ops::eval(args),
        Cmd::InitInspect(args) => ops::init_inspect(args),
        Cmd::PrintDefaults { task } => {
            print!("{}", neurbf_core::config::default_toml((*task).into()));
            Ok(())
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
