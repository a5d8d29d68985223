//! `mmsearch`: generate demonstrations, train the network, search for
//! decompositions and check the results.
//!
//! Exit codes: 0 success, 1 verification or search failure, 2 usage error,
//! 3 corrupt input data.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mmsearch_core::Error;

#[derive(Parser, Debug)]
#[command(
    name = "mmsearch",
    version,
    about = "Search for low-rank matrix multiplication algorithms"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every command that reads a run configuration.
#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// TOML configuration with [gen], [train], [search] and [run] sections.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed (overrides [run] seed).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (overrides [run] out).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a demonstration dataset.
    Gen {
        #[command(flatten)]
        common: Common,
        /// Number of demos.
        #[arg(long)]
        n: Option<usize>,
        /// Keep redundant demos.
        #[arg(long)]
        no_filter: bool,
    },
    /// Train the policy/value network on a dataset.
    Train {
        #[command(flatten)]
        common: Common,
        /// Dataset written by `gen`.
        #[arg(long)]
        dataset: PathBuf,
        /// baseline, augmented or full.
        #[arg(long)]
        variant: Option<String>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Continue from this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Decompose a target tensor with guided search.
    Decompose {
        #[command(flatten)]
        common: Common,
        /// `matmul:n,m,p` or a tensor file.
        target: String,
        /// Trained checkpoint.
        #[arg(long, required_unless_present = "oracle")]
        checkpoint: Option<PathBuf>,
        /// Use exact ranks from exhaustive search instead of a network (S ≤ 3).
        #[arg(long, conflicts_with = "checkpoint")]
        oracle: bool,
        #[arg(long)]
        simulations: Option<usize>,
    },
    /// Check a certificate against a target.
    Verify {
        certificate: PathBuf,
        /// `matmul:n,m,p` or a tensor file.
        target: String,
        /// Random trials of the bilinear algorithm check.
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print a verified matrix multiplication certificate as an algorithm.
    Render {
        certificate: PathBuf,
        /// `matmul:n,m,p`.
        target: String,
    },
    /// Exact rank of a tiny tensor by exhaustive search.
    Oracle {
        tensor: PathBuf,
        #[arg(long, default_value_t = 3)]
        max_rank: usize,
        /// Where to write the witness certificate.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// A command that ran but whose check or search did not succeed.
#[derive(Debug)]
pub struct Failed(pub String);

pub enum CliError {
    Failed(Failed),
    Core(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<Failed> for CliError {
    fn from(f: Failed) -> Self {
        CliError::Failed(f)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Corruption(_) | Error::Format(_) | Error::Parse { .. } => 3,
        Error::Training(_) | Error::Search(_) | Error::Generation(_) | Error::Overflow { .. } => 1,
        Error::Usage(_) | Error::Incompatible(_) | Error::Budget { .. } | Error::Io { .. } => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen { common, n, no_filter } => commands::gen(&common, n, no_filter),
        Command::Train {
            common,
            dataset,
            variant,
            epochs,
            resume,
        } => commands::train(&common, &dataset, variant, epochs, resume.as_deref()),
        Command::Decompose {
            common,
            target,
            checkpoint,
            oracle,
            simulations,
        } => commands::decompose(&common, &target, checkpoint.as_deref(), oracle, simulations),
        Command::Verify {
            certificate,
            target,
            trials,
            seed,
        } => commands::verify(&certificate, &target, trials, seed),
        Command::Render { certificate, target } => commands::render(&certificate, &target),
        Command::Oracle { tensor, max_rank, out } => commands::oracle(&tensor, max_rank, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Failed(Failed(msg))) => {
            eprintln!("{msg}");
            ExitCode::from(1)
        }
        Err(CliError::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
