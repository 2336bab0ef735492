//! `apres` — a review-and-revise pipeline for research papers: discover a
//! scoring rubric, score and revise drafts against it, and rank papers by
//! judged pairwise comparison.

mod commands;
mod config;
mod lock;

use apres_core::corpus::Stratum;
use clap::{Parser, Subcommand, ValueEnum};

use config::{CommonFlags, RunConfig};

#[derive(Debug)]
pub enum CliError {
    /// Bad invocation or configuration; exits 2.
    Usage(String),
    /// The command itself failed; exits 1.
    Op(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(msg) | CliError::Op(msg) => write!(f, "{msg}"),
        }
    }
}

impl std::error::Error for CliError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StratumArg {
    ClearAccept,
    Borderline,
    ClearReject,
    All,
}

impl StratumArg {
    fn to_filter(self) -> Option<Stratum> {
        match self {
            StratumArg::ClearAccept => Some(Stratum::ClearAccept),
            StratumArg::Borderline => Some(Stratum::Borderline),
            StratumArg::ClearReject => Some(Stratum::ClearReject),
            StratumArg::All => None,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "apres",
    version,
    about = "Rubric discovery, scoring, revision, and pairwise ranking for paper corpora"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a corpus file and print its summary statistics.
    Ingest {
        #[command(flatten)]
        flags: CommonFlags,
    },
    /// Materialize the deterministic train/validation/test split.
    Split {
        #[command(flatten)]
        flags: CommonFlags,
    },
    /// Search for a rubric whose scores best predict 12-month citations.
    RubricSearch {
        #[command(flatten)]
        flags: CommonFlags,
    },
    /// Score one split (or the whole corpus) against a rubric.
    Score {
        /// Which papers to score: train | validation | test | all.
        #[arg(value_name = "SPLIT", default_value = "validation")]
        split: String,
        #[command(flatten)]
        flags: CommonFlags,
    },
    /// Revise test-split papers to maximize their mean rubric score.
    Revise {
        /// Restrict to one review stratum.
        #[arg(long, value_enum, default_value_t = StratumArg::All)]
        stratum: StratumArg,
        #[command(flatten)]
        flags: CommonFlags,
    },
    /// Rank test-split papers with a judged pairwise tournament.
    Rank {
        #[command(flatten)]
        flags: CommonFlags,
    },
    /// Compare accept/reject decisions across finished rank runs.
    Consistency {
        /// Run directories as label=dir; repeat a label to mark reruns.
        #[arg(value_name = "LABEL=DIR", required = true)]
        runs: Vec<String>,
        #[command(flatten)]
        flags: CommonFlags,
    },
    /// Render a Markdown report from whatever artifacts a run dir holds.
    Report {
        #[command(flatten)]
        flags: CommonFlags,
    },
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Ingest { flags } => commands::ingest(&RunConfig::resolve(&flags, None)?),
        Command::Split { flags } => commands::split(&RunConfig::resolve(&flags, None)?),
        Command::RubricSearch { flags } => {
            commands::rubric_search(&RunConfig::resolve(&flags, Some(200))?)
        }
        Command::Score { split, flags } => {
            commands::score(&RunConfig::resolve(&flags, None)?, &split)
        }
        Command::Revise { stratum, flags } => {
            commands::revise(&RunConfig::resolve(&flags, Some(120))?, stratum.to_filter())
        }
        Command::Rank { flags } => commands::rank(&RunConfig::resolve(&flags, None)?),
        Command::Consistency { runs, flags } => {
            commands::consistency(&RunConfig::resolve(&flags, None)?, &runs)
        }
        Command::Report { flags } => commands::report(&RunConfig::resolve(&flags, None)?),
    }
}

fn main() {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => {}
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            std::process::exit(2);
        }
        Err(CliError::Op(msg)) => {
            eprintln!("error: {msg}");
            std::process::exit(1);
        }
    }
}
