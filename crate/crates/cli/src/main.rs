mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::ConfigError;

#[derive(Parser, Debug)]
#[command(name = "ispace", version, about = "Experiments over GPU implementation spaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug, Clone)]
pub struct Common {
    /// Experiment configuration (TOML).
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Evaluation budget of explorations.
    #[arg(long)]
    pub budget: Option<u64>,
    /// `default`, `reversed` or a comma-separated list of choices.
    #[arg(long)]
    pub order: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Monte-Carlo tree search for the cheapest implementation.
    Explore(Common),
    /// Search-tree size estimates (Knuth and Chen).
    Estimate(Common),
    /// Dead-end ratio of uniform random walks.
    Deadend(Common),
    /// Prune fractions of the default and reversed decision orders.
    OrderCompare(Common),
    /// Exact node and leaf counts of the search tree.
    Enumerate(Common),
    /// Source of a stored implementation.
    Codegen {
        #[command(flatten)]
        common: Common,
        /// Implementation file written by `explore`.
        #[arg(long)]
        input: PathBuf,
    },
    /// Lower bound of the root or of a stored implementation.
    Bound {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Re-evaluates every cost recorded in an exploration log.
    Replay {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        log: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Explore(c) => commands::explore(c),
        Command::Estimate(c) => commands::estimate(c),
        Command::Deadend(c) => commands::deadend(c),
        Command::OrderCompare(c) => commands::order_compare(c),
        Command::Enumerate(c) => commands::enumerate(c),
        Command::Codegen { common, input } => commands::codegen(common, input),
        Command::Bound { common, input } => commands::bound(common, input.as_deref()),
        Command::Replay { common, log } => commands::replay(common, log),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
