//! `thought-graph`: generate, evaluate and export thought graphs for gene sets.

mod commands;
mod error;
mod setup;

use clap::{Parser, Subcommand};

use commands::{BaselineArgs, EvaluateArgs, ExportArgs, GenerateArgs, OntologyCommand};

#[derive(Debug, Parser)]
#[command(name = "thought-graph", version, about = "Thought-graph annotation of gene sets")]
struct Cli {
    /// More logging (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build one thought graph.
    Generate(GenerateArgs),
    /// Generate (or load) graphs for a dataset sample and score them.
    Evaluate(EvaluateArgs),
    /// Run and score a single-prompt baseline.
    Baseline(BaselineArgs),
    #[command(subcommand)]
    Ontology(OntologyCommand),
    /// Re-emit a saved graph.
    Export(ExportArgs),
}

fn main() {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.command {
        Command::Generate(a) => commands::generate(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Baseline(a) => commands::baseline(a),
        Command::Ontology(c) => commands::ontology(c),
        Command::Export(a) => commands::export(a),
    };
    if let Err(e) = result {
        eprintln!("{e}");
        std::process::exit(e.category.exit_code());
    }
}
