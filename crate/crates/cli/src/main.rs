//! Command-line surface for the grounding library: train, ground, eval,
//! neighbors, conc, gradcheck. Every run resolves its configuration from
//! flags over an optional key=value config file and writes the resolved
//! snapshot next to its outputs, so reruns are reproducible byte for byte.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::CliError;

#[derive(Parser)]
#[command(
    name = "grounded",
    version,
    about = "Train visual-grounding alignments for word embeddings, ground whole vocabularies, and evaluate the resulting spaces"
)]
struct Cli {
    /// Key=value config file with one [section] per command; flags override.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random choice a command makes.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Directory that receives outputs and the resolved-config snapshot.
    #[arg(long, global = true, default_value = "runs")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train an alignment and sentence encoder on caption/image pairs.
    Train(commands::train::TrainArgs),
    /// Map an entire embedding table through a trained alignment.
    Ground(commands::ground::GroundArgs),
    /// Score embedding tables on similarity benchmarks.
    Eval(commands::eval::EvalArgs),
    /// Nearest neighbors of a query word, optionally diffed across tables.
    Neighbors(commands::neighbors::NeighborsArgs),
    /// Concreteness probe: ridge regression under k-fold cross validation.
    Conc(commands::conc::ConcArgs),
    /// Check analytic gradients against central finite differences.
    Gradcheck(commands::gradcheck::GradcheckArgs),
}

fn main() -> ExitCode {
    // Die quietly when a pipe downstream closes early (e.g. `... | head`).
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    let file = match config::ConfigFile::load(cli.config.as_deref()) {
        Ok(f) => f,
        Err(e) => return fail(&e),
    };
    let ctx = config::Context {
        seed: cli.seed,
        out_dir: cli.out_dir,
        file,
    };
    let result = match cli.command {
        Command::Train(args) => commands::train::run(&ctx, args),
        Command::Ground(args) => commands::ground::run(&ctx, args),
        Command::Eval(args) => commands::eval::run(&ctx, args),
        Command::Neighbors(args) => commands::neighbors::run(&ctx, args),
        Command::Conc(args) => commands::conc::run(&ctx, args),
        Command::Gradcheck(args) => commands::gradcheck::run(&ctx, args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}

fn fail(err: &CliError) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(err.exit_code())
}
