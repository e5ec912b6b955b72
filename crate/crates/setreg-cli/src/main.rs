//! Command-line front end: generate synthetic sets, register sets, evaluate
//! batches against ground truth.

mod eval;
mod generate;
mod register;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "setreg",
    about = "Set-based translation registration of grayscale image stacks",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic image set with exact ground-truth offsets.
    Generate(generate::GenerateArgs),
    /// Register one image set and emit a JSON run report.
    Register(register::RegisterArgs),
    /// Batch-register a directory of sets and emit a CSV summary.
    Eval(eval::EvalArgs),
}

fn main() -> Result<()> {
    if let Ok(v) = std::env::var("SETREG_THREADS") {
        let threads: usize = v
            .parse()
            .with_context(|| format!("SETREG_THREADS must be a positive integer, got '{v}'"))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .ok();
    }
    match Cli::parse().command {
        Command::Generate(args) => generate::run(args),
        Command::Register(args) => register::run(args),
        Command::Eval(args) => eval::run(args),
    }
}
