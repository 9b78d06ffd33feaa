use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tclab_cli::{execute, exit, Command, RunConfig};

/// Verification pipelines for the time-changed product action.
#[derive(Parser, Debug)]
#[command(name = "tclab", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand, Debug)]
enum Sub {
    /// Cocycle identity, inversion, group law and ε₀-bound checks.
    Verify(Args),
    /// Exponent field, zero lines and verdicts.
    Exponents(Args),
    /// Line-average dispersion probes.
    Ergodic(Args),
    /// Summarize earlier outputs.
    Report(Args),
}

#[derive(clap::Args, Debug)]
struct Args {
    /// TOML run configuration; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,

    /// Base seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,

    /// Worker threads; 0 or unset uses all cores.
    #[arg(long, env = "TCLAB_THREADS")]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        Sub::Verify(a) => (Command::Verify, a),
        Sub::Exponents(a) => (Command::Exponents, a),
        Sub::Ergodic(a) => (Command::Ergodic, a),
        Sub::Report(a) => (Command::Report, a),
    };
    let mut config = match &args.config {
        Some(path) => match RunConfig::load(path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("tclab: {e}");
                return ExitCode::from(exit::CONFIG as u8);
            }
        },
        None if command == Command::Report => RunConfig::default(),
        None => {
            eprintln!("tclab: --config is required");
            return ExitCode::from(exit::CONFIG as u8);
        }
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(out) = args.out {
        config.output_dir = out;
    }
    if let Some(n) = args.threads.filter(|&n| n > 0) {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("tclab: thread pool: {e}");
        }
    }
    let out = config.output_dir.clone();
    ExitCode::from(execute(command, &config, &out) as u8)
}
