//! Batch front-end for `tclab-core`: TOML config, verification pipelines,
//! deterministic JSON/CSV reports and exit codes.

pub mod config;
pub mod error;
pub mod pipeline;
pub mod report;

use std::path::Path;

use serde::Serialize;

pub use config::{Decimal, Mode, RunConfig};
pub use error::{exit, CliError};
pub use pipeline::{run_ergodic, run_exponents, run_report, run_verify, Summary, Verdicts};
pub use report::{Check, Status, VerificationReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Verify,
    Exponents,
    Ergodic,
    Report,
}

/// Runs one subcommand into `out` and maps the outcome to an exit code.
/// Errors are reported on stderr; a failed inversion is also written to
/// `nonconvergence.json`.
pub fn execute(command: Command, config: &RunConfig, out: &Path) -> i32 {
    match dispatch(command, config, out) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("tclab: {e}");
            if let CliError::Numeric(tclab_core::Error::NonConvergence {
                a,
                point,
                iterations,
                residual,
            }) = &e
            {
                #[derive(Serialize)]
                struct Diagnostic<'a> {
                    a: [f64; 2],
                    point: &'a str,
                    iterations: usize,
                    residual: f64,
                }
                let d = Diagnostic {
                    a: *a,
                    point,
                    iterations: *iterations,
                    residual: *residual,
                };
                let _ = std::fs::create_dir_all(out);
                if let Err(w) = report::write_json(&out.join("nonconvergence.json"), &d) {
                    eprintln!("tclab: could not write diagnostics: {w}");
                }
            }
            e.exit_code()
        }
    }
}

fn dispatch(command: Command, config: &RunConfig, out: &Path) -> Result<i32, CliError> {
    let code = |ok: bool| if ok { exit::OK } else { exit::CHECK_FAILURE };
    match command {
        Command::Verify => {
            let r = run_verify(config, out)?;
            for c in r.checks.iter().filter(|c| c.status != Status::Pass) {
                eprintln!("check {} {}: value {:?}", c.name, c.status.name(), c.value);
            }
            Ok(code(r.all_pass()))
        }
        Command::Exponents => {
            let r = run_exponents(config, out)?;
            println!(
                "rank_one: {}, homogeneous: {}",
                r.verdicts.rank_one, r.verdicts.homogeneous
            );
            Ok(code(r.verdicts.all_pass()))
        }
        Command::Ergodic => {
            let r = run_ergodic(config, out)?;
            for l in &r.lines {
                println!(
                    "line {:?}: {}",
                    l.probe.direction,
                    if l.flagged_non_ergodic {
                        "non-ergodic"
                    } else {
                        "not flagged"
                    }
                );
            }
            Ok(exit::OK)
        }
        Command::Report => Ok(run_report(out)?.exit_code()),
    }
}
