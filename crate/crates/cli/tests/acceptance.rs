//! Runs every acceptance criterion at its stated tolerance and prints one
//! PASS/FAIL line per criterion.

use std::process::ExitCode;

use nbbm_cli::{run_accept_with, ExperimentSpec};

fn main() -> ExitCode {
    let spec = ExperimentSpec::default();
    let report = match run_accept_with(&spec, None, |r| println!("{}", r.line())) {
        Ok(r) => r,
        Err(e) => {
            println!("FAIL acceptance suite could not run: {e:#}");
            return ExitCode::FAILURE;
        }
    };
    if let Err(e) = &report.invariants {
        println!("FAIL core-invariants: {e}");
    }
    let passed = report.results.iter().filter(|r| r.pass).count();
    println!("{passed}/{} criteria passed", report.results.len());
    if report.pass() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
