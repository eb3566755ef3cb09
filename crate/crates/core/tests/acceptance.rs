//! Acceptance gate: runs every verification criterion at the default
//! resolution and prints one PASS/FAIL line per criterion.
//!
//! `NEMATICON_VERIFY_PROFILE=quick` selects the reduced profile.

use nematicon::verify::{run, Profile};
use std::path::PathBuf;
use std::process::ExitCode;

fn main() -> ExitCode {
    let profile = match std::env::var("NEMATICON_VERIFY_PROFILE").as_deref() {
        Ok("quick") => Profile::Quick,
        _ => Profile::Full,
    };
    let artifacts = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    println!("acceptance ({profile:?}); artifacts in {}", artifacts.display());
    match run(profile, Some(&artifacts), |r| println!("{}", r.line())) {
        Ok(report) => {
            let passed = report.results.iter().filter(|r| r.passed).count();
            println!("{passed}/{} criteria passed", report.results.len());
            if report.all_passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            println!("acceptance setup failed: {e}");
            ExitCode::FAILURE
        }
    }
}
