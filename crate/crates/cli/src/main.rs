//! `e2loop`: run scenarios, run a CI suite, or validate a scenario file.
//!
//! Exit codes: 0 pass, 1 assertion failure, 2 usage or configuration error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use e2loop::harness::{ci, load_scenario, run_scenario, RunError, RunOptions, ScenarioError, Transport};

/// Overrides the output directory when `--out` is not given.
const OUT_ENV: &str = "E2LOOP_OUT";

#[derive(Parser)]
#[command(name = "e2loop", version, about = "Simulated RAN + RIC scenario runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its artifacts.
    Run {
        scenario: PathBuf,
        /// Artifact directory (default: out/<scenario name>).
        #[arg(long)]
        out: Option<PathBuf>,
        /// inproc or stream.
        #[arg(long)]
        transport: Option<Transport>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run every scenario in a directory and write summary.json.
    Ci {
        suite: PathBuf,
        /// Output root (default: out/ci).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        transport: Option<Transport>,
    },
    /// Check a scenario file and list every problem with its location.
    Validate { scenario: PathBuf },
}

fn out_dir(flag: Option<PathBuf>, default: impl FnOnce() -> PathBuf) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(default)
}

fn print_scenario_error(e: &ScenarioError) {
    match e {
        ScenarioError::Io { .. } => eprintln!("error: {e}"),
        _ => {
            let path = match e {
                ScenarioError::Parse { path, .. } | ScenarioError::Invalid { path, .. } => path.display().to_string(),
                ScenarioError::Io { .. } => unreachable!(),
            };
            for d in e.diagnostics() {
                eprintln!("{path}:{d}");
            }
        }
    }
}

fn report_error(e: &RunError) -> ExitCode {
    match e {
        RunError::Scenario(s) => print_scenario_error(s),
        other => eprintln!("error: {other}"),
    }
    ExitCode::from(if e.is_config() { 2 } else { 1 })
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            scenario,
            out,
            transport,
            seed,
        } => {
            // Resolve the default directory from the scenario name, which needs a parse.
            let name = load_scenario(&scenario)
                .ok()
                .and_then(|s| s.name.clone())
                .unwrap_or_else(|| stem(&scenario));
            let dir = out_dir(out, || Path::new("out").join(name));
            let opts = RunOptions {
                transport,
                seed,
                out_dir: Some(dir.clone()),
            };
            match run_scenario(&scenario, &opts) {
                Ok(rep) => {
                    for a in &rep.assertions {
                        println!("{} {}: {}", if a.passed { "PASS" } else { "FAIL" }, a.name, a.detail);
                    }
                    println!(
                        "{}: {} in {} ms, artifacts in {}",
                        rep.name,
                        if rep.passed() { "passed" } else { "FAILED" },
                        rep.wall_ms,
                        dir.display()
                    );
                    if rep.passed() {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(1)
                    }
                }
                Err(e) => report_error(&e),
            }
        }
        Command::Ci { suite, out, transport } => {
            let dir = out_dir(out, || Path::new("out").join("ci"));
            let opts = RunOptions {
                transport,
                seed: None,
                out_dir: Some(dir.clone()),
            };
            match ci(&suite, &opts) {
                Ok(summary) => {
                    for s in &summary.scenarios {
                        println!("{} {}", if s.passed { "PASS" } else { "FAIL" }, s.scenario);
                        if let Some(err) = &s.error {
                            println!("    error: {err}");
                        }
                        for f in &s.failures {
                            println!("    {f}");
                        }
                    }
                    println!(
                        "{} passed, {} failed; summary in {}",
                        summary.passed,
                        summary.failed,
                        dir.join("summary.json").display()
                    );
                    if summary.all_passed() {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(1)
                    }
                }
                Err(e) => report_error(&e),
            }
        }
        Command::Validate { scenario } => match load_scenario(&scenario) {
            Ok(_) => {
                println!("{}: ok", scenario.display());
                ExitCode::SUCCESS
            }
            Err(e) => {
                print_scenario_error(&e);
                ExitCode::from(2)
            }
        },
    }
}
