use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use formda::harness::{self, PropertyOptions, ProblemKind};

#[derive(Parser)]
#[command(name = "formda", version, about = "Regularized momentum descent-ascent experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every solver on every seed of a config and write CSV/JSON output.
    Run { config: PathBuf },
    /// Check a config without running it.
    Validate { config: PathBuf },
    /// Run the randomized property suite.
    Props {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Small sample sizes, for a fast smoke run.
        #[arg(long)]
        quick: bool,
        /// Also write the report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// List the built-in problems.
    ListProblems,
}

fn run(cli: Cli) -> formda::Result<ExitCode> {
    match cli.command {
        Command::Run { config } => {
            let cfg = harness::load_config(&config)?;
            let out = harness::run_experiment(&cfg)?;
            for r in &out.summary.runs {
                let last = &r.final_record;
                let gap = last.gap_true.map_or("-".to_string(), |g| format!("{g:.4e}"));
                println!(
                    "{:<16} seed {:<6} {:?} iter {:<7} gap_true {gap:<11} gap_surrogate {:.4e}",
                    r.solver, r.seed, r.stop_reason, last.iter, last.gap_surrogate
                );
            }
            println!("wrote {}", out.output_dir.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { config } => {
            let cfg = harness::load_config(&config)?;
            let report = harness::validate_config(&cfg);
            for w in &report.warnings {
                println!("warning: {w}");
            }
            for e in &report.errors {
                println!("error: {e}");
            }
            if report.passed() {
                println!("ok");
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::FAILURE)
            }
        }
        Command::Props { seed, quick, json } => {
            let opts = if quick { PropertyOptions::quick(seed) } else { PropertyOptions::with_seed(seed) };
            let report = harness::property_suite(&opts)?;
            for c in &report.checks {
                let mark = if c.passed { "pass" } else { "FAIL" };
                println!("{mark} {:<9} {}: {}", c.suite, c.name, c.detail);
            }
            println!("{:.1} s", report.elapsed_ms / 1e3);
            if let Some(path) = json {
                std::fs::write(path, serde_json::to_string_pretty(&report)?)?;
            }
            Ok(if report.passed() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::ListProblems => {
            for kind in ProblemKind::ALL {
                println!("{:<20} {}", kind.name(), kind.description());
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
