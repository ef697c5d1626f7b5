//! Experiment harness: TOML configs, multi-seed runs, CSV and JSON output,
//! and the property suite.

pub mod config;
pub mod output;
pub mod props;
pub mod transcript;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

pub use config::{
    load_config, validate_config, ExperimentConfig, InitialPoint, PresetSchedule, Problem, ProblemConfig, ProblemKind,
    ScheduleEntry, SchedulePreset, SolverEntry, ValidationReport,
};
pub use output::{aggregate, read_run_csv, write_aggregate_csv, write_run_csv, AggregateRow, Moments, RUN_COLUMNS};
pub use props::{property_suite, PropertyCheck, PropertyOptions, PropertyReport};

use crate::error::{Error, Result};
use crate::oracle::StochasticOracle;
use crate::schedules::ScheduleConfig;
use crate::solver::{run, Algorithm, RunOutcome, RunRecord, StopReason};

/// Environment variable with the number of worker threads (default 1).
pub const WORKERS_ENV: &str = "FORMDA_WORKERS";

pub fn worker_count() -> Result<usize> {
    match std::env::var(WORKERS_ENV) {
        Err(_) => Ok(1),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(Error::Config(format!("{WORKERS_ENV} must be a positive integer, got {v:?}"))),
        },
    }
}

pub fn run_csv_name(solver: &str, seed: u64) -> String {
    format!("{solver}_seed{seed}.csv")
}

pub fn aggregate_csv_name(solver: &str) -> String {
    format!("{solver}_aggregate.csv")
}

pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Clone, PartialEq)]
pub struct CompletedRun {
    pub solver: String,
    pub seed: u64,
    pub outcome: RunOutcome,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub solver: String,
    pub algorithm: Algorithm,
    pub seed: u64,
    pub csv: String,
    pub stop_reason: StopReason,
    pub failure: Option<String>,
    pub records: usize,
    pub grad_calls: u64,
    pub final_record: RunRecord,
    pub final_x: Vec<f64>,
    pub final_y: Vec<f64>,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentSummary {
    pub name: String,
    pub library_version: String,
    pub problem: String,
    pub lipschitz: f64,
    pub seeds: Vec<u64>,
    pub workers: usize,
    /// Schedules after presets were resolved.
    pub schedules: BTreeMap<String, ScheduleConfig>,
    pub warnings: Vec<String>,
    pub runs: Vec<RunSummary>,
    pub elapsed_ms: f64,
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub summary: ExperimentSummary,
    pub runs: Vec<CompletedRun>,
    pub output_dir: PathBuf,
}

fn run_all<O: StochasticOracle>(
    config: &ExperimentConfig,
    oracle: &O,
    workers: usize,
) -> Result<Vec<CompletedRun>> {
    let lipschitz = oracle.lipschitz();
    let jobs: Vec<(&SolverEntry, u64)> =
        config.solvers.iter().flat_map(|s| config.seeds.iter().map(move |seed| (s, *seed))).collect();
    let job = |&(entry, seed): &(&SolverEntry, u64)| -> Result<CompletedRun> {
        let spec = config.solver_spec(entry, lipschitz);
        let (x1, y1) = config.initial.resolve(oracle.x_set(), oracle.y_set(), seed)?;
        log::info!("running {} seed {seed}", entry.name);
        let outcome = run(&spec, oracle, &x1, &y1, seed)?;
        Ok(CompletedRun { solver: entry.name.clone(), seed, outcome })
    };
    if workers == 1 {
        return jobs.iter().map(job).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))?;
    // par_iter + collect keeps job order, so output does not depend on workers.
    pool.install(|| jobs.par_iter().map(job).collect())
}

fn write_outputs(dir: &Path, config: &ExperimentConfig, runs: &[CompletedRun]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for r in runs {
        let file = File::create(dir.join(run_csv_name(&r.solver, r.seed)))?;
        write_run_csv(BufWriter::new(file), &r.outcome.records)?;
    }
    for entry in &config.solvers {
        let mine: Vec<&[RunRecord]> =
            runs.iter().filter(|r| r.solver == entry.name).map(|r| r.outcome.records.as_slice()).collect();
        let file = File::create(dir.join(aggregate_csv_name(&entry.name)))?;
        write_aggregate_csv(BufWriter::new(file), &aggregate(&mine))?;
    }
    Ok(())
}

/// Runs every solver on every seed, then writes one CSV per run, one
/// aggregate CSV per solver and `summary.json` into `config.output_dir`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let start = Instant::now();
    let report = validate_config(config);
    if !report.passed() {
        return Err(Error::Config(report.errors.join("; ")));
    }
    for w in &report.warnings {
        log::warn!("{w}");
    }
    let workers = worker_count()?;
    let problem = config.problem.build()?;
    let runs = match &problem {
        Problem::Quadratic(o) => run_all(config, o, workers)?,
        Problem::Wgan(o) => run_all(config, o, workers)?,
        Problem::RobustMultidomain(o) => run_all(config, o, workers)?,
    };
    let lipschitz = problem.lipschitz();
    let dir = config.output_dir.clone();
    write_outputs(&dir, config, &runs)?;

    let summary = ExperimentSummary {
        name: config.name.clone(),
        library_version: env!("CARGO_PKG_VERSION").to_string(),
        problem: config.problem.kind.name().to_string(),
        lipschitz,
        seeds: config.seeds.clone(),
        workers,
        schedules: config.solvers.iter().map(|s| (s.name.clone(), s.schedule.resolve(lipschitz))).collect(),
        warnings: report.warnings,
        runs: runs
            .iter()
            .map(|r| {
                let entry = config.solvers.iter().find(|s| s.name == r.solver).expect("run of a configured solver");
                RunSummary {
                    solver: r.solver.clone(),
                    algorithm: entry.algorithm,
                    seed: r.seed,
                    csv: run_csv_name(&r.solver, r.seed),
                    stop_reason: r.outcome.stop_reason,
                    failure: r.outcome.failure.clone(),
                    records: r.outcome.records.len(),
                    grad_calls: r.outcome.grad_calls,
                    final_record: r.outcome.last().clone(),
                    final_x: r.outcome.final_iterate.x.clone(),
                    final_y: r.outcome.final_iterate.y.clone(),
                    elapsed_ms: r.outcome.elapsed_ms,
                }
            })
            .collect(),
        elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
        config: config.clone(),
    };
    let file = File::create(dir.join(SUMMARY_FILE))?;
    serde_json::to_writer_pretty(BufWriter::new(file), &summary)?;
    Ok(ExperimentOutput { summary, runs, output_dir: dir })
}
