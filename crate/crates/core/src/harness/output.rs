use std::collections::BTreeMap;
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::solver::RunRecord;

pub const RUN_COLUMNS: [&str; 10] = [
    "iter",
    "gap_true",
    "gap_regularized",
    "gap_surrogate",
    "rho",
    "estimator_err_x",
    "estimator_err_y",
    "dist_to_target",
    "grad_calls",
    "wall_ms",
];

/// Columns aggregated across runs (everything but `iter`).
const METRICS: [&str; 9] = [
    "gap_true",
    "gap_regularized",
    "gap_surrogate",
    "rho",
    "estimator_err_x",
    "estimator_err_y",
    "dist_to_target",
    "grad_calls",
    "wall_ms",
];

/// 17 significant digits, which round-trips every finite `f64`.
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

fn format_opt(v: Option<f64>) -> String {
    v.map(format_value).unwrap_or_default()
}

fn metric_values(r: &RunRecord) -> [Option<f64>; 9] {
    [
        r.gap_true,
        r.gap_regularized,
        Some(r.gap_surrogate),
        Some(r.rho),
        r.estimator_err_x,
        r.estimator_err_y,
        r.dist_to_target,
        Some(r.grad_calls as f64),
        r.wall_ms,
    ]
}

pub fn write_run_csv<W: Write>(out: W, records: &[RunRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RUN_COLUMNS)?;
    for r in records {
        w.write_record([
            r.iter.to_string(),
            format_opt(r.gap_true),
            format_opt(r.gap_regularized),
            format_value(r.gap_surrogate),
            format_value(r.rho),
            format_opt(r.estimator_err_x),
            format_opt(r.estimator_err_y),
            format_opt(r.dist_to_target),
            r.grad_calls.to_string(),
            format_opt(r.wall_ms),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn parse_f64(field: &str) -> Result<f64> {
    field.parse().map_err(|e| Error::invalid(format!("bad number {field:?}: {e}")))
}

fn parse_opt(field: &str) -> Result<Option<f64>> {
    if field.is_empty() {
        Ok(None)
    } else {
        parse_f64(field).map(Some)
    }
}

pub fn read_run_csv<R: Read>(input: R) -> Result<Vec<RunRecord>> {
    let mut reader = csv::Reader::from_reader(input);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    if header != RUN_COLUMNS {
        return Err(Error::invalid(format!("unexpected run CSV header {header:?}")));
    }
    reader
        .records()
        .map(|row| {
            let row = row?;
            let f = |i: usize| row.get(i).unwrap_or("");
            Ok(RunRecord {
                iter: f(0).parse().map_err(|e| Error::invalid(format!("bad iter: {e}")))?,
                gap_true: parse_opt(f(1))?,
                gap_regularized: parse_opt(f(2))?,
                gap_surrogate: parse_f64(f(3))?,
                rho: parse_f64(f(4))?,
                estimator_err_x: parse_opt(f(5))?,
                estimator_err_y: parse_opt(f(6))?,
                dist_to_target: parse_opt(f(7))?,
                grad_calls: f(8).parse().map_err(|e| Error::invalid(format!("bad grad_calls: {e}")))?,
                wall_ms: parse_opt(f(9))?,
            })
        })
        .collect()
}

/// Mean and standard deviation of one metric at one checkpoint, over the
/// runs that report it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mean: f64,
    /// Sample standard deviation (`n - 1` denominator); 0 for a single run.
    pub std: f64,
}

pub fn moments(values: &[f64]) -> Option<Moments> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    Some(Moments { mean, std })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub iter: u64,
    /// Runs with a record at this iteration.
    pub n_runs: usize,
    pub metrics: [Option<Moments>; 9],
}

/// Aligns runs by iteration and summarizes every metric.
pub fn aggregate(runs: &[&[RunRecord]]) -> Vec<AggregateRow> {
    let mut by_iter: BTreeMap<u64, Vec<&RunRecord>> = BTreeMap::new();
    for run in runs {
        for r in run.iter() {
            by_iter.entry(r.iter).or_default().push(r);
        }
    }
    by_iter
        .into_iter()
        .map(|(iter, recs)| {
            let values: Vec<[Option<f64>; 9]> = recs.iter().map(|r| metric_values(r)).collect();
            let metrics = std::array::from_fn(|m| {
                let col: Vec<f64> = values.iter().filter_map(|v| v[m]).collect();
                moments(&col)
            });
            AggregateRow { iter, n_runs: recs.len(), metrics }
        })
        .collect()
}

pub fn aggregate_header() -> Vec<String> {
    let mut h = vec!["iter".to_string(), "n_runs".to_string()];
    for m in METRICS {
        h.push(format!("{m}_mean"));
        h.push(format!("{m}_std"));
    }
    h
}

pub fn write_aggregate_csv<W: Write>(out: W, rows: &[AggregateRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(aggregate_header())?;
    for row in rows {
        let mut fields = vec![row.iter.to_string(), row.n_runs.to_string()];
        for m in &row.metrics {
            fields.push(format_opt(m.map(|m| m.mean)));
            fields.push(format_opt(m.map(|m| m.std)));
        }
        w.write_record(fields)?;
    }
    w.flush()?;
    Ok(())
}
