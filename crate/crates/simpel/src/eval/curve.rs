//! Learning-curve experiment runner.
//!
//! The full (method × train size × seed) cross product runs on a worker
//! pool; rows are appended to the output CSV in canonical enumeration order
//! (the file is always a prefix of the finished table), so interrupted runs
//! resume by reusing completed rows and the final bytes are identical to an
//! uninterrupted run.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::{fit_method, make_dataset, nll, rmse, EvalError, ExperimentSpec, Method};
use crate::rng::{fnv1a64, stream};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunStatus {
    Ok,
    Failed,
}

impl RunStatus {
    fn as_str(self) -> &'static str {
        match self {
            RunStatus::Ok => "ok",
            RunStatus::Failed => "failed",
        }
    }
}

#[derive(Clone, Debug)]
pub struct MetricRow {
    pub task: String,
    pub method: Method,
    pub train_size: usize,
    pub seed: u64,
    pub nll: f64,
    pub rmse: f64,
    pub wall_time_s: f64,
    pub status: RunStatus,
}

pub const CSV_HEADER: &str = "task,method,train_size,seed,nll,rmse,wall_time_s,status";
const CSV_COMMENT: &str =
    "# nll in nats, averaged over test points and output dimensions; wall_time_s is 0 unless timing=real";

fn fmt_metric(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.6e}")
    } else {
        "nan".to_string()
    }
}

impl MetricRow {
    fn to_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{:.3},{}",
            self.task,
            self.method.id(),
            self.train_size,
            self.seed,
            fmt_metric(self.nll),
            fmt_metric(self.rmse),
            self.wall_time_s,
            self.status.as_str()
        )
    }

    fn parse_line(line: &str) -> Option<MetricRow> {
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 8 {
            return None;
        }
        let parse_f = |s: &str| -> f64 {
            if s == "nan" {
                f64::NAN
            } else {
                s.parse().unwrap_or(f64::NAN)
            }
        };
        Some(MetricRow {
            task: parts[0].to_string(),
            method: Method::parse(parts[1])?,
            train_size: parts[2].parse().ok()?,
            seed: parts[3].parse().ok()?,
            nll: parse_f(parts[4]),
            rmse: parse_f(parts[5]),
            wall_time_s: parts[6].parse().ok()?,
            status: match parts[7] {
                "ok" => RunStatus::Ok,
                "failed" => RunStatus::Failed,
                _ => return None,
            },
        })
    }
}

#[derive(Clone, Debug)]
pub struct CurveOptions {
    pub out_csv: PathBuf,
    pub summary_json: Option<PathBuf>,
    pub resume: bool,
    pub master_seed: u64,
    /// Report measured wall time instead of 0. Off by default so outputs
    /// are byte-identical across runs.
    pub real_timing: bool,
}

type CellKey = (&'static str, usize, u64);

fn compute_cell(
    spec: &ExperimentSpec,
    method: Method,
    train_size: usize,
    seed: u64,
    master_seed: u64,
    real_timing: bool,
) -> MetricRow {
    let task = spec.task();
    let started = Instant::now();
    let result = (|| -> Result<(f64, f64), EvalError> {
        let mut data_rng = stream(
            master_seed,
            &format!("data/{}/{}", task.id(), train_size),
            seed,
        );
        let (train, test) =
            make_dataset(&task, train_size, spec.test_size, task.noise_sigma, &mut data_rng)?;
        let mut fit_rng = stream(
            master_seed ^ fnv1a64(method.id().as_bytes()),
            &format!("fit/{}/{}", task.id(), train_size),
            seed,
        );
        let model = fit_method(&task, method, &spec.model, &train, &mut fit_rng)?;
        let prediction = model.predict(&test.x)?;
        Ok((nll(&prediction, &test.y)?, rmse(&prediction.mean, &test.y)?))
    })();
    let wall_time_s = if real_timing {
        started.elapsed().as_secs_f64()
    } else {
        0.0
    };
    match result {
        Ok((nll, rmse)) => MetricRow {
            task: task.id().to_string(),
            method,
            train_size,
            seed,
            nll,
            rmse,
            wall_time_s,
            status: RunStatus::Ok,
        },
        Err(_) => MetricRow {
            task: task.id().to_string(),
            method,
            train_size,
            seed,
            nll: f64::NAN,
            rmse: f64::NAN,
            wall_time_s,
            status: RunStatus::Failed,
        },
    }
}

fn read_existing(path: &Path) -> Result<HashMap<CellKey, String>, EvalError> {
    let mut map = HashMap::new();
    if !path.exists() {
        return Ok(map);
    }
    let text = fs::read_to_string(path)?;
    for line in text.lines() {
        if line.starts_with('#') || line == CSV_HEADER || line.trim().is_empty() {
            continue;
        }
        // A malformed trailing line (interrupted write) is recomputed.
        if let Some(row) = MetricRow::parse_line(line) {
            map.insert(
                (row.method.id(), row.train_size, row.seed),
                line.to_string(),
            );
        }
    }
    Ok(map)
}

/// Run the full cross product and return the table. Rows land in the CSV in
/// canonical (method, size, seed) order as chunks complete.
pub fn run_learning_curve(
    spec: &ExperimentSpec,
    options: &CurveOptions,
) -> Result<Vec<MetricRow>, EvalError> {
    spec.validate()?;
    let cells: Vec<(Method, usize, u64)> = spec
        .methods
        .iter()
        .flat_map(|&m| {
            spec.train_sizes.iter().flat_map(move |&s| {
                spec.seeds.iter().map(move |&seed| (m, s, seed))
            })
        })
        .collect();

    let existing = if options.resume {
        read_existing(&options.out_csv)?
    } else {
        HashMap::new()
    };

    if let Some(parent) = options.out_csv.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let mut file = fs::File::create(&options.out_csv)?;
    writeln!(file, "{CSV_COMMENT}")?;
    writeln!(file, "{CSV_HEADER}")?;

    let chunk = (rayon::current_num_threads() * 2).max(1);
    let mut rows = Vec::with_capacity(cells.len());
    for batch in cells.chunks(chunk) {
        let lines: Vec<String> = batch
            .par_iter()
            .map(|&(method, size, seed)| {
                if let Some(line) = existing.get(&(method.id(), size, seed)) {
                    line.clone()
                } else {
                    compute_cell(
                        spec,
                        method,
                        size,
                        seed,
                        options.master_seed,
                        options.real_timing,
                    )
                    .to_line()
                }
            })
            .collect();
        for line in lines {
            let row = MetricRow::parse_line(&line)
                .ok_or_else(|| EvalError::BadOutput(format!("unparseable row: {line}")))?;
            writeln!(file, "{line}")?;
            rows.push(row);
        }
        file.flush()?;
    }
    drop(file);

    if let Some(summary_path) = &options.summary_json {
        let summary = summarize(&rows);
        let json = serde_json::to_string_pretty(&summary)
            .map_err(|e| EvalError::BadOutput(e.to_string()))?;
        fs::write(summary_path, json + "\n")?;
    }
    Ok(rows)
}

#[derive(Clone, Debug, Serialize)]
pub struct SummaryCell {
    pub runs: usize,
    pub failed: usize,
    pub nll_median: Option<f64>,
    pub nll_iqr: Option<f64>,
    pub rmse_median: Option<f64>,
    pub rmse_iqr: Option<f64>,
}

pub type Summary = std::collections::BTreeMap<String, SummaryCell>;

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let w = pos - lo as f64;
    sorted[lo] * (1.0 - w) + sorted[hi] * w
}

/// Median and interquartile range per (task, method, train size), over
/// successful seeds.
pub fn summarize(rows: &[MetricRow]) -> Summary {
    let mut groups: std::collections::BTreeMap<String, Vec<&MetricRow>> =
        std::collections::BTreeMap::new();
    for row in rows {
        groups
            .entry(format!(
                "{}/{}/{:06}",
                row.task,
                row.method.id(),
                row.train_size
            ))
            .or_default()
            .push(row);
    }
    groups
        .into_iter()
        .map(|(key, rows)| {
            let ok: Vec<&&MetricRow> =
                rows.iter().filter(|r| r.status == RunStatus::Ok).collect();
            let stats = |select: &dyn Fn(&MetricRow) -> f64| -> (Option<f64>, Option<f64>) {
                if ok.is_empty() {
                    return (None, None);
                }
                let mut values: Vec<f64> = ok.iter().map(|r| select(r)).collect();
                values.sort_by(|a, b| a.partial_cmp(b).unwrap());
                (
                    Some(quantile(&values, 0.5)),
                    Some(quantile(&values, 0.75) - quantile(&values, 0.25)),
                )
            };
            let (nll_median, nll_iqr) = stats(&|r| r.nll);
            let (rmse_median, rmse_iqr) = stats(&|r| r.rmse);
            (
                key,
                SummaryCell {
                    runs: rows.len(),
                    failed: rows.len() - ok.len(),
                    nll_median,
                    nll_iqr,
                    rmse_median,
                    rmse_iqr,
                },
            )
        })
        .collect()
}

/// Median over seeds of the successful NLL values of one (method, size)
/// cell of a finished table.
pub fn median_nll(rows: &[MetricRow], method: Method, train_size: usize) -> Option<f64> {
    let mut values: Vec<f64> = rows
        .iter()
        .filter(|r| {
            r.method == method && r.train_size == train_size && r.status == RunStatus::Ok
        })
        .map(|r| r.nll)
        .collect();
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Some(quantile(&values, 0.5))
}
