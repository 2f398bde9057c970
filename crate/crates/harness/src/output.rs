//! CSV and JSON writers. Column layouts here are the stable output schema.

use std::fs;
use std::path::{Path, PathBuf};

use backup_mpc::StepRecord;
use serde::Serialize;

use crate::bench::BenchCell;
use crate::error::{HarnessError, Result};
use crate::failure::{FailureExperiment, FailureSummary, MeanStd};

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| HarnessError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(HarnessError::from)
}

fn flush(w: &mut csv::Writer<fs::File>, path: &Path) -> Result<()> {
    w.flush().map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn num(v: f64) -> String {
    v.to_string()
}

fn indexed(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (0..n).map(move |j| format!("{prefix}{j}"))
}

pub fn trajectory_header(nx: usize, nu: usize, n_alpha: usize) -> Vec<String> {
    let mut h = vec!["step".to_string()];
    h.extend(indexed("x", nx));
    h.extend(indexed("u", nu));
    h.extend(indexed("alpha", n_alpha));
    h.extend(["value", "candidate_value", "phase", "in_ball_x", "in_ball_xkf"].map(String::from));
    h.extend(indexed("xkf", nx));
    h
}

pub fn write_trajectory(path: &Path, records: &[StepRecord]) -> Result<()> {
    let mut w = writer(path)?;
    let Some(first) = records.first() else {
        flush(&mut w, path)?;
        return Ok(());
    };
    w.write_record(trajectory_header(first.x.len(), first.u_star.len(), first.alpha_star.len()))?;
    for r in records {
        let mut row = vec![r.step.to_string()];
        row.extend(r.x.iter().copied().map(num));
        row.extend(r.u_star.iter().copied().map(num));
        row.extend(r.alpha_star.entries().iter().copied().map(num));
        row.push(num(r.value));
        row.push(num(r.candidate_value));
        row.push(r.phase.number().to_string());
        row.push(u8::from(r.in_ball_x).to_string());
        row.push(u8::from(r.in_ball_xkf).to_string());
        row.extend(r.x_kf.iter().copied().map(num));
        w.write_record(&row)?;
    }
    flush(&mut w, path)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub const FAILURE_RUN_COLUMNS: [&str; 14] = [
    "arm",
    "run",
    "seed",
    "failure_time",
    "completion_time",
    "distance_at_failure",
    "destination",
    "energy_before_failure",
    "energy_after_failure",
    "total_energy",
    "remaining_energy",
    "margin",
    "post_failure_steps",
    "reached",
];

pub fn write_failure_runs(path: &Path, experiments: &[FailureExperiment]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(FAILURE_RUN_COLUMNS)?;
    for e in experiments {
        for r in &e.runs {
            w.write_record([
                e.arm.name().to_string(),
                r.run.to_string(),
                r.seed.to_string(),
                r.failure_time.to_string(),
                r.completion_time.map(|c| c.to_string()).unwrap_or_default(),
                num(r.distance_at_failure),
                r.destination.to_string(),
                num(r.energy_before_failure),
                num(r.energy_after_failure),
                num(r.total_energy),
                num(r.remaining_energy),
                r.margin.map(num).unwrap_or_default(),
                r.post_failure_steps.to_string(),
                u8::from(r.reached).to_string(),
            ])?;
        }
    }
    flush(&mut w, path)
}

pub fn write_failure_summary(path: &Path, summaries: &[FailureSummary]) -> Result<()> {
    let mut w = writer(path)?;
    let stats = ["failure_time", "distance_at_failure", "energy_before_failure", "energy_after_failure", "total_energy"];
    let mut header = vec!["arm".to_string(), "runs".to_string(), "energy_budget".to_string()];
    for s in stats {
        header.push(format!("{s}_mean"));
        header.push(format!("{s}_stdev"));
    }
    header.extend(["margin", "reached"].map(String::from));
    w.write_record(&header)?;
    for s in summaries {
        let mut row = vec![s.arm.name().to_string(), s.runs.to_string(), num(s.energy_budget)];
        let cols: [MeanStd; 5] = [
            s.failure_time,
            s.distance_at_failure,
            s.energy_before_failure,
            s.energy_after_failure,
            s.total_energy,
        ];
        for c in cols {
            row.push(num(c.mean));
            row.push(num(c.stdev));
        }
        row.push(num(s.margin));
        row.push(s.reached.to_string());
        w.write_record(&row)?;
    }
    flush(&mut w, path)
}

/// Writes `bench.csv` (costs, reproducible) and `bench_timing.csv` (wall clock).
pub fn write_bench(dir: &Path, cells: &[BenchCell]) -> Result<(PathBuf, PathBuf)> {
    let cost_path = dir.join("bench.csv");
    let timing_path = dir.join("bench_timing.csv");
    let mut w = writer(&cost_path)?;
    for c in cells {
        w.serialize(&c.cost)?;
    }
    flush(&mut w, &cost_path)?;
    let mut w = writer(&timing_path)?;
    for c in cells {
        w.serialize(&c.timing)?;
    }
    flush(&mut w, &timing_path)?;
    Ok((cost_path, timing_path))
}
