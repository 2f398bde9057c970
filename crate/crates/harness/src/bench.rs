//! Solve-time and cost sweep over horizon and sample count.

use std::time::Instant;

use serde::Serialize;

use crate::config::Problem;
use crate::error::{HarnessError, Result};
use crate::failure::MeanStd;

/// Deterministic part of a bench cell.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchCost {
    pub horizon: usize,
    pub samples: usize,
    pub repeats: usize,
    pub mean_cost: f64,
    pub stdev_cost: f64,
}

/// Wall-clock part of a bench cell; varies between runs.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchTiming {
    pub horizon: usize,
    pub samples: usize,
    pub mean_seconds: f64,
    pub frequency_hz: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchCell {
    pub cost: BenchCost,
    pub timing: BenchTiming,
}

/// First-step solves at `x0`, repeated with distinct sample streams.
pub fn bench_cell(problem: &Problem, horizon: usize, samples: usize, repeats: usize) -> Result<BenchCell> {
    if repeats == 0 {
        return Err(HarnessError::Config("bench repeats must be at least 1".into()));
    }
    let p = problem.clone().with_horizon(horizon)?.with_samples(samples)?;
    let controller = p.controller()?;
    let init = controller.initialize(&p.x0)?;
    let mut values = Vec::with_capacity(repeats);
    let mut elapsed = 0.0;
    for r in 0..repeats {
        let mut state = init.clone();
        state.step_index = r as u64;
        let start = Instant::now();
        let (_, _, record) = controller.step(&state, &p.x0)?;
        elapsed += start.elapsed().as_secs_f64();
        values.push(record.value);
    }
    let stats = MeanStd::of(&values);
    let mean_seconds = elapsed / repeats as f64;
    Ok(BenchCell {
        cost: BenchCost {
            horizon,
            samples,
            repeats,
            mean_cost: stats.mean,
            stdev_cost: stats.stdev,
        },
        timing: BenchTiming {
            horizon,
            samples,
            mean_seconds,
            frequency_hz: 1.0 / mean_seconds,
        },
    })
}

/// Every `(N, M)` pair, horizons outermost.
pub fn bench(problem: &Problem, horizons: &[usize], samples: &[usize], repeats: usize) -> Result<Vec<BenchCell>> {
    if horizons.is_empty() || samples.is_empty() {
        return Err(HarnessError::Config("bench needs at least one horizon and one sample count".into()));
    }
    let mut out = Vec::with_capacity(horizons.len() * samples.len());
    for &n in horizons {
        for &m in samples {
            out.push(bench_cell(problem, n, m, repeats)?);
        }
    }
    Ok(out)
}
