//! Random-failure experiment: fly toward the primary destination, abort at a
//! random step, then divert to whichever destination is closest.

use backup_mpc::{InputVector, StateVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{FailureConfig, Problem};
use crate::error::{HarnessError, Result};
use crate::sim::{fly, StopRule};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arm {
    /// The backup-plan controller with every configured alternative.
    Proposed,
    /// Single-objective controller toward the primary destination only.
    Baseline,
}

impl Arm {
    pub fn name(self) -> &'static str {
        match self {
            Arm::Proposed => "proposed",
            Arm::Baseline => "baseline",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FailureRun {
    pub run: usize,
    pub seed: u64,
    pub failure_time: usize,
    /// Step at which the primary mission finished, if it did within the failure support.
    pub completion_time: Option<usize>,
    pub distance_at_failure: f64,
    pub destination: usize,
    pub energy_before_failure: f64,
    pub energy_after_failure: f64,
    pub total_energy: f64,
    pub remaining_energy: f64,
    /// Remaining energy over energy after failure; absent when nothing was spent after failure.
    pub margin: Option<f64>,
    pub post_failure_steps: usize,
    pub reached: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MeanStd {
    pub mean: f64,
    pub stdev: f64,
}

impl MeanStd {
    /// Sample mean and `n - 1` standard deviation.
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: f64::NAN, stdev: f64::NAN };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let stdev = if n < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Self { mean, stdev }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FailureSummary {
    pub arm: Arm,
    pub runs: usize,
    pub energy_budget: f64,
    pub failure_time: MeanStd,
    pub distance_at_failure: MeanStd,
    pub energy_before_failure: MeanStd,
    pub energy_after_failure: MeanStd,
    pub total_energy: MeanStd,
    /// Mean remaining energy at failure over mean energy after failure.
    pub margin: f64,
    pub reached: usize,
}

impl FailureSummary {
    pub fn from_runs(arm: Arm, energy_budget: f64, runs: &[FailureRun]) -> Self {
        let col = |f: fn(&FailureRun) -> f64| MeanStd::of(&runs.iter().map(f).collect::<Vec<_>>());
        let before = col(|r| r.energy_before_failure);
        let after = col(|r| r.energy_after_failure);
        Self {
            arm,
            runs: runs.len(),
            energy_budget,
            failure_time: col(|r| r.failure_time as f64),
            distance_at_failure: col(|r| r.distance_at_failure),
            energy_before_failure: before,
            energy_after_failure: after,
            total_energy: col(|r| r.total_energy),
            margin: (energy_budget - before.mean) / after.mean,
            reached: runs.iter().filter(|r| r.reached).count(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct FailureExperiment {
    pub arm: Arm,
    pub runs: Vec<FailureRun>,
    pub summary: FailureSummary,
}

/// Per-run generator shared by both arms.
fn run_rng(base_seed: u64, run: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(run as u64 + 1);
    rng
}

/// Solver seed of run `r`, shared by both arms.
pub fn run_seed(base_seed: u64, run: usize) -> u64 {
    run_rng(base_seed, run).random()
}

/// Failure step of run `r`: uniform over the support, redrawn until it falls
/// before `completion` (the step at which the primary mission finished, if it
/// did). Returns `None` when no step of the support qualifies.
pub fn draw_failure_time(base_seed: u64, run: usize, cfg: &FailureConfig, completion: Option<usize>) -> Option<usize> {
    let hi = match completion {
        Some(c) if c <= cfg.failure_time_min => return None,
        Some(c) => cfg.failure_time_max.min(c - 1),
        None => cfg.failure_time_max,
    };
    let mut rng = run_rng(base_seed, run);
    let _seed: u64 = rng.random();
    loop {
        let t = rng.random_range(cfg.failure_time_min..=cfg.failure_time_max);
        if t <= hi {
            return Some(t);
        }
    }
}

fn validate(cfg: &FailureConfig) -> Result<()> {
    if cfg.runs == 0 {
        return Err(HarnessError::Config("failure runs must be at least 1".into()));
    }
    if cfg.failure_time_min > cfg.failure_time_max {
        return Err(HarnessError::Config("failure time support is empty".into()));
    }
    if !(cfg.energy_budget.is_finite() && cfg.energy_budget > 0.0) {
        return Err(HarnessError::Config("energy budget must be positive".into()));
    }
    Ok(())
}

fn energy<'a>(inputs: impl Iterator<Item = &'a InputVector>) -> f64 {
    inputs.fold(0.0, |acc, u| acc + u.norm_squared())
}

/// One paired run. `problem` is the full problem; `arm` picks the controller flown before failure.
pub fn failure_run(problem: &Problem, cfg: &FailureConfig, arm: Arm, run: usize) -> Result<FailureRun> {
    let base_seed = problem.solver.base_seed;
    let seed = run_seed(base_seed, run);
    let mut pre = match arm {
        Arm::Proposed => problem.clone(),
        Arm::Baseline => problem.primary_only()?,
    }
    .with_seed(seed);
    if let Some(m) = cfg.samples {
        pre = pre.with_samples(m)?;
    }
    // Step k of a flight does not depend on how long the flight lasts, so one
    // flight over the whole support serves every failure time.
    let rule = StopRule {
        max_steps: cfg.failure_time_max,
        divergence_steps: problem.config.divergence_steps,
    };
    let flight = fly(&pre, &pre.controller()?, &problem.x0, rule)?;
    let completion = flight.converged.then_some(flight.records.len());
    let t = draw_failure_time(base_seed, run, cfg, completion).ok_or_else(|| {
        HarnessError::Config(format!(
            "run {run}: the primary mission completes before the earliest failure time {}",
            cfg.failure_time_min
        ))
    })?;
    let x_fail: StateVector = flight.states[t].clone();
    let (dest, dist) = problem.missions.nearest(&x_fail)?;

    let zero = InputVector::zeros(problem.model.input_dim());
    let post = pre
        .single_destination(problem.missions.destinations()[dest].clone(), zero)?
        .with_seed(seed ^ 0x9e37_79b9_7f4a_7c15);
    let after = fly(
        &post,
        &post.controller()?,
        &x_fail,
        StopRule {
            max_steps: cfg.post_failure_step_cap,
            divergence_steps: problem.config.divergence_steps,
        },
    )?;

    let e_before = energy(flight.inputs().take(t));
    let e_after = energy(after.inputs());
    let remaining = cfg.energy_budget - e_before;
    Ok(FailureRun {
        run,
        seed,
        failure_time: t,
        completion_time: completion,
        distance_at_failure: dist,
        destination: dest,
        energy_before_failure: e_before,
        energy_after_failure: e_after,
        total_energy: e_before + e_after,
        remaining_energy: remaining,
        margin: (e_after > 0.0).then(|| remaining / e_after),
        post_failure_steps: after.records.len(),
        reached: after.converged,
    })
}

/// All runs of one arm, in parallel; results are ordered by run index.
pub fn run_failure_experiment(problem: &Problem, arm: Arm) -> Result<FailureExperiment> {
    let cfg = problem
        .config
        .failure
        .clone()
        .ok_or_else(|| HarnessError::Config("config has no [failure] table".into()))?;
    validate(&cfg)?;
    let runs = (0..cfg.runs)
        .into_par_iter()
        .map(|r| failure_run(problem, &cfg, arm, r))
        .collect::<Result<Vec<_>>>()?;
    let summary = FailureSummary::from_runs(arm, cfg.energy_budget, &runs);
    Ok(FailureExperiment { arm, runs, summary })
}
