//! Closed-loop flights.

use backup_mpc::{Controller, ControllerState, InputVector, StateVector, StepRecord};

use crate::config::Problem;
use crate::error::{HarnessError, Result};

/// When a flight stops.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StopRule {
    /// Hard cap on controller steps.
    pub max_steps: usize,
    /// Consecutive out-of-box states tolerated before giving up.
    pub divergence_steps: usize,
}

#[derive(Clone, Debug)]
pub struct Flight {
    pub records: Vec<StepRecord>,
    /// Visited states, `x_0 .. x_K`, one more than `records`.
    pub states: Vec<StateVector>,
    pub converged: bool,
    pub state: ControllerState,
}

impl Flight {
    pub fn final_state(&self) -> &StateVector {
        self.states.last().expect("a flight holds its initial state")
    }

    pub fn inputs(&self) -> impl Iterator<Item = &InputVector> {
        self.records.iter().map(|r| &r.u_star)
    }

    /// `Σ ‖u_k‖²` over the executed inputs.
    pub fn energy(&self) -> f64 {
        self.inputs().map(|u| u.norm_squared()).sum()
    }

    /// Share of steps whose solution scored no worse than the shifted candidate.
    pub fn dominance_fraction(&self) -> f64 {
        if self.records.is_empty() {
            return 1.0;
        }
        let ok = self.records.iter().filter(|r| r.value <= r.candidate_value).count();
        ok as f64 / self.records.len() as f64
    }
}

/// Flies `controller` from `x0` until the primary destination of `problem`
/// is reached or the stop rule ends the run.
pub fn fly(problem: &Problem, controller: &Controller, x0: &StateVector, rule: StopRule) -> Result<Flight> {
    let state = controller.initialize(x0)?;
    fly_from(problem, controller, state, x0, rule)
}

/// Like [`fly`] but resumes from an existing controller state.
pub fn fly_from(
    problem: &Problem,
    controller: &Controller,
    mut state: ControllerState,
    x0: &StateVector,
    rule: StopRule,
) -> Result<Flight> {
    let model = &problem.model;
    let mut x = x0.clone();
    let mut records = Vec::new();
    let mut states = vec![x.clone()];
    let mut outside = 0;
    let mut converged = problem.missions.mission_completed(0, &x)?;
    while !converged && records.len() < rule.max_steps {
        let (u, next, record) = controller.step(&state, &x)?;
        x = model.step(&x, &u)?;
        state = next;
        records.push(record);
        states.push(x.clone());
        if model.state_box().contains(&x)? {
            outside = 0;
        } else {
            outside += 1;
            if outside > rule.divergence_steps {
                return Err(HarnessError::Diverged { steps: outside });
            }
        }
        converged = problem.missions.mission_completed(0, &x)?;
    }
    Ok(Flight {
        records,
        states,
        converged,
        state,
    })
}

/// Closed-loop run of the configured controller from the configured `x0`.
pub fn run_closed_loop(problem: &Problem) -> Result<Flight> {
    let controller = problem.controller()?;
    fly(problem, &controller, &problem.x0, problem.stop_rule())
}

/// Mean over visited states of the distance to the closest alternative destination.
pub fn mean_alternative_distance(problem: &Problem, states: &[StateVector]) -> Result<f64> {
    let alternatives = &problem.missions.destinations()[1..];
    if alternatives.is_empty() || states.is_empty() {
        return Err(HarnessError::Config("no alternative destinations to measure against".into()));
    }
    let mut total = 0.0;
    for x in states {
        total += alternatives.iter().map(|p| (x - p).norm()).fold(f64::INFINITY, f64::min);
    }
    Ok(total / states.len() as f64)
}

impl Problem {
    pub fn stop_rule(&self) -> StopRule {
        StopRule {
            max_steps: self.config.max_steps,
            divergence_steps: self.config.divergence_steps,
        }
    }
}
