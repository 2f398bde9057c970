//! The per-step controller: candidate shift, weight selection, ball checks,
//! the phase-2 latch and first-input extraction.

use serde::{Deserialize, Serialize};

use crate::certify::{alpha_baseline, alpha_transitional, StabilityParams, WeightVector};
use crate::error::{check_dim, Error, Result};
use crate::mission::VectorCost;
use crate::multihorizon::{primary_final_state, MultiHorizonInput};
use crate::plant::{InputVector, LinearFeedback, StateVector};
use crate::solver::Solver;

/// `V = αᵀJ`.
pub fn value(alpha: &WeightVector, j: &VectorCost) -> Result<f64> {
    alpha.dot(j)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    /// Multi-objective operation.
    One,
    /// Primary destination only, for the rest of the run.
    Two,
}

impl Phase {
    pub fn number(self) -> u8 {
        match self {
            Phase::One => 1,
            Phase::Two => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ControllerState {
    pub alpha_prev: WeightVector,
    pub u_prev: MultiHorizonInput,
    pub x_prev: StateVector,
    pub latched: bool,
    pub step_index: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub step: u64,
    pub x: StateVector,
    pub alpha_star: WeightVector,
    pub u_star: InputVector,
    /// `α_*ᵀ J(x, U_*)`.
    pub value: f64,
    /// `α_*ᵀ J(x, U_s)`.
    pub candidate_value: f64,
    /// `α_prevᵀ J(x, U_s)`.
    pub previous_weight_value: f64,
    pub phase: Phase,
    pub x_kf: StateVector,
    pub in_ball_x: bool,
    pub in_ball_xkf: bool,
    pub in_state_box: bool,
    /// Whether the solver ran a second time because `x_kf` entered the ball.
    pub resolved: bool,
}

#[derive(Clone, Debug)]
pub struct Controller {
    solver: Solver,
    params: StabilityParams,
    feedback: LinearFeedback,
    horizon: usize,
}

impl Controller {
    pub fn new(solver: Solver, params: StabilityParams, horizon: usize) -> Result<Self> {
        params.validate(solver.model(), solver.missions())?;
        if horizon == 0 || (solver.missions().alternatives() > 0 && horizon < 2) {
            return Err(Error::InvalidParameter(format!(
                "horizon {horizon} is too short for {} alternatives",
                solver.missions().alternatives()
            )));
        }
        let feedback = params.feedback(solver.missions())?;
        Ok(Self {
            solver,
            params,
            feedback,
            horizon,
        })
    }

    pub fn solver(&self) -> &Solver {
        &self.solver
    }

    pub fn params(&self) -> &StabilityParams {
        &self.params
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    fn alternatives(&self) -> usize {
        self.solver.missions().alternatives()
    }

    pub fn initialize(&self, x0: &StateVector) -> Result<ControllerState> {
        let model = self.solver.model();
        check_dim("initial state", model.state_dim(), x0.len())?;
        if !model.state_box().contains(x0)? {
            return Err(Error::StateOutOfBox(format!("initial state {:?}", x0.as_slice())));
        }
        let u_hat = model.input_box().clamp(&self.params.u_hat)?;
        let u_prev = MultiHorizonInput::filled(self.horizon, self.alternatives(), &u_hat)?;
        let latched = self.params.in_ball(self.solver.missions(), x0)?;
        let alpha_prev = if latched {
            WeightVector::primary_only(self.alternatives())
        } else {
            alpha_baseline(&self.params, self.solver.missions(), x0)?
        };
        Ok(ControllerState {
            alpha_prev,
            u_prev,
            x_prev: x0.clone(),
            latched,
            step_index: 0,
        })
    }

    fn vector_cost(&self, x: &StateVector, u: &MultiHorizonInput) -> Result<VectorCost> {
        self.solver
            .cost()
            .vector_cost(self.solver.model(), self.solver.missions(), x, u)
    }

    /// One control step at state `x_k`.
    pub fn step(&self, state: &ControllerState, x_k: &StateVector) -> Result<(InputVector, ControllerState, StepRecord)> {
        let model = self.solver.model();
        let missions = self.solver.missions();
        check_dim("state", model.state_dim(), x_k.len())?;
        let k = state.step_index;
        let e0 = WeightVector::primary_only(self.alternatives());

        let u_s = state.u_prev.shift(model, &state.x_prev, &self.feedback, &self.params.u_hat)?;
        let j_s = self.vector_cost(x_k, &u_s)?;
        let in_ball_x = self.params.in_ball(missions, x_k)?;

        let mut resolved = false;
        let (alpha_star, u_star) = if state.latched || state.alpha_prev.is_primary_only() || in_ball_x {
            let u = self.solver.solve(x_k, &e0, &u_s, 2 * k)?;
            (e0.clone(), u)
        } else {
            let alpha_b = alpha_baseline(&self.params, missions, x_k)?;
            let alpha_t = alpha_transitional(&alpha_b, &state.alpha_prev, &j_s)?;
            let u_t = self.solver.solve(x_k, &alpha_t, &u_s, 2 * k)?;
            let x_kf = primary_final_state(model, x_k, &u_t)?;
            if self.params.in_ball(missions, &x_kf)? {
                resolved = true;
                (e0.clone(), self.solver.solve(x_k, &e0, &u_s, 2 * k + 1)?)
            } else {
                (alpha_t, u_t)
            }
        };

        let x_kf = primary_final_state(model, x_k, &u_star)?;
        let in_ball_xkf = self.params.in_ball(missions, &x_kf)?;
        let latched = alpha_star.is_primary_only();
        let j_star = self.vector_cost(x_k, &u_star)?;
        let record = StepRecord {
            step: k,
            x: x_k.clone(),
            alpha_star: alpha_star.clone(),
            u_star: InputVector::from_column_slice(u_star.primary(0)),
            value: value(&alpha_star, &j_star)?,
            candidate_value: value(&alpha_star, &j_s)?,
            previous_weight_value: value(&state.alpha_prev, &j_s)?,
            phase: if latched { Phase::Two } else { Phase::One },
            x_kf,
            in_ball_x,
            in_ball_xkf,
            in_state_box: model.state_box().contains(x_k)?,
            resolved,
        };
        if !record.value.is_finite() || record.u_star.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("controller step"));
        }
        let next = ControllerState {
            alpha_prev: alpha_star,
            u_prev: u_star,
            x_prev: x_k.clone(),
            latched,
            step_index: k + 1,
        };
        Ok((record.u_star.clone(), next, record))
    }
}
