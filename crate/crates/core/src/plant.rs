//! Discrete-time plant models, box constraint sets and rollouts.
//!
//! A [`PlantModel`] pairs a step map `x_{k+1} = f(x_k, u_k)` with an
//! axis-aligned state box and input box. Stepping never clamps; constraint
//! handling is left to the caller.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};

pub type StateVector = DVector<f64>;
pub type InputVector = DVector<f64>;

/// Closed axis-aligned box `{v : lower <= v <= upper}` with finite bounds.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxSet {
    lower: DVector<f64>,
    upper: DVector<f64>,
}

impl BoxSet {
    pub fn new(lower: DVector<f64>, upper: DVector<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::InvalidBox(format!(
                "lower has {} entries, upper has {}",
                lower.len(),
                upper.len()
            )));
        }
        if lower.is_empty() {
            return Err(Error::InvalidBox("zero-dimensional box".into()));
        }
        for (j, (lo, hi)) in lower.iter().zip(upper.iter()).enumerate() {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(Error::InvalidBox(format!("bound {j} is not finite")));
            }
            if lo > hi {
                return Err(Error::InvalidBox(format!("lower[{j}] = {lo} > upper[{j}] = {hi}")));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn from_slices(lower: &[f64], upper: &[f64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(lower), DVector::from_column_slice(upper))
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &DVector<f64> {
        &self.lower
    }

    pub fn upper(&self) -> &DVector<f64> {
        &self.upper
    }

    pub fn contains(&self, v: &DVector<f64>) -> Result<bool> {
        check_dim("box membership", self.dim(), v.len())?;
        Ok(self.contains_slice(v.as_slice()))
    }

    pub fn clamp(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("box clamp", self.dim(), v.len())?;
        let mut out = v.clone();
        self.clamp_slice(out.as_mut_slice());
        Ok(out)
    }

    pub(crate) fn contains_slice(&self, v: &[f64]) -> bool {
        v.iter()
            .zip(self.lower.iter().zip(self.upper.iter()))
            .all(|(x, (lo, hi))| *lo <= *x && *x <= *hi)
    }

    pub(crate) fn clamp_slice(&self, v: &mut [f64]) {
        debug_assert_eq!(v.len(), self.dim());
        for (x, (lo, hi)) in v.iter_mut().zip(self.lower.iter().zip(self.upper.iter())) {
            *x = x.clamp(*lo, *hi);
        }
    }

    /// Sum of componentwise distances outside the box (zero inside).
    pub fn violation(&self, v: &[f64]) -> f64 {
        v.iter()
            .zip(self.lower.iter().zip(self.upper.iter()))
            .map(|(x, (lo, hi))| (lo - x).max(0.0) + (x - hi).max(0.0))
            .sum()
    }
}

/// A discrete-time step map. Implementations must be pure.
pub trait Dynamics: Send + Sync + fmt::Debug {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    /// Writes `f(x, u)` into `next`. Slices have the model's dimensions.
    fn step_into(&self, x: &[f64], u: &[f64], next: &mut [f64]);
}

/// `f(x, u) = A x + B u`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearDynamics {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    // row-major copies for the rollout hot path
    a_rows: Vec<f64>,
    b_rows: Vec<f64>,
}

impl LinearDynamics {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::InvalidParameter(format!(
                "A must be square, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        check_dim("B rows", a.nrows(), b.nrows())?;
        if b.ncols() == 0 {
            return Err(Error::InvalidParameter("B has no columns".into()));
        }
        let a_rows = a.transpose().as_slice().to_vec();
        let b_rows = b.transpose().as_slice().to_vec();
        Ok(Self {
            a,
            b,
            a_rows,
            b_rows,
        })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
}

impl Dynamics for LinearDynamics {
    fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    #[inline]
    fn step_into(&self, x: &[f64], u: &[f64], next: &mut [f64]) {
        let nx = x.len();
        let nu = u.len();
        for (r, out) in next.iter_mut().enumerate() {
            let arow = &self.a_rows[r * nx..(r + 1) * nx];
            let brow = &self.b_rows[r * nu..(r + 1) * nu];
            let mut acc = 0.0;
            for (a, xv) in arow.iter().zip(x) {
                acc += a * xv;
            }
            for (b, uv) in brow.iter().zip(u) {
                acc += b * uv;
            }
            *out = acc;
        }
    }
}

/// Dynamics together with the state and input constraint boxes.
#[derive(Clone, Debug)]
pub struct PlantModel {
    dynamics: Arc<dyn Dynamics>,
    state_box: BoxSet,
    input_box: BoxSet,
}

impl PlantModel {
    pub fn new(dynamics: Arc<dyn Dynamics>, state_box: BoxSet, input_box: BoxSet) -> Result<Self> {
        check_dim("state box", dynamics.state_dim(), state_box.dim())?;
        check_dim("input box", dynamics.input_dim(), input_box.dim())?;
        Ok(Self {
            dynamics,
            state_box,
            input_box,
        })
    }

    pub fn linear(a: DMatrix<f64>, b: DMatrix<f64>, state_box: BoxSet, input_box: BoxSet) -> Result<Self> {
        Self::new(Arc::new(LinearDynamics::new(a, b)?), state_box, input_box)
    }

    pub fn state_dim(&self) -> usize {
        self.dynamics.state_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.dynamics.input_dim()
    }

    pub fn state_box(&self) -> &BoxSet {
        &self.state_box
    }

    pub fn input_box(&self) -> &BoxSet {
        &self.input_box
    }

    pub fn dynamics(&self) -> &dyn Dynamics {
        self.dynamics.as_ref()
    }

    pub fn step(&self, x: &StateVector, u: &InputVector) -> Result<StateVector> {
        check_dim("state", self.state_dim(), x.len())?;
        check_dim("input", self.input_dim(), u.len())?;
        let mut next = DVector::zeros(self.state_dim());
        self.step_slice(x.as_slice(), u.as_slice(), next.as_mut_slice());
        Ok(next)
    }

    /// Returns `[x0, f(x0, u0), ...]`, one more state than inputs.
    pub fn rollout(&self, x0: &StateVector, inputs: &[InputVector]) -> Result<Vec<StateVector>> {
        check_dim("state", self.state_dim(), x0.len())?;
        let mut states = Vec::with_capacity(inputs.len() + 1);
        states.push(x0.clone());
        for u in inputs {
            let next = self.step(states.last().expect("non-empty"), u)?;
            states.push(next);
        }
        Ok(states)
    }

    #[inline]
    pub(crate) fn step_slice(&self, x: &[f64], u: &[f64], next: &mut [f64]) {
        self.dynamics.step_into(x, u, next);
    }
}

/// Linear state feedback `u = K (x - origin)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearFeedback {
    gain: DMatrix<f64>,
    origin: StateVector,
}

impl LinearFeedback {
    pub fn new(gain: DMatrix<f64>, origin: StateVector) -> Result<Self> {
        check_dim("feedback gain columns", origin.len(), gain.ncols())?;
        Ok(Self { gain, origin })
    }

    pub fn gain(&self) -> &DMatrix<f64> {
        &self.gain
    }

    pub fn origin(&self) -> &StateVector {
        &self.origin
    }

    pub fn apply(&self, x: &StateVector) -> Result<InputVector> {
        check_dim("feedback state", self.origin.len(), x.len())?;
        Ok(&self.gain * (x - &self.origin))
    }

    pub(crate) fn apply_slice(&self, x: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            *o = (0..x.len()).map(|c| self.gain[(r, c)] * (x[c] - self.origin[c])).sum();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    pub(crate) fn double_integrator() -> PlantModel {
        #[rustfmt::skip]
        let a = DMatrix::from_row_slice(4, 4, &[
            1.0, 0.0, 0.1, 0.0,
            0.0, 1.0, 0.0, 0.1,
            0.0, 0.0, 1.0, 0.0,
            0.0, 0.0, 0.0, 1.0,
        ]);
        #[rustfmt::skip]
        let b = DMatrix::from_row_slice(4, 2, &[
            0.0, 0.0,
            0.0, 0.0,
            1.0, 0.0,
            0.0, 1.0,
        ]);
        let xs = BoxSet::from_slices(&[-2.0, -2.0, -10.0, -10.0], &[10.0, 10.0, 2.0, 2.0]).unwrap();
        let us = BoxSet::from_slices(&[-10.0, -10.0], &[2.0, 2.0]).unwrap();
        PlantModel::linear(a, b, xs, us).unwrap()
    }

    fn single_integrator() -> PlantModel {
        let xs = BoxSet::from_slices(&[-2.0, -2.0], &[10.0, 10.0]).unwrap();
        let us = BoxSet::from_slices(&[-10.0, -10.0], &[2.0, 2.0]).unwrap();
        PlantModel::linear(DMatrix::identity(2, 2), DMatrix::identity(2, 2), xs, us).unwrap()
    }

    #[test]
    fn double_integrator_steps() {
        let m = double_integrator();
        let x = m.step(&dvector![5.0, 9.0, 0.0, 0.0], &dvector![0.0, 0.0]).unwrap();
        assert_eq!(x, dvector![5.0, 9.0, 0.0, 0.0]);
        let x = m.step(&dvector![0.0, 0.0, 1.0, 1.0], &dvector![0.0, 0.0]).unwrap();
        assert_eq!(x, dvector![0.1, 0.1, 1.0, 1.0]);
    }

    #[test]
    fn single_integrator_step_and_rollout() {
        let m = single_integrator();
        assert_eq!(m.step(&dvector![5.0, 9.0], &dvector![-1.0, -2.0]).unwrap(), dvector![4.0, 7.0]);
        let x0 = dvector![5.0, 9.0];
        assert_eq!(m.rollout(&x0, &[]).unwrap(), vec![x0.clone()]);
        let u = dvector![-1.0, -1.0];
        let traj = m.rollout(&x0, &[u.clone(), u]).unwrap();
        assert_eq!(traj, vec![dvector![5.0, 9.0], dvector![4.0, 8.0], dvector![3.0, 7.0]]);
    }

    #[test]
    fn dimension_errors() {
        let m = single_integrator();
        assert!(matches!(
            m.step(&dvector![1.0], &dvector![0.0, 0.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(m.rollout(&dvector![0.0, 0.0], &[dvector![1.0, 2.0, 3.0]]).is_err());
        assert!(m.state_box().clamp(&dvector![1.0]).is_err());
        assert!(m.state_box().contains(&dvector![1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn box_clamp_and_contains() {
        let m = double_integrator();
        assert_eq!(m.input_box().clamp(&dvector![5.0, -20.0]).unwrap(), dvector![2.0, -10.0]);
        assert_eq!(m.input_box().clamp(&dvector![0.5, -3.0]).unwrap(), dvector![0.5, -3.0]);
        assert!(!m.state_box().contains(&dvector![11.0, 0.0, 0.0, 0.0]).unwrap());
        assert!(m.state_box().contains(&dvector![10.0, -2.0, 2.0, -10.0]).unwrap());
        assert_eq!(m.state_box().violation(&[11.0, -3.0, 0.0, 0.0]), 2.0);
    }

    #[test]
    fn invalid_boxes_rejected() {
        assert!(BoxSet::from_slices(&[1.0], &[0.0]).is_err());
        assert!(BoxSet::from_slices(&[0.0, 0.0], &[1.0]).is_err());
        assert!(BoxSet::from_slices(&[f64::NEG_INFINITY], &[1.0]).is_err());
    }
}
