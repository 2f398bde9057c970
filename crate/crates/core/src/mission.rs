//! Destinations, the quadratic cost family and the averaged vector cost.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::multihorizon::{rollout_all, MultiHorizonInput, MultiHorizonTrajectory};
use crate::plant::{InputVector, PlantModel, StateVector};

/// Euclidean distance between a state and a destination.
pub fn distance(x: &StateVector, p: &StateVector) -> Result<f64> {
    check_dim("distance", p.len(), x.len())?;
    Ok((x - p).norm())
}

/// Primary destination `p⁰` followed by the alternatives `p¹ .. pᵐ`.
#[derive(Clone, Debug, PartialEq)]
pub struct MissionSet {
    destinations: Vec<StateVector>,
    completion_tol: f64,
}

impl MissionSet {
    pub fn new(destinations: Vec<StateVector>, completion_tol: f64) -> Result<Self> {
        let first = destinations
            .first()
            .ok_or_else(|| Error::InvalidParameter("at least one destination is required".into()))?;
        for p in &destinations {
            check_dim("destination", first.len(), p.len())?;
        }
        if !(completion_tol >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "completion tolerance must be nonnegative, got {completion_tol}"
            )));
        }
        Ok(Self {
            destinations,
            completion_tol,
        })
    }

    /// Rejects destinations outside the model's state box.
    pub fn check_within(&self, model: &PlantModel) -> Result<()> {
        for (i, p) in self.destinations.iter().enumerate() {
            if !model.state_box().contains(p)? {
                return Err(Error::InvalidParameter(format!("destination {i} lies outside the state box")));
            }
        }
        Ok(())
    }

    pub fn primary(&self) -> &StateVector {
        &self.destinations[0]
    }

    /// Number of alternative destinations `m`.
    pub fn alternatives(&self) -> usize {
        self.destinations.len() - 1
    }

    pub fn destinations(&self) -> &[StateVector] {
        &self.destinations
    }

    pub fn destination(&self, i: usize) -> Result<&StateVector> {
        self.destinations.get(i).ok_or_else(|| Error::IndexOutOfRange {
            what: "destination",
            index: i,
            valid: format!("0..={}", self.alternatives()),
        })
    }

    pub fn completion_tol(&self) -> f64 {
        self.completion_tol
    }

    pub fn state_dim(&self) -> usize {
        self.destinations[0].len()
    }

    /// `‖x - p⁰‖`, the norm used for every origin-centered quantity.
    pub fn distance_to_primary(&self, x: &StateVector) -> Result<f64> {
        distance(x, self.primary())
    }

    pub fn mission_completed(&self, i: usize, x: &StateVector) -> Result<bool> {
        let p = self.destination(i)?;
        Ok(distance(x, p)? <= self.completion_tol)
    }

    /// Index and distance of the destination closest to `x` (ties pick the lowest index).
    pub fn nearest(&self, x: &StateVector) -> Result<(usize, f64)> {
        let mut best = (0, f64::INFINITY);
        for (i, p) in self.destinations.iter().enumerate() {
            let d = distance(x, p)?;
            if d < best.1 {
                best = (i, d);
            }
        }
        Ok(best)
    }
}

/// Which state the running cost pairs with input `k` of a branch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CostPairing {
    /// Term `k` uses the state reached after the first `k` inputs with input `k`.
    #[default]
    AfterInput,
    /// Term `k` uses the state before input `k` is applied.
    BeforeInput,
}

/// Quadratic form `vᵀ W v`, with a diagonal fast path.
#[derive(Clone, Debug, PartialEq)]
struct QuadForm {
    dim: usize,
    dense: Vec<f64>,
    diag: Option<Vec<f64>>,
}

impl QuadForm {
    fn new(w: &DMatrix<f64>) -> Self {
        let dim = w.nrows();
        let is_diag = (0..dim).all(|r| (0..dim).all(|c| r == c || w[(r, c)] == 0.0));
        Self {
            dim,
            dense: w.transpose().as_slice().to_vec(),
            diag: is_diag.then(|| w.diagonal().as_slice().to_vec()),
        }
    }

    /// `(a - b)ᵀ W (a - b)`; pass an all-zero `b` for `aᵀ W a`.
    #[inline]
    fn eval_diff(&self, a: &[f64], b: &[f64]) -> f64 {
        match &self.diag {
            Some(d) => d
                .iter()
                .zip(a.iter().zip(b))
                .map(|(w, (x, y))| {
                    let e = x - y;
                    w * e * e
                })
                .sum(),
            None => {
                let mut acc = 0.0;
                for r in 0..self.dim {
                    let er = a[r] - b[r];
                    let row = &self.dense[r * self.dim..(r + 1) * self.dim];
                    let mut inner = 0.0;
                    for c in 0..self.dim {
                        inner += row[c] * (a[c] - b[c]);
                    }
                    acc += er * inner;
                }
                acc
            }
        }
    }

    #[inline]
    fn eval(&self, a: &[f64]) -> f64 {
        match &self.diag {
            Some(d) => d.iter().zip(a).map(|(w, x)| w * x * x).sum(),
            None => {
                let mut acc = 0.0;
                for r in 0..self.dim {
                    let row = &self.dense[r * self.dim..(r + 1) * self.dim];
                    acc += a[r] * row.iter().zip(a).map(|(w, x)| w * x).sum::<f64>();
                }
                acc
            }
        }
    }
}

fn check_psd(name: &str, m: &DMatrix<f64>, strictly: bool) -> Result<f64> {
    if !m.is_square() {
        return Err(Error::InvalidParameter(format!("{name} must be square")));
    }
    let scale = m.amax().max(1.0);
    if (m - m.transpose()).amax() > 1e-12 * scale {
        return Err(Error::InvalidParameter(format!("{name} must be symmetric")));
    }
    let min_eig = SymmetricEigen::new(m.clone()).eigenvalues.min();
    if min_eig < -1e-12 * scale || (strictly && min_eig <= 0.0) {
        let kind = if strictly { "positive definite" } else { "positive semidefinite" };
        return Err(Error::InvalidParameter(format!(
            "{name} must be {kind} (smallest eigenvalue {min_eig})"
        )));
    }
    Ok(min_eig)
}

/// `Lⁱ(x,u) = (x-pⁱ)ᵀQ₁(x-pⁱ) + uᵀRu` and `Fⁱ(x) = (x-pⁱ)ᵀQ₂(x-pⁱ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticCost {
    q1: DMatrix<f64>,
    q2: DMatrix<f64>,
    r: DMatrix<f64>,
    pairing: CostPairing,
    q1_form: QuadForm,
    q2_form: QuadForm,
    r_form: QuadForm,
    min_eigs: (f64, f64),
}

impl QuadraticCost {
    pub fn new(q1: DMatrix<f64>, q2: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self> {
        let q1_min = check_psd("Q1", &q1, false)?;
        let q2_min = check_psd("Q2", &q2, true)?;
        check_psd("R", &r, false)?;
        check_dim("Q2 size", q1.nrows(), q2.nrows())?;
        Ok(Self {
            q1_form: QuadForm::new(&q1),
            q2_form: QuadForm::new(&q2),
            r_form: QuadForm::new(&r),
            q1,
            q2,
            r,
            pairing: CostPairing::default(),
            min_eigs: (q1_min, q2_min),
        })
    }

    pub fn with_pairing(mut self, pairing: CostPairing) -> Self {
        self.pairing = pairing;
        self
    }

    pub fn pairing(&self) -> CostPairing {
        self.pairing
    }

    pub fn q1(&self) -> &DMatrix<f64> {
        &self.q1
    }

    pub fn q2(&self) -> &DMatrix<f64> {
        &self.q2
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn state_dim(&self) -> usize {
        self.q1.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.r.nrows()
    }

    /// Coefficients `c` of the lower bounds `L ≥ c₁‖x-p‖²`, `F ≥ c₂‖x-p‖²`.
    pub fn lower_bound_coefficients(&self) -> (f64, f64) {
        self.min_eigs
    }

    pub fn running_cost(&self, p: &StateVector, x: &StateVector, u: &InputVector) -> Result<f64> {
        check_dim("running cost state", self.state_dim(), x.len())?;
        check_dim("running cost destination", self.state_dim(), p.len())?;
        check_dim("running cost input", self.input_dim(), u.len())?;
        Ok(self.running(p.as_slice(), x.as_slice(), u.as_slice()))
    }

    pub fn terminal_cost(&self, p: &StateVector, x: &StateVector) -> Result<f64> {
        check_dim("terminal cost state", self.state_dim(), x.len())?;
        check_dim("terminal cost destination", self.state_dim(), p.len())?;
        Ok(self.terminal(p.as_slice(), x.as_slice()))
    }

    #[inline]
    pub(crate) fn running(&self, p: &[f64], x: &[f64], u: &[f64]) -> f64 {
        self.q1_form.eval_diff(x, p) + self.r_form.eval(u)
    }

    #[inline]
    pub(crate) fn terminal(&self, p: &[f64], x: &[f64]) -> f64 {
        self.q2_form.eval_diff(x, p)
    }

    /// One-step change `L(x,u) + F(next) - F(x)` toward `p`.
    #[inline]
    pub(crate) fn step_increment(&self, p: &[f64], x: &[f64], u: &[f64], next: &[f64]) -> f64 {
        self.running(p, x, u) + self.terminal(p, next) - self.terminal(p, x)
    }

    /// Cost of flying `inputs` from `x` toward `p`: running terms plus the terminal cost.
    pub fn branch_cost(&self, model: &PlantModel, p: &StateVector, x: &StateVector, inputs: &[InputVector]) -> Result<f64> {
        check_dim("branch destination", self.state_dim(), p.len())?;
        check_dim("cost and model state", self.state_dim(), model.state_dim())?;
        let states = model.rollout(x, inputs)?;
        let p = p.as_slice();
        let running: f64 = match self.pairing {
            CostPairing::AfterInput => inputs
                .iter()
                .zip(&states[1..])
                .map(|(u, s)| self.running(p, s.as_slice(), u.as_slice()))
                .sum(),
            CostPairing::BeforeInput => inputs
                .iter()
                .zip(&states)
                .map(|(u, s)| self.running(p, s.as_slice(), u.as_slice()))
                .sum(),
        };
        Ok(running + self.terminal(p, states.last().expect("rollout is non-empty").as_slice()))
    }

    /// `J(x, U)`: the primary branch cost, then per alternative the mean over abort indices.
    pub fn vector_cost(
        &self,
        model: &PlantModel,
        missions: &MissionSet,
        x: &StateVector,
        inputs: &MultiHorizonInput,
    ) -> Result<VectorCost> {
        check_dim("alternatives", missions.alternatives(), inputs.alternatives())?;
        check_dim("cost and model state", self.state_dim(), model.state_dim())?;
        check_dim("cost and model input", self.input_dim(), model.input_dim())?;
        check_dim("destination dimension", self.state_dim(), missions.state_dim())?;
        let traj = rollout_all(model, x, inputs)?;
        let mut out = vec![0.0; missions.alternatives() + 1];
        self.vector_cost_from_trajectory(missions, inputs, &traj, &mut out);
        Ok(VectorCost(out))
    }

    /// Vector cost from an already simulated trajectory, without re-simulating
    /// shared prefixes. `out` has `m+1` entries.
    pub(crate) fn vector_cost_from_trajectory(
        &self,
        missions: &MissionSet,
        inputs: &MultiHorizonInput,
        traj: &MultiHorizonTrajectory,
        out: &mut [f64],
    ) {
        for (i, slot) in out.iter_mut().enumerate() {
            *slot = self.entry_from_trajectory(missions, inputs, traj, i);
        }
    }

    /// `αᵀJ` from a trajectory, skipping entries with zero weight (their
    /// branch states need not have been simulated).
    pub(crate) fn weighted_cost_from_trajectory(
        &self,
        missions: &MissionSet,
        inputs: &MultiHorizonInput,
        traj: &MultiHorizonTrajectory,
        alpha: &[f64],
    ) -> f64 {
        alpha
            .iter()
            .enumerate()
            .filter(|(_, a)| **a != 0.0)
            .map(|(i, a)| a * self.entry_from_trajectory(missions, inputs, traj, i))
            .sum()
    }

    fn entry_from_trajectory(
        &self,
        missions: &MissionSet,
        inputs: &MultiHorizonInput,
        traj: &MultiHorizonTrajectory,
        i: usize,
    ) -> f64 {
        let n = inputs.horizon();
        let nx = traj.state_dim();
        let nu = inputs.input_dim();
        let after = self.pairing == CostPairing::AfterInput;
        let prim_states = traj.primary_flat();
        let state = |j: usize| &prim_states[j * nx..(j + 1) * nx];
        let paired_primary = |j: usize| if after { state(j + 1) } else { state(j) };
        let p = missions.destinations()[i].as_slice();

        if i == 0 {
            let running: f64 = (0..n).map(|j| self.running(p, paired_primary(j), inputs.primary(j))).sum();
            return running + self.terminal(p, state(n));
        }
        let mut prefix = 0.0;
        let mut total = 0.0;
        for ab in 0..n - 1 {
            prefix += self.running(p, paired_primary(ab), inputs.primary(ab));
            let tail = &inputs.as_slice()[tail_start(n, i, ab, nu)..][..(n - ab - 1) * nu];
            let bstates = &traj.branches_flat()[tail_start(n, i, ab, nx) - n * nx..][..(n - ab - 1) * nx];
            let mut branch = prefix;
            for q in 0..n - ab - 1 {
                let s = if after {
                    &bstates[q * nx..(q + 1) * nx]
                } else if q == 0 {
                    state(ab + 1)
                } else {
                    &bstates[(q - 1) * nx..q * nx]
                };
                branch += self.running(p, s, &tail[q * nu..(q + 1) * nu]);
            }
            branch += self.terminal(p, &bstates[(n - ab - 2) * nx..(n - ab - 1) * nx]);
            total += branch;
        }
        total / (n - 1) as f64
    }
}

/// Scalar offset of tail `(i, p)` in a flat buffer whose vectors have size `dim`,
/// counting the `N` primary vectors first.
fn tail_start(horizon: usize, i: usize, p: usize, dim: usize) -> usize {
    let block = horizon * (horizon - 1) / 2;
    let within = p * (horizon - 1) - p * p.saturating_sub(1) / 2;
    (horizon + (i - 1) * block + within) * dim
}

/// `[J⁰, J¹, ..., Jᵐ]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VectorCost(Vec<f64>);

impl VectorCost {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("vector cost"));
        }
        Ok(Self(entries))
    }

    pub fn entries(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.0)
    }
}
