//! Multi-horizon input sequences and their trajectories.
//!
//! A multi-horizon input holds one length-`N` primary sequence `U⁰` plus, for
//! every alternative destination `i ∈ 1..=m` and every abort index
//! `p ∈ 0..=N-2`, a tail of `N-p-1` inputs flown toward destination `i` after
//! the first `p+1` primary inputs. Only independent elements are stored; the
//! full branch sequence `U_pⁱ` is materialized on demand.
//!
//! Storage order is frozen (the solver's noise layout depends on it): the
//! primary inputs `u_0 .. u_{N-1}` first, then tails ordered by `(i, p, q)`.

use nalgebra::DVector;

use crate::error::{check_dim, Error, Result};
use crate::plant::{BoxSet, InputVector, LinearFeedback, PlantModel, StateVector};

/// Number of scalars in a multi-horizon input: `(N + m·N(N-1)/2)·n_u`.
pub fn total_dof(horizon: usize, alternatives: usize, input_dim: usize) -> usize {
    independent_count(horizon, alternatives) * input_dim
}

/// Number of independent vectors for a horizon and alternative count.
fn independent_count(horizon: usize, alternatives: usize) -> usize {
    horizon + alternatives * branch_block_len(horizon)
}

/// Vectors stored per alternative: `N(N-1)/2`.
fn branch_block_len(horizon: usize) -> usize {
    horizon * horizon.saturating_sub(1) / 2
}

/// Vector offset of tail `p` inside one alternative's block.
fn tail_vector_offset(horizon: usize, p: usize) -> usize {
    // sum over p' < p of (N - p' - 1)
    p * (horizon - 1) - p * p.saturating_sub(1) / 2
}

/// Vector offset of branch `(i, p)` counted from the first branch vector.
fn branch_vector_offset(horizon: usize, i: usize, p: usize) -> usize {
    (i - 1) * branch_block_len(horizon) + tail_vector_offset(horizon, p)
}

fn check_branch(horizon: usize, alternatives: usize, i: usize, p: usize) -> Result<()> {
    if i == 0 || i > alternatives {
        return Err(Error::IndexOutOfRange {
            what: "alternative",
            index: i,
            valid: format!("1..={alternatives}"),
        });
    }
    if horizon < 2 || p > horizon - 2 {
        return Err(Error::IndexOutOfRange {
            what: "abort index",
            index: p,
            valid: format!("0..={}", horizon as isize - 2),
        });
    }
    Ok(())
}

fn to_vectors(flat: &[f64], dim: usize) -> Vec<DVector<f64>> {
    flat.chunks_exact(dim).map(DVector::from_column_slice).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct MultiHorizonInput {
    horizon: usize,
    alternatives: usize,
    input_dim: usize,
    data: Vec<f64>,
}

impl MultiHorizonInput {
    pub fn zeros(horizon: usize, alternatives: usize, input_dim: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::InvalidParameter("horizon must be at least 1".into()));
        }
        if input_dim == 0 {
            return Err(Error::InvalidParameter("input dimension must be at least 1".into()));
        }
        if alternatives > 0 && horizon < 2 {
            return Err(Error::InvalidParameter(
                "alternative branches need a horizon of at least 2".into(),
            ));
        }
        Ok(Self {
            horizon,
            alternatives,
            input_dim,
            data: vec![0.0; total_dof(horizon, alternatives, input_dim)],
        })
    }

    /// Every stored element set to `value`.
    pub fn filled(horizon: usize, alternatives: usize, value: &InputVector) -> Result<Self> {
        let mut out = Self::zeros(horizon, alternatives, value.len())?;
        for chunk in out.data.chunks_exact_mut(value.len()) {
            chunk.copy_from_slice(value.as_slice());
        }
        Ok(out)
    }

    /// Builds from explicit parts; `tails[i-1][p]` is the tail of branch `(i, p)`.
    pub fn from_parts(primary: &[InputVector], tails: &[Vec<Vec<InputVector>>]) -> Result<Self> {
        let horizon = primary.len();
        let input_dim = primary.first().map(|u| u.len()).unwrap_or(0);
        let mut out = Self::zeros(horizon, tails.len(), input_dim)?;
        for (j, u) in primary.iter().enumerate() {
            check_dim("primary input", input_dim, u.len())?;
            out.primary_mut(j).copy_from_slice(u.as_slice());
        }
        for (i_minus, per_p) in tails.iter().enumerate() {
            check_dim("abort indices per alternative", horizon - 1, per_p.len())?;
            for (p, tail) in per_p.iter().enumerate() {
                check_dim("tail length", horizon - p - 1, tail.len())?;
                let dst = out.tail_mut(i_minus + 1, p)?;
                for (q, u) in tail.iter().enumerate() {
                    check_dim("tail input", input_dim, u.len())?;
                    dst[q * input_dim..(q + 1) * input_dim].copy_from_slice(u.as_slice());
                }
            }
        }
        Ok(out)
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn alternatives(&self) -> usize {
        self.alternatives
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    /// Number of stored scalars.
    pub fn dof(&self) -> usize {
        self.data.len()
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.horizon, self.alternatives, self.input_dim)
    }

    pub fn primary(&self, j: usize) -> &[f64] {
        &self.data[j * self.input_dim..(j + 1) * self.input_dim]
    }

    pub fn primary_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.input_dim..(j + 1) * self.input_dim]
    }

    /// `U⁰` as a contiguous slice of `N·n_u` scalars.
    pub fn primary_slice(&self) -> &[f64] {
        &self.data[..self.horizon * self.input_dim]
    }

    pub fn primary_inputs(&self) -> Vec<InputVector> {
        to_vectors(self.primary_slice(), self.input_dim)
    }

    fn tail_range(&self, i: usize, p: usize) -> std::ops::Range<usize> {
        let start = (self.horizon + branch_vector_offset(self.horizon, i, p)) * self.input_dim;
        start..start + (self.horizon - p - 1) * self.input_dim
    }

    /// Tail of branch `(i, p)`: inputs `u^i_{p,p+1} .. u^i_{p,N-1}`.
    pub fn tail(&self, i: usize, p: usize) -> Result<&[f64]> {
        check_branch(self.horizon, self.alternatives, i, p)?;
        Ok(&self.data[self.tail_range(i, p)])
    }

    pub fn tail_mut(&mut self, i: usize, p: usize) -> Result<&mut [f64]> {
        check_branch(self.horizon, self.alternatives, i, p)?;
        let r = self.tail_range(i, p);
        Ok(&mut self.data[r])
    }

    /// The full length-`N` branch sequence `U_pⁱ`.
    pub fn materialize_branch(&self, i: usize, p: usize) -> Result<Vec<InputVector>> {
        let tail = self.tail(i, p)?;
        let mut out = to_vectors(&self.primary_slice()[..(p + 1) * self.input_dim], self.input_dim);
        out.extend(to_vectors(tail, self.input_dim));
        Ok(out)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.data.clone()
    }

    /// Rebuilds an input with the shape of `template` from a flat vector.
    pub fn unflatten(template: &Self, flat: &[f64]) -> Result<Self> {
        check_dim("flattened multi-horizon input", template.dof(), flat.len())?;
        Ok(Self {
            data: flat.to_vec(),
            ..*template
        })
    }

    pub fn clamp_to(&mut self, input_box: &BoxSet) {
        for u in self.data.chunks_exact_mut(self.input_dim) {
            input_box.clamp_slice(u);
        }
    }

    /// Shifted candidate `U_s` for the next step.
    ///
    /// The primary sequence drops its executed head and appends
    /// `K (x_f - origin)`, where `x_f` is the end of the primary rollout from
    /// `x_prev`. Each materialized branch drops its first element and appends
    /// `u_hat`; since the abort time stays fixed in absolute time, old branch
    /// `(i, p+1)` becomes new branch `(i, p)`, the old primary sequence becomes
    /// new branch `(i, N-2)`, and old branch `(i, 0)` is discarded. Appended
    /// elements are clamped to the input box.
    pub fn shift(
        &self,
        model: &PlantModel,
        x_prev: &StateVector,
        feedback: &LinearFeedback,
        u_hat: &InputVector,
    ) -> Result<Self> {
        check_dim("shift input dimension", model.input_dim(), self.input_dim)?;
        check_dim("u_hat", self.input_dim, u_hat.len())?;
        let nu = self.input_dim;
        let n = self.horizon;

        let x_final = primary_final_state(model, x_prev, self)?;
        let mut appended = DVector::zeros(nu);
        feedback.apply_slice(x_final.as_slice(), appended.as_mut_slice());
        model.input_box().clamp_slice(appended.as_mut_slice());
        let u_hat = model.input_box().clamp(u_hat)?;

        let mut out = self.clone();
        out.data[..(n - 1) * nu].copy_from_slice(&self.data[nu..n * nu]);
        out.primary_mut(n - 1).copy_from_slice(appended.as_slice());
        for i in 1..=self.alternatives {
            for p in 0..n - 1 {
                let dst = out.tail_mut(i, p)?;
                let len = dst.len();
                if p + 1 < n - 1 {
                    dst[..len - nu].copy_from_slice(self.tail(i, p + 1)?);
                }
                dst[len - nu..].copy_from_slice(u_hat.as_slice());
            }
        }
        Ok(out)
    }
}

/// Final state of rolling `U⁰` out from `x`.
pub fn primary_final_state(model: &PlantModel, x: &StateVector, inputs: &MultiHorizonInput) -> Result<StateVector> {
    check_dim("state", model.state_dim(), x.len())?;
    check_dim("input dimension", model.input_dim(), inputs.input_dim())?;
    let mut cur = x.as_slice().to_vec();
    let mut next = vec![0.0; cur.len()];
    for u in inputs.primary_slice().chunks_exact(inputs.input_dim()) {
        model.step_slice(&cur, u, &mut next);
        std::mem::swap(&mut cur, &mut next);
    }
    Ok(DVector::from_vec(cur))
}

/// States produced by simulating a multi-horizon input.
///
/// Primary states hold `x_0 .. x_N`. Branch `(i, p)` holds the `N-p-1`
/// states reached by its tail, continuing from primary state `p+1`; the
/// shared prefix is not duplicated.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiHorizonTrajectory {
    horizon: usize,
    alternatives: usize,
    state_dim: usize,
    primary: Vec<f64>,
    branches: Vec<f64>,
}

impl MultiHorizonTrajectory {
    pub(crate) fn with_shape(horizon: usize, alternatives: usize, state_dim: usize) -> Self {
        Self {
            horizon,
            alternatives,
            state_dim,
            primary: vec![0.0; (horizon + 1) * state_dim],
            branches: vec![0.0; alternatives * branch_block_len(horizon) * state_dim],
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn alternatives(&self) -> usize {
        self.alternatives
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    /// Primary state `j ∈ 0..=N`.
    pub fn primary_state(&self, j: usize) -> &[f64] {
        &self.primary[j * self.state_dim..(j + 1) * self.state_dim]
    }

    pub fn primary_states(&self) -> Vec<StateVector> {
        to_vectors(&self.primary, self.state_dim)
    }

    pub(crate) fn primary_flat(&self) -> &[f64] {
        &self.primary
    }

    pub(crate) fn branches_flat(&self) -> &[f64] {
        &self.branches
    }

    /// Every state reached by the tails of alternative `i`.
    pub(crate) fn alternative_states(&self, i: usize) -> &[f64] {
        let block = branch_block_len(self.horizon) * self.state_dim;
        &self.branches[(i - 1) * block..i * block]
    }

    fn branch_range(&self, i: usize, p: usize) -> std::ops::Range<usize> {
        let start = branch_vector_offset(self.horizon, i, p) * self.state_dim;
        start..start + (self.horizon - p - 1) * self.state_dim
    }

    /// The `N-p-1` states produced by the tail of branch `(i, p)`.
    pub fn branch_states(&self, i: usize, p: usize) -> Result<&[f64]> {
        check_branch(self.horizon, self.alternatives, i, p)?;
        Ok(&self.branches[self.branch_range(i, p)])
    }

    /// All `N+1` states of branch `(i, p)` including the shared prefix.
    pub fn branch_full_states(&self, i: usize, p: usize) -> Result<Vec<StateVector>> {
        let tail = self.branch_states(i, p)?;
        let mut out = to_vectors(&self.primary[..(p + 2) * self.state_dim], self.state_dim);
        out.extend(to_vectors(tail, self.state_dim));
        Ok(out)
    }
}

/// Simulates every branch of `inputs` from `x`, sharing primary prefixes.
pub fn rollout_all(model: &PlantModel, x: &StateVector, inputs: &MultiHorizonInput) -> Result<MultiHorizonTrajectory> {
    check_dim("state", model.state_dim(), x.len())?;
    check_dim("input dimension", model.input_dim(), inputs.input_dim())?;
    let mut traj = MultiHorizonTrajectory::with_shape(inputs.horizon(), inputs.alternatives(), model.state_dim());
    rollout_all_into(model, x.as_slice(), inputs, &mut traj);
    Ok(traj)
}

/// Allocation-free variant; `traj` must already have the matching shape.
pub(crate) fn rollout_all_into(model: &PlantModel, x: &[f64], inputs: &MultiHorizonInput, traj: &mut MultiHorizonTrajectory) {
    rollout_primary_into(model, x, inputs, traj);
    rollout_branches_into(model, inputs, traj);
}

/// Fills only the primary states `x_0 .. x_N`.
pub(crate) fn rollout_primary_into(model: &PlantModel, x: &[f64], inputs: &MultiHorizonInput, traj: &mut MultiHorizonTrajectory) {
    let nx = traj.state_dim;
    debug_assert_eq!(traj.horizon, inputs.horizon);
    traj.primary[..nx].copy_from_slice(x);
    for j in 0..inputs.horizon {
        let (done, rest) = traj.primary.split_at_mut((j + 1) * nx);
        model.step_slice(&done[j * nx..], inputs.primary(j), &mut rest[..nx]);
    }
}

/// Fills the branch states from already computed primary states.
pub(crate) fn rollout_branches_into(model: &PlantModel, inputs: &MultiHorizonInput, traj: &mut MultiHorizonTrajectory) {
    let nx = traj.state_dim;
    let nu = inputs.input_dim;
    let n = inputs.horizon;
    debug_assert_eq!(traj.alternatives, inputs.alternatives);
    let mut offset = 0;
    let mut input_offset = n * nu;
    for _ in 0..inputs.alternatives {
        for p in 0..n - 1 {
            let len = n - p - 1;
            let start = &traj.primary[(p + 1) * nx..(p + 2) * nx];
            let block = &mut traj.branches[offset * nx..(offset + len) * nx];
            let tail = &inputs.data[input_offset..input_offset + len * nu];
            model.step_slice(start, &tail[..nu], &mut block[..nx]);
            for q in 1..len {
                let (done, rest) = block.split_at_mut(q * nx);
                model.step_slice(&done[(q - 1) * nx..], &tail[q * nu..(q + 1) * nu], &mut rest[..nx]);
            }
            offset += len;
            input_offset += len * nu;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dvector, DMatrix};

    fn single_integrator() -> PlantModel {
        let xs = BoxSet::from_slices(&[-2.0, -2.0], &[10.0, 10.0]).unwrap();
        let us = BoxSet::from_slices(&[-10.0, -10.0], &[2.0, 2.0]).unwrap();
        PlantModel::linear(DMatrix::identity(2, 2), DMatrix::identity(2, 2), xs, us).unwrap()
    }

    fn scalar_inputs(horizon: usize, alternatives: usize) -> MultiHorizonInput {
        let mut u = MultiHorizonInput::zeros(horizon, alternatives, 1).unwrap();
        for (k, v) in u.as_mut_slice().iter_mut().enumerate() {
            *v = k as f64;
        }
        u
    }

    #[test]
    fn dof_counts() {
        assert_eq!(total_dof(10, 2, 2), 200);
        assert_eq!(total_dof(5, 2, 2), 50);
        assert_eq!(total_dof(7, 0, 3), 21);
        assert_eq!(MultiHorizonInput::zeros(4, 3, 2).unwrap().dof(), total_dof(4, 3, 2));
    }

    #[test]
    fn materialize_direct_construction() {
        let a = dvector![1.0];
        let b = dvector![2.0];
        let c = dvector![3.0];
        let d = dvector![4.0];
        let e = dvector![5.0];
        let f = dvector![6.0];
        let u = MultiHorizonInput::from_parts(
            &[a.clone(), b.clone(), c],
            &[vec![vec![d.clone(), e.clone()], vec![f.clone()]]],
        )
        .unwrap();
        assert_eq!(u.materialize_branch(1, 0).unwrap(), vec![a.clone(), d, e]);
        // p = N-2: whole primary prefix but the last element, plus one tail element
        assert_eq!(u.materialize_branch(1, 1).unwrap(), vec![a, b, f]);
    }

    #[test]
    fn tail_lengths_and_errors() {
        let u = MultiHorizonInput::zeros(5, 2, 2).unwrap();
        for i in 1..=2 {
            for p in 0..=3 {
                assert_eq!(u.tail(i, p).unwrap().len(), (5 - p - 1) * 2);
            }
        }
        assert!(u.tail(0, 0).is_err());
        assert!(u.tail(3, 0).is_err());
        assert!(u.tail(1, 4).is_err());
        assert!(u.materialize_branch(1, 4).is_err());
        assert!(MultiHorizonInput::zeros(1, 1, 1).is_err());
        assert!(MultiHorizonInput::zeros(0, 0, 1).is_err());
    }

    #[test]
    fn flatten_order_is_primary_first() {
        let u = scalar_inputs(3, 1);
        let flat = u.flatten();
        assert_eq!(flat.len(), total_dof(3, 1, 1));
        assert_eq!(u.primary(0), &flat[..1]);
        assert_eq!(u.primary_slice(), &[0.0, 1.0, 2.0]);
        // then (i=1, p=0, q=1..2) and (i=1, p=1, q=2)
        assert_eq!(u.tail(1, 0).unwrap(), &[3.0, 4.0]);
        assert_eq!(u.tail(1, 1).unwrap(), &[5.0]);
        assert_eq!(MultiHorizonInput::unflatten(&u, &flat).unwrap(), u);
        assert!(MultiHorizonInput::unflatten(&u, &flat[1..]).is_err());
    }

    #[test]
    fn rollout_all_branch_starts_at_primary_state() {
        let model = single_integrator();
        let mut u = MultiHorizonInput::zeros(3, 1, 2).unwrap();
        for (k, v) in u.as_mut_slice().iter_mut().enumerate() {
            *v = (k as f64 * 0.37).sin();
        }
        let x = dvector![5.0, 9.0];
        let traj = rollout_all(&model, &x, &u).unwrap();
        for p in 0..2 {
            let start = DVector::from_column_slice(traj.primary_state(p + 1));
            let tail0 = DVector::from_column_slice(&u.tail(1, p).unwrap()[..2]);
            let expect = model.step(&start, &tail0).unwrap();
            assert_eq!(&traj.branch_states(1, p).unwrap()[..2], expect.as_slice());
        }
    }

    #[test]
    fn rollout_all_without_alternatives_is_primary_rollout() {
        let model = single_integrator();
        let u = MultiHorizonInput::filled(4, 0, &dvector![-1.0, -2.0]).unwrap();
        let x = dvector![5.0, 9.0];
        let traj = rollout_all(&model, &x, &u).unwrap();
        assert_eq!(traj.primary_states(), model.rollout(&x, &u.primary_inputs()).unwrap());
    }

    #[test]
    fn shift_primary_appends_feedback() {
        let model = single_integrator();
        let fb = LinearFeedback::new(DMatrix::identity(2, 2) * -0.1, dvector![0.0, 0.0]).unwrap();
        let prim: Vec<_> = (0..3).map(|k| dvector![-(k as f64), -1.0]).collect();
        let u = MultiHorizonInput::from_parts(&prim, &[]).unwrap();
        let x_prev = dvector![5.0, 9.0];
        let s = u.shift(&model, &x_prev, &fb, &dvector![0.0, 0.0]).unwrap();
        // x_f = [5 - 0 - 1 - 2, 9 - 3] = [2, 6]; K x_f = [-0.2, -0.6]
        assert_eq!(&s.primary_inputs()[..2], &prim[1..]);
        assert!((s.primary(2)[0] + 0.2).abs() < 1e-15 && (s.primary(2)[1] + 0.6).abs() < 1e-15);
    }

    #[test]
    fn shift_clamps_appended_elements() {
        let model = single_integrator();
        let fb = LinearFeedback::new(DMatrix::identity(2, 2) * 10.0, dvector![0.0, 0.0]).unwrap();
        let u = MultiHorizonInput::zeros(3, 1, 2).unwrap();
        let s = u.shift(&model, &dvector![5.0, -2.0], &fb, &dvector![7.0, -30.0]).unwrap();
        assert_eq!(s.primary(2), &[2.0, -10.0]);
        assert_eq!(s.tail(1, 1).unwrap(), &[2.0, -10.0]);
    }
}
