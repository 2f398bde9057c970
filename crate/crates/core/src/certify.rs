//! Weight vectors and the grid-based stability certificate.
//!
//! Every min/max over a compact set is approximated on a uniform grid over
//! the constraint boxes. Origin-centered quantities are measured from `p⁰`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::mission::{MissionSet, QuadraticCost, VectorCost};
use crate::plant::{BoxSet, InputVector, LinearFeedback, PlantModel, StateVector};

/// Weights `[α⁰, α¹, ..., αᵐ]` on the simplex.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidParameter("weight vector is empty".into()));
        }
        if entries.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(Error::InfeasibleParameters(format!("weights {entries:?} leave [0, 1]")));
        }
        let sum: f64 = entries.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InfeasibleParameters(format!("weights sum to {sum}")));
        }
        Ok(Self(entries))
    }

    /// `[1, 0, ..., 0]` with `m` alternatives.
    pub fn primary_only(alternatives: usize) -> Self {
        let mut v = vec![0.0; alternatives + 1];
        v[0] = 1.0;
        Self(v)
    }

    pub fn is_primary_only(&self) -> bool {
        self.0[0] == 1.0 && self.0[1..].iter().all(|a| *a == 0.0)
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

    pub fn dot(&self, j: &VectorCost) -> Result<f64> {
        check_dim("weights and vector cost", self.len(), j.len())?;
        Ok(self.0.iter().zip(j.entries()).map(|(a, c)| a * c).sum())
    }

    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.0)
    }
}

/// Tuning constants of the weight design.
#[derive(Clone, Debug, PartialEq)]
pub struct StabilityParams {
    pub delta: f64,
    /// `γ¹ .. γᵐ`.
    pub gamma: Vec<f64>,
    pub mu: f64,
    /// Feedback gain `K`, applied to `x - p⁰`.
    pub gain: DMatrix<f64>,
    pub u_hat: InputVector,
}

impl StabilityParams {
    pub fn validate(&self, model: &PlantModel, missions: &MissionSet) -> Result<()> {
        if !(self.delta > 0.0) {
            return Err(Error::InvalidParameter(format!("delta must be positive, got {}", self.delta)));
        }
        if !(self.mu > 0.0) {
            return Err(Error::InvalidParameter(format!("mu must be positive, got {}", self.mu)));
        }
        check_dim("gamma entries", missions.alternatives(), self.gamma.len())?;
        if let Some(g) = self.gamma.iter().find(|g| !(**g >= 0.0) || !g.is_finite()) {
            return Err(Error::InvalidParameter(format!("gamma must be nonnegative, got {g}")));
        }
        check_dim("K rows", model.input_dim(), self.gain.nrows())?;
        check_dim("K columns", model.state_dim(), self.gain.ncols())?;
        check_dim("u_hat", model.input_dim(), self.u_hat.len())?;
        if !model.input_box().contains(&self.u_hat)? {
            return Err(Error::InvalidParameter("u_hat lies outside the input box".into()));
        }
        Ok(())
    }

    /// Whether the closed ball of radius `δ` around `p⁰` fits in the state box.
    pub fn ball_within_box(&self, model: &PlantModel, missions: &MissionSet) -> bool {
        let sb = model.state_box();
        let p0 = missions.primary();
        (0..sb.dim()).all(|j| p0[j] - self.delta >= sb.lower()[j] && p0[j] + self.delta <= sb.upper()[j])
    }

    /// `u = K (x - p⁰)`.
    pub fn feedback(&self, missions: &MissionSet) -> Result<LinearFeedback> {
        LinearFeedback::new(self.gain.clone(), missions.primary().clone())
    }

    /// Whether `x` lies in the open ball `B_δ` around `p⁰`.
    pub fn in_ball(&self, missions: &MissionSet, x: &StateVector) -> Result<bool> {
        Ok(missions.distance_to_primary(x)? < self.delta)
    }
}

/// Per-dimension grid resolutions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub input_resolution: usize,
    pub state_resolution: usize,
}

impl GridSpec {
    /// 21 input points per dimension; 21 state points for up to two state dimensions, 9 above.
    pub fn default_for(state_dim: usize) -> Self {
        Self {
            input_resolution: 21,
            state_resolution: if state_dim <= 2 { 21 } else { 9 },
        }
    }
}

/// Uniform tensor grid over a box; points are ordered lexicographically with
/// the first coordinate most significant.
struct Grid {
    lower: Vec<f64>,
    upper: Vec<f64>,
    resolution: usize,
}

impl Grid {
    fn new(b: &BoxSet, resolution: usize, what: &str) -> Result<Self> {
        if resolution < 2 {
            return Err(Error::EmptyGrid(format!("{what} grid needs at least 2 points per dimension")));
        }
        Ok(Self {
            lower: b.lower().as_slice().to_vec(),
            upper: b.upper().as_slice().to_vec(),
            resolution,
        })
    }

    fn len(&self) -> usize {
        self.resolution.pow(self.lower.len() as u32)
    }

    fn point(&self, mut index: usize, out: &mut [f64]) {
        let last = (self.resolution - 1) as f64;
        for d in (0..self.lower.len()).rev() {
            let j = index % self.resolution;
            index /= self.resolution;
            out[d] = if j == self.resolution - 1 {
                self.upper[d]
            } else {
                self.lower[d] + (self.upper[d] - self.lower[d]) * j as f64 / last
            };
        }
    }

    fn points(&self) -> Vec<f64> {
        let dim = self.lower.len();
        let mut out = vec![0.0; self.len() * dim];
        for (k, chunk) in out.chunks_exact_mut(dim).enumerate() {
            self.point(k, chunk);
        }
        out
    }
}

fn norm_from(x: &[f64], p: &[f64]) -> f64 {
    x.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

/// `α⁰` from the baseline formula, without the simplex check.
fn baseline_primary_weight(params: &StabilityParams, missions: &MissionSet, x: &[f64]) -> f64 {
    let r0 = norm_from(x, missions.primary().as_slice());
    1.0 - alternative_weights(params, missions, x, r0).sum::<f64>()
}

fn alternative_weights<'a>(
    params: &'a StabilityParams,
    missions: &'a MissionSet,
    x: &'a [f64],
    r0: f64,
) -> impl Iterator<Item = f64> + 'a {
    params
        .gamma
        .iter()
        .zip(&missions.destinations()[1..])
        .map(move |(g, p)| g * r0 / params.mu.max(norm_from(x, p.as_slice())))
}

/// Baseline weights: `αⁱ = γⁱ‖x-p⁰‖ / max(μ, ‖x-pⁱ‖)` and `α⁰ = 1 - Σαⁱ`.
pub fn alpha_baseline(params: &StabilityParams, missions: &MissionSet, x: &StateVector) -> Result<WeightVector> {
    check_dim("gamma entries", missions.alternatives(), params.gamma.len())?;
    check_dim("state", missions.state_dim(), x.len())?;
    let r0 = missions.distance_to_primary(x)?;
    let alts: Vec<f64> = alternative_weights(params, missions, x.as_slice(), r0).collect();
    let a0 = 1.0 - alts.iter().sum::<f64>();
    if a0 < 0.0 {
        return Err(Error::InfeasibleParameters(format!(
            "primary weight {a0} is negative; reduce gamma or increase mu"
        )));
    }
    let mut entries = Vec::with_capacity(alts.len() + 1);
    entries.push(a0);
    entries.extend(alts);
    if entries.iter().any(|a| !a.is_finite() || *a > 1.0) {
        return Err(Error::InfeasibleParameters(format!("baseline weights {entries:?} leave [0, 1]")));
    }
    Ok(WeightVector(entries))
}

/// `α_b` if `α_bᵀJ ≤ α_prevᵀJ`, otherwise `α_prev`.
pub fn alpha_transitional(alpha_b: &WeightVector, alpha_prev: &WeightVector, j: &VectorCost) -> Result<WeightVector> {
    check_dim("previous weights", alpha_b.len(), alpha_prev.len())?;
    if alpha_b.dot(j)? <= alpha_prev.dot(j)? {
        Ok(alpha_b.clone())
    } else {
        Ok(alpha_prev.clone())
    }
}

/// `max over (i, x) of Lⁱ(x,u) + Fⁱ(f(x,u)) - Fⁱ(x)` on the state grid.
fn worst_increment(model: &PlantModel, cost: &QuadraticCost, missions: &MissionSet, states: &[f64], u: &[f64]) -> f64 {
    let nx = model.state_dim();
    let mut next = vec![0.0; nx];
    let mut worst = f64::NEG_INFINITY;
    for x in states.chunks_exact(nx) {
        model.step_slice(x, u, &mut next);
        for p in missions.destinations() {
            worst = worst.max(cost.step_increment(p.as_slice(), x, u, &next));
        }
    }
    worst
}

fn check_problem(model: &PlantModel, cost: &QuadraticCost, missions: &MissionSet) -> Result<()> {
    check_dim("cost state dimension", model.state_dim(), cost.state_dim())?;
    check_dim("cost input dimension", model.input_dim(), cost.input_dim())?;
    check_dim("destination dimension", model.state_dim(), missions.state_dim())
}

/// Grid min over inputs of the worst one-step increment; returns `(û, P)`.
/// Ties keep the lowest grid index.
pub fn compute_uhat_p(
    model: &PlantModel,
    cost: &QuadraticCost,
    missions: &MissionSet,
    grid: &GridSpec,
) -> Result<(InputVector, f64)> {
    check_problem(model, cost, missions)?;
    let inputs = Grid::new(model.input_box(), grid.input_resolution, "input")?.points();
    let states = Grid::new(model.state_box(), grid.state_resolution, "state")?.points();
    let nu = model.input_dim();
    let values: Vec<f64> = inputs
        .par_chunks_exact(nu)
        .map(|u| worst_increment(model, cost, missions, &states, u))
        .collect();
    let mut best = 0;
    for (k, v) in values.iter().enumerate() {
        if *v < values[best] {
            best = k;
        }
    }
    Ok((
        DVector::from_column_slice(&inputs[best * nu..(best + 1) * nu]),
        values[best],
    ))
}

/// Worst one-step increment at a fixed input, over the state grid.
pub fn increment_bound_at(
    model: &PlantModel,
    cost: &QuadraticCost,
    missions: &MissionSet,
    grid: &GridSpec,
    u: &InputVector,
) -> Result<f64> {
    check_problem(model, cost, missions)?;
    check_dim("input", model.input_dim(), u.len())?;
    let states = Grid::new(model.state_box(), grid.state_resolution, "state")?.points();
    Ok(worst_increment(model, cost, missions, &states, u.as_slice()))
}

/// State grid points with `‖x - p⁰‖ ≥ δ`.
fn outside_ball(model: &PlantModel, missions: &MissionSet, delta: f64, grid: &GridSpec) -> Result<Vec<f64>> {
    let nx = model.state_dim();
    let p0 = missions.primary().as_slice();
    let all = Grid::new(model.state_box(), grid.state_resolution, "state")?.points();
    let kept: Vec<f64> = all
        .chunks_exact(nx)
        .filter(|x| norm_from(x, p0) >= delta)
        .flatten()
        .copied()
        .collect();
    if kept.is_empty() {
        return Err(Error::EmptyGrid(format!("every state grid point lies inside the ball of radius {delta}")));
    }
    Ok(kept)
}

/// `k₁`: grid max over `X ∖ B_δ` of the primary increment under `u = K(x - p⁰)`;
/// `z`: grid max of `‖x - p⁰‖` over the same set.
pub fn compute_k1_z(
    model: &PlantModel,
    cost: &QuadraticCost,
    missions: &MissionSet,
    params: &StabilityParams,
    grid: &GridSpec,
) -> Result<(f64, f64)> {
    check_problem(model, cost, missions)?;
    let feedback = params.feedback(missions)?;
    check_dim("K rows", model.input_dim(), params.gain.nrows())?;
    let states = outside_ball(model, missions, params.delta, grid)?;
    let nx = model.state_dim();
    let p0 = missions.primary().as_slice();
    let mut u = vec![0.0; model.input_dim()];
    let mut next = vec![0.0; nx];
    let mut k1 = f64::NEG_INFINITY;
    let mut z: f64 = 0.0;
    for x in states.chunks_exact(nx) {
        feedback.apply_slice(x, &mut u);
        model.step_slice(x, &u, &mut next);
        k1 = k1.max(cost.step_increment(p0, x, &u, &next));
        z = z.max(norm_from(x, p0));
    }
    Ok((k1, z))
}

/// `β`: grid min over `X ∖ B_δ` of the baseline primary weight.
pub fn compute_beta(model: &PlantModel, missions: &MissionSet, params: &StabilityParams, grid: &GridSpec) -> Result<f64> {
    check_dim("gamma entries", missions.alternatives(), params.gamma.len())?;
    let states = outside_ball(model, missions, params.delta, grid)?;
    Ok(states
        .chunks_exact(model.state_dim())
        .map(|x| baseline_primary_weight(params, missions, x))
        .fold(f64::INFINITY, f64::min))
}

/// `P / (P - k₁)` when `P > 0` and `k₁ < 0`; 1 when `P > 0` but `k₁ ≥ 0`
/// (no `β < 1` can work); 0 when `P ≤ 0`.
fn required_beta(p: f64, k1: f64) -> f64 {
    if p <= 0.0 {
        0.0
    } else if k1 < 0.0 {
        p / (p - k1)
    } else {
        1.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    /// Grid min-max one-step increment, attained at `u_hat`.
    pub p: f64,
    pub u_hat: Vec<f64>,
    /// Worst increment at the configured `û`; this is the bound the controller relies on.
    pub p_configured: f64,
    pub configured_u_hat: Vec<f64>,
    pub k1: f64,
    pub z: f64,
    pub beta: f64,
    pub beta_required: f64,
    pub beta_positive: bool,
    pub beta_sufficient: bool,
    pub feedback_decreases: bool,
    pub grid: GridSpec,
    pub delta: f64,
    pub gamma: Vec<f64>,
    pub mu: f64,
    pub notes: Vec<String>,
}

impl Certificate {
    pub fn passed(&self) -> bool {
        self.beta_positive && self.beta_sufficient && self.feedback_decreases
    }
}

/// Evaluates every certificate quantity. Failed conditions are recorded, not raised.
pub fn certify(
    model: &PlantModel,
    cost: &QuadraticCost,
    missions: &MissionSet,
    params: &StabilityParams,
    grid: &GridSpec,
) -> Result<Certificate> {
    params.validate(model, missions)?;
    let (u_hat, p) = compute_uhat_p(model, cost, missions, grid)?;
    let p_configured = increment_bound_at(model, cost, missions, grid, &params.u_hat)?;
    let (k1, z) = compute_k1_z(model, cost, missions, params, grid)?;
    let beta = compute_beta(model, missions, params, grid)?;

    let beta_required = required_beta(p_configured, k1);
    let feedback_decreases = k1 < 0.0;
    let beta_positive = beta > 0.0;
    let beta_sufficient = if p_configured > 0.0 && k1 < 0.0 {
        beta >= beta_required
    } else {
        beta * k1 <= -(1.0 - beta) * p_configured
    };

    let mut notes = vec![format!(
        "grid approximation: {} points per input dimension, {} per state dimension",
        grid.input_resolution, grid.state_resolution
    )];
    if (p_configured - p).abs() > 1e-12 {
        notes.push(format!(
            "configured u_hat gives bound {p_configured}, grid optimum is {p}; conditions use the configured value"
        ));
    }
    if !feedback_decreases {
        notes.push(format!("feedback K does not decrease the primary cost everywhere outside the ball (k1 = {k1})"));
    }
    if !params.ball_within_box(model, missions) {
        notes.push(format!("ball of radius {} around the primary destination extends past the state box", params.delta));
    }
    if !beta_positive {
        notes.push(format!("minimum primary weight {beta} is not positive"));
    }
    if !beta_sufficient {
        notes.push(format!("beta {beta} is below the required {beta_required}"));
    }

    Ok(Certificate {
        p,
        u_hat: u_hat.as_slice().to_vec(),
        p_configured,
        configured_u_hat: params.u_hat.as_slice().to_vec(),
        k1,
        z,
        beta,
        beta_required,
        beta_positive,
        beta_sufficient,
        feedback_decreases,
        grid: *grid,
        delta: params.delta,
        gamma: params.gamma.clone(),
        mu: params.mu,
        notes,
    })
}

/// Uniform `γ` and `μ` meeting `Σγⁱ·z/μ = 1 - β_req - margin`, with `û` set to
/// the grid optimum. `mu` defaults to `z`.
pub fn search_params(
    model: &PlantModel,
    cost: &QuadraticCost,
    missions: &MissionSet,
    delta: f64,
    gain: &DMatrix<f64>,
    grid: &GridSpec,
    margin: f64,
    mu: Option<f64>,
) -> Result<(StabilityParams, Certificate)> {
    if !(0.0..1.0).contains(&margin) {
        return Err(Error::InvalidParameter(format!("margin must lie in [0, 1), got {margin}")));
    }
    let (u_hat, p) = compute_uhat_p(model, cost, missions, grid)?;
    let probe = StabilityParams {
        delta,
        gamma: vec![0.0; missions.alternatives()],
        mu: 1.0,
        gain: gain.clone(),
        u_hat,
    };
    probe.validate(model, missions)?;
    let (k1, z) = compute_k1_z(model, cost, missions, &probe, grid)?;
    if k1 >= 0.0 {
        return Err(Error::InfeasibleParameters(format!(
            "feedback K does not decrease the primary cost outside the ball (k1 = {k1})"
        )));
    }
    let beta_required = required_beta(p, k1);
    if beta_required >= 1.0 - margin {
        return Err(Error::InfeasibleParameters(format!(
            "required beta {beta_required} leaves no room for margin {margin}"
        )));
    }
    let mu = mu.unwrap_or(z);
    if !(mu > 0.0) {
        return Err(Error::InvalidParameter(format!("mu must be positive, got {mu}")));
    }
    let m = missions.alternatives();
    let gamma = if m == 0 {
        Vec::new()
    } else {
        vec![mu * (1.0 - beta_required - margin) / (m as f64 * z); m]
    };
    let params = StabilityParams { gamma, mu, ..probe };
    let cert = certify(model, cost, missions, &params, grid)?;
    Ok((params, cert))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::dvector;

    fn single_integrator() -> PlantModel {
        let xs = BoxSet::from_slices(&[-2.0, -2.0], &[10.0, 10.0]).unwrap();
        let us = BoxSet::from_slices(&[-10.0, -10.0], &[2.0, 2.0]).unwrap();
        PlantModel::linear(DMatrix::identity(2, 2), DMatrix::identity(2, 2), xs, us).unwrap()
    }

    fn cost2() -> QuadraticCost {
        QuadraticCost::new(
            DMatrix::identity(2, 2) * 1e-5,
            DMatrix::identity(2, 2) * 0.1,
            DMatrix::identity(2, 2) * 0.1,
        )
        .unwrap()
    }

    fn params(gamma: Vec<f64>, mu: f64, gain: f64) -> StabilityParams {
        StabilityParams {
            delta: 1.0,
            gamma,
            mu,
            gain: DMatrix::identity(2, 2) * gain,
            u_hat: dvector![0.0, 0.0],
        }
    }

    #[test]
    fn baseline_examples() {
        let missions = MissionSet::new(vec![dvector![0.0, 0.0], dvector![4.0, 0.0]], 0.5).unwrap();
        let a = alpha_baseline(&params(vec![0.5], 1.0, 0.0), &missions, &dvector![0.0, 0.0]).unwrap();
        assert_eq!(a.entries(), &[1.0, 0.0]);
        let a = alpha_baseline(&params(vec![0.5], 1.0, 0.0), &missions, &dvector![2.0, 0.0]).unwrap();
        assert_abs_diff_eq!(a.entries()[1], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(a.entries()[0], 0.5, epsilon = 1e-15);
        let a = alpha_baseline(&params(vec![0.5], 4.0, 0.0), &missions, &dvector![0.5, 0.0]).unwrap();
        assert_abs_diff_eq!(a.entries()[1], 0.0625, epsilon = 1e-15);
    }

    #[test]
    fn baseline_rejects_negative_primary_weight() {
        let missions = MissionSet::new(vec![dvector![0.0, 0.0], dvector![4.0, 0.0]], 0.5).unwrap();
        let r = alpha_baseline(&params(vec![5.0], 1.0, 0.0), &missions, &dvector![2.0, 0.0]);
        assert!(matches!(r, Err(Error::InfeasibleParameters(_))));
    }

    #[test]
    fn transitional_examples() {
        let ab = WeightVector::new(vec![0.9, 0.1]).unwrap();
        let ap = WeightVector::new(vec![0.5, 0.5]).unwrap();
        let j = VectorCost::new(vec![1.0, 10.0]).unwrap();
        assert_eq!(alpha_transitional(&ab, &ap, &j).unwrap(), ab);
        assert_eq!(alpha_transitional(&ab, &ab, &j).unwrap(), ab);
        let ab2 = WeightVector::new(vec![0.5, 0.5]).unwrap();
        let ap2 = WeightVector::new(vec![0.9, 0.1]).unwrap();
        let j2 = VectorCost::new(vec![10.0, 1.0]).unwrap();
        assert_eq!(alpha_transitional(&ab2, &ap2, &j2).unwrap(), ab2);
        // previous weights win when strictly cheaper
        assert_eq!(alpha_transitional(&ab2, &ap2, &j).unwrap(), ap2);
        let short = VectorCost::new(vec![1.0]).unwrap();
        assert!(alpha_transitional(&ab, &ap, &short).is_err());
    }

    #[test]
    fn grid_points_hit_bounds() {
        let b = BoxSet::from_slices(&[-10.0], &[2.0]).unwrap();
        let g = Grid::new(&b, 61, "input").unwrap();
        let pts = g.points();
        assert_eq!(pts.len(), 61);
        assert_eq!(pts[0], -10.0);
        assert_eq!(pts[50], 0.0);
        assert_eq!(pts[60], 2.0);
        assert!(Grid::new(&b, 1, "input").is_err());
    }

    #[test]
    fn degenerate_single_destination_has_nonpositive_bound() {
        // without a running state term, u = 0 leaves every cost unchanged
        let model = single_integrator();
        let missions = MissionSet::new(vec![dvector![0.0, 0.0]], 0.5).unwrap();
        let cost = QuadraticCost::new(
            DMatrix::zeros(2, 2),
            DMatrix::identity(2, 2) * 0.1,
            DMatrix::identity(2, 2) * 0.1,
        )
        .unwrap();
        let grid = GridSpec {
            input_resolution: 61,
            state_resolution: 13,
        };
        let (u, p) = compute_uhat_p(&model, &cost, &missions, &grid).unwrap();
        assert!(p <= 0.0, "P = {p}");
        assert_eq!(u, dvector![0.0, 0.0]);
        // with the running state term the bound at u = 0 is its largest value 1e-5 * 200
        let at_zero = increment_bound_at(&model, &cost2(), &missions, &grid, &dvector![0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(at_zero, 2e-3, epsilon = 1e-12);
    }

    #[test]
    fn k1_and_z_for_single_integrator() {
        let model = single_integrator();
        let missions = MissionSet::new(vec![dvector![0.0, 0.0], dvector![3.0, 9.0]], 0.5).unwrap();
        let grid = GridSpec::default_for(2);
        let (k1, z) = compute_k1_z(&model, &cost2(), &missions, &params(vec![0.1], 1.0, -0.1), &grid).unwrap();
        assert_abs_diff_eq!(z, 200f64.sqrt(), epsilon = 1e-12);
        assert!(k1 < 0.0);
        let (k1, _) = compute_k1_z(&model, &cost2(), &missions, &params(vec![0.1], 1.0, 0.0), &grid).unwrap();
        assert!(k1 >= 0.0);
    }

    #[test]
    fn k1_matches_direct_formula() {
        // with u = -0.1 x the increment is x'x (1e-5 + 0.001 + 0.081 - 0.1) = -0.01799 |x|^2
        let model = single_integrator();
        let missions = MissionSet::new(vec![dvector![0.0, 0.0]], 0.5).unwrap();
        let mut p = params(vec![], 1.0, -0.1);
        p.delta = 3.0;
        let grid = GridSpec {
            input_resolution: 21,
            state_resolution: 21,
        };
        let (k1, _) = compute_k1_z(&model, &cost2(), &missions, &p, &grid).unwrap();
        let states = outside_ball(&model, &missions, 3.0, &grid).unwrap();
        let rmin = states.chunks_exact(2).map(|x| x[0] * x[0] + x[1] * x[1]).fold(f64::INFINITY, f64::min);
        assert_abs_diff_eq!(k1, -0.01799 * rmin, epsilon = 1e-12);
    }

    #[test]
    fn beta_bounds() {
        let model = single_integrator();
        let missions = MissionSet::new(vec![dvector![0.0, 0.0], dvector![3.0, 9.0]], 0.5).unwrap();
        let grid = GridSpec::default_for(2);
        let beta = compute_beta(&model, &missions, &params(vec![1e-12], 1.0, -0.1), &grid).unwrap();
        assert!(beta > 1.0 - 1e-9);
        let z = 200f64.sqrt();
        let mu = 20.0;
        let beta = compute_beta(&model, &missions, &params(vec![0.5], mu, -0.1), &grid).unwrap();
        assert!(beta >= 1.0 - 0.5 * z / mu - 1e-12);
    }

    #[test]
    fn grid_entirely_inside_ball_is_an_error() {
        let xs = BoxSet::from_slices(&[-1.0, -1.0], &[1.0, 1.0]).unwrap();
        let us = BoxSet::from_slices(&[-1.0, -1.0], &[1.0, 1.0]).unwrap();
        let model = PlantModel::linear(DMatrix::identity(2, 2), DMatrix::identity(2, 2), xs, us).unwrap();
        let missions = MissionSet::new(vec![dvector![0.0, 0.0]], 0.5).unwrap();
        let mut p = params(vec![], 1.0, -0.1);
        p.delta = 2.0;
        assert!(matches!(
            compute_k1_z(&model, &cost2(), &missions, &p, &GridSpec::default_for(2)),
            Err(Error::EmptyGrid(_))
        ));
    }

    #[test]
    fn condition_fourteen_cases() {
        assert_eq!(required_beta(-0.1, -1.0), 0.0);
        assert_abs_diff_eq!(required_beta(0.56, -0.56 * 0.35 / 0.65), 0.65, epsilon = 1e-12);
        assert_eq!(required_beta(0.5, 0.1), 1.0);
    }

    #[test]
    fn certificate_single_integrator() {
        let model = single_integrator();
        let missions =
            MissionSet::new(vec![dvector![0.0, 0.0], dvector![3.0, 9.0], dvector![1.0, 5.0]], 0.5).unwrap();
        let grid = GridSpec {
            input_resolution: 61,
            state_resolution: 21,
        };
        let mut p = params(vec![0.45, 0.45], 14.2, -0.1);
        p.delta = 3.0;
        let cert = certify(&model, &cost2(), &missions, &p, &grid).unwrap();
        assert!(cert.feedback_decreases);
        assert!(cert.beta_positive);
        assert!(cert.beta_sufficient);
        assert!(cert.passed());
        assert_eq!(cert.u_hat, vec![0.0, 0.0]);
        assert_eq!(cert.p, cert.p_configured);
        assert!(cert.beta >= cert.beta_required);
        // deterministic
        assert_eq!(certify(&model, &cost2(), &missions, &p, &grid).unwrap(), cert);
    }

    #[test]
    fn search_params_meets_margin() {
        let model = single_integrator();
        let missions =
            MissionSet::new(vec![dvector![0.0, 0.0], dvector![3.0, 9.0], dvector![1.0, 5.0]], 0.5).unwrap();
        let grid = GridSpec {
            input_resolution: 61,
            state_resolution: 21,
        };
        let gain = DMatrix::identity(2, 2) * -0.1;
        let (params, cert) = search_params(&model, &cost2(), &missions, 3.0, &gain, &grid, 0.01, None).unwrap();
        assert_abs_diff_eq!(params.mu, cert.z, epsilon = 1e-12);
        let expect = params.mu * (1.0 - cert.beta_required - 0.01) / (2.0 * cert.z);
        assert_abs_diff_eq!(params.gamma[0], expect, epsilon = 1e-12);
        assert!(cert.beta >= cert.beta_required + 0.01 - 1e-12);
        assert!(cert.passed());
        assert!(search_params(&model, &cost2(), &missions, 3.0, &DMatrix::zeros(2, 2), &grid, 0.01, None).is_err());
    }

    #[test]
    fn params_validation() {
        let model = single_integrator();
        let missions = MissionSet::new(vec![dvector![0.0, 0.0], dvector![3.0, 9.0]], 0.5).unwrap();
        let mut p = params(vec![0.1], 1.0, -0.1);
        assert!(p.validate(&model, &missions).is_ok());
        p.delta = 3.0;
        // ball of radius 3 around the origin leaves x >= -2; reported, not rejected
        assert!(p.validate(&model, &missions).is_ok());
        assert!(!p.ball_within_box(&model, &missions));
        p.delta = 0.0;
        assert!(p.validate(&model, &missions).is_err());
        p.delta = 1.0;
        let mut p = params(vec![0.1, 0.2], 1.0, -0.1);
        assert!(p.validate(&model, &missions).is_err());
        p.gamma = vec![0.1];
        p.u_hat = dvector![5.0, 0.0];
        assert!(p.validate(&model, &missions).is_err());
    }
}
