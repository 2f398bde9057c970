//! Path-integral sampling solver over multi-horizon inputs.
//!
//! Each call perturbs every independent element of the candidate `U_s`
//! with Gaussian noise, scores the perturbed inputs with the weighted vector
//! cost, and returns the softmin-weighted average perturbation added to
//! `U_s`. Sample `q` draws from its own ChaCha stream keyed by
//! `(base_seed, stream)`, so results do not depend on thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certify::WeightVector;
use crate::error::{check_dim, Error, Result};
use crate::mission::{MissionSet, QuadraticCost};
use crate::multihorizon::{rollout_branches_into, rollout_primary_into, MultiHorizonInput, MultiHorizonTrajectory};
use crate::plant::{PlantModel, StateVector};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverParams {
    pub samples: usize,
    /// Noise standard deviation per input channel.
    pub sigma: Vec<f64>,
    pub lambda: f64,
    pub base_seed: u64,
    /// Cost per unit of state-box violation per simulated state.
    pub state_penalty: f64,
    /// Only states up to this many steps ahead are penalized; all of them when absent.
    #[serde(default)]
    pub penalty_horizon: Option<usize>,
    /// Adds `λ uᵀΣ⁻¹ε` to every sample cost.
    #[serde(default)]
    pub noise_cost: bool,
}

impl SolverParams {
    pub fn validate(&self, input_dim: usize) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::InvalidParameter("sample count must be at least 1".into()));
        }
        check_dim("sigma entries", input_dim, self.sigma.len())?;
        if self.sigma.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma must be positive, got {:?}", self.sigma)));
        }
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidParameter(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(self.state_penalty >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "state penalty must be nonnegative, got {}",
                self.state_penalty
            )));
        }
        if self.penalty_horizon == Some(0) {
            return Err(Error::InvalidParameter("penalty horizon must be at least 1".into()));
        }
        Ok(())
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn sample_rng(base_seed: u64, stream: u64, q: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(base_seed) ^ splitmix64(stream.wrapping_add(0x5851_f42d)));
    rng.set_stream(q as u64);
    rng
}

fn fill_noise(params: &SolverParams, stream: u64, q: usize, out: &mut [f64]) {
    let mut rng = sample_rng(params.base_seed, stream, q);
    let nu = params.sigma.len();
    for (k, e) in out.iter_mut().enumerate() {
        let z: f64 = StandardNormal.sample(&mut rng);
        *e = z * params.sigma[k % nu];
    }
}

/// Noise vector of sample `q` for the given shape; deterministic in
/// `(base_seed, stream, q)`.
pub fn sample_noise(params: &SolverParams, template: &MultiHorizonInput, stream: u64, q: usize) -> Vec<f64> {
    let mut out = vec![0.0; template.dof()];
    fill_noise(params, stream, q, &mut out);
    out
}

/// Softmin weights `exp(-(c - min c)/λ)`, normalized.
pub fn gibbs_weights(costs: &[f64], lambda: f64) -> Result<Vec<f64>> {
    if costs.is_empty() {
        return Err(Error::InvalidParameter("no sample costs".into()));
    }
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter(format!("lambda must be positive, got {lambda}")));
    }
    if costs.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite("sample cost"));
    }
    let min = costs.iter().copied().fold(f64::INFINITY, f64::min);
    let mut w: Vec<f64> = costs.iter().map(|c| (-(c - min) / lambda).exp()).collect();
    let total: f64 = w.iter().sum();
    for v in &mut w {
        *v /= total;
    }
    Ok(w)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleEvaluation {
    pub sample_index: usize,
    pub weighted_cost: f64,
    pub gibbs_weight: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveReport {
    pub input: MultiHorizonInput,
    pub samples: Vec<SampleEvaluation>,
}

/// Per-worker scratch space.
struct Workspace {
    perturbed: MultiHorizonInput,
    traj: MultiHorizonTrajectory,
}

#[derive(Clone, Debug)]
pub struct Solver {
    model: PlantModel,
    cost: QuadraticCost,
    missions: MissionSet,
    params: SolverParams,
}

impl Solver {
    pub fn new(model: PlantModel, cost: QuadraticCost, missions: MissionSet, params: SolverParams) -> Result<Self> {
        params.validate(model.input_dim())?;
        check_dim("cost state dimension", model.state_dim(), cost.state_dim())?;
        check_dim("cost input dimension", model.input_dim(), cost.input_dim())?;
        check_dim("destination dimension", model.state_dim(), missions.state_dim())?;
        Ok(Self {
            model,
            cost,
            missions,
            params,
        })
    }

    pub fn model(&self) -> &PlantModel {
        &self.model
    }

    pub fn cost(&self) -> &QuadraticCost {
        &self.cost
    }

    pub fn missions(&self) -> &MissionSet {
        &self.missions
    }

    pub fn params(&self) -> &SolverParams {
        &self.params
    }

    fn check_inputs(&self, x: &StateVector, alpha: &WeightVector, u_s: &MultiHorizonInput) -> Result<()> {
        check_dim("state", self.model.state_dim(), x.len())?;
        check_dim("input dimension", self.model.input_dim(), u_s.input_dim())?;
        check_dim("alternatives", self.missions.alternatives(), u_s.alternatives())?;
        check_dim("weights", self.missions.alternatives() + 1, alpha.len())
    }

    fn workspace(&self, u_s: &MultiHorizonInput) -> Workspace {
        Workspace {
            perturbed: u_s.clone(),
            traj: MultiHorizonTrajectory::with_shape(u_s.horizon(), u_s.alternatives(), self.model.state_dim()),
        }
    }

    /// Scores one perturbation: clamp `U_s + ε` to the input box, simulate,
    /// and add the weighted cost, the state-box penalty and (optionally) the
    /// noise cost. Branch states of alternatives with zero weight are neither
    /// simulated nor penalized.
    fn score(&self, x: &[f64], alpha: &[f64], u_s: &MultiHorizonInput, noise: &[f64], ws: &mut Workspace) -> f64 {
        let nu = u_s.input_dim();
        for ((dst, base), e) in ws.perturbed.as_mut_slice().iter_mut().zip(u_s.as_slice()).zip(noise) {
            *dst = base + e;
        }
        ws.perturbed.clamp_to(self.model.input_box());
        rollout_primary_into(&self.model, x, &ws.perturbed, &mut ws.traj);
        let branches = alpha[1..].iter().any(|a| *a != 0.0);
        if branches {
            rollout_branches_into(&self.model, &ws.perturbed, &mut ws.traj);
        }
        let mut total = self
            .cost
            .weighted_cost_from_trajectory(&self.missions, &ws.perturbed, &ws.traj, alpha);

        if self.params.state_penalty > 0.0 {
            total += self.params.state_penalty * self.violation(alpha, &ws.traj);
        }

        if self.params.noise_cost {
            let quad: f64 = u_s
                .as_slice()
                .iter()
                .zip(noise)
                .enumerate()
                .map(|(k, (u, e))| {
                    let s = self.params.sigma[k % nu];
                    u * e / (s * s)
                })
                .sum();
            total += self.params.lambda * quad;
        }
        total
    }

    /// Summed box violation of the penalized states: the primary branch and
    /// the branches of alternatives with nonzero weight, cut at the penalty horizon.
    fn violation(&self, alpha: &[f64], traj: &MultiHorizonTrajectory) -> f64 {
        let sb = self.model.state_box();
        let nx = self.model.state_dim();
        let n = traj.horizon();
        let reach = self.params.penalty_horizon.unwrap_or(n).min(n);
        let mut v: f64 = traj.primary_flat()[nx..(reach + 1) * nx]
            .chunks_exact(nx)
            .map(|s| sb.violation(s))
            .sum();
        for (i, a) in alpha.iter().enumerate().skip(1) {
            if *a == 0.0 {
                continue;
            }
            if reach == n {
                v += traj.alternative_states(i).chunks_exact(nx).map(|s| sb.violation(s)).sum::<f64>();
                continue;
            }
            // tail (i, p) holds the states at steps p+2 ..= N
            for p in 0..n.saturating_sub(1) {
                if p + 2 > reach {
                    break;
                }
                let states = traj.branch_states(i, p).expect("branch index within shape");
                v += states[..(reach - p - 1) * nx].chunks_exact(nx).map(|s| sb.violation(s)).sum::<f64>();
            }
        }
        v
    }

    /// Cost of a single perturbation of `U_s`.
    pub fn evaluate_sample(
        &self,
        x: &StateVector,
        alpha: &WeightVector,
        u_s: &MultiHorizonInput,
        noise: &[f64],
    ) -> Result<f64> {
        self.check_inputs(x, alpha, u_s)?;
        check_dim("noise length", u_s.dof(), noise.len())?;
        let mut ws = self.workspace(u_s);
        Ok(self.score(x.as_slice(), alpha.entries(), u_s, noise, &mut ws))
    }

    /// One solve; `stream` selects the noise streams (typically derived from the step index).
    pub fn solve(&self, x: &StateVector, alpha: &WeightVector, u_s: &MultiHorizonInput, stream: u64) -> Result<MultiHorizonInput> {
        Ok(self.solve_detailed(x, alpha, u_s, stream)?.input)
    }

    pub fn solve_detailed(
        &self,
        x: &StateVector,
        alpha: &WeightVector,
        u_s: &MultiHorizonInput,
        stream: u64,
    ) -> Result<SolveReport> {
        self.check_inputs(x, alpha, u_s)?;
        let dof = u_s.dof();
        let m = self.params.samples;
        let mut noise = vec![0.0; m * dof];
        let mut costs = vec![0.0; m];
        let xs = x.as_slice();
        let a = alpha.entries();
        noise
            .par_chunks_mut(dof)
            .zip(costs.par_iter_mut())
            .enumerate()
            .for_each_init(
                || self.workspace(u_s),
                |ws, (q, (eps, c))| {
                    fill_noise(&self.params, stream, q, eps);
                    *c = self.score(xs, a, u_s, eps, ws);
                },
            );

        let weights = gibbs_weights(&costs, self.params.lambda)?;
        let mut out = u_s.clone();
        let acc = out.as_mut_slice();
        for (w, eps) in weights.iter().zip(noise.chunks_exact(dof)) {
            if *w == 0.0 {
                continue;
            }
            for (o, e) in acc.iter_mut().zip(eps) {
                *o += w * e;
            }
        }
        out.clamp_to(self.model.input_box());
        if out.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("solver output"));
        }
        let samples = costs
            .iter()
            .zip(&weights)
            .enumerate()
            .map(|(q, (c, w))| SampleEvaluation {
                sample_index: q,
                weighted_cost: *c,
                gibbs_weight: *w,
            })
            .collect();
        Ok(SolveReport { input: out, samples })
    }
}
