//! Experiment configuration files and their translation into core objects.

use std::path::Path;

use backup_mpc::{
    compute_uhat_p, BoxSet, Controller, CostPairing, GridSpec, MissionSet, PlantModel, QuadraticCost, Solver,
    SolverParams, StabilityParams, StateVector,
};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub horizon: usize,
    pub max_steps: usize,
    /// Consecutive out-of-box steps tolerated before a run is declared divergent.
    #[serde(default = "default_divergence_steps")]
    pub divergence_steps: usize,
    pub x0: Vec<f64>,
    pub plant: PlantConfig,
    pub missions: MissionConfig,
    pub cost: CostConfig,
    pub stability: StabilityConfig,
    pub solver: SolverConfig,
    #[serde(default)]
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub failure: Option<FailureConfig>,
    #[serde(default)]
    pub bench: Option<BenchConfig>,
}

fn default_divergence_steps() -> usize {
    10
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantConfig {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub state_lower: Vec<f64>,
    pub state_upper: Vec<f64>,
    pub input_lower: Vec<f64>,
    pub input_upper: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MissionConfig {
    /// Primary destination first.
    pub destinations: Vec<Vec<f64>>,
    #[serde(default = "default_completion_tol")]
    pub completion_tol: f64,
}

fn default_completion_tol() -> f64 {
    0.5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostConfig {
    pub q1: Vec<Vec<f64>>,
    pub q2: Vec<Vec<f64>>,
    pub r: Vec<Vec<f64>>,
    #[serde(default)]
    pub pairing: CostPairing,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityConfig {
    pub delta: f64,
    pub gamma: Vec<f64>,
    pub mu: f64,
    pub k: Vec<Vec<f64>>,
    /// Omitted means the grid optimum is used.
    #[serde(default)]
    pub u_hat: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub samples: usize,
    pub sigma: Vec<f64>,
    pub lambda: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_state_penalty")]
    pub state_penalty: f64,
    /// Penalize only states this many steps ahead; every predicted state when absent.
    #[serde(default)]
    pub penalty_horizon: Option<usize>,
    #[serde(default)]
    pub noise_cost: bool,
}

fn default_state_penalty() -> f64 {
    1e6
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub input_resolution: usize,
    pub state_resolution: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FailureConfig {
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default = "default_failure_min")]
    pub failure_time_min: usize,
    #[serde(default = "default_failure_max")]
    pub failure_time_max: usize,
    pub energy_budget: f64,
    #[serde(default = "default_post_failure_cap")]
    pub post_failure_step_cap: usize,
    /// Sample count for the failure runs; defaults to the solver's.
    #[serde(default)]
    pub samples: Option<usize>,
}

fn default_runs() -> usize {
    50
}
fn default_failure_min() -> usize {
    1
}
fn default_failure_max() -> usize {
    20
}
fn default_post_failure_cap() -> usize {
    100
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub horizons: Vec<usize>,
    pub samples: Vec<usize>,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
}

fn default_repeats() -> usize {
    10
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|source| HarnessError::Parse {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn grid_spec(&self) -> GridSpec {
        match self.grid {
            Some(g) => GridSpec {
                input_resolution: g.input_resolution,
                state_resolution: g.state_resolution,
            },
            None => GridSpec::default_for(self.x0.len()),
        }
    }
}

fn matrix(name: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map(Vec::len).unwrap_or(0);
    if nrows == 0 || ncols == 0 {
        return Err(HarnessError::Config(format!("{name} is empty")));
    }
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(HarnessError::Config(format!("{name} has rows of different lengths")));
    }
    Ok(DMatrix::from_row_iterator(nrows, ncols, rows.iter().flatten().copied()))
}

fn config_err(context: &str) -> impl FnOnce(backup_mpc::Error) -> HarnessError + '_ {
    move |e| HarnessError::Config(format!("{context}: {e}"))
}

/// Everything needed to run the controller, built and validated from a config.
#[derive(Clone, Debug)]
pub struct Problem {
    pub config: ExperimentConfig,
    pub model: PlantModel,
    pub cost: QuadraticCost,
    pub missions: MissionSet,
    pub stability: StabilityParams,
    pub solver: SolverParams,
    pub grid: GridSpec,
    pub x0: StateVector,
    pub horizon: usize,
}

impl Problem {
    pub fn from_config(config: &ExperimentConfig) -> Result<Self> {
        let p = &config.plant;
        let state_box = BoxSet::from_slices(&p.state_lower, &p.state_upper).map_err(config_err("state box"))?;
        let input_box = BoxSet::from_slices(&p.input_lower, &p.input_upper).map_err(config_err("input box"))?;
        let model = PlantModel::linear(matrix("A", &p.a)?, matrix("B", &p.b)?, state_box, input_box)
            .map_err(config_err("plant"))?;

        let c = &config.cost;
        let cost = QuadraticCost::new(matrix("Q1", &c.q1)?, matrix("Q2", &c.q2)?, matrix("R", &c.r)?)
            .map_err(config_err("cost"))?
            .with_pairing(c.pairing);

        let destinations = config.missions.destinations.iter().map(|d| DVector::from_column_slice(d)).collect();
        let missions = MissionSet::new(destinations, config.missions.completion_tol).map_err(config_err("missions"))?;
        if missions.state_dim() != model.state_dim() {
            return Err(HarnessError::Config("destination dimension does not match the plant".into()));
        }
        missions.check_within(&model).map_err(config_err("missions"))?;

        let x0 = DVector::from_column_slice(&config.x0);
        if x0.len() != model.state_dim() {
            return Err(HarnessError::Config("x0 dimension does not match the plant".into()));
        }
        if !model.state_box().contains(&x0)? {
            return Err(HarnessError::Config("x0 lies outside the state box".into()));
        }

        let grid = config.grid_spec();
        let s = &config.stability;
        let u_hat = match &s.u_hat {
            Some(u) => DVector::from_column_slice(u),
            None => compute_uhat_p(&model, &cost, &missions, &grid).map_err(config_err("u_hat"))?.0,
        };
        let stability = StabilityParams {
            delta: s.delta,
            gamma: s.gamma.clone(),
            mu: s.mu,
            gain: matrix("K", &s.k)?,
            u_hat,
        };
        stability.validate(&model, &missions).map_err(config_err("stability"))?;

        let sc = &config.solver;
        let solver = SolverParams {
            samples: sc.samples,
            sigma: sc.sigma.clone(),
            lambda: sc.lambda,
            base_seed: sc.seed,
            state_penalty: sc.state_penalty,
            penalty_horizon: sc.penalty_horizon,
            noise_cost: sc.noise_cost,
        };
        solver.validate(model.input_dim()).map_err(config_err("solver"))?;
        let horizon = config.horizon;
        if horizon == 0 || (missions.alternatives() > 0 && horizon < 2) {
            return Err(HarnessError::Config(format!("horizon {horizon} is too short")));
        }
        if config.max_steps == 0 {
            return Err(HarnessError::Config("max_steps must be at least 1".into()));
        }

        Ok(Self {
            config: config.clone(),
            model,
            cost,
            missions,
            stability,
            solver,
            grid,
            x0,
            horizon,
        })
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.solver.base_seed = seed;
        self
    }

    pub fn with_samples(mut self, samples: usize) -> Result<Self> {
        if samples == 0 {
            return Err(HarnessError::Config("sample count must be at least 1".into()));
        }
        self.solver.samples = samples;
        Ok(self)
    }

    pub fn with_horizon(mut self, horizon: usize) -> Result<Self> {
        if horizon == 0 || (self.missions.alternatives() > 0 && horizon < 2) {
            return Err(HarnessError::Config(format!("horizon {horizon} is too short")));
        }
        self.horizon = horizon;
        Ok(self)
    }

    /// Same problem with every alternative weight forced to zero.
    pub fn with_zero_gamma(mut self) -> Self {
        self.stability.gamma = vec![0.0; self.missions.alternatives()];
        self
    }

    /// Single-objective problem toward the primary destination only.
    pub fn primary_only(&self) -> Result<Self> {
        self.single_destination(self.missions.primary().clone(), self.stability.u_hat.clone())
    }

    /// Single-objective problem toward `destination`, with the feedback
    /// centered there and the given fallback input.
    pub fn single_destination(&self, destination: StateVector, u_hat: DVector<f64>) -> Result<Self> {
        let mut out = self.clone();
        out.missions = MissionSet::new(vec![destination], self.missions.completion_tol())?;
        out.stability.gamma = Vec::new();
        out.stability.u_hat = self.model.input_box().clamp(&u_hat)?;
        Ok(out)
    }

    pub fn build_solver(&self) -> Result<Solver> {
        Ok(Solver::new(
            self.model.clone(),
            self.cost.clone(),
            self.missions.clone(),
            self.solver.clone(),
        )?)
    }

    pub fn controller(&self) -> Result<Controller> {
        Ok(Controller::new(self.build_solver()?, self.stability.clone(), self.horizon)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "tiny"
horizon = 3
max_steps = 20
x0 = [5.0, 9.0]

[plant]
a = [[1.0, 0.0], [0.0, 1.0]]
b = [[1.0, 0.0], [0.0, 1.0]]
state_lower = [-2.0, -2.0]
state_upper = [10.0, 10.0]
input_lower = [-10.0, -10.0]
input_upper = [2.0, 2.0]

[missions]
destinations = [[0.0, 0.0], [3.0, 9.0]]

[cost]
q1 = [[1e-5, 0.0], [0.0, 1e-5]]
q2 = [[0.1, 0.0], [0.0, 0.1]]
r = [[0.1, 0.0], [0.0, 0.1]]

[stability]
delta = 3.0
gamma = [0.4]
mu = 14.2
k = [[-0.1, 0.0], [0.0, -0.1]]
u_hat = [0.0, 0.0]

[solver]
samples = 100
sigma = [1.0, 1.0]
lambda = 1.0
"#;

    #[test]
    fn parses_minimal_config() {
        let cfg: ExperimentConfig = toml::from_str(MINIMAL).unwrap();
        let p = Problem::from_config(&cfg).unwrap();
        assert_eq!(p.missions.alternatives(), 1);
        assert_eq!(p.solver.state_penalty, 1e6);
        assert_eq!(p.cost.pairing(), CostPairing::AfterInput);
        assert_eq!(p.grid, GridSpec::default_for(2));
        assert!(p.controller().is_ok());
    }

    #[test]
    fn rejects_inconsistent_configs() {
        let bad = MINIMAL.replace("gamma = [0.4]", "gamma = [0.4, 0.1]");
        let cfg: ExperimentConfig = toml::from_str(&bad).unwrap();
        assert!(matches!(Problem::from_config(&cfg), Err(HarnessError::Config(_))));

        let bad = MINIMAL.replace("x0 = [5.0, 9.0]", "x0 = [15.0, 9.0]");
        let cfg: ExperimentConfig = toml::from_str(&bad).unwrap();
        assert!(Problem::from_config(&cfg).is_err());

        let bad = MINIMAL.replace("a = [[1.0, 0.0], [0.0, 1.0]]", "a = [[1.0, 0.0], [0.0]]");
        let cfg: ExperimentConfig = toml::from_str(&bad).unwrap();
        assert!(Problem::from_config(&cfg).is_err());

        let unknown = MINIMAL.replace("[solver]", "[solver]\nbogus = 1");
        assert!(toml::from_str::<ExperimentConfig>(&unknown).is_err());
    }

    #[test]
    fn computes_u_hat_when_omitted() {
        let text = MINIMAL.replace("u_hat = [0.0, 0.0]\n", "");
        let mut cfg: ExperimentConfig = toml::from_str(&text).unwrap();
        cfg.grid = Some(GridConfig {
            input_resolution: 61,
            state_resolution: 11,
        });
        let p = Problem::from_config(&cfg).unwrap();
        assert_eq!(p.stability.u_hat.as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn missing_file_is_a_config_error() {
        let err = ExperimentConfig::load(Path::new("/nonexistent/cfg.toml")).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
