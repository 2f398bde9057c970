//! Backup-plan constrained model predictive control.
//!
//! A multi-horizon, multi-objective receding-horizon controller that keeps
//! alternative destinations reachable while flying toward a primary one,
//! solved by path-integral sampling over every independent input element.

pub mod certify;
pub mod controller;
pub mod error;
pub mod mission;
pub mod multihorizon;
pub mod plant;
pub mod solver;

pub use certify::{
    alpha_baseline, alpha_transitional, certify, compute_beta, compute_k1_z, compute_uhat_p, search_params, Certificate,
    GridSpec, StabilityParams, WeightVector,
};
pub use controller::{value, Controller, ControllerState, Phase, StepRecord};
pub use error::{Error, Result};
pub use mission::{distance, CostPairing, MissionSet, QuadraticCost, VectorCost};
pub use multihorizon::{primary_final_state, rollout_all, total_dof, MultiHorizonInput, MultiHorizonTrajectory};
pub use plant::{BoxSet, Dynamics, InputVector, LinearDynamics, LinearFeedback, PlantModel, StateVector};
pub use solver::{gibbs_weights, Solver, SolverParams};
