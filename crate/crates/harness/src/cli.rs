//! Command-line front end.

use std::path::{Path, PathBuf};

use backup_mpc::{certify, search_params, Certificate, Error as CoreError};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::bench::bench;
use crate::config::{ExperimentConfig, Problem};
use crate::error::{HarnessError, Result};
use crate::failure::{run_failure_experiment, Arm};
use crate::output::{ensure_dir, write_bench, write_failure_runs, write_failure_summary, write_json, write_trajectory};
use crate::sim::{mean_alternative_distance, run_closed_loop};

#[derive(Debug, Parser)]
#[command(name = "bpmpc", version, about = "Backup-plan constrained MPC experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fly the controller from x0 to the primary destination.
    Simulate(Common),
    /// Random-failure experiment for the proposed and baseline controllers.
    FailureTest {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = ArmChoice::Both)]
        arm: ArmChoice,
    },
    /// Evaluate the stability certificate of the configured parameters.
    Certify(Common),
    /// Pick uniform gamma and mu that satisfy the certificate.
    SearchParams {
        #[command(flatten)]
        common: Common,
        /// Slack kept below 1 - beta_required.
        #[arg(long, default_value_t = 0.05)]
        margin: f64,
        /// Fixed mu; defaults to the largest state distance outside the ball.
        #[arg(long)]
        mu: Option<f64>,
    },
    /// Solve time and cost over horizons and sample counts.
    Bench(Common),
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Override the sample count M.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Override the horizon N.
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Run even if the certificate fails.
    #[arg(long)]
    pub force: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ArmChoice {
    Both,
    Proposed,
    Baseline,
}

impl Common {
    fn problem(&self) -> Result<Problem> {
        let config = ExperimentConfig::load(&self.config)?;
        let mut problem = Problem::from_config(&config)?;
        if let Some(seed) = self.seed {
            problem = problem.with_seed(seed);
        }
        if let Some(m) = self.samples {
            problem = problem.with_samples(m)?;
        }
        if let Some(n) = self.horizon {
            problem = problem.with_horizon(n)?;
        }
        Ok(problem)
    }
}

fn run_certificate(problem: &Problem) -> Result<Certificate> {
    Ok(certify(
        &problem.model,
        &problem.cost,
        &problem.missions,
        &problem.stability,
        &problem.grid,
    )?)
}

/// Writes the certificate and enforces it unless `force` is set.
fn gate(problem: &Problem, out: &Path, force: bool) -> Result<Certificate> {
    let cert = run_certificate(problem)?;
    write_json(&out.join("certificate.json"), &cert)?;
    if !cert.passed() {
        let reason = cert.notes.join("; ");
        if !force {
            return Err(HarnessError::CertificationFailed(reason));
        }
        eprintln!("warning: certificate failed, continuing because of --force: {reason}");
    }
    Ok(cert)
}

#[derive(Debug, Serialize)]
struct SimulationSummary<'a> {
    name: &'a str,
    seed: u64,
    samples: usize,
    horizon: usize,
    steps: usize,
    converged: bool,
    final_state: Vec<f64>,
    final_distance: f64,
    dominance_fraction: f64,
    energy: f64,
    mean_alternative_distance: Option<f64>,
    certified: bool,
}

fn simulate(c: &Common) -> Result<()> {
    let problem = c.problem()?;
    ensure_dir(&c.out)?;
    let cert = gate(&problem, &c.out, c.force)?;
    let flight = run_closed_loop(&problem)?;
    write_trajectory(&c.out.join("trajectory.csv"), &flight.records)?;
    let final_state = flight.final_state();
    let summary = SimulationSummary {
        name: &problem.config.name,
        seed: problem.solver.base_seed,
        samples: problem.solver.samples,
        horizon: problem.horizon,
        steps: flight.records.len(),
        converged: flight.converged,
        final_state: final_state.as_slice().to_vec(),
        final_distance: problem.missions.distance_to_primary(final_state)?,
        dominance_fraction: flight.dominance_fraction(),
        energy: flight.energy(),
        mean_alternative_distance: mean_alternative_distance(&problem, &flight.states).ok(),
        certified: cert.passed(),
    };
    write_json(&c.out.join("summary.json"), &summary)?;
    println!(
        "{}: {} steps, converged = {}, final distance {:.4}, dominance {:.3}",
        summary.name, summary.steps, summary.converged, summary.final_distance, summary.dominance_fraction
    );
    Ok(())
}

fn failure_test(c: &Common, arm: ArmChoice) -> Result<()> {
    let problem = c.problem()?;
    ensure_dir(&c.out)?;
    gate(&problem, &c.out, c.force)?;
    let arms: &[Arm] = match arm {
        ArmChoice::Both => &[Arm::Proposed, Arm::Baseline],
        ArmChoice::Proposed => &[Arm::Proposed],
        ArmChoice::Baseline => &[Arm::Baseline],
    };
    let experiments = arms
        .iter()
        .map(|&a| run_failure_experiment(&problem, a))
        .collect::<Result<Vec<_>>>()?;
    write_failure_runs(&c.out.join("failure_runs.csv"), &experiments)?;
    let summaries: Vec<_> = experiments.iter().map(|e| e.summary.clone()).collect();
    write_failure_summary(&c.out.join("failure_summary.csv"), &summaries)?;
    write_json(&c.out.join("failure_summary.json"), &summaries)?;
    for s in &summaries {
        println!(
            "{}: energy after failure {:.4} ± {:.4}, total {:.4} ± {:.4}, margin {:.3}",
            s.arm.name(),
            s.energy_after_failure.mean,
            s.energy_after_failure.stdev,
            s.total_energy.mean,
            s.total_energy.stdev,
            s.margin
        );
    }
    Ok(())
}

fn certify_cmd(c: &Common) -> Result<()> {
    let problem = c.problem()?;
    ensure_dir(&c.out)?;
    let cert = run_certificate(&problem)?;
    write_json(&c.out.join("certificate.json"), &cert)?;
    println!(
        "P = {:.6} at u_hat = {:?}, k1 = {:.6}, z = {:.4}, beta = {:.4}, beta_required = {:.4}, passed = {}",
        cert.p,
        cert.u_hat,
        cert.k1,
        cert.z,
        cert.beta,
        cert.beta_required,
        cert.passed()
    );
    if !cert.passed() && !c.force {
        return Err(HarnessError::CertificationFailed(cert.notes.join("; ")));
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct SearchResult {
    delta: f64,
    gamma: Vec<f64>,
    mu: f64,
    u_hat: Vec<f64>,
    margin: f64,
}

fn search_params_cmd(c: &Common, margin: f64, mu: Option<f64>) -> Result<()> {
    let problem = c.problem()?;
    ensure_dir(&c.out)?;
    let (params, cert) = search_params(
        &problem.model,
        &problem.cost,
        &problem.missions,
        problem.stability.delta,
        &problem.stability.gain,
        &problem.grid,
        margin,
        mu,
    )
    .map_err(|e| match e {
        CoreError::InfeasibleParameters(msg) => HarnessError::CertificationFailed(msg),
        other => other.into(),
    })?;
    let result = SearchResult {
        delta: params.delta,
        gamma: params.gamma.clone(),
        mu: params.mu,
        u_hat: params.u_hat.as_slice().to_vec(),
        margin,
    };
    write_json(&c.out.join("params.json"), &result)?;
    write_json(&c.out.join("certificate.json"), &cert)?;
    println!(
        "gamma = {:?}, mu = {:.4}, beta = {:.4}, beta_required = {:.4}",
        result.gamma, result.mu, cert.beta, cert.beta_required
    );
    Ok(())
}

fn bench_cmd(c: &Common) -> Result<()> {
    let problem = c.problem()?;
    ensure_dir(&c.out)?;
    let cfg = problem.config.bench.clone().unwrap_or(crate::config::BenchConfig {
        horizons: vec![5, 10, 15, 20],
        samples: vec![1, 1000, 10_000],
        repeats: 10,
    });
    let horizons = c.horizon.map(|n| vec![n]).unwrap_or(cfg.horizons);
    let samples = c.samples.map(|m| vec![m]).unwrap_or(cfg.samples);
    let cells = bench(&problem, &horizons, &samples, cfg.repeats)?;
    write_bench(&c.out, &cells)?;
    for cell in &cells {
        println!(
            "N = {:>3}, M = {:>6}: {:>9.2} Hz, cost {:.4} ± {:.4}",
            cell.cost.horizon, cell.cost.samples, cell.timing.frequency_hz, cell.cost.mean_cost, cell.cost.stdev_cost
        );
    }
    Ok(())
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate(c) => simulate(c),
        Command::FailureTest { common, arm } => failure_test(common, *arm),
        Command::Certify(c) => certify_cmd(c),
        Command::SearchParams { common, margin, mu } => search_params_cmd(common, *margin, *mu),
        Command::Bench(c) => bench_cmd(c),
    }
}
