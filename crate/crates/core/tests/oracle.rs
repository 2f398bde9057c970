//! Multi-horizon rollout and vector cost against per-branch brute force.

use backup_mpc::{rollout_all, BoxSet, MissionSet, MultiHorizonInput, PlantModel, QuadraticCost, StateVector};
use nalgebra::{dvector, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_model(rng: &mut ChaCha8Rng, nx: usize, nu: usize) -> PlantModel {
    let a = DMatrix::from_fn(nx, nx, |r, c| if r == c { 1.0 } else { rng.random_range(-0.2..0.2) });
    let b = DMatrix::from_fn(nx, nu, |_, _| rng.random_range(-1.0..1.0));
    let xs = BoxSet::new(DVector::repeat(nx, -50.0), DVector::repeat(nx, 50.0)).unwrap();
    let us = BoxSet::new(DVector::repeat(nu, -10.0), DVector::repeat(nu, 10.0)).unwrap();
    PlantModel::linear(a, b, xs, us).unwrap()
}

#[test]
fn rollout_all_matches_brute_force_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..100 {
        let nx = rng.random_range(1..=4);
        let nu = rng.random_range(1..=3);
        let n = rng.random_range(2..=5);
        let m = rng.random_range(0..=3);
        let model = random_model(&mut rng, nx, nu);
        let mut u = MultiHorizonInput::zeros(n, m, nu).unwrap();
        for v in u.as_mut_slice() {
            *v = rng.random_range(-2.0..2.0);
        }
        let x = StateVector::from_fn(nx, |_, _| rng.random_range(-5.0..5.0));

        let traj = rollout_all(&model, &x, &u).unwrap();
        assert_eq!(traj.primary_states(), model.rollout(&x, &u.primary_inputs()).unwrap());
        for i in 1..=m {
            for p in 0..n - 1 {
                let brute = model.rollout(&x, &u.materialize_branch(i, p).unwrap()).unwrap();
                assert_eq!(traj.branch_full_states(i, p).unwrap(), brute, "branch ({i}, {p})");
            }
        }
    }
}

#[test]
fn vector_cost_matches_brute_force_branch_costs() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let q1 = DMatrix::from_row_slice(2, 2, &[2e-5, 1e-5, 1e-5, 3e-5]);
    let q2 = DMatrix::from_row_slice(2, 2, &[0.2, 0.05, 0.05, 0.1]);
    let cost = QuadraticCost::new(q1, q2, DMatrix::identity(2, 2) * 0.1).unwrap();
    for _ in 0..100 {
        let n = rng.random_range(2..=5);
        let m = rng.random_range(0..=3);
        let model = random_model(&mut rng, 2, 2);
        let dests: Vec<StateVector> =
            (0..=m).map(|_| dvector![rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)]).collect();
        let missions = MissionSet::new(dests, 0.5).unwrap();
        let mut u = MultiHorizonInput::zeros(n, m, 2).unwrap();
        for v in u.as_mut_slice() {
            *v = rng.random_range(-2.0..2.0);
        }
        let x = dvector![rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)];
        let j = cost.vector_cost(&model, &missions, &x, &u).unwrap();

        let j0 = cost.branch_cost(&model, missions.primary(), &x, &u.primary_inputs()).unwrap();
        assert!((j.entries()[0] - j0).abs() <= 1e-10 * (1.0 + j0));
        for i in 1..=m {
            let mean = (0..n - 1)
                .map(|p| {
                    cost.branch_cost(&model, &missions.destinations()[i], &x, &u.materialize_branch(i, p).unwrap())
                        .unwrap()
                })
                .sum::<f64>()
                / (n - 1) as f64;
            assert!((j.entries()[i] - mean).abs() <= 1e-10 * (1.0 + mean));
        }
    }
}

#[test]
fn before_input_pairing_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cost = QuadraticCost::new(
        DMatrix::identity(2, 2) * 1e-3,
        DMatrix::identity(2, 2) * 0.1,
        DMatrix::identity(2, 2) * 0.1,
    )
    .unwrap()
    .with_pairing(backup_mpc::CostPairing::BeforeInput);
    for _ in 0..50 {
        let n = rng.random_range(2..=5);
        let m = rng.random_range(1..=3);
        let model = random_model(&mut rng, 2, 2);
        let dests: Vec<StateVector> = (0..=m).map(|k| dvector![k as f64, -(k as f64)]).collect();
        let missions = MissionSet::new(dests, 0.5).unwrap();
        let mut u = MultiHorizonInput::zeros(n, m, 2).unwrap();
        for v in u.as_mut_slice() {
            *v = rng.random_range(-2.0..2.0);
        }
        let x = dvector![3.0, -1.0];
        let j = cost.vector_cost(&model, &missions, &x, &u).unwrap();
        for i in 1..=m {
            let mean = (0..n - 1)
                .map(|p| {
                    cost.branch_cost(&model, &missions.destinations()[i], &x, &u.materialize_branch(i, p).unwrap())
                        .unwrap()
                })
                .sum::<f64>()
                / (n - 1) as f64;
            assert!((j.entries()[i] - mean).abs() <= 1e-10 * (1.0 + mean));
        }
    }
}
