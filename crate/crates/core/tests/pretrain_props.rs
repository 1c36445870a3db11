mod common;

use lqr_lab::matkit::{self, Matrix};
use lqr_lab::pretrain::{pretrain, MultiTaskDataset, DEFAULT_MAX_ITER, DEFAULT_TOL};
use lqr_lab::sysrep::{realize, subspace_distance, ParamVector, Representation};
use proptest::prelude::*;

fn synthetic(seed: u64, tasks: usize, noise_std: f64) -> (Representation, MultiTaskDataset) {
    let mut rng = common::rng(seed);
    let phi_star = common::random_rep(&mut rng, 3, 2, 5);
    let trajs = (0..tasks)
        .map(|_| {
            let theta = ParamVector(common::gaussian_vec(&mut rng, 5) * 0.3);
            let sys = realize(&phi_star, &theta, None).unwrap();
            common::rollout(&sys, &Matrix::zeros(2, 3), 1.0, noise_std, 40, &mut rng)
        })
        .collect();
    (phi_star, MultiTaskDataset::new(trajs).unwrap())
}

fn objective(phi: &Representation, thetas: &[ParamVector], data: &MultiTaskDataset) -> f64 {
    data.tasks
        .iter()
        .zip(thetas)
        .map(|(traj, th)| {
            let sys = realize(phi, th, None).unwrap();
            let m = sys.stacked();
            (0..traj.len())
                .map(|s| {
                    let next = matkit::Vector::from_column_slice(&traj.states[s + 1]);
                    (next - &m * traj.regressor(s)).norm_squared()
                })
                .sum::<f64>()
        })
        .sum()
}

#[test]
fn noiseless_synthetic_recovery() {
    for seed in 0..3 {
        let (phi_star, data) = synthetic(seed, 8, 0.0);
        let res = pretrain(&data, 5, DEFAULT_TOL, DEFAULT_MAX_ITER, seed).unwrap();
        let d = subspace_distance(&res.phi_hat, &phi_star).unwrap();
        assert!(d <= 1e-3, "seed {seed}: distance {d}");
        assert!(
            res.objective <= 1e-10,
            "seed {seed}: objective {}",
            res.objective
        );
    }
}

#[test]
fn reported_objective_matches_residuals() {
    let (_, data) = synthetic(4, 6, 0.05);
    let res = pretrain(&data, 5, DEFAULT_TOL, DEFAULT_MAX_ITER, 0).unwrap();
    let direct = objective(&res.phi_hat, &res.thetas, &data);
    assert!((res.objective - direct).abs() <= 1e-9 * direct.max(1.0));
    let phi = res.phi_hat.phi();
    assert!((phi.transpose() * phi - Matrix::identity(5, 5)).amax() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn orthonormalizing_preserves_objective(seed in 0u64..10_000) {
        let (_, data) = synthetic(seed, 5, 0.1);
        let res = pretrain(&data, 5, 1e-6, 50, seed).unwrap();
        let base = objective(&res.phi_hat, &res.thetas, &data);

        let mut rng = common::rng(seed + 99);
        let mix = common::gaussian(&mut rng, 5, 5) + Matrix::identity(5, 5) * 3.0;
        let mixed = res.phi_hat.phi() * &mix;
        let inv = mix.clone().try_inverse().unwrap();
        let q = matkit::qr_orthonormalize(&mixed).unwrap();
        let r = q.transpose() * &mixed;
        let rep = Representation::new(q, 3, 2).unwrap();
        let thetas: Vec<ParamVector> = res
            .thetas
            .iter()
            .map(|t| ParamVector(&r * (&inv * &t.0)))
            .collect();
        let after = objective(&rep, &thetas, &data);
        prop_assert!((after - base).abs() <= 1e-10 * base.max(1.0), "{} vs {}", base, after);
        prop_assert!(subspace_distance(&rep, &res.phi_hat).unwrap() < 1e-10);
    }

    #[test]
    fn objective_history_is_monotone(seed in 0u64..10_000, noise in 0.01f64..0.5) {
        let (_, data) = synthetic(seed, 6, noise);
        let res = pretrain(&data, 4, 1e-12, 200, seed).unwrap();
        for w in res.history.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12), "{} -> {}", w[0], w[1]);
        }
        prop_assert_eq!(res.history.last().copied(), Some(res.objective));
    }
}
