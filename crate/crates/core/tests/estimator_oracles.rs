mod common;

use lqr_lab::estimator::{
    affine_least_squares, excitation_check, least_squares, steady_covariance, Trajectory,
};
use lqr_lab::matkit::{Matrix, Vector};
use lqr_lab::riccati::LinearSystem;
use lqr_lab::sysrep::{
    benchmark_cartpole, full_basis, known_a_embedding, known_b_embedding, lumped_cartpole,
    paper_cartpole_fixture, paper_k0, realize, AffineBase, ParamVector, Representation,
    BENCHMARK_DT,
};

fn bits(m: &Matrix) -> Vec<u64> {
    m.iter().map(|x| x.to_bits()).collect()
}

fn random_data(seed: u64) -> (Representation, LinearSystem, Trajectory) {
    let mut rng = common::rng(seed);
    let rep = common::random_rep(&mut rng, 3, 2, 7);
    let sys = common::random_system(&mut rng, 3, 2, 0.9);
    let k = common::gaussian(&mut rng, 2, 3) * 0.1;
    let traj = common::rollout(&sys, &k, 0.5, 0.3, 50, &mut rng);
    (rep, sys, traj)
}

#[test]
fn accumulation_matches_materialized_kronecker_bitwise() {
    for seed in 0..10 {
        let (rep, _, traj) = random_data(seed);
        let fast = least_squares(&rep, &traj).unwrap();
        let slow = common::naive_ls(&rep, &traj, None);
        assert_eq!(bits(&fast.lambda), bits(&slow.lambda), "seed {seed}");
        assert_eq!(
            fast.theta_hat
                .0
                .iter()
                .map(|x| x.to_bits())
                .collect::<Vec<_>>(),
            slow.theta_hat
                .0
                .iter()
                .map(|x| x.to_bits())
                .collect::<Vec<_>>()
        );
        assert_eq!(fast.lambda_min.to_bits(), slow.lambda_min.to_bits());

        let mut rng = common::rng(1000 + seed);
        let base = AffineBase::new(
            common::gaussian(&mut rng, 3, 3),
            common::gaussian(&mut rng, 3, 2),
        )
        .unwrap();
        let fast = affine_least_squares(&rep, &base, &traj).unwrap();
        let slow = common::naive_ls(&rep, &traj, Some(&base.stacked()));
        assert_eq!(bits(&fast.lambda), bits(&slow.lambda), "affine seed {seed}");
        assert_eq!(
            fast.theta_hat
                .0
                .iter()
                .map(|x| x.to_bits())
                .collect::<Vec<_>>(),
            slow.theta_hat
                .0
                .iter()
                .map(|x| x.to_bits())
                .collect::<Vec<_>>()
        );
    }
}

#[test]
fn noiseless_recovery() {
    let mut rng = common::rng(5);
    let rep = common::random_rep(&mut rng, 3, 2, 6);
    let theta = common::gaussian_vec(&mut rng, 6) * 0.3;
    let sys = realize(&rep, &ParamVector(theta.clone()), None).unwrap();
    let traj = common::rollout(&sys, &Matrix::zeros(2, 3), 1.0, 0.0, 40, &mut rng);
    let out = least_squares(&rep, &traj).unwrap();
    assert!(out.lambda_min > 0.0);
    assert!((&out.theta_hat.0 - &theta).norm() <= 1e-8);

    let bench = benchmark_cartpole();
    let lumped = lumped_cartpole(&bench, BENCHMARK_DT).unwrap();
    let mut rng = common::rng(6);
    let traj = common::rollout(&bench, &paper_k0(), 1.0, 0.0, 30, &mut rng);
    let out = least_squares(&lumped.rep, &traj).unwrap();
    assert!((&out.theta_hat.0 - &lumped.theta.0).norm() <= 1e-8);
}

#[test]
fn single_sample_minimum_norm() {
    let rep = Representation::identity(2, 1);
    let traj = Trajectory::new(vec![vec![1.0, 0.0], vec![0.7, -0.2]], vec![vec![0.0]]).unwrap();
    let out = least_squares(&rep, &traj).unwrap();
    let expect = [0.7, -0.2, 0.0, 0.0, 0.0, 0.0];
    for (a, b) in out.theta_hat.0.iter().zip(expect) {
        assert!((a - b).abs() < 1e-14);
    }
    assert!(out.lambda_min.abs() < 1e-14);
}

#[test]
fn affine_special_cases() {
    let (rep, sys, traj) = random_data(11);
    let plain = least_squares(&rep, &traj).unwrap();
    let zero = affine_least_squares(&rep, &AffineBase::zeros(3, 2), &traj).unwrap();
    assert_eq!(plain.theta_hat, zero.theta_hat);

    let mut rng = common::rng(12);
    let clean = common::rollout(&sys, &Matrix::zeros(2, 3), 1.0, 0.0, 30, &mut rng);
    let exact = AffineBase::new(sys.a.clone(), sys.b.clone()).unwrap();
    let out = affine_least_squares(&rep, &exact, &clean).unwrap();
    assert!(out.theta_hat.0.amax() < 1e-12);

    let fixture = paper_cartpole_fixture();
    let kb = known_b_embedding(&fixture).unwrap();
    let mut x = common::gaussian_vec(&mut rng, 4);
    let (mut states, mut inputs) = (vec![x.as_slice().to_vec()], Vec::new());
    for _ in 0..20 {
        let u = common::gaussian_vec(&mut rng, 1);
        x = &fixture.a * &x + &fixture.b * &u;
        inputs.push(u.as_slice().to_vec());
        states.push(x.as_slice().to_vec());
    }
    let clean = Trajectory::new(states, inputs).unwrap();
    let out = affine_least_squares(&kb.rep, kb.base.as_ref().unwrap(), &clean).unwrap();
    let rec = realize(&kb.rep, &out.theta_hat, kb.base.as_ref()).unwrap();
    assert!((rec.a - &fixture.a).amax() <= 1e-8);
    assert_eq!(rec.b, fixture.b);
}

#[test]
fn excitation_exact_values() {
    let sys = benchmark_cartpole();
    let k0 = paper_k0();
    assert_eq!(
        excitation_check(&full_basis(&sys).unwrap().rep, &k0).unwrap(),
        0.0
    );
    let kb = known_b_embedding(&sys).unwrap();
    assert_eq!(excitation_check(&kb.rep, &k0).unwrap(), 1.0);
    let mut rng = common::rng(3);
    let k = common::gaussian(&mut rng, 1, 4);
    assert_eq!(excitation_check(&kb.rep, &k).unwrap(), 1.0);
    let ka = known_a_embedding(&sys).unwrap();
    let mu = (&k0 * k0.transpose())[(0, 0)];
    assert!(excitation_check(&ka.rep, &k0).unwrap() >= mu * (1.0 - 1e-12));
}

#[test]
fn excitation_matches_brute_force_grid() {
    for seed in 0..12 {
        let mut rng = common::rng(300 + seed);
        let dtheta = 1 + (seed as usize % 3);
        let (dx, du) = if seed % 2 == 0 { (2, 1) } else { (3, 2) };
        let rep = common::random_rep(&mut rng, dx, du, dtheta);
        let k = common::gaussian(&mut rng, du, dx);
        let kron_form = excitation_check(&rep, &k).unwrap();
        let grid = common::grid_minimum(&rep, &k);
        assert!(
            (kron_form - grid).abs() <= 1e-8,
            "seed {seed}, dtheta {dtheta}: {kron_form} vs {grid}"
        );
    }
}

#[test]
fn covariance_matches_monte_carlo() {
    let sys = benchmark_cartpole();
    let k0 = paper_k0();
    let (sigma_u, t, rollouts) = (0.1, 64, 10_000);
    let exact = steady_covariance(&sys, &k0, sigma_u, t).unwrap();
    let mut rng = common::rng(77);
    let mut sum = Matrix::zeros(5, 5);
    let mut mean = Vector::zeros(5);
    for _ in 0..rollouts {
        let traj = common::rollout(&sys, &k0, sigma_u, 1.0, t, &mut rng);
        for s in 0..t {
            let z = traj.regressor(s);
            sum += &z * z.transpose();
            mean += &z;
        }
    }
    let n = (rollouts * t) as f64;
    mean /= n;
    let empirical = sum / n - &mean * mean.transpose();
    let rel = (&empirical - &exact).norm() / exact.norm();
    assert!(rel < 0.05, "relative Frobenius gap {rel}");
}

#[test]
fn covariance_closed_forms() {
    let sys = LinearSystem::new(
        Matrix::zeros(2, 2),
        Matrix::from_column_slice(2, 1, &[1.0, 0.5]),
    )
    .unwrap();
    let k = Matrix::zeros(1, 2);
    let cov = steady_covariance(&sys, &k, 0.0, 10).unwrap();
    let mut expect = Matrix::zeros(3, 3);
    expect[(0, 0)] = 0.9;
    expect[(1, 1)] = 0.9;
    assert!((cov - expect).amax() < 1e-15);
    assert!(steady_covariance(&sys, &k, 0.1, 1).is_err());
}

#[test]
fn exploration_gives_positive_definite_gram() {
    let sys = benchmark_cartpole();
    let full = Representation::identity(4, 1);
    for seed in 0..50 {
        let mut rng = common::rng(seed);
        let traj = common::rollout(&sys, &paper_k0(), 0.1, 0.1, 20, &mut rng);
        assert!(
            least_squares(&full, &traj).unwrap().lambda_min > 0.0,
            "seed {seed}"
        );
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn error_sq(rep: &Representation, sys: &LinearSystem, traj: &Trajectory) -> f64 {
    let out = least_squares(rep, traj).unwrap();
    let est = realize(rep, &out.theta_hat, None).unwrap();
    (est.stacked() - sys.stacked()).norm_squared()
}

#[test]
fn error_decay_with_shrinking_exploration() {
    let sys = benchmark_cartpole();
    let full = Representation::identity(4, 1);
    let horizons = [1024usize, 4096, 16384];
    let medians: Vec<f64> = horizons
        .iter()
        .map(|&t| {
            let sigma_u = (t as f64).powf(-0.25);
            median(
                (0..21)
                    .map(|seed| {
                        let mut rng = common::rng(seed * 31 + t as u64);
                        let traj = common::rollout(&sys, &paper_k0(), sigma_u, 0.1, t, &mut rng);
                        error_sq(&full, &sys, &traj)
                    })
                    .collect(),
            )
        })
        .collect();
    for w in medians.windows(2) {
        let ratio = w[1] / w[0];
        assert!((0.3..=0.9).contains(&ratio), "medians {medians:?}");
    }
}

#[test]
fn error_halves_without_exploration_on_lumped_basis() {
    let sys = benchmark_cartpole();
    let lumped = lumped_cartpole(&sys, BENCHMARK_DT).unwrap();
    let horizons = [1024usize, 2048, 4096];
    let medians: Vec<f64> = horizons
        .iter()
        .map(|&t| {
            median(
                (0..41)
                    .map(|seed| {
                        let mut rng = common::rng(seed * 17 + t as u64);
                        let traj = common::rollout(&sys, &paper_k0(), 0.0, 0.1, t, &mut rng);
                        error_sq(&lumped.rep, &sys, &traj)
                    })
                    .collect(),
            )
        })
        .collect();
    for w in medians.windows(2) {
        let ratio = w[1] / w[0];
        assert!((0.25..=0.75).contains(&ratio), "medians {medians:?}");
    }
}
