#![allow(dead_code)]

use lqr_lab::estimator::{LsOutput, Trajectory};
use lqr_lab::matkit::{self, Matrix, Vector};
use lqr_lab::riccati::LinearSystem;
use lqr_lab::sysrep::{ParamVector, Representation};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

pub fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

pub fn random_rep(rng: &mut ChaCha8Rng, dx: usize, du: usize, dtheta: usize) -> Representation {
    let raw = gaussian(rng, dx * (dx + du), dtheta);
    Representation::from_columns(&raw, dx, du).unwrap()
}

/// Random system with `A` scaled to spectral radius `radius`.
pub fn random_system(rng: &mut ChaCha8Rng, dx: usize, du: usize, radius: f64) -> LinearSystem {
    let a = gaussian(rng, dx, dx);
    let rho = matkit::spectral_radius(&a).unwrap();
    let a = a * (radius / rho);
    LinearSystem::new(a, gaussian(rng, dx, du)).unwrap()
}

/// Rolls out `u = K x + sigma_u g`, `x' = A x + B u + noise_std w` from the origin.
pub fn rollout(
    sys: &LinearSystem,
    k: &Matrix,
    sigma_u: f64,
    noise_std: f64,
    steps: usize,
    rng: &mut ChaCha8Rng,
) -> Trajectory {
    let (dx, du) = (sys.dx(), sys.du());
    let mut x = Vector::zeros(dx);
    let mut states = vec![x.as_slice().to_vec()];
    let mut inputs = Vec::with_capacity(steps);
    for _ in 0..steps {
        let u = k * &x + gaussian_vec(rng, du) * sigma_u;
        x = &sys.a * &x + &sys.b * &u + gaussian_vec(rng, dx) * noise_std;
        inputs.push(u.as_slice().to_vec());
        states.push(x.as_slice().to_vec());
    }
    Trajectory::new(states, inputs).unwrap()
}

/// Textbook normal equations with both Kronecker factors built in full.
pub fn naive_ls(rep: &Representation, traj: &Trajectory, known: Option<&Matrix>) -> LsOutput {
    let (dx, dtheta) = (rep.dx(), rep.dtheta());
    let n = dx + rep.du();
    let big = dx * n;
    let phi = rep.phi();
    let eye = Matrix::identity(dx, dx);
    let mut lambda = Matrix::zeros(dtheta, dtheta);
    let mut rhs = Vector::zeros(dtheta);
    for s in 0..traj.len() {
        let z = traj.regressor(s);
        let mut target = Vector::from_column_slice(&traj.states[s + 1]);
        if let Some(k) = known {
            target -= k * &z;
        }
        let zz = Matrix::from_fn(n, n, |p, q| z[p] * z[q]);
        let kz = matkit::kron(&zz, &eye);
        let kv = matkit::kron(&Matrix::from_column_slice(n, 1, z.as_slice()), &eye);
        let mut t = Matrix::zeros(big, dtheta);
        for a in 0..big {
            for j in 0..dtheta {
                let mut acc = 0.0;
                for b in 0..big {
                    acc += kz[(a, b)] * phi[(b, j)];
                }
                t[(a, j)] = acc;
            }
        }
        let mut y = Vector::zeros(big);
        for a in 0..big {
            let mut acc = 0.0;
            for c in 0..dx {
                acc += kv[(a, c)] * target[c];
            }
            y[a] = acc;
        }
        let mut lam_s = Matrix::zeros(dtheta, dtheta);
        let mut rhs_s = Vector::zeros(dtheta);
        for i in 0..dtheta {
            for j in 0..dtheta {
                let mut acc = 0.0;
                for a in 0..big {
                    acc += phi[(a, i)] * t[(a, j)];
                }
                lam_s[(i, j)] = acc;
            }
            let mut acc = 0.0;
            for a in 0..big {
                acc += phi[(a, i)] * y[a];
            }
            rhs_s[i] = acc;
        }
        lambda += &lam_s;
        rhs += &rhs_s;
    }
    let theta = matkit::pinv(&lambda) * rhs;
    let lambda_min = matkit::sym_eig_min(&matkit::symmetrize(&lambda)).unwrap();
    LsOutput {
        theta_hat: ParamVector(theta),
        lambda,
        lambda_min,
    }
}

pub fn frobenius_form(rep: &Representation, k: &Matrix, v: &[f64]) -> f64 {
    let (dx, du) = (rep.dx(), rep.du());
    let mut z = Matrix::zeros(dx + du, dx);
    z.view_mut((0, 0), (dx, dx)).fill_with_identity();
    z.view_mut((dx, 0), (du, dx)).copy_from(k);
    let mut m = Matrix::zeros(dx, dx);
    for (i, vi) in v.iter().enumerate() {
        m += rep.basis_matrix(i) * &z * *vi;
    }
    m.norm_squared()
}

pub fn unit_from_angles(angles: &[f64]) -> Vec<f64> {
    match angles {
        [] => vec![1.0],
        [a] => vec![a.cos(), a.sin()],
        [a, b] => vec![a.sin() * b.cos(), a.sin() * b.sin(), a.cos()],
        _ => unreachable!(),
    }
}

/// Grid over hyperspherical angles, repeatedly zoomed around the best point.
pub fn grid_minimum(rep: &Representation, k: &Matrix) -> f64 {
    let dims = rep.dtheta() - 1;
    let points = if dims == 2 { 120 } else { 2000 };
    let mut center = vec![std::f64::consts::FRAC_PI_2; dims];
    let mut half = vec![std::f64::consts::FRAC_PI_2; dims];
    if dims == 2 {
        half[1] = std::f64::consts::PI;
        center[1] = std::f64::consts::PI;
    }
    let mut best = f64::INFINITY;
    for _ in 0..14 {
        let mut best_at = center.clone();
        let coord = |c: f64, h: f64, i: usize| c - h + 2.0 * h * i as f64 / (points - 1) as f64;
        let mut visit = |angles: Vec<f64>| {
            let f = frobenius_form(rep, k, &unit_from_angles(&angles));
            if f < best {
                best = f;
                best_at = angles;
            }
        };
        match dims {
            0 => visit(vec![]),
            1 => (0..points).for_each(|i| visit(vec![coord(center[0], half[0], i)])),
            _ => {
                for i in 0..points {
                    for j in 0..points {
                        visit(vec![
                            coord(center[0], half[0], i),
                            coord(center[1], half[1], j),
                        ]);
                    }
                }
            }
        }
        center = best_at;
        half.iter_mut().for_each(|h| *h *= 0.2);
    }
    best
}
