//! Multi-task representation learning: alternating least squares over a
//! shared basis and per-task coordinates.

use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::estimator::{least_squares, Trajectory};
use crate::matkit::{self, Matrix, Vector};
use crate::sysrep::{cartpole_system, vec, CartpoleParams, ParamVector, Representation};

pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_ITER: usize = 500;

const DEGENERATE_RCOND: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiTaskDataset {
    pub tasks: Vec<Trajectory>,
    pub dx: usize,
    pub du: usize,
}

impl MultiTaskDataset {
    pub fn new(tasks: Vec<Trajectory>) -> Result<Self> {
        let first = tasks
            .first()
            .ok_or_else(|| LabError::InvalidArgument("dataset has no tasks".into()))?;
        let (dx, du) = (first.dx(), first.du());
        for (i, t) in tasks.iter().enumerate() {
            t.validate()?;
            if t.dx() != dx || t.du() != du {
                return Err(LabError::Dimension(format!(
                    "task {i} has dx = {}, du = {}; task 0 has dx = {dx}, du = {du}",
                    t.dx(),
                    t.du()
                )));
            }
        }
        Ok(Self { tasks, dx, du })
    }
}

#[derive(Debug, Clone)]
pub struct PretrainResult {
    pub phi_hat: Representation,
    /// Coordinates per task; empty for excluded tasks.
    pub thetas: Vec<ParamVector>,
    pub objective: f64,
    /// Objective after initialization and after every alternation.
    pub history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub excluded_tasks: Vec<usize>,
}

/// Sufficient statistics of one task: `G = sum z z'`, `C = sum x' z'`, `Y = sum |x'|^2`.
struct Moments {
    g: Matrix,
    c: Matrix,
    y: f64,
}

impl Moments {
    fn of(traj: &Trajectory) -> Self {
        let (dx, n) = (traj.dx(), traj.dx() + traj.du());
        let mut g = Matrix::zeros(n, n);
        let mut c = Matrix::zeros(dx, n);
        let mut y = 0.0;
        for s in 0..traj.len() {
            let z = traj.regressor(s);
            let next = Vector::from_column_slice(&traj.states[s + 1]);
            g.ger(1.0, &z, &z, 1.0);
            c.ger(1.0, &next, &z, 1.0);
            y += next.norm_squared();
        }
        Self { g, c, y }
    }

    /// `sum |x' - M z|^2` for `M = vec_inv(m_vec)`.
    fn residual(&self, m_vec: &Vector) -> f64 {
        let dx = self.c.nrows();
        let m = Matrix::from_column_slice(dx, self.g.nrows(), m_vec.as_slice());
        let cross = m.dot(&self.c);
        let quad = (&m * &self.g).dot(&m);
        (self.y - 2.0 * cross + quad).max(0.0)
    }
}

fn objective(phi: &Matrix, thetas: &[ParamVector], moments: &[Moments], active: &[usize]) -> f64 {
    active
        .iter()
        .map(|&i| moments[i].residual(&(phi * &thetas[i].0)))
        .sum()
}

fn theta_step(
    rep: &Representation,
    data: &MultiTaskDataset,
    active: &[usize],
    thetas: &mut [ParamVector],
) -> Result<()> {
    let solved: Vec<Result<(usize, ParamVector)>> = active
        .par_iter()
        .map(|&i| least_squares(rep, &data.tasks[i]).map(|o| (i, o.theta_hat)))
        .collect();
    for r in solved {
        let (i, theta) = r?;
        thetas[i] = theta;
    }
    Ok(())
}

/// Minimizes over `vec(Phi)` with all coordinates fixed.
fn phi_step(
    thetas: &[ParamVector],
    moments: &[Moments],
    active: &[usize],
    dx: usize,
    ambient: usize,
    dtheta: usize,
) -> Result<Matrix> {
    let size = ambient * dtheta;
    let mut normal = Matrix::zeros(size, size);
    let mut rhs = Vector::zeros(size);
    let eye = Matrix::identity(dx, dx);
    for &i in active {
        let th = &thetas[i].0;
        let block = matkit::kron(&moments[i].g, &eye);
        normal += matkit::kron(&(th * th.transpose()), &block);
        let vc = vec(&moments[i].c);
        for j in 0..dtheta {
            rhs.rows_mut(j * ambient, ambient).axpy(th[j], &vc, 1.0);
        }
    }
    let normal = matkit::symmetrize(&normal);
    let sol = match matkit::solve_spd(&normal, &Matrix::from_column_slice(size, 1, rhs.as_slice()))
    {
        Ok(s) => s,
        Err(_) => matkit::pinv(&normal) * Matrix::from_column_slice(size, 1, rhs.as_slice()),
    };
    Ok(Matrix::from_column_slice(ambient, dtheta, sol.as_slice()))
}

/// Top-`dtheta` left singular vectors of the per-task full least-squares
/// estimates, completed with seeded random directions when fewer tasks than
/// `dtheta` are available.
fn spectral_init(
    data: &MultiTaskDataset,
    active: &[usize],
    dtheta: usize,
    seed: u64,
) -> Result<Matrix> {
    let full = Representation::identity(data.dx, data.du);
    let ambient = full.ambient_dim();
    let estimates: Vec<Result<Vector>> = active
        .par_iter()
        .map(|&i| least_squares(&full, &data.tasks[i]).map(|o| o.theta_hat.0))
        .collect();
    let estimates = estimates.into_iter().collect::<Result<Vec<_>>>()?;
    let stacked = Matrix::from_columns(&estimates);
    let dec = matkit::svd(&stacked);
    let top = dec.s.first().copied().unwrap_or(0.0);
    let mut cols: Vec<Vector> = (0..dec.s.len().min(dtheta))
        .filter(|&j| dec.s[j] > DEGENERATE_RCOND * top.max(f64::MIN_POSITIVE))
        .map(|j| dec.u.column(j).into_owned())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while cols.len() < dtheta {
        let mut v = Vector::from_fn(ambient, |_, _| StandardNormal.sample(&mut rng));
        for c in &cols {
            v -= c * c.dot(&v);
        }
        let n = v.norm();
        if n > 1e-8 {
            cols.push(v / n);
        }
    }
    matkit::qr_orthonormalize(&Matrix::from_columns(&cols))
}

pub fn pretrain(
    data: &MultiTaskDataset,
    dtheta: usize,
    tol: f64,
    max_iter: usize,
    seed: u64,
) -> Result<PretrainResult> {
    let (dx, du) = (data.dx, data.du);
    let ambient = dx * (dx + du);
    if dtheta == 0 || dtheta > ambient {
        return Err(LabError::InvalidArgument(format!(
            "dtheta must lie in 1..={ambient}, got {dtheta}"
        )));
    }
    if !(tol >= 0.0) {
        return Err(LabError::InvalidArgument(format!(
            "tolerance must be >= 0, got {tol}"
        )));
    }
    for (i, t) in data.tasks.iter().enumerate() {
        if t.len() < dtheta + 1 {
            return Err(LabError::InvalidArgument(format!(
                "task {i} has {} transitions, need at least {}",
                t.len(),
                dtheta + 1
            )));
        }
    }

    let moments: Vec<Moments> = data.tasks.par_iter().map(Moments::of).collect();
    let mut active = Vec::new();
    let mut excluded_tasks = Vec::new();
    for (i, m) in moments.iter().enumerate() {
        let eig = matkit::sym_eigenvalues(&matkit::symmetrize(&m.g))?;
        let (lo, hi) = (eig[0], eig[eig.len() - 1]);
        if hi > 0.0 && lo > DEGENERATE_RCOND * hi {
            active.push(i);
        } else {
            warn!("task {i}: singular regressor Gram matrix, excluded from pretraining");
            excluded_tasks.push(i);
        }
    }
    if active.is_empty() {
        return Err(LabError::InvalidArgument(
            "every task has degenerate data".into(),
        ));
    }

    let mut phi = spectral_init(data, &active, dtheta, seed)?;
    let mut rep = Representation::new(phi.clone(), dx, du)?;
    let mut thetas = vec![ParamVector(Vector::zeros(0)); data.tasks.len()];
    theta_step(&rep, data, &active, &mut thetas)?;
    let mut obj = objective(&phi, &thetas, &moments, &active);
    let mut history = vec![obj];
    let mut iterations = 0;
    // With no more tasks than dtheta the initial span already contains every
    // per-task optimum.
    let mut converged = active.len() <= dtheta || obj == 0.0;

    while !converged && iterations < max_iter {
        let raw = phi_step(&thetas, &moments, &active, dx, ambient, dtheta)?;
        let qr = raw.clone().qr();
        let r = qr.r();
        let diag_ok = (0..dtheta).all(|j| r[(j, j)].abs() > DEGENERATE_RCOND * raw.norm());
        if !diag_ok {
            warn!(
                "basis update lost rank at iteration {}; stopping",
                iterations + 1
            );
            break;
        }
        phi = matkit::qr_orthonormalize(&raw)?;
        rep = Representation::new(phi.clone(), dx, du)?;
        theta_step(&rep, data, &active, &mut thetas)?;
        iterations += 1;
        let next = objective(&phi, &thetas, &moments, &active);
        let decrease = (obj - next) / obj.max(f64::MIN_POSITIVE);
        history.push(next);
        obj = next;
        if decrease < tol || obj == 0.0 {
            converged = true;
        }
    }

    Ok(PretrainResult {
        phi_hat: rep,
        thetas,
        objective: obj,
        history,
        iterations,
        converged,
        excluded_tasks,
    })
}

/// Cartpole systems from `params` driven by `u = K0 x + eta` from `x_1 = 0`.
#[allow(clippy::too_many_arguments)]
pub fn generate_offline_data(
    params: &[CartpoleParams],
    gravity: f64,
    dt: f64,
    horizon: usize,
    k0: &Matrix,
    noise_std: f64,
    input_noise_std: f64,
    seed: u64,
) -> Result<MultiTaskDataset> {
    if k0.shape() != (1, 4) {
        return Err(LabError::Dimension(format!(
            "cartpole gain must be 1x4, got {}x{}",
            k0.nrows(),
            k0.ncols()
        )));
    }
    if horizon == 0 {
        return Err(LabError::InvalidArgument(
            "horizon must be at least 1".into(),
        ));
    }
    let mut tasks = Vec::with_capacity(params.len());
    for (i, p) in params.iter().enumerate() {
        let sys = cartpole_system(p.m_cart, p.m_pole, p.length, gravity, dt)?;
        let radius = matkit::spectral_radius(&sys.closed_loop(k0)?)?;
        if radius >= 0.99 {
            warn!("task {i}: K0 closed-loop spectral radius {radius:.4}");
        }
        let mut w_rng = ChaCha8Rng::seed_from_u64(seed);
        w_rng.set_stream(2 * i as u64);
        let mut eta_rng = ChaCha8Rng::seed_from_u64(seed);
        eta_rng.set_stream(2 * i as u64 + 1);
        let mut x = Vector::zeros(4);
        let mut states = Vec::with_capacity(horizon + 1);
        let mut inputs = Vec::with_capacity(horizon);
        states.push(x.as_slice().to_vec());
        for _ in 0..horizon {
            let eta: f64 = StandardNormal.sample(&mut eta_rng);
            let u = k0 * &x + Vector::from_element(1, input_noise_std * eta);
            let w = Vector::from_fn(4, |_, _| StandardNormal.sample(&mut w_rng));
            x = &sys.a * &x + &sys.b * &u + w * noise_std;
            inputs.push(u.as_slice().to_vec());
            states.push(x.as_slice().to_vec());
        }
        tasks.push(Trajectory::new(states, inputs)?);
    }
    MultiTaskDataset::new(tasks)
}

/// The five cartpoles of the offline pretraining recipe.
pub fn paper_task_params() -> Vec<CartpoleParams> {
    [
        (0.4, 1.0, 1.0),
        (1.6, 1.3, 0.3),
        (1.3, 0.7, 0.65),
        (0.2, 0.06, 1.36),
        (0.2, 0.47, 1.83),
    ]
    .into_iter()
    .map(|(m_cart, m_pole, length)| CartpoleParams {
        m_cart,
        m_pole,
        length,
    })
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sysrep::{paper_k0, subspace_distance, BENCHMARK_DT, BENCHMARK_GRAVITY};

    fn paper_dataset(seed: u64) -> MultiTaskDataset {
        generate_offline_data(
            &paper_task_params(),
            BENCHMARK_GRAVITY,
            BENCHMARK_DT,
            1200,
            &paper_k0(),
            0.1,
            1.0,
            seed,
        )
        .unwrap()
    }

    #[test]
    fn offline_data_shapes_and_determinism() {
        let d = paper_dataset(9);
        assert_eq!(d.tasks.len(), 5);
        assert!(d.tasks.iter().all(|t| t.len() == 1200));
        assert_eq!(d, paper_dataset(9));
        assert_ne!(d, paper_dataset(10));
    }

    #[test]
    fn silent_offline_data_is_zero() {
        let d = generate_offline_data(
            &paper_task_params(),
            1.0,
            0.25,
            50,
            &paper_k0(),
            0.0,
            0.0,
            1,
        )
        .unwrap();
        assert!(d
            .tasks
            .iter()
            .all(|t| t.states.iter().flatten().all(|&v| v == 0.0)));
    }

    #[test]
    fn single_task_full_dimension_matches_direct_fit() {
        let d = paper_dataset(3);
        let one = MultiTaskDataset::new(vec![d.tasks[0].clone()]).unwrap();
        let res = pretrain(&one, 20, DEFAULT_TOL, DEFAULT_MAX_ITER, 0).unwrap();
        let full = Representation::identity(4, 1);
        let direct = least_squares(&full, &one.tasks[0]).unwrap().theta_hat.0;
        let realized = res.phi_hat.phi() * &res.thetas[0].0;
        assert!((realized - direct).amax() < 1e-8);
    }

    #[test]
    fn objective_is_monotone_on_paper_recipe() {
        let d = paper_dataset(0);
        let res = pretrain(&d, 5, DEFAULT_TOL, DEFAULT_MAX_ITER, 0).unwrap();
        for w in res.history.windows(2) {
            assert!(w[1] <= w[0], "objective rose from {} to {}", w[0], w[1]);
        }
        let lumped = crate::sysrep::lumped_representation(BENCHMARK_DT);
        let dist = subspace_distance(&res.phi_hat, &lumped).unwrap();
        assert!(dist > 0.0 && dist < 0.6, "distance {dist}");
    }

    #[test]
    fn degenerate_task_is_excluded() {
        let mut d = paper_dataset(1);
        let n = d.tasks[0].len();
        d.tasks
            .push(Trajectory::new(vec![vec![0.0; 4]; n + 1], vec![vec![0.0]; n]).unwrap());
        let res = pretrain(&d, 5, 1e-6, 50, 0).unwrap();
        assert_eq!(res.excluded_tasks, vec![5]);
        assert!(res.thetas[5].is_empty());
    }

    #[test]
    fn rejects_bad_arguments() {
        let d = paper_dataset(2);
        assert!(pretrain(&d, 0, 1e-9, 10, 0).is_err());
        assert!(pretrain(&d, 21, 1e-9, 10, 0).is_err());
        let short = MultiTaskDataset::new(vec![d.tasks[0].window(0, 3)]).unwrap();
        assert!(pretrain(&short, 5, 1e-9, 10, 0).is_err());
    }
}
