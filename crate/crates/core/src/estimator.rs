//! Structured least squares over a representation, its affine variant, the
//! persistence-of-excitation level, and the closed-form epoch covariance.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::matkit::{self, Matrix, Vector};
use crate::riccati::LinearSystem;
use crate::sysrep::{AffineBase, ParamVector, Representation};

/// States `x_1 .. x_{t+1}` and inputs `u_1 .. u_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    pub inputs: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn new(states: Vec<Vec<f64>>, inputs: Vec<Vec<f64>>) -> Result<Self> {
        let traj = Self { states, inputs };
        traj.validate()?;
        Ok(traj)
    }

    pub fn validate(&self) -> Result<()> {
        if self.states.len() != self.inputs.len() + 1 {
            return Err(LabError::Dimension(format!(
                "{} states for {} inputs, expected one more state than inputs",
                self.states.len(),
                self.inputs.len()
            )));
        }
        let dx = self.states[0].len();
        let du = self.inputs.first().map_or(0, Vec::len);
        if self.states.iter().any(|x| x.len() != dx) || self.inputs.iter().any(|u| u.len() != du) {
            return Err(LabError::Dimension("ragged trajectory".into()));
        }
        let finite = self
            .states
            .iter()
            .chain(self.inputs.iter())
            .all(|v| v.iter().all(|x| x.is_finite()));
        if !finite {
            return Err(LabError::InvalidArgument(
                "non-finite trajectory entry".into(),
            ));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn dx(&self) -> usize {
        self.states[0].len()
    }

    pub fn du(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len)
    }

    /// Sub-trajectory covering inputs `start .. end` (zero-based, exclusive end).
    pub fn window(&self, start: usize, end: usize) -> Self {
        Self {
            states: self.states[start..=end].to_vec(),
            inputs: self.inputs[start..end].to_vec(),
        }
    }

    /// Regressor `[x_s; u_s]` for zero-based sample `s`.
    pub fn regressor(&self, s: usize) -> Vector {
        Vector::from_iterator(
            self.dx() + self.du(),
            self.states[s].iter().chain(self.inputs[s].iter()).copied(),
        )
    }
}

#[derive(Debug, Clone)]
pub struct LsOutput {
    pub theta_hat: ParamVector,
    /// Gram matrix `Lambda`.
    pub lambda: Matrix,
    /// Smallest eigenvalue of `Lambda`; near zero means the estimate is
    /// the minimum-norm solution of a rank-deficient problem.
    pub lambda_min: f64,
}

/// Per-sample contribution to `Lambda` and to the normal-equation right-hand
/// side, skipping the structural zeros of `(z z' (x) I)` and `(z (x) I)`.
///
/// The surviving terms are added in the same order as a dense product with
/// the materialized Kronecker factors, so both routes agree exactly.
struct Accumulator<'a> {
    phi: &'a Matrix,
    dx: usize,
    n: usize,
    dtheta: usize,
    lambda: Matrix,
    rhs: Vector,
    zz: Matrix,
    t: Matrix,
    y: Vector,
    lam_s: Matrix,
    rhs_s: Vector,
}

impl<'a> Accumulator<'a> {
    fn new(rep: &'a Representation) -> Self {
        let dx = rep.dx();
        let n = dx + rep.du();
        let dtheta = rep.dtheta();
        let big = dx * n;
        Self {
            phi: rep.phi(),
            dx,
            n,
            dtheta,
            lambda: Matrix::zeros(dtheta, dtheta),
            rhs: Vector::zeros(dtheta),
            zz: Matrix::zeros(n, n),
            t: Matrix::zeros(big, dtheta),
            y: Vector::zeros(big),
            lam_s: Matrix::zeros(dtheta, dtheta),
            rhs_s: Vector::zeros(dtheta),
        }
    }

    #[allow(clippy::needless_range_loop)]
    fn push(&mut self, z: &[f64], target: &[f64]) {
        let (dx, n, dtheta, phi) = (self.dx, self.n, self.dtheta, self.phi);
        for p in 0..n {
            for q in 0..n {
                self.zz[(p, q)] = z[p] * z[q];
            }
        }
        // t = (z z' (x) I) Phi, row a = p dx + r only touches rows q dx + r of Phi.
        for p in 0..n {
            for r in 0..dx {
                let a = p * dx + r;
                for j in 0..dtheta {
                    let mut acc = 0.0;
                    for q in 0..n {
                        acc += self.zz[(p, q)] * phi[(q * dx + r, j)];
                    }
                    self.t[(a, j)] = acc;
                }
                self.y[a] = z[p] * target[r];
            }
        }
        let big = dx * n;
        for i in 0..dtheta {
            for j in 0..dtheta {
                let mut acc = 0.0;
                for a in 0..big {
                    acc += phi[(a, i)] * self.t[(a, j)];
                }
                self.lam_s[(i, j)] = acc;
            }
            let mut acc = 0.0;
            for a in 0..big {
                acc += phi[(a, i)] * self.y[a];
            }
            self.rhs_s[i] = acc;
        }
        self.lambda += &self.lam_s;
        self.rhs += &self.rhs_s;
    }

    fn finish(self) -> Result<LsOutput> {
        finish_normal_equations(self.lambda, self.rhs)
    }
}

pub(crate) fn finish_normal_equations(lambda: Matrix, rhs: Vector) -> Result<LsOutput> {
    let theta = matkit::pinv(&lambda) * rhs;
    let lambda_min = matkit::sym_eig_min(&matkit::symmetrize(&lambda))?;
    Ok(LsOutput {
        theta_hat: ParamVector::new(theta)?,
        lambda,
        lambda_min,
    })
}

fn check_dims(rep: &Representation, traj: &Trajectory) -> Result<()> {
    traj.validate()?;
    if traj.is_empty() {
        return Err(LabError::InvalidArgument("empty trajectory".into()));
    }
    if traj.dx() != rep.dx() || traj.du() != rep.du() {
        return Err(LabError::Dimension(format!(
            "trajectory has dx = {}, du = {}; basis has dx = {}, du = {}",
            traj.dx(),
            traj.du(),
            rep.dx(),
            rep.du()
        )));
    }
    Ok(())
}

/// `theta = Lambda^+ sum_s Phi' (z_s (x) I) x_{s+1}` with
/// `Lambda = sum_s Phi' (z_s z_s' (x) I) Phi` and `z_s = [x_s; u_s]`.
pub fn least_squares(rep: &Representation, traj: &Trajectory) -> Result<LsOutput> {
    check_dims(rep, traj)?;
    let mut acc = Accumulator::new(rep);
    let mut z = Vec::with_capacity(rep.dx() + rep.du());
    for s in 0..traj.len() {
        z.clear();
        z.extend_from_slice(&traj.states[s]);
        z.extend_from_slice(&traj.inputs[s]);
        acc.push(&z, &traj.states[s + 1]);
    }
    acc.finish()
}

/// As [`least_squares`], with targets `x_{s+1} - [A_bar B_bar] z_s`.
pub fn affine_least_squares(
    rep: &Representation,
    base: &AffineBase,
    traj: &Trajectory,
) -> Result<LsOutput> {
    check_dims(rep, traj)?;
    if base.a_bar.nrows() != rep.dx() || base.b_bar.ncols() != rep.du() {
        return Err(LabError::Dimension(
            "affine base does not match basis".into(),
        ));
    }
    let known = base.stacked();
    let mut acc = Accumulator::new(rep);
    for s in 0..traj.len() {
        let z = traj.regressor(s);
        let target = Vector::from_column_slice(&traj.states[s + 1]) - &known * &z;
        acc.push(z.as_slice(), target.as_slice());
    }
    acc.finish()
}

/// Dispatches on whether a known affine part is present.
pub fn estimate(
    rep: &Representation,
    base: Option<&AffineBase>,
    traj: &Trajectory,
) -> Result<LsOutput> {
    match base {
        Some(b) => affine_least_squares(rep, b, traj),
        None => least_squares(rep, traj),
    }
}

/// `lambda_min(Phi' ([I; K][I; K]' (x) I) Phi)`.
///
/// Entry `(i, j)` of that Gram matrix is `<Phi_i [I; K], Phi_j [I; K]>_F`, so
/// it has rank at most `dx^2` and is exactly singular when `dtheta > dx^2`.
pub fn excitation_check(rep: &Representation, k: &Matrix) -> Result<f64> {
    let (dx, du) = (rep.dx(), rep.du());
    if k.nrows() != du || k.ncols() != dx {
        return Err(LabError::Dimension(format!(
            "gain is {}x{}, expected {du}x{dx}",
            k.nrows(),
            k.ncols()
        )));
    }
    let dtheta = rep.dtheta();
    if dtheta > dx * dx {
        return Ok(0.0);
    }
    let mut z = Matrix::zeros(dx + du, dx);
    z.view_mut((0, 0), (dx, dx)).fill_with_identity();
    z.view_mut((dx, 0), (du, dx)).copy_from(k);
    let images: Vec<Matrix> = (0..dtheta).map(|i| rep.basis_matrix(i) * &z).collect();
    let mut gram = Matrix::zeros(dtheta, dtheta);
    for i in 0..dtheta {
        for j in i..dtheta {
            let g = images[i].dot(&images[j]);
            gram[(i, j)] = g;
            gram[(j, i)] = g;
        }
    }
    let diagonal = (0..dtheta).all(|i| (0..dtheta).all(|j| i == j || gram[(i, j)] == 0.0));
    if diagonal {
        return Ok(gram.diagonal().min());
    }
    matkit::sym_eig_min(&gram)
}

/// Closed-form centered covariance of `[x_s; u_s]` averaged over an epoch of
/// length `t` under `u = K x + sigma_u g` with unit process-noise covariance.
pub fn steady_covariance(sys: &LinearSystem, k: &Matrix, sigma_u: f64, t: usize) -> Result<Matrix> {
    if t < 2 {
        return Err(LabError::InvalidArgument(format!("need t >= 2, got {t}")));
    }
    if !(0.0..=1.0).contains(&sigma_u) {
        return Err(LabError::InvalidArgument(format!(
            "sigma_u must lie in [0, 1], got {sigma_u}"
        )));
    }
    let a_k = sys.closed_loop(k)?;
    let radius = matkit::spectral_radius(&a_k)?;
    if radius >= 1.0 {
        return Err(LabError::Unstable { radius });
    }
    let (dx, du) = (sys.dx(), sys.du());
    let mut z = Matrix::zeros(dx + du, dx);
    z.view_mut((0, 0), (dx, dx)).fill_with_identity();
    z.view_mut((dx, 0), (du, dx)).copy_from(k);
    let noise = &sys.b * sys.b.transpose() * (sigma_u * sigma_u) + Matrix::identity(dx, dx);

    // inner_s = sum_{j <= s} A^j N A^j'; total = sum_{s <= t-2} inner_s.
    let mut inner = Matrix::zeros(dx, dx);
    let mut total = Matrix::zeros(dx, dx);
    let mut power = Matrix::identity(dx, dx);
    for _ in 0..=(t - 2) {
        inner += &power * &noise * power.transpose();
        total += &inner;
        power = &a_k * &power;
    }
    let mut cov = &z * total * z.transpose() / t as f64;
    for i in 0..du {
        cov[(dx + i, dx + i)] += sigma_u * sigma_u;
    }
    Ok(cov)
}
