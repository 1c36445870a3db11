//! Basis-decomposition model `[A B] = vec^-1(Phi theta)`, subspace distance
//! between representations, and the scenario-specific basis builders.

mod basis;
mod cartpole;
mod theory;

pub use basis::{
    extended_lumped, full_basis, known_a_embedding, known_b_embedding, lumped_cartpole,
    lumped_representation, scale_known_a, Basis,
};
pub use cartpole::{
    benchmark_cartpole, cartpole_system, paper_cartpole_fixture, paper_k0, CartpoleParams,
    BENCHMARK_DT, BENCHMARK_GRAVITY,
};
pub use theory::{theory_constants, TheoryConstants};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{LabError, Result};
use crate::matkit::{self, Matrix, Vector};
use crate::riccati::LinearSystem;

/// Column-major stacking of a `dx x (dx + du)` matrix.
pub fn vec(m: &Matrix) -> Vector {
    Vector::from_column_slice(m.as_slice())
}

/// Inverse of [`vec`]: fills a `dx`-row matrix column by column.
pub fn vec_inv(v: &Vector, dx: usize) -> Result<Matrix> {
    if dx == 0 || !v.len().is_multiple_of(dx) || v.is_empty() {
        return Err(LabError::Dimension(format!(
            "vector of length {} cannot be split into columns of height {dx}",
            v.len()
        )));
    }
    Ok(Matrix::from_column_slice(dx, v.len() / dx, v.as_slice()))
}

/// Orthonormal basis `Phi` of size `dx (dx + du) x dtheta`.
#[derive(Debug, Clone, PartialEq)]
pub struct Representation {
    phi: Matrix,
    dx: usize,
    du: usize,
}

impl Representation {
    pub fn new(phi: Matrix, dx: usize, du: usize) -> Result<Self> {
        let ambient = dx * (dx + du);
        if dx == 0 || du == 0 || phi.nrows() != ambient {
            return Err(LabError::Dimension(format!(
                "basis has {} rows, expected dx (dx + du) = {ambient}",
                phi.nrows()
            )));
        }
        if phi.ncols() == 0 || phi.ncols() > ambient {
            return Err(LabError::Dimension(format!(
                "dtheta = {} outside [1, {ambient}]",
                phi.ncols()
            )));
        }
        matkit::ensure_finite(&phi)?;
        let gram_err = (phi.transpose() * &phi - Matrix::identity(phi.ncols(), phi.ncols())).amax();
        if gram_err > 1e-10 {
            return Err(LabError::InvalidArgument(format!(
                "basis columns are not orthonormal (max |Phi'Phi - I| = {gram_err:.3e})"
            )));
        }
        Ok(Self { phi, dx, du })
    }

    /// Orthonormalizes the columns of `m` first.
    pub fn from_columns(m: &Matrix, dx: usize, du: usize) -> Result<Self> {
        Self::new(matkit::qr_orthonormalize(m)?, dx, du)
    }

    pub fn identity(dx: usize, du: usize) -> Self {
        let n = dx * (dx + du);
        Self {
            phi: Matrix::identity(n, n),
            dx,
            du,
        }
    }

    pub fn phi(&self) -> &Matrix {
        &self.phi
    }

    pub fn dx(&self) -> usize {
        self.dx
    }

    pub fn du(&self) -> usize {
        self.du
    }

    pub fn dtheta(&self) -> usize {
        self.phi.ncols()
    }

    pub fn ambient_dim(&self) -> usize {
        self.phi.nrows()
    }

    /// Column `i` reshaped to `[Phi_i^A Phi_i^B]`.
    pub fn basis_matrix(&self, i: usize) -> Matrix {
        Matrix::from_column_slice(self.dx, self.dx + self.du, self.phi.column(i).as_slice())
    }

    /// Least-squares coordinates of a stacked `[A B]` in this basis, `Phi' vec([A B])`.
    pub fn project(&self, stacked: &Matrix) -> ParamVector {
        ParamVector(self.phi.transpose() * vec(stacked))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector(pub Vector);

impl ParamVector {
    pub fn new(theta: Vector) -> Result<Self> {
        if theta.iter().any(|x| !x.is_finite()) {
            return Err(LabError::InvalidArgument("non-finite parameter".into()));
        }
        Ok(Self(theta))
    }

    pub fn zeros(n: usize) -> Self {
        Self(Vector::zeros(n))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }
}

/// Known part `[A_bar B_bar]` of an affine model.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineBase {
    pub a_bar: Matrix,
    pub b_bar: Matrix,
}

impl AffineBase {
    pub fn new(a_bar: Matrix, b_bar: Matrix) -> Result<Self> {
        LinearSystem::new(a_bar.clone(), b_bar.clone())?;
        Ok(Self { a_bar, b_bar })
    }

    pub fn zeros(dx: usize, du: usize) -> Self {
        Self {
            a_bar: Matrix::zeros(dx, dx),
            b_bar: Matrix::zeros(dx, du),
        }
    }

    pub fn stacked(&self) -> Matrix {
        LinearSystem {
            a: self.a_bar.clone(),
            b: self.b_bar.clone(),
        }
        .stacked()
    }
}

/// `[A B] = [A_bar B_bar] + vec^-1(Phi theta)`.
pub fn realize(
    rep: &Representation,
    theta: &ParamVector,
    base: Option<&AffineBase>,
) -> Result<LinearSystem> {
    if theta.len() != rep.dtheta() {
        return Err(LabError::Dimension(format!(
            "theta has length {}, basis has {} columns",
            theta.len(),
            rep.dtheta()
        )));
    }
    let mut stacked = vec_inv(&(rep.phi() * &theta.0), rep.dx())?;
    if let Some(base) = base {
        if base.a_bar.nrows() != rep.dx() || base.b_bar.ncols() != rep.du() {
            return Err(LabError::Dimension(
                "affine base does not match basis".into(),
            ));
        }
        stacked = base.stacked() + stacked;
    }
    LinearSystem::from_stacked(&stacked, rep.dx())
}

/// `||Phi_hat' Phi_star_perp||`, computed as `||(I - Phi_star Phi_star') Phi_hat||`.
pub fn subspace_distance(phi_hat: &Representation, phi_star: &Representation) -> Result<f64> {
    if phi_hat.ambient_dim() != phi_star.ambient_dim() || phi_hat.dtheta() != phi_star.dtheta() {
        return Err(LabError::Dimension(format!(
            "cannot compare a {}x{} basis with a {}x{} basis",
            phi_hat.ambient_dim(),
            phi_hat.dtheta(),
            phi_star.ambient_dim(),
            phi_star.dtheta()
        )));
    }
    let (h, s) = (phi_hat.phi(), phi_star.phi());
    let residual = h - s * (s.transpose() * h);
    Ok(matkit::spectral_norm(&residual).min(1.0))
}

/// Perturbs `phi_star` along a seeded Gaussian direction until the subspace
/// distance hits `target` (bisection on the perturbation scale).
pub fn perturb_to_distance(
    phi_star: &Representation,
    target: f64,
    seed: u64,
) -> Result<Representation> {
    const TOL: f64 = 1e-3;
    const MAX_ITER: usize = 60;
    if !(target > 0.0 && target < 1.0) {
        return Err(LabError::InvalidArgument(format!(
            "target distance must lie in (0, 1), got {target}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (rows, cols) = phi_star.phi().shape();
    let dir = Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng));
    let (dx, du) = (phi_star.dx(), phi_star.du());
    let at = |s: f64| -> Result<(Representation, f64)> {
        let rep = Representation::from_columns(&(phi_star.phi() + &dir * s), dx, du)?;
        let d = subspace_distance(&rep, phi_star)?;
        Ok((rep, d))
    };

    let mut lo = 0.0;
    let mut hi = target;
    let mut best = at(hi)?;
    let mut grow = 0;
    while best.1 < target {
        lo = hi;
        hi *= 2.0;
        best = at(hi)?;
        grow += 1;
        if grow > MAX_ITER {
            return Err(LabError::Bisection(format!(
                "could not bracket distance {target}"
            )));
        }
    }
    for _ in 0..MAX_ITER {
        if (best.1 - target).abs() <= TOL * 1e-3 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let cand = at(mid)?;
        if cand.1 < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if (cand.1 - target).abs() < (best.1 - target).abs() {
            best = cand;
        }
    }
    if (best.1 - target).abs() > TOL {
        return Err(LabError::Bisection(format!(
            "closest distance {} misses target {target}",
            best.1
        )));
    }
    Ok(best.0)
}
