//! Representations used by the experiments. Every builder returns a basis,
//! an optional known affine part, and the coordinates that reproduce the
//! supplied system exactly.

use crate::error::{LabError, Result};
use crate::estimator::excitation_check;
use crate::matkit::{self, Matrix, Vector};
use crate::riccati::{lqr_gain, LinearSystem, LqrWeights};

use super::{realize, vec, AffineBase, ParamVector, Representation};

#[derive(Debug, Clone)]
pub struct Basis {
    pub rep: Representation,
    pub base: Option<AffineBase>,
    pub theta: ParamVector,
}

const REPRODUCTION_TOL: f64 = 1e-12;

fn finish(rep: Representation, base: Option<AffineBase>, sys: &LinearSystem) -> Result<Basis> {
    let mut target = sys.stacked();
    if let Some(base) = &base {
        target -= base.stacked();
    }
    let theta = rep.project(&target);
    let realized = realize(&rep, &theta, base.as_ref())?;
    let err = (realized.stacked() - sys.stacked()).amax();
    if err > REPRODUCTION_TOL {
        return Err(LabError::Builder(format!(
            "basis does not contain the system (max entry error {err:.3e})"
        )));
    }
    Ok(Basis { rep, base, theta })
}

/// Position of `[A B]` entry `(row, col)` inside `vec([A B])`.
fn coord(dx: usize, row: usize, col: usize) -> usize {
    col * dx + row
}

fn unit(n: usize, i: usize) -> Vector {
    let mut v = Vector::zeros(n);
    v[i] = 1.0;
    v
}

fn from_vectors(cols: &[Vector], dx: usize, du: usize) -> Result<Representation> {
    Representation::new(Matrix::from_columns(cols), dx, du)
}

/// Every entry of `[A B]` unknown.
pub fn full_basis(sys: &LinearSystem) -> Result<Basis> {
    finish(Representation::identity(sys.dx(), sys.du()), None, sys)
}

/// `A` known up to one scale factor, `B` fully unknown.
pub fn scale_known_a(sys: &LinearSystem) -> Result<Basis> {
    let (dx, du) = (sys.dx(), sys.du());
    let n = dx * (dx + du);
    let a_norm = sys.a.norm();
    if a_norm == 0.0 {
        return Err(LabError::Builder("A is zero, nothing to scale".into()));
    }
    let mut a_only = sys.stacked();
    a_only.view_mut((0, dx), (dx, du)).fill(0.0);
    let mut cols = vec![vec(&a_only) / a_norm];
    for c in 0..du {
        for r in 0..dx {
            cols.push(unit(n, coord(dx, r, dx + c)));
        }
    }
    finish(from_vectors(&cols, dx, du)?, None, sys)
}

/// Lumped-parameter cartpole structure: one column carrying the
/// parameter-free entries (ones on the diagonal and the two `dt`
/// integrator couplings), plus one coordinate column per entry that depends
/// on the masses and length: `A[1,2]`, `A[3,2]`, `B[1]`, `B[3]` (zero-based).
pub fn lumped_representation(dt: f64) -> Representation {
    let (dx, du) = (4, 1);
    let n = dx * (dx + du);
    let mut structure = Matrix::zeros(dx, dx + du);
    for i in 0..dx {
        structure[(i, i)] = 1.0;
    }
    structure[(0, 1)] = dt;
    structure[(2, 3)] = dt;
    let s = vec(&structure);
    let cols = [
        &s / s.norm(),
        unit(n, coord(dx, 1, 2)),
        unit(n, coord(dx, 3, 2)),
        unit(n, coord(dx, 1, dx)),
        unit(n, coord(dx, 3, dx)),
    ];
    from_vectors(&cols, dx, du).expect("disjoint supports are orthonormal")
}

pub fn lumped_cartpole(sys: &LinearSystem, dt: f64) -> Result<Basis> {
    if sys.dx() != 4 || sys.du() != 1 {
        return Err(LabError::Builder(
            "lumped basis needs a cartpole (dx = 4, du = 1)".into(),
        ));
    }
    finish(lumped_representation(dt), None, sys)
}

/// Lumped basis plus one direction that the optimal controller of `sys`
/// never excites.
///
/// The extra column is `vec([-M K*, M])` for some `M`, which lies in the
/// kernel of `([I; K*][I; K*]' (x) I)`, so the excitation level under `K*` is
/// zero. Among such directions orthogonal to the lumped span, the one least
/// excited by `k0` is taken.
pub fn extended_lumped(
    sys: &LinearSystem,
    dt: f64,
    k0: &Matrix,
    weights: &LqrWeights,
) -> Result<Basis> {
    let lumped = lumped_cartpole(sys, dt)?;
    let (dx, du) = (sys.dx(), sys.du());
    let n = dx * (dx + du);
    let synth = lqr_gain(sys, weights)?;
    let k_star = &synth.k;

    // Columns of `null_map` span { vec([-M K*, M]) : M in R^{dx x du} }.
    let mut null_map = Matrix::zeros(n, dx * du);
    for c in 0..du {
        for r in 0..dx {
            let mut mb = Matrix::zeros(dx, du);
            mb[(r, c)] = 1.0;
            let mut stacked = Matrix::zeros(dx, dx + du);
            stacked
                .view_mut((0, 0), (dx, dx))
                .copy_from(&(-(&mb * k_star)));
            stacked.view_mut((0, dx), (dx, du)).copy_from(&mb);
            null_map.set_column(c * dx + r, &vec(&stacked));
        }
    }
    let phi_l = lumped.rep.phi();
    let constraint = phi_l.transpose() * &null_map;
    let dec = matkit::svd(&constraint);
    let tol = 1e-10 * dec.s.first().copied().unwrap_or(1.0).max(1.0);
    let rank = dec.s.iter().filter(|&&s| s > tol).count();
    // Right singular vectors beyond the rank span the admissible coefficients.
    let full = matkit::svd(&(constraint.transpose() * &constraint));
    let free: Vec<Vector> = (rank..dx * du)
        .map(|i| full.v.column(i).into_owned())
        .collect();
    if free.is_empty() {
        return Err(LabError::Builder(
            "no direction orthogonal to the lumped span is unexcited by K*".into(),
        ));
    }
    let candidates: Vec<Vector> = free.iter().map(|m| &null_map * m).collect();
    let cand = Matrix::from_columns(&candidates);
    let cand_rep = Representation::from_columns(&cand, dx, du)?;
    // Least-excited combination under k0.
    let z = stack_identity_gain(k0, dx);
    let mut gram = Matrix::zeros(cand_rep.dtheta(), cand_rep.dtheta());
    for i in 0..cand_rep.dtheta() {
        for j in 0..cand_rep.dtheta() {
            gram[(i, j)] = (cand_rep.basis_matrix(i) * &z).dot(&(cand_rep.basis_matrix(j) * &z));
        }
    }
    let eig = nalgebra::SymmetricEigen::new(matkit::symmetrize(&gram));
    let imin = eig.eigenvalues.imin();
    let mut extra = cand_rep.phi() * eig.eigenvectors.column(imin);
    // Re-orthogonalize against the lumped span to remove rounding.
    let proj = phi_l * (phi_l.transpose() * &extra);
    extra -= proj;
    let extra = &extra / extra.norm();

    let mut cols: Vec<Vector> = (0..phi_l.ncols())
        .map(|i| phi_l.column(i).into_owned())
        .collect();
    cols.push(extra);
    let rep = from_vectors(&cols, dx, du)?;
    let basis = finish(rep, None, sys)?;

    let alpha_min = 1.0 / (3.0 * matkit::spectral_norm(&synth.p).powf(1.5));
    let worst = excitation_check(&basis.rep, k0)?.min(excitation_check(&basis.rep, k_star)?);
    if worst >= alpha_min * alpha_min {
        return Err(LabError::Builder(format!(
            "extended basis still persistently excited (min level {worst:.3e})"
        )));
    }
    Ok(basis)
}

fn stack_identity_gain(k: &Matrix, dx: usize) -> Matrix {
    let du = k.nrows();
    let mut z = Matrix::zeros(dx + du, dx);
    z.view_mut((0, 0), (dx, dx)).fill_with_identity();
    z.view_mut((dx, 0), (du, dx)).copy_from(k);
    z
}

/// `B` known: `[A_bar B_bar] = [0 B]`, one coordinate column per entry of `A`.
pub fn known_b_embedding(sys: &LinearSystem) -> Result<Basis> {
    let (dx, du) = (sys.dx(), sys.du());
    let n = dx * (dx + du);
    let cols: Vec<Vector> = (0..dx * dx).map(|i| unit(n, i)).collect();
    let base = AffineBase::new(Matrix::zeros(dx, dx), sys.b.clone())?;
    finish(from_vectors(&cols, dx, du)?, Some(base), sys)
}

/// `A` known: `[A_bar B_bar] = [A 0]`, one coordinate column per entry of `B`.
pub fn known_a_embedding(sys: &LinearSystem) -> Result<Basis> {
    let (dx, du) = (sys.dx(), sys.du());
    let n = dx * (dx + du);
    let cols: Vec<Vector> = (dx * dx..n).map(|i| unit(n, i)).collect();
    let base = AffineBase::new(sys.a.clone(), Matrix::zeros(dx, du))?;
    finish(from_vectors(&cols, dx, du)?, Some(base), sys)
}
