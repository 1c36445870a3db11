//! LQR synthesis and evaluation: DARE, discrete Lyapunov equation, gains,
//! infinite-horizon cost, and the certainty-equivalence closeness test.

use serde::Serialize;

use crate::error::{LabError, Result};
use crate::matkit::{self, Matrix};

/// Relative-change tolerance of the Riccati fixed-point iteration.
pub const DARE_TOL: f64 = 1e-12;
pub const DARE_MAX_ITER: usize = 100_000;
pub const DLYAP_TOL: f64 = 1e-14;

/// Linear dynamics `x' = A x + B u`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    pub a: Matrix,
    pub b: Matrix,
}

impl LinearSystem {
    pub fn new(a: Matrix, b: Matrix) -> Result<Self> {
        if !a.is_square() || a.nrows() != b.nrows() || a.nrows() == 0 || b.ncols() == 0 {
            return Err(LabError::Dimension(format!(
                "A is {}x{}, B is {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols()
            )));
        }
        matkit::ensure_finite(&a)?;
        matkit::ensure_finite(&b)?;
        Ok(Self { a, b })
    }

    pub fn dx(&self) -> usize {
        self.a.nrows()
    }

    pub fn du(&self) -> usize {
        self.b.ncols()
    }

    /// `[A B]` as one `dx x (dx + du)` matrix.
    pub fn stacked(&self) -> Matrix {
        let (dx, du) = (self.dx(), self.du());
        let mut m = Matrix::zeros(dx, dx + du);
        m.view_mut((0, 0), (dx, dx)).copy_from(&self.a);
        m.view_mut((0, dx), (dx, du)).copy_from(&self.b);
        m
    }

    pub fn from_stacked(m: &Matrix, dx: usize) -> Result<Self> {
        if m.nrows() != dx || m.ncols() <= dx {
            return Err(LabError::Dimension(format!(
                "stacked [A B] of shape {}x{} does not match dx = {dx}",
                m.nrows(),
                m.ncols()
            )));
        }
        let du = m.ncols() - dx;
        Self::new(
            m.view((0, 0), (dx, dx)).into_owned(),
            m.view((0, dx), (dx, du)).into_owned(),
        )
    }

    pub fn closed_loop(&self, k: &Matrix) -> Result<Matrix> {
        if k.nrows() != self.du() || k.ncols() != self.dx() {
            return Err(LabError::Dimension(format!(
                "gain is {}x{}, expected {}x{}",
                k.nrows(),
                k.ncols(),
                self.du(),
                self.dx()
            )));
        }
        Ok(&self.a + &self.b * k)
    }
}

/// Quadratic cost weights with `Q >= I` and `R = I`.
#[derive(Debug, Clone, PartialEq)]
pub struct LqrWeights {
    pub q: Matrix,
    pub r: Matrix,
}

impl LqrWeights {
    pub fn new(q: Matrix, r: Matrix) -> Result<Self> {
        let min_q = matkit::sym_eig_min(&q)?;
        if min_q < 1.0 - 1e-12 {
            return Err(LabError::InvalidArgument(format!(
                "Q must satisfy Q >= I (smallest eigenvalue {min_q})"
            )));
        }
        if r != Matrix::identity(r.nrows(), r.ncols()) {
            return Err(LabError::InvalidArgument("R must be the identity".into()));
        }
        Ok(Self { q, r })
    }

    pub fn identity(dx: usize, du: usize) -> Self {
        Self {
            q: Matrix::identity(dx, dx),
            r: Matrix::identity(du, du),
        }
    }

    fn check(&self, sys: &LinearSystem) -> Result<()> {
        if self.q.nrows() != sys.dx() || self.r.nrows() != sys.du() {
            return Err(LabError::Dimension(format!(
                "weights are Q {}x{}, R {}x{} for a system with dx = {}, du = {}",
                self.q.nrows(),
                self.q.ncols(),
                self.r.nrows(),
                self.r.ncols(),
                sys.dx(),
                sys.du()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthesisResult {
    /// Stabilizing DARE solution.
    pub p: Matrix,
    pub k: Matrix,
    /// `trace(dlyap(A + B K, Q + K' R K))`.
    pub cost: f64,
}

fn riccati_map(sys: &LinearSystem, w: &LqrWeights, p: &Matrix) -> Result<Matrix> {
    let (a, b) = (&sys.a, &sys.b);
    let pa = p * a;
    let pb = p * b;
    let gram = matkit::symmetrize(&(b.transpose() * &pb + &w.r));
    let bt_pa = b.transpose() * &pa;
    let sol = matkit::solve_spd(&gram, &bt_pa)?;
    let next = a.transpose() * &pa - bt_pa.transpose() * sol + &w.q;
    Ok(matkit::symmetrize(&next))
}

/// Stabilizing solution of the discrete algebraic Riccati equation by
/// fixed-point iteration from `P = Q`.
pub fn dare(sys: &LinearSystem, w: &LqrWeights) -> Result<Matrix> {
    w.check(sys)?;
    let mut p = w.q.clone();
    for _ in 0..DARE_MAX_ITER {
        let next = riccati_map(sys, w, &p)?;
        let change = (&next - &p).norm();
        let scale = next.norm();
        if !scale.is_finite() || scale > 1e300 {
            return Err(LabError::NotStabilizable {
                iterations: DARE_MAX_ITER,
            });
        }
        p = next;
        if change <= DARE_TOL * scale {
            return Ok(p);
        }
    }
    Err(LabError::NotStabilizable {
        iterations: DARE_MAX_ITER,
    })
}

/// Fixed-point residual `||A'PA - A'PB (B'PB + R)^-1 B'PA + Q - P||_F`.
pub fn dare_residual(sys: &LinearSystem, w: &LqrWeights, p: &Matrix) -> Result<f64> {
    Ok((riccati_map(sys, w, p)? - p).norm())
}

/// Solves `P = A' P A + Q` for stable `A` by the doubling recursion.
pub fn dlyap(a_cl: &Matrix, q: &Matrix) -> Result<Matrix> {
    if !a_cl.is_square() || q.shape() != a_cl.shape() {
        return Err(LabError::Dimension(format!(
            "dlyap: A is {}x{}, Q is {}x{}",
            a_cl.nrows(),
            a_cl.ncols(),
            q.nrows(),
            q.ncols()
        )));
    }
    let radius = matkit::spectral_radius(a_cl)?;
    if radius >= 1.0 {
        return Err(LabError::Unstable { radius });
    }
    let mut p = q.clone();
    let mut ak = a_cl.clone();
    // 2^200 terms is far past any radius that passes the check above.
    for _ in 0..200 {
        let inc = ak.transpose() * &p * &ak;
        p += &inc;
        ak = &ak * &ak;
        if inc.norm() <= DLYAP_TOL * p.norm() || ak.amax() == 0.0 {
            break;
        }
    }
    Ok(matkit::symmetrize(&p))
}

pub fn lqr_gain(sys: &LinearSystem, w: &LqrWeights) -> Result<SynthesisResult> {
    let p = dare(sys, w)?;
    let gram = matkit::symmetrize(&(sys.b.transpose() * &p * &sys.b + &w.r));
    let k = -matkit::solve_spd(&gram, &(sys.b.transpose() * &p * &sys.a))?;
    let cost = closed_loop_cost(sys, w, &k)?;
    Ok(SynthesisResult { p, k, cost })
}

/// `P_K = dlyap(A + B K, Q + K' R K)`.
pub fn controller_value(sys: &LinearSystem, w: &LqrWeights, k: &Matrix) -> Result<Matrix> {
    w.check(sys)?;
    let a_cl = sys.closed_loop(k)?;
    dlyap(&a_cl, &(&w.q + k.transpose() * &w.r * k))
}

/// Infinite-horizon average cost `trace(P_K)` of `u = K x` under unit noise covariance.
pub fn closed_loop_cost(sys: &LinearSystem, w: &LqrWeights, k: &Matrix) -> Result<f64> {
    Ok(controller_value(sys, w, k)?.trace())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CeDiagnostic {
    pub epsilon: f64,
    pub within: bool,
    pub suboptimality_bound: f64,
}

/// Closeness radius and suboptimality bound for a certainty-equivalent gain
/// synthesized from a model with squared Frobenius error `est_error_sq`.
pub fn ce_closeness(p_star: &Matrix, est_error_sq: f64) -> Result<CeDiagnostic> {
    if !(est_error_sq >= 0.0) {
        return Err(LabError::InvalidArgument(format!(
            "squared estimation error must be non-negative, got {est_error_sq}"
        )));
    }
    let norm = matkit::spectral_norm(p_star);
    let epsilon = 1.0 / (2916.0 * norm.powi(10));
    Ok(CeDiagnostic {
        epsilon,
        within: est_error_sq <= epsilon,
        suboptimality_bound: 142.0 * norm.powi(8) * est_error_sq,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(a: f64, b: f64) -> LinearSystem {
        LinearSystem::new(Matrix::from_element(1, 1, a), Matrix::from_element(1, 1, b)).unwrap()
    }

    #[test]
    fn scalar_dare() {
        let w = LqrWeights::identity(1, 1);
        let p = dare(&scalar(0.0, 1.0), &w).unwrap();
        assert!((p[(0, 0)] - 1.0).abs() < 1e-14);

        // P^2 - 0.25 P - 1 = 0
        let root = (0.25 + (0.0625f64 + 4.0).sqrt()) / 2.0;
        let p = dare(&scalar(0.5, 1.0), &w).unwrap();
        assert!((p[(0, 0)] - root).abs() < 1e-12);
        assert!((root - 1.132782).abs() < 1e-6);
    }

    #[test]
    fn scalar_gain() {
        let w = LqrWeights::identity(1, 1);
        let res = lqr_gain(&scalar(0.5, 1.0), &w).unwrap();
        let root = (0.25 + (0.0625f64 + 4.0).sqrt()) / 2.0;
        let k = -root * 0.5 / (root + 1.0);
        assert!((res.k[(0, 0)] - k).abs() < 1e-12);
        assert!((k + 0.265564).abs() < 1e-6);
        assert!((res.cost - res.p.trace()).abs() < 1e-10 * res.cost);

        let res = lqr_gain(&scalar(0.0, 3.0), &w).unwrap();
        assert_eq!(res.k[(0, 0)], 0.0);
    }

    #[test]
    fn dlyap_examples() {
        let q = Matrix::identity(2, 2);
        assert_eq!(dlyap(&Matrix::zeros(2, 2), &q).unwrap(), q);
        let p = dlyap(
            &Matrix::from_element(1, 1, 0.5),
            &Matrix::from_element(1, 1, 1.0),
        )
        .unwrap();
        assert!((p[(0, 0)] - 4.0 / 3.0).abs() < 1e-14);
        let nil = Matrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let p = dlyap(&nil, &q).unwrap();
        assert_eq!(p, Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]));
        assert!(matches!(
            dlyap(
                &Matrix::from_element(1, 1, 1.0),
                &Matrix::from_element(1, 1, 1.0)
            ),
            Err(LabError::Unstable { .. })
        ));
    }

    #[test]
    fn closed_loop_cost_examples() {
        let w = LqrWeights::identity(2, 1);
        let sys = LinearSystem::new(Matrix::zeros(2, 2), Matrix::from_element(2, 1, 1.0)).unwrap();
        let c = closed_loop_cost(&sys, &w, &Matrix::zeros(1, 2)).unwrap();
        assert_eq!(c, 2.0);

        // a_cl = 0.5 with a = 0.5 - k, b = 1: cost = (1 + k^2) / (1 - 0.25).
        let w = LqrWeights::identity(1, 1);
        let k = 0.3;
        let c =
            closed_loop_cost(&scalar(0.5 - k, 1.0), &w, &Matrix::from_element(1, 1, k)).unwrap();
        assert!((c - 4.0 / 3.0 * (1.0 + k * k)).abs() < 1e-14);
        let unstable = closed_loop_cost(&scalar(2.0, 1.0), &w, &Matrix::zeros(1, 1));
        assert!(matches!(unstable, Err(LabError::Unstable { .. })));
    }

    #[test]
    fn unstabilizable_is_reported() {
        let sys = scalar(1.5, 0.0);
        let r = dare(&sys, &LqrWeights::identity(1, 1));
        assert!(matches!(r, Err(LabError::NotStabilizable { .. })));
    }

    #[test]
    fn weights_validation() {
        assert!(LqrWeights::new(Matrix::identity(2, 2) * 0.5, Matrix::identity(1, 1)).is_err());
        assert!(LqrWeights::new(Matrix::identity(2, 2), Matrix::identity(1, 1) * 2.0).is_err());
        assert!(LqrWeights::new(Matrix::identity(2, 2) * 3.0, Matrix::identity(1, 1)).is_ok());
    }

    #[test]
    fn closeness_examples() {
        let d = ce_closeness(&Matrix::identity(3, 3), 0.0).unwrap();
        assert!((d.epsilon - 1.0 / 2916.0).abs() < 1e-18);
        assert!(d.within);
        assert_eq!(d.suboptimality_bound, 0.0);

        let d = ce_closeness(&Matrix::identity(3, 3), 1e-4).unwrap();
        assert!((d.suboptimality_bound - 0.0142).abs() < 1e-15);
        assert!(d.within);
        assert!(!ce_closeness(&Matrix::identity(3, 3), 1e-3).unwrap().within);

        let d = ce_closeness(&(Matrix::identity(2, 2) * 2.0), 5.0).unwrap();
        assert!((d.epsilon - 1.0 / (2916.0 * 1024.0)).abs() < 1e-20);
        assert!((d.epsilon - 3.349e-7).abs() < 1e-10);
        assert!(ce_closeness(&Matrix::identity(1, 1), -1.0).is_err());
    }
}
