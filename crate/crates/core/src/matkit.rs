//! Dense linear-algebra kernels.
//!
//! Thin contracts over `nalgebra` factorizations. Matrices in this crate are
//! small (at most a few dozen rows) so everything is dense and allocating.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{LabError, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative cutoff below which singular values are treated as zero in [`pinv`].
pub const PINV_RCOND: f64 = 1e-10;

/// Builds a matrix from row-major entries, rejecting empty shapes and non-finite values.
pub fn from_rows(rows: usize, cols: usize, entries: &[f64]) -> Result<Matrix> {
    if rows == 0 || cols == 0 {
        return Err(LabError::Dimension(format!(
            "matrix must be at least 1x1, got {rows}x{cols}"
        )));
    }
    if entries.len() != rows * cols {
        return Err(LabError::Dimension(format!(
            "{rows}x{cols} matrix needs {} entries, got {}",
            rows * cols,
            entries.len()
        )));
    }
    let m = Matrix::from_row_slice(rows, cols, entries);
    ensure_finite(&m)?;
    Ok(m)
}

pub fn ensure_finite(m: &Matrix) -> Result<()> {
    for c in 0..m.ncols() {
        for r in 0..m.nrows() {
            if !m[(r, c)].is_finite() {
                return Err(LabError::NonFinite { row: r, col: c });
            }
        }
    }
    Ok(())
}

/// Orthonormal basis for the column span of a full-column-rank matrix (Householder QR).
pub fn qr_orthonormalize(m: &Matrix) -> Result<Matrix> {
    let (rows, cols) = m.shape();
    if rows < cols {
        return Err(LabError::Dimension(format!(
            "qr_orthonormalize needs rows >= cols, got {rows}x{cols}"
        )));
    }
    ensure_finite(m)?;
    let scale = m.norm().max(f64::MIN_POSITIVE);
    let qr = m.clone().qr();
    let r = qr.r();
    for j in 0..cols {
        if r[(j, j)].abs() <= 1e-12 * scale {
            return Err(LabError::RankDeficient { column: j });
        }
    }
    Ok(qr.q())
}

#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Matrix,
    /// Non-negative, non-increasing.
    pub s: Vec<f64>,
    pub v: Matrix,
}

/// Thin SVD with singular values sorted in descending order.
pub fn svd(m: &Matrix) -> Svd {
    let dec = m.clone().svd(true, true);
    let u = dec.u.expect("u requested");
    let v = dec.v_t.expect("v_t requested").transpose();
    let s = dec.singular_values;
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&i, &j| s[j].total_cmp(&s[i]));
    let k = order.len();
    let mut su = Matrix::zeros(u.nrows(), k);
    let mut sv = Matrix::zeros(v.nrows(), k);
    let mut ss = Vec::with_capacity(k);
    for (dst, &src) in order.iter().enumerate() {
        su.set_column(dst, &u.column(src));
        sv.set_column(dst, &v.column(src));
        ss.push(s[src].max(0.0));
    }
    Svd {
        u: su,
        s: ss,
        v: sv,
    }
}

fn check_symmetric(m: &Matrix) -> Result<()> {
    if !m.is_square() {
        return Err(LabError::Dimension(format!(
            "expected a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let asym = (m - m.transpose()).amax();
    if asym > 1e-10 * m.amax().max(1.0) {
        return Err(LabError::Asymmetric { asymmetry: asym });
    }
    Ok(())
}

/// All eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues(m: &Matrix) -> Result<Vec<f64>> {
    check_symmetric(m)?;
    let sym = (m + m.transpose()) * 0.5;
    let mut ev: Vec<f64> = SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .copied()
        .collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

pub fn sym_eig_min(m: &Matrix) -> Result<f64> {
    Ok(sym_eigenvalues(m)?[0])
}

pub fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    a.kronecker(b)
}

/// Solves `a x = b` for symmetric positive definite `a` by Cholesky.
pub fn solve_spd(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    check_symmetric(a)?;
    if a.nrows() != b.nrows() {
        return Err(LabError::Dimension(format!(
            "solve_spd: lhs has {} rows, rhs has {}",
            a.nrows(),
            b.nrows()
        )));
    }
    let chol = a.clone().cholesky().ok_or(LabError::NotPositiveDefinite)?;
    Ok(chol.solve(b))
}

/// Moore-Penrose pseudo-inverse with relative cutoff [`PINV_RCOND`].
pub fn pinv(m: &Matrix) -> Matrix {
    let Svd { u, s, v } = svd(m);
    let cutoff = PINV_RCOND * s.first().copied().unwrap_or(0.0);
    let mut out = Matrix::zeros(m.ncols(), m.nrows());
    for (i, &si) in s.iter().enumerate() {
        if si > cutoff && si > 0.0 {
            out += (v.column(i) * u.column(i).transpose()) / si;
        }
    }
    out
}

pub fn spectral_radius(m: &Matrix) -> Result<f64> {
    if !m.is_square() {
        return Err(LabError::Dimension(format!(
            "spectral radius of a non-square {}x{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(m.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max))
}

/// Largest singular value.
pub fn spectral_norm(m: &Matrix) -> f64 {
    svd(m).s.first().copied().unwrap_or(0.0)
}

pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}
