use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::matkit::Matrix;
use crate::riccati::LinearSystem;

pub const BENCHMARK_DT: f64 = 0.25;
pub const BENCHMARK_GRAVITY: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CartpoleParams {
    pub m_cart: f64,
    pub m_pole: f64,
    pub length: f64,
}

/// Cartpole linearized about the upright equilibrium and discretized with
/// forward Euler. State is `[x, x_dot, theta, theta_dot]`, input is the cart force.
pub fn cartpole_system(
    m_cart: f64,
    m_pole: f64,
    length: f64,
    gravity: f64,
    dt: f64,
) -> Result<LinearSystem> {
    for (name, v) in [
        ("cart mass", m_cart),
        ("pole mass", m_pole),
        ("pole length", length),
        ("gravity", gravity),
        ("time step", dt),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(LabError::InvalidArgument(format!(
                "{name} must be positive, got {v}"
            )));
        }
    }
    let mut a = Matrix::identity(4, 4);
    a[(0, 1)] = dt;
    a[(1, 2)] = -dt * m_pole * gravity / m_cart;
    a[(2, 3)] = dt;
    a[(3, 2)] = dt * (m_cart + m_pole) * gravity / (m_cart * length);
    let b = Matrix::from_column_slice(4, 1, &[0.0, dt / m_cart, 0.0, -dt / (m_cart * length)]);
    LinearSystem::new(a, b)
}

/// The matrices exactly as printed in the experimental appendix.
///
/// Row 3 is `[0, 0, 1, 0]`, so the pole angle is an uncontrollable unit
/// mode: this pair is not stabilizable. Experiments use [`benchmark_cartpole`].
pub fn paper_cartpole_fixture() -> LinearSystem {
    #[rustfmt::skip]
    let a = Matrix::from_row_slice(4, 4, &[
        1.0, 0.25, 0.0, 0.0,
        0.0, 1.0, -0.25, 0.0,
        0.0, 0.0, 1.0, 0.0,
        0.0, 0.0, 0.5, 1.0,
    ]);
    let b = Matrix::from_column_slice(4, 1, &[0.0, 0.25, 0.0, -0.25]);
    LinearSystem { a, b }
}

/// Euler discretization (step 0.25) of the unit cartpole, `M = m = l = g = 1`.
pub fn benchmark_cartpole() -> LinearSystem {
    cartpole_system(1.0, 1.0, 1.0, BENCHMARK_GRAVITY, BENCHMARK_DT).expect("positive parameters")
}

/// Initial stabilizing gain used across all experiments.
pub fn paper_k0() -> Matrix {
    Matrix::from_row_slice(1, 4, &[0.37, 1.64, 4.49, 3.89])
}
