//! Evaluates the conditions on `x_b`, `K_b`, misspecification and warm-up
//! length required by the regret guarantees.
//!
//! The guarantees carry unspecified universal constants; all of them are set
//! to one here, so every number below is a scale indicator only.

use serde::Serialize;

use crate::error::{LabError, Result};
use crate::matkit::{self, Matrix};
use crate::riccati::{controller_value, lqr_gain, LinearSystem, LqrWeights};

use super::{vec, Representation};

#[derive(Debug, Clone, Serialize)]
pub struct TheoryConstants {
    /// Always true: `C_bias,1 = C_bias,2 = C_warmup = 1`.
    pub universal_constants_unity: bool,
    pub p_star_norm: f64,
    pub p_k0_norm: f64,
    pub theta_star_norm: f64,
    /// Certainty-equivalence closeness radius `1 / (2916 ||P*||^10)`.
    pub epsilon: f64,
    /// `max(1, ||B*||)`.
    pub psi_b: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Misspecification ceiling with exploration, `eps^2 / (4 beta1^2)`.
    pub max_distance_exploration: f64,
    /// Misspecification ceiling without exploration, `sqrt(eps / (2 beta2))`.
    pub max_distance_noexploration: f64,
    pub x_b_min: f64,
    pub k_b_min: f64,
    pub tau_warmup_min_exploration: f64,
    pub tau_warmup_min_noexploration: f64,
    /// Smallest admissible excitation level `1 / (3 ||P*||^{3/2})`.
    pub alpha_min: f64,
    pub sigma: f64,
    pub gamma: f64,
    pub alpha: f64,
}

/// `-log_{base} x` for `base` in (0, 1).
fn neg_log_base(base: f64, x: f64) -> f64 {
    -x.ln() / base.ln()
}

/// `rep` is taken as the true representation: `theta*` is the projection of
/// `[A* B*]` onto it. The warm-up bounds are evaluated at `x_b = x_b_min`.
pub fn theory_constants(
    sys: &LinearSystem,
    rep: &Representation,
    k0: &Matrix,
    sigma: f64,
    gamma: f64,
    alpha: f64,
) -> Result<TheoryConstants> {
    if !(sigma > 0.0) || !(gamma >= 1.0) || !(alpha > 0.0) {
        return Err(LabError::InvalidArgument(format!(
            "need sigma > 0, gamma >= 1, alpha > 0 (got {sigma}, {gamma}, {alpha})"
        )));
    }
    if rep.dx() != sys.dx() || rep.du() != sys.du() {
        return Err(LabError::Dimension(
            "representation does not match system".into(),
        ));
    }
    let (dx, du) = (sys.dx() as f64, sys.du() as f64);
    let dtheta = rep.dtheta() as f64;
    let weights = LqrWeights::identity(sys.dx(), sys.du());

    let p_k0 = matkit::spectral_norm(&controller_value(sys, &weights, k0)?);
    let p_star = matkit::spectral_norm(&lqr_gain(sys, &weights)?.p);
    let theta_star = (rep.phi().transpose() * vec(&sys.stacked())).norm();
    let psi_b = matkit::spectral_norm(&sys.b).max(1.0);
    let epsilon = 1.0 / (2916.0 * p_star.powi(10));

    let beta1 = sigma.powi(4)
        * p_k0.powi(12)
        * psi_b.powi(8)
        * theta_star.powi(2)
        * (dx + du)
        * (dtheta / du).sqrt();
    let beta2 = epsilon * p_k0.powi(9) * psi_b.powi(8) * theta_star.powi(2) * (dx + du)
        / (dtheta * (alpha * alpha).min(alpha.powi(4)));

    let x_b_min = 400.0 * p_k0 * p_k0 * psi_b * sigma * (dx + du).sqrt();
    let k_b_min = (2.0 * p_k0).sqrt();

    let warm = sigma.powi(4) * p_k0.powi(3);
    let tau_exp = warm
        * [
            psi_b * psi_b * (dx + du),
            x_b_min * x_b_min,
            neg_log_base(1.0 - 1.0 / p_star, p_star),
            dtheta * du / epsilon,
        ]
        .into_iter()
        .fold(0.0, f64::max);
    let tau_noexp = warm
        * psi_b
        * psi_b
        * [
            dx + du,
            x_b_min * x_b_min,
            neg_log_base(1.0 - 1.0 / (2.0 * p_star), p_star),
            dtheta / (2.0 * epsilon * alpha * alpha),
        ]
        .into_iter()
        .fold(0.0, f64::max);

    Ok(TheoryConstants {
        universal_constants_unity: true,
        p_star_norm: p_star,
        p_k0_norm: p_k0,
        theta_star_norm: theta_star,
        epsilon,
        psi_b,
        beta1,
        beta2,
        max_distance_exploration: epsilon * epsilon / (4.0 * beta1 * beta1),
        max_distance_noexploration: (epsilon / (2.0 * beta2)).sqrt(),
        x_b_min,
        k_b_min,
        tau_warmup_min_exploration: tau_exp,
        tau_warmup_min_noexploration: tau_noexp,
        alpha_min: 1.0 / (3.0 * p_star.powf(1.5)),
        sigma,
        gamma,
        alpha,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sysrep::{benchmark_cartpole, lumped_representation, paper_k0, BENCHMARK_DT};

    #[test]
    fn bounds_follow_formulas() {
        let sys = benchmark_cartpole();
        let rep = lumped_representation(BENCHMARK_DT);
        let tc = theory_constants(&sys, &rep, &paper_k0(), 1.0, 1.0, 0.5).unwrap();
        let w = LqrWeights::identity(4, 1);
        let pk0 = matkit::spectral_norm(&controller_value(&sys, &w, &paper_k0()).unwrap());
        assert!((tc.x_b_min - 400.0 * pk0 * pk0 * 1.0 * 5f64.sqrt()).abs() < 1e-9 * tc.x_b_min);
        assert!((tc.k_b_min - (2.0 * pk0).sqrt()).abs() < 1e-12);
        assert_eq!(tc.psi_b, 1.0);
        assert!(tc.universal_constants_unity);
        assert!(tc.epsilon > 0.0 && tc.beta1 > 0.0 && tc.beta2 > 0.0);
        assert!(tc.tau_warmup_min_noexploration > 0.0);
    }

    #[test]
    fn epsilon_for_unit_riccati_solution() {
        // A = 0 gives P* = Q = I.
        let sys = LinearSystem::new(Matrix::zeros(1, 1), Matrix::identity(1, 1)).unwrap();
        let rep = Representation::identity(1, 1);
        let tc = theory_constants(&sys, &rep, &Matrix::zeros(1, 1), 1.0, 1.0, 1.0).unwrap();
        assert!((tc.epsilon - 1.0 / 2916.0).abs() < 1e-15);
    }

    #[test]
    fn destabilizing_k0_is_rejected() {
        let sys = benchmark_cartpole();
        let rep = lumped_representation(BENCHMARK_DT);
        let bad = Matrix::zeros(1, 4);
        assert!(theory_constants(&sys, &rep, &bad, 1.0, 1.0, 1.0).is_err());
        assert!(theory_constants(&sys, &rep, &paper_k0(), 1.0, 0.5, 1.0).is_err());
    }
}
