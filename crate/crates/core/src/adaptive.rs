//! Certainty-equivalent adaptive LQR with doubling epochs, optional
//! exploration noise, an abort safeguard, and regret accounting.

use log::debug;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::estimator::{estimate, Trajectory};
use crate::matkit::{self, Matrix, Vector};
use crate::riccati::{dare, lqr_gain, LinearSystem, LqrWeights};
use crate::sysrep::{realize, AffineBase, Representation};

pub const DEFAULT_NOISE_STD: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Exploration {
    /// `sigma_k^2 = max(sqrt(du / dtheta) / sqrt(tau1 2^(k-1)), gamma sqrt(misspec_bound))`.
    Continual {
        gamma: f64,
        misspec_bound: f64,
    },
    None,
    /// Explicit `sigma_k^2` per epoch.
    Custom {
        variances: Vec<f64>,
    },
}

/// Exploration variance `sigma_k^2` for epoch `k` (one-based).
pub fn exploration_schedule(
    kind: &Exploration,
    k: usize,
    tau1: usize,
    du: usize,
    dtheta: usize,
) -> Result<f64> {
    if k == 0 {
        return Err(LabError::InvalidArgument(
            "epochs are numbered from 1".into(),
        ));
    }
    match kind {
        Exploration::None => Ok(0.0),
        Exploration::Continual {
            gamma,
            misspec_bound,
        } => {
            if !(*gamma >= 1.0) || !(*misspec_bound >= 0.0) {
                return Err(LabError::Config(format!(
                    "continual exploration needs gamma >= 1 and misspec_bound >= 0, got {gamma}, {misspec_bound}"
                )));
            }
            let decay =
                (du as f64 / dtheta as f64).sqrt() / (tau1 as f64 * 2f64.powi(k as i32 - 1)).sqrt();
            Ok(decay.max(gamma * misspec_bound.sqrt()))
        }
        Exploration::Custom { variances } => variances.get(k - 1).copied().ok_or_else(|| {
            LabError::Config(format!(
                "custom exploration lists {} variances, epoch {k} requested",
                variances.len()
            ))
        }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbortRule {
    /// `||x_t||^2 >= x_b^2 log T` or `||K_k|| >= K_b`.
    Theory,
    /// `||x_t||^2 >= x_b` or `||K_k|| >= K_b` (horizon-free variant used in the experiments).
    PaperExperiment,
}

#[derive(Debug, Clone)]
pub struct AdaptiveRunConfig {
    pub k0: Matrix,
    pub tau1: usize,
    pub k_fin: usize,
    pub exploration: Exploration,
    pub x_b: f64,
    pub k_b: f64,
    pub abort_rule: AbortRule,
    pub rep: Representation,
    pub base: Option<AffineBase>,
    pub weights: LqrWeights,
    /// Per-coordinate standard deviation of the process noise.
    pub noise_std: f64,
    pub seed: u64,
    /// Fit each epoch on all data so far instead of that epoch's data only.
    pub cumulative_data: bool,
}

impl AdaptiveRunConfig {
    /// Defaults from the cartpole experiments: `tau1 = 1024`, `x_b = 50`,
    /// `K_b = 15`, horizon-free abort rule, `Q = R = I`, noise std 0.1.
    pub fn paper_defaults(k0: Matrix, rep: Representation, k_fin: usize, seed: u64) -> Self {
        let (dx, du) = (rep.dx(), rep.du());
        Self {
            k0,
            tau1: 1024,
            k_fin,
            exploration: Exploration::None,
            x_b: 50.0,
            k_b: 15.0,
            abort_rule: AbortRule::PaperExperiment,
            rep,
            base: None,
            weights: LqrWeights::identity(dx, du),
            noise_std: DEFAULT_NOISE_STD,
            seed,
            cumulative_data: false,
        }
    }

    /// `T = tau1 2^(k_fin - 1)`.
    pub fn horizon(&self) -> usize {
        self.epoch_end(self.k_fin)
    }

    /// `tau_k = tau1 2^(k-1)`, the last step of epoch `k`; `tau_0 = 0`.
    pub fn epoch_end(&self, k: usize) -> usize {
        if k == 0 {
            0
        } else {
            self.tau1 << (k - 1)
        }
    }

    pub fn validate(&self, sys: &LinearSystem) -> Result<()> {
        if self.tau1 == 0 || self.k_fin == 0 {
            return Err(LabError::Config("tau1 and k_fin must be at least 1".into()));
        }
        if self.k_fin > 40 {
            return Err(LabError::Config(format!(
                "k_fin = {} overflows the horizon",
                self.k_fin
            )));
        }
        if self.rep.dx() != sys.dx() || self.rep.du() != sys.du() {
            return Err(LabError::Config(
                "representation does not match the system".into(),
            ));
        }
        if !(self.noise_std >= 0.0) || !(self.x_b > 0.0) || !(self.k_b > 0.0) {
            return Err(LabError::Config(
                "noise_std >= 0, x_b > 0, K_b > 0 required".into(),
            ));
        }
        let a_cl = sys.closed_loop(&self.k0)?;
        let radius = matkit::spectral_radius(&a_cl)?;
        if radius >= 1.0 {
            return Err(LabError::Config(format!(
                "K0 does not stabilize the true system (spectral radius {radius:.6})"
            )));
        }
        for k in 1..=self.k_fin {
            let s = exploration_schedule(
                &self.exploration,
                k,
                self.tau1,
                self.rep.du(),
                self.rep.dtheta(),
            )?;
            if !(s >= 0.0) {
                return Err(LabError::Config(format!(
                    "negative exploration variance {s}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub k: usize,
    /// First step of the epoch (one-based).
    pub start: usize,
    /// `tau_k`, last step of the epoch.
    pub end: usize,
    /// Gain played during the epoch (before any abort).
    pub gain: Vec<f64>,
    pub sigma_sq: f64,
    /// `||[A_k B_k] - [A* B*]||_F^2` of the estimate fitted at the end of the epoch.
    pub est_error_sq: Option<f64>,
    pub lambda_min: Option<f64>,
    /// The fitted model admitted no stabilizing Riccati solution; the next
    /// epoch reuses this epoch's gain.
    pub synthesis_failed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegretTrace {
    /// Per-step optimal average cost `noise_std^2 trace(P*)`.
    pub baseline: f64,
    /// `c_t` for `t = 1..T` (index `t - 1`).
    pub cost: Vec<f64>,
    pub cumulative_cost: Vec<f64>,
    pub regret: Vec<f64>,
    pub epochs: Vec<EpochRecord>,
    /// Step at which the safeguard fired.
    pub aborted_at: Option<usize>,
}

impl RegretTrace {
    pub fn horizon(&self) -> usize {
        self.cost.len()
    }

    /// Regret `R_t` for one-based `t`.
    pub fn regret_at(&self, t: usize) -> f64 {
        self.regret[t - 1]
    }

    /// One-based epoch index containing step `t`.
    pub fn epoch_of(&self, t: usize) -> usize {
        self.epochs
            .iter()
            .find(|e| e.start <= t && t <= e.end)
            .map_or(0, |e| e.k)
    }

    pub fn aborted_by(&self, t: usize) -> bool {
        self.aborted_at.is_some_and(|a| a <= t)
    }
}

/// Per-step optimal average cost under process noise `noise_std^2 I`.
pub fn optimal_baseline(sys: &LinearSystem, w: &LqrWeights, noise_std: f64) -> Result<f64> {
    if noise_std == 0.0 {
        return Ok(0.0);
    }
    Ok(noise_std * noise_std * dare(sys, w)?.trace())
}

fn quad(m: &Matrix, v: &Vector) -> f64 {
    v.dot(&(m * v))
}

pub fn run_adaptive(sys: &LinearSystem, cfg: &AdaptiveRunConfig) -> Result<RegretTrace> {
    cfg.validate(sys)?;
    let (dx, du) = (sys.dx(), sys.du());
    let horizon = cfg.horizon();
    let baseline = optimal_baseline(sys, &cfg.weights, cfg.noise_std)?;
    let truth = sys.stacked();
    let state_limit = match cfg.abort_rule {
        AbortRule::Theory => cfg.x_b * cfg.x_b * (horizon as f64).ln(),
        AbortRule::PaperExperiment => cfg.x_b,
    };

    let mut w_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    w_rng.set_stream(0);
    let mut g_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    g_rng.set_stream(1);

    let mut x = Vector::zeros(dx);
    let mut states: Vec<Vec<f64>> = Vec::with_capacity(horizon + 1);
    let mut inputs: Vec<Vec<f64>> = Vec::with_capacity(horizon);
    states.push(x.as_slice().to_vec());

    let mut cost = Vec::with_capacity(horizon);
    let mut cumulative_cost = Vec::with_capacity(horizon);
    let mut regret = Vec::with_capacity(horizon);
    let mut epochs = Vec::with_capacity(cfg.k_fin);
    let mut aborted_at: Option<usize> = None;
    let mut gain = cfg.k0.clone();
    let mut total = 0.0;

    for k in 1..=cfg.k_fin {
        let start = cfg.epoch_end(k - 1) + 1;
        let end = cfg.epoch_end(k);
        if aborted_at.is_some() {
            gain = cfg.k0.clone();
        }
        let sigma_sq = exploration_schedule(&cfg.exploration, k, cfg.tau1, du, cfg.rep.dtheta())?;
        let sigma = sigma_sq.sqrt();
        let gain_too_large = matkit::spectral_norm(&gain) >= cfg.k_b;

        for t in start..=end {
            if aborted_at.is_none() && (x.norm_squared() >= state_limit || gain_too_large) {
                debug!("seed {}: abort at t = {t}", cfg.seed);
                aborted_at = Some(t);
            }
            let g = Vector::from_fn(du, |_, _| StandardNormal.sample(&mut g_rng));
            let w = Vector::from_fn(dx, |_, _| StandardNormal.sample(&mut w_rng));
            let u = if aborted_at.is_some() {
                &cfg.k0 * &x
            } else {
                &gain * &x + g * sigma
            };
            let c = quad(&cfg.weights.q, &x) + quad(&cfg.weights.r, &u);
            total += c;
            cost.push(c);
            cumulative_cost.push(total);
            regret.push(total - t as f64 * baseline);

            x = &sys.a * &x + &sys.b * &u + w * cfg.noise_std;
            inputs.push(u.as_slice().to_vec());
            states.push(x.as_slice().to_vec());
        }

        let mut record = EpochRecord {
            k,
            start,
            end,
            gain: gain.transpose().as_slice().to_vec(),
            sigma_sq,
            est_error_sq: None,
            lambda_min: None,
            synthesis_failed: false,
        };
        if aborted_at.is_none() {
            let first = if cfg.cumulative_data { 0 } else { start - 1 };
            let data = Trajectory {
                states: states[first..=end].to_vec(),
                inputs: inputs[first..end].to_vec(),
            };
            let fit = estimate(&cfg.rep, cfg.base.as_ref(), &data)?;
            let model = realize(&cfg.rep, &fit.theta_hat, cfg.base.as_ref())?;
            record.est_error_sq = Some((model.stacked() - &truth).norm_squared());
            record.lambda_min = Some(fit.lambda_min);
            if k < cfg.k_fin {
                match lqr_gain(&model, &cfg.weights) {
                    Ok(s) => gain = s.k,
                    Err(e) => {
                        debug!("seed {}: epoch {k} synthesis failed: {e}", cfg.seed);
                        record.synthesis_failed = true;
                    }
                }
            }
        }
        epochs.push(record);
    }

    Ok(RegretTrace {
        baseline,
        cost,
        cumulative_cost,
        regret,
        epochs,
        aborted_at,
    })
}
