use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::estimator::excitation_check;
use crate::matkit::{self, Matrix};
use crate::pretrain::{
    generate_offline_data, paper_task_params, pretrain, MultiTaskDataset, DEFAULT_MAX_ITER,
    DEFAULT_TOL,
};
use crate::riccati::{lqr_gain, LqrWeights};
use crate::sysrep::{
    extended_lumped, full_basis, known_a_embedding, known_b_embedding, lumped_representation,
    paper_k0, scale_known_a, subspace_distance, theory_constants, CartpoleParams, Representation,
    TheoryConstants, BENCHMARK_DT, BENCHMARK_GRAVITY,
};

use super::output::{json_text, write_file};
use super::scenario::{
    check_schema, parse_toml, read_text, Builder, RepresentationFile, RepresentationSpec,
    SystemSpec,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckParams {
    #[serde(default = "one")]
    pub sigma: f64,
    #[serde(default = "one")]
    pub gamma: f64,
    /// Excitation level; `1 / (3 ||P*||^{3/2})` when absent.
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub k0: Option<Vec<f64>>,
    #[serde(default = "x_b")]
    pub x_b: f64,
    #[serde(default = "k_b")]
    pub k_b: f64,
    #[serde(default = "tau1")]
    pub tau1: usize,
}

fn one() -> f64 {
    1.0
}
fn x_b() -> f64 {
    50.0
}
fn k_b() -> f64 {
    15.0
}
fn tau1() -> usize {
    1024
}

impl Default for CheckParams {
    fn default() -> Self {
        Self {
            sigma: 1.0,
            gamma: 1.0,
            alpha: None,
            k0: None,
            x_b: x_b(),
            k_b: k_b(),
            tau1: tau1(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckConfig {
    pub schema: u32,
    pub system: SystemSpec,
    pub representation: RepresentationSpec,
    #[serde(default)]
    pub check: CheckParams,
}

impl CheckConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        let c: Self = parse_toml(path, &text)?;
        check_schema(c.schema)?;
        Ok(c)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExcitationReport {
    pub under_k0: f64,
    /// Absent when the system admits no stabilizing Riccati solution.
    pub under_k_star: Option<f64>,
    pub alpha_min_sq: Option<f64>,
    pub k0_below_threshold: Option<bool>,
    pub k_star_below_threshold: Option<bool>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub value: f64,
    pub required: f64,
    pub satisfied: bool,
}

impl Comparison {
    fn at_least(value: f64, required: f64) -> Self {
        Self {
            value,
            required,
            satisfied: value >= required,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub dtheta: usize,
    pub k0_closed_loop_radius: f64,
    pub excitation: ExcitationReport,
    pub constants: Option<TheoryConstants>,
    pub x_b: Option<Comparison>,
    pub k_b: Option<Comparison>,
    pub tau1_vs_warmup_exploration: Option<Comparison>,
    pub tau1_vs_warmup_noexploration: Option<Comparison>,
    /// Why the constants could not be evaluated.
    pub unavailable: Option<String>,
}

fn check_representation(cfg: &CheckConfig, k0: &Matrix, w: &LqrWeights) -> Result<Representation> {
    let sys = cfg.system.build()?;
    let dt = cfg.system.dt();
    let rep = match cfg.representation.builder {
        // Structure only; usable even when the system is outside its span.
        Builder::Lumped => lumped_representation(dt),
        Builder::Full => full_basis(&sys)?.rep,
        Builder::ScaleKnownA => scale_known_a(&sys)?.rep,
        Builder::ExtendedLumped => extended_lumped(&sys, dt, k0, w)?.rep,
        Builder::KnownA => known_a_embedding(&sys)?.rep,
        Builder::KnownB => known_b_embedding(&sys)?.rep,
        Builder::Learned => {
            let p =
                cfg.representation.path.as_ref().ok_or_else(|| {
                    LabError::Config("learned representation needs a `path`".into())
                })?;
            RepresentationFile::load(p)?
        }
    };
    match cfg.representation.perturb_distance {
        Some(d) => crate::sysrep::perturb_to_distance(&rep, d, cfg.representation.perturb_seed),
        None => Ok(rep),
    }
}

/// Theory constants, the experiments' `x_b`, `K_b`, `tau1` against them, and
/// the excitation levels under `K0` and `K*`.
pub fn check(cfg: &CheckConfig) -> Result<CheckReport> {
    let sys = cfg.system.build()?;
    let (dx, du) = (sys.dx(), sys.du());
    let p = &cfg.check;
    let k0 = match &p.k0 {
        Some(v) => matkit::from_rows(du, dx, v)?,
        None => paper_k0(),
    };
    let w = LqrWeights::identity(dx, du);
    let rep = check_representation(cfg, &k0, &w)?;
    let k0_radius = matkit::spectral_radius(&sys.closed_loop(&k0)?)?;
    let under_k0 = excitation_check(&rep, &k0)?;

    let synth = lqr_gain(&sys, &w);
    let mut report = CheckReport {
        dtheta: rep.dtheta(),
        k0_closed_loop_radius: k0_radius,
        excitation: ExcitationReport {
            under_k0,
            under_k_star: None,
            alpha_min_sq: None,
            k0_below_threshold: None,
            k_star_below_threshold: None,
        },
        constants: None,
        x_b: None,
        k_b: None,
        tau1_vs_warmup_exploration: None,
        tau1_vs_warmup_noexploration: None,
        unavailable: None,
    };
    let synth = match synth {
        Ok(s) => s,
        Err(e) => {
            report.unavailable = Some(format!("no stabilizing Riccati solution: {e}"));
            return Ok(report);
        }
    };
    let alpha_min = 1.0 / (3.0 * matkit::spectral_norm(&synth.p).powf(1.5));
    let threshold = alpha_min * alpha_min;
    let under_star = excitation_check(&rep, &synth.k)?;
    report.excitation.under_k_star = Some(under_star);
    report.excitation.alpha_min_sq = Some(threshold);
    report.excitation.k0_below_threshold = Some(under_k0 < threshold);
    report.excitation.k_star_below_threshold = Some(under_star < threshold);

    match theory_constants(
        &sys,
        &rep,
        &k0,
        p.sigma,
        p.gamma,
        p.alpha.unwrap_or(alpha_min),
    ) {
        Ok(tc) => {
            report.x_b = Some(Comparison::at_least(p.x_b, tc.x_b_min));
            report.k_b = Some(Comparison::at_least(p.k_b, tc.k_b_min));
            report.tau1_vs_warmup_exploration = Some(Comparison::at_least(
                p.tau1 as f64,
                tc.tau_warmup_min_exploration,
            ));
            report.tau1_vs_warmup_noexploration = Some(Comparison::at_least(
                p.tau1 as f64,
                tc.tau_warmup_min_noexploration,
            ));
            report.constants = Some(tc);
        }
        Err(e) => report.unavailable = Some(e.to_string()),
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OfflineDataSpec {
    #[serde(default = "paper_task_params")]
    pub tasks: Vec<CartpoleParams>,
    #[serde(default = "gravity")]
    pub gravity: f64,
    #[serde(default = "dt")]
    pub dt: f64,
    #[serde(default = "horizon")]
    pub horizon: usize,
    #[serde(default)]
    pub k0: Option<Vec<f64>>,
    #[serde(default = "noise_std")]
    pub noise_std: f64,
    #[serde(default = "one")]
    pub input_noise_std: f64,
}

fn gravity() -> f64 {
    BENCHMARK_GRAVITY
}
fn dt() -> f64 {
    BENCHMARK_DT
}
fn horizon() -> usize {
    1200
}
fn noise_std() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PretrainJob {
    pub schema: u32,
    #[serde(default = "dtheta")]
    pub dtheta: usize,
    #[serde(default = "tol")]
    pub tol: f64,
    #[serde(default = "max_iter")]
    pub max_iter: usize,
    #[serde(default)]
    pub seed: u64,
    /// Existing dataset file (JSON); generated from `generate` otherwise.
    #[serde(default)]
    pub dataset: Option<std::path::PathBuf>,
    #[serde(default)]
    pub generate: Option<OfflineDataSpec>,
}

fn dtheta() -> usize {
    5
}
fn tol() -> f64 {
    DEFAULT_TOL
}
fn max_iter() -> usize {
    DEFAULT_MAX_ITER
}

#[derive(Debug, Clone, Serialize)]
pub struct PretrainSummary {
    pub tasks: usize,
    pub dtheta: usize,
    pub iterations: usize,
    pub converged: bool,
    pub objective: f64,
    pub history: Vec<f64>,
    pub excluded_tasks: Vec<usize>,
    /// Distance from the lumped cartpole basis when the data are cartpoles.
    pub lumped_distance: Option<f64>,
}

impl PretrainJob {
    pub fn load(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        let j: Self = parse_toml(path, &text)?;
        check_schema(j.schema)?;
        Ok(j)
    }
}

/// Generates or loads the dataset, pretrains, and writes `dataset.json`,
/// `representation.json` and `pretrain.json` into `out`.
pub fn run_pretrain_job(job: &PretrainJob, base_dir: &Path, out: &Path) -> Result<PretrainSummary> {
    let data = match (&job.dataset, &job.generate) {
        (Some(p), None) => {
            let path = base_dir.join(p);
            let text = read_text(&path)?;
            let d: MultiTaskDataset = serde_json::from_str(&text).map_err(|e| LabError::Parse {
                path: path.clone(),
                message: e.to_string(),
            })?;
            MultiTaskDataset::new(d.tasks)?
        }
        (None, gen) => {
            let g = gen.clone().unwrap_or(OfflineDataSpec {
                tasks: paper_task_params(),
                gravity: gravity(),
                dt: dt(),
                horizon: horizon(),
                k0: None,
                noise_std: noise_std(),
                input_noise_std: 1.0,
            });
            let k0 = match &g.k0 {
                Some(v) => matkit::from_rows(1, 4, v)?,
                None => paper_k0(),
            };
            generate_offline_data(
                &g.tasks,
                g.gravity,
                g.dt,
                g.horizon,
                &k0,
                g.noise_std,
                g.input_noise_std,
                job.seed,
            )?
        }
        (Some(_), Some(_)) => {
            return Err(LabError::Config(
                "give either `dataset` or `[generate]`, not both".into(),
            ))
        }
    };
    let res = pretrain(&data, job.dtheta, job.tol, job.max_iter, job.seed)?;
    let lumped_distance = if (data.dx, data.du) == (4, 1) && job.dtheta == 5 {
        let dt = job.generate.as_ref().map_or(BENCHMARK_DT, |g| g.dt);
        Some(subspace_distance(&res.phi_hat, &lumped_representation(dt))?)
    } else {
        None
    };
    let summary = PretrainSummary {
        tasks: data.tasks.len(),
        dtheta: job.dtheta,
        iterations: res.iterations,
        converged: res.converged,
        objective: res.objective,
        history: res.history.clone(),
        excluded_tasks: res.excluded_tasks.clone(),
        lumped_distance,
    };
    write_file(&out.join("dataset.json"), &json_text(&data)?)?;
    write_file(
        &out.join("representation.json"),
        &json_text(&RepresentationFile::from_rep(&res.phi_hat))?,
    )?;
    write_file(&out.join("pretrain.json"), &json_text(&summary)?)?;
    Ok(summary)
}

/// Writes the check report as JSON.
pub fn write_report(path: &Path, report: &CheckReport) -> Result<()> {
    write_file(path, &json_text(report)?)
}
