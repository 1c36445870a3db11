use std::fmt;
use std::path::Path;
use std::str::FromStr;

use log::info;
use rayon::prelude::*;
use serde::Serialize;

use crate::adaptive::optimal_baseline;
use crate::error::{LabError, Result};
use crate::pretrain::{
    generate_offline_data, paper_task_params, pretrain, DEFAULT_MAX_ITER, DEFAULT_TOL,
};
use crate::sysrep::{
    lumped_representation, paper_k0, subspace_distance, BENCHMARK_DT, BENCHMARK_GRAVITY,
};

use super::output::{json_text, run_scenario_with, write_file, write_scenario, ScenarioResult};
use super::scenario::{
    resolve, Builder, ExplorationSpec, RepresentationFile, RepresentationSpec, Scenario,
    SCHEMA_VERSION,
};

pub const LEARNED_FILE: &str = "learned_representation.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const PERTURB_SEED: u64 = 7;
pub const PRETRAIN_DTHETA: usize = 5;
pub const PRETRAIN_HORIZON: usize = 1200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Figure {
    Fig1,
    Fig2a,
    Fig2b,
    Fig3,
}

impl Figure {
    pub const ALL: [Figure; 4] = [Figure::Fig1, Figure::Fig2a, Figure::Fig2b, Figure::Fig3];

    pub fn name(self) -> &'static str {
        match self {
            Self::Fig1 => "fig1",
            Self::Fig2a => "fig2a",
            Self::Fig2b => "fig2b",
            Self::Fig3 => "fig3",
        }
    }
}

impl fmt::Display for Figure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Figure {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| LabError::Config(format!("unknown figure {s:?}")))
    }
}

/// Settings shared by every scenario of a bundle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BundleSettings {
    pub seed: u64,
    pub trials: usize,
    pub tau1: usize,
    pub k_fin: usize,
}

impl Default for BundleSettings {
    fn default() -> Self {
        Self {
            seed: 0,
            trials: super::scenario::DEFAULT_TRIALS,
            tau1: 1024,
            k_fin: 7,
        }
    }
}

fn scenario(
    fig: Figure,
    tag: &str,
    rep: RepresentationSpec,
    exploration: ExplorationSpec,
    settings: &BundleSettings,
) -> Scenario {
    let mut s = Scenario::new(format!("{fig}_{tag}"), rep, exploration);
    s.seed = settings.seed;
    s.trials = settings.trials;
    s.run.tau1 = settings.tau1;
    s.run.k_fin = settings.k_fin;
    s
}

fn full_reference(fig: Figure, settings: &BundleSettings) -> Scenario {
    scenario(
        fig,
        "full_continual",
        RepresentationSpec::plain(Builder::Full),
        ExplorationSpec::continual(0.0),
        settings,
    )
}

/// Scenario definitions of a bundle. For `fig3` the learned scenario reads
/// its basis from [`LEARNED_FILE`] next to the manifest.
pub fn bundle_scenarios(fig: Figure, settings: &BundleSettings) -> Vec<Scenario> {
    use Builder::*;
    let plain = RepresentationSpec::plain;
    match fig {
        Figure::Fig1 => vec![
            full_reference(fig, settings),
            scenario(
                fig,
                "extended_lumped_continual",
                plain(ExtendedLumped),
                ExplorationSpec::continual(0.0),
                settings,
            ),
            scenario(
                fig,
                "scale_known_a_none",
                plain(ScaleKnownA),
                ExplorationSpec::none(),
                settings,
            ),
            scenario(
                fig,
                "lumped_none",
                plain(Lumped),
                ExplorationSpec::none(),
                settings,
            ),
        ],
        Figure::Fig2a => {
            let mut v: Vec<Scenario> = [0.01, 0.05]
                .into_iter()
                .map(|d| {
                    scenario(
                        fig,
                        &format!("extended_lumped_d{d}_continual"),
                        RepresentationSpec::perturbed(ExtendedLumped, d, PERTURB_SEED),
                        ExplorationSpec::continual(d),
                        settings,
                    )
                })
                .collect();
            v.push(full_reference(fig, settings));
            v
        }
        Figure::Fig2b => {
            let mut v: Vec<Scenario> = [0.1, 0.15, 0.2]
                .into_iter()
                .map(|d| {
                    scenario(
                        fig,
                        &format!("lumped_d{d}_none"),
                        RepresentationSpec::perturbed(Lumped, d, PERTURB_SEED),
                        ExplorationSpec::none(),
                        settings,
                    )
                })
                .collect();
            v.push(full_reference(fig, settings));
            v
        }
        Figure::Fig3 => {
            let mut learned = plain(Learned);
            learned.path = Some(LEARNED_FILE.into());
            vec![
                scenario(
                    fig,
                    "learned_none",
                    learned,
                    ExplorationSpec::none(),
                    settings,
                ),
                full_reference(fig, settings),
            ]
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PretrainRecord {
    pub data_seed: u64,
    pub horizon: usize,
    pub noise_std: f64,
    pub input_noise_std: f64,
    pub dtheta: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub iterations: usize,
    pub converged: bool,
    pub objective: f64,
    pub learned_distance: f64,
    pub representation_file: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ManifestEntry {
    pub scenario: Scenario,
    pub csv: String,
    pub summary: String,
    pub seeds: Vec<u64>,
    pub horizon: usize,
    pub dtheta: usize,
    /// Subspace distance of the basis in use from its unperturbed reference.
    pub distance: f64,
    pub k0: Vec<f64>,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub optimal_cost_per_step: f64,
    pub aborted_trials: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub schema: u32,
    pub bundle: Figure,
    pub settings: BundleSettings,
    pub scenarios: Vec<ManifestEntry>,
    pub pretrain: Option<PretrainRecord>,
}

#[derive(Debug, Clone)]
pub struct BundleOutput {
    pub manifest: Manifest,
    pub results: Vec<ScenarioResult>,
}

fn rows_of(m: &crate::matkit::Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Runs a figure bundle and writes its CSV, summary and manifest files into `out`.
pub fn reproduce(fig: Figure, settings: &BundleSettings, out: &Path) -> Result<BundleOutput> {
    let scenarios = bundle_scenarios(fig, settings);
    let mut learned = None;
    let mut pretrain_record = None;
    if fig == Figure::Fig3 {
        info!("pretraining representation from offline data");
        let (noise_std, input_noise_std) = (0.1, 1.0);
        let data = generate_offline_data(
            &paper_task_params(),
            BENCHMARK_GRAVITY,
            BENCHMARK_DT,
            PRETRAIN_HORIZON,
            &paper_k0(),
            noise_std,
            input_noise_std,
            settings.seed,
        )?;
        let res = pretrain(
            &data,
            PRETRAIN_DTHETA,
            DEFAULT_TOL,
            DEFAULT_MAX_ITER,
            settings.seed,
        )?;
        let dist = subspace_distance(&res.phi_hat, &lumped_representation(BENCHMARK_DT))?;
        write_file(
            &out.join(LEARNED_FILE),
            &json_text(&RepresentationFile::from_rep(&res.phi_hat))?,
        )?;
        pretrain_record = Some(PretrainRecord {
            data_seed: settings.seed,
            horizon: PRETRAIN_HORIZON,
            noise_std,
            input_noise_std,
            dtheta: PRETRAIN_DTHETA,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            iterations: res.iterations,
            converged: res.converged,
            objective: res.objective,
            learned_distance: dist,
            representation_file: LEARNED_FILE.into(),
        });
        learned = Some(res.phi_hat);
    }

    let resolved = scenarios
        .iter()
        .map(|s| resolve(s, learned.as_ref(), out))
        .collect::<Result<Vec<_>>>()?;
    let results = resolved
        .par_iter()
        .map(|r| {
            let learned_distance =
                (r.scenario.representation.builder == Builder::Learned).then_some(r.distance);
            run_scenario_with(r, learned_distance)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut entries = Vec::with_capacity(results.len());
    for (r, res) in resolved.iter().zip(&results) {
        let (csv, summary) = write_scenario(out, res)?;
        let file_name = |p: &Path| p.file_name().map(|n| n.to_string_lossy().into_owned());
        entries.push(ManifestEntry {
            scenario: r.scenario.clone(),
            csv: file_name(&csv).unwrap_or_default(),
            summary: file_name(&summary).unwrap_or_default(),
            seeds: res.seeds.clone(),
            horizon: r.config.horizon(),
            dtheta: r.config.rep.dtheta(),
            distance: r.distance,
            k0: r.config.k0.transpose().as_slice().to_vec(),
            a: rows_of(&r.system.a),
            b: rows_of(&r.system.b),
            optimal_cost_per_step: optimal_baseline(
                &r.system,
                &r.config.weights,
                r.config.noise_std,
            )?,
            aborted_trials: res.abort_count(),
        });
    }
    let manifest = Manifest {
        schema: SCHEMA_VERSION,
        bundle: fig,
        settings: *settings,
        scenarios: entries,
        pretrain: pretrain_record,
    };
    write_file(&out.join(MANIFEST_FILE), &json_text(&manifest)?)?;
    Ok(BundleOutput { manifest, results })
}
