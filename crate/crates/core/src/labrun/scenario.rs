use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adaptive::{AbortRule, AdaptiveRunConfig, Exploration, DEFAULT_NOISE_STD};
use crate::error::{LabError, Result};
use crate::matkit::Matrix;
use crate::riccati::{LinearSystem, LqrWeights};
use crate::sysrep::{
    benchmark_cartpole, cartpole_system, extended_lumped, full_basis, known_a_embedding,
    known_b_embedding, lumped_cartpole, lumped_representation, paper_cartpole_fixture, paper_k0,
    perturb_to_distance, scale_known_a, subspace_distance, AffineBase, CartpoleParams,
    Representation, BENCHMARK_DT, BENCHMARK_GRAVITY,
};

pub const SCHEMA_VERSION: u32 = 1;

pub(crate) fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))
}

pub(crate) fn parse_toml<T: for<'de> Deserialize<'de>>(path: &Path, text: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| LabError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub(crate) fn check_schema(schema: u32) -> Result<()> {
    if schema != SCHEMA_VERSION {
        return Err(LabError::Config(format!(
            "unsupported schema version {schema}, expected {SCHEMA_VERSION}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    /// Unit cartpole, Euler step 0.25.
    Benchmark,
    /// The printed appendix matrices (not stabilizable).
    Fixture,
    Cartpole,
}

/// `m_cart`, `m_pole`, `length` (and optionally `gravity`, `dt`) are
/// required for `cartpole` and rejected otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub kind: SystemKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_cart: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_pole: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gravity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
}

impl SystemSpec {
    pub fn of_kind(kind: SystemKind) -> Self {
        Self {
            kind,
            m_cart: None,
            m_pole: None,
            length: None,
            gravity: None,
            dt: None,
        }
    }

    pub fn cartpole(params: CartpoleParams) -> Self {
        Self {
            m_cart: Some(params.m_cart),
            m_pole: Some(params.m_pole),
            length: Some(params.length),
            ..Self::of_kind(SystemKind::Cartpole)
        }
    }

    pub fn build(&self) -> Result<LinearSystem> {
        let extras = [self.m_cart, self.m_pole, self.length, self.gravity, self.dt];
        match self.kind {
            SystemKind::Benchmark | SystemKind::Fixture if extras.iter().any(Option::is_some) => {
                Err(LabError::Config(
                    "cartpole parameters are only accepted with kind = \"cartpole\"".into(),
                ))
            }
            SystemKind::Benchmark => Ok(benchmark_cartpole()),
            SystemKind::Fixture => Ok(paper_cartpole_fixture()),
            SystemKind::Cartpole => {
                let need = |v: Option<f64>, name: &str| {
                    v.ok_or_else(|| LabError::Config(format!("cartpole system needs `{name}`")))
                };
                cartpole_system(
                    need(self.m_cart, "m_cart")?,
                    need(self.m_pole, "m_pole")?,
                    need(self.length, "length")?,
                    self.gravity.unwrap_or(BENCHMARK_GRAVITY),
                    self.dt(),
                )
            }
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt.unwrap_or(BENCHMARK_DT)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Builder {
    Full,
    ScaleKnownA,
    Lumped,
    ExtendedLumped,
    KnownA,
    KnownB,
    Learned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RepresentationSpec {
    pub builder: Builder,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturb_distance: Option<f64>,
    #[serde(default)]
    pub perturb_seed: u64,
    /// Representation file for the `learned` builder, relative to the scenario file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

impl RepresentationSpec {
    pub fn plain(builder: Builder) -> Self {
        Self {
            builder,
            perturb_distance: None,
            perturb_seed: 0,
            path: None,
        }
    }

    pub fn perturbed(builder: Builder, distance: f64, seed: u64) -> Self {
        Self {
            perturb_distance: Some(distance),
            perturb_seed: seed,
            ..Self::plain(builder)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExplorationKind {
    Continual,
    None,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplorationSpec {
    pub kind: ExplorationKind,
    #[serde(default = "one")]
    pub gamma: f64,
    #[serde(default)]
    pub misspec_bound: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub variances: Vec<f64>,
}

fn one() -> f64 {
    1.0
}

impl ExplorationSpec {
    pub fn none() -> Self {
        Self {
            kind: ExplorationKind::None,
            gamma: 1.0,
            misspec_bound: 0.0,
            variances: Vec::new(),
        }
    }

    pub fn continual(misspec_bound: f64) -> Self {
        Self {
            kind: ExplorationKind::Continual,
            misspec_bound,
            ..Self::none()
        }
    }

    pub fn to_exploration(&self) -> Exploration {
        match self.kind {
            ExplorationKind::None => Exploration::None,
            ExplorationKind::Continual => Exploration::Continual {
                gamma: self.gamma,
                misspec_bound: self.misspec_bound,
            },
            ExplorationKind::Custom => Exploration::Custom {
                variances: self.variances.clone(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    #[serde(default = "default_tau1")]
    pub tau1: usize,
    #[serde(default = "default_k_fin")]
    pub k_fin: usize,
    #[serde(default = "default_x_b")]
    pub x_b: f64,
    #[serde(default = "default_k_b")]
    pub k_b: f64,
    #[serde(default = "default_abort_rule")]
    pub abort_rule: AbortRule,
    #[serde(default = "default_noise_std")]
    pub noise_std: f64,
    #[serde(default)]
    pub cumulative_data: bool,
    /// Row-major `du x dx` initial gain; the experiments' gain when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k0: Option<Vec<f64>>,
}

fn default_tau1() -> usize {
    1024
}
fn default_k_fin() -> usize {
    7
}
fn default_x_b() -> f64 {
    50.0
}
fn default_k_b() -> f64 {
    15.0
}
fn default_abort_rule() -> AbortRule {
    AbortRule::PaperExperiment
}
fn default_noise_std() -> f64 {
    DEFAULT_NOISE_STD
}

impl Default for RunSpec {
    fn default() -> Self {
        Self {
            tau1: default_tau1(),
            k_fin: default_k_fin(),
            x_b: default_x_b(),
            k_b: default_k_b(),
            abort_rule: default_abort_rule(),
            noise_std: default_noise_std(),
            cumulative_data: false,
            k0: None,
        }
    }
}

pub const DEFAULT_TRIALS: usize = 20;

fn default_trials() -> usize {
    DEFAULT_TRIALS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema: u32,
    pub name: String,
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Trial `i` uses seed `seed + i`.
    #[serde(default)]
    pub seed: u64,
    pub system: SystemSpec,
    pub representation: RepresentationSpec,
    pub exploration: ExplorationSpec,
    #[serde(default)]
    pub run: RunSpec,
}

impl Scenario {
    pub fn new(
        name: impl Into<String>,
        representation: RepresentationSpec,
        exploration: ExplorationSpec,
    ) -> Self {
        Self {
            schema: SCHEMA_VERSION,
            name: name.into(),
            trials: DEFAULT_TRIALS,
            seed: 0,
            system: SystemSpec::of_kind(SystemKind::Benchmark),
            representation,
            exploration,
            run: RunSpec::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::parse(Path::new("<inline>"), text)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        Self::parse(path, &text)
    }

    fn parse(path: &Path, text: &str) -> Result<Self> {
        let s: Self = parse_toml(path, text)?;
        check_schema(s.schema)?;
        if s.trials == 0 {
            return Err(LabError::Config("trials must be at least 1".into()));
        }
        if s.name.is_empty() || s.name.contains(['/', '\\', ',', '\n']) {
            return Err(LabError::Config(format!(
                "invalid scenario name {:?}",
                s.name
            )));
        }
        Ok(s)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| LabError::Config(e.to_string()))
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.trials as u64).map(|i| self.seed + i).collect()
    }

    pub fn k0(&self, dx: usize, du: usize) -> Result<Matrix> {
        match &self.run.k0 {
            None => Ok(paper_k0()),
            Some(v) => crate::matkit::from_rows(du, dx, v),
        }
    }
}

/// On-disk form of a representation: basis columns listed one after another.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RepresentationFile {
    pub dx: usize,
    pub du: usize,
    pub columns: Vec<Vec<f64>>,
}

impl RepresentationFile {
    pub fn from_rep(rep: &Representation) -> Self {
        Self {
            dx: rep.dx(),
            du: rep.du(),
            columns: rep
                .phi()
                .column_iter()
                .map(|c| c.iter().copied().collect())
                .collect(),
        }
    }

    pub fn to_rep(&self) -> Result<Representation> {
        let rows = self.dx * (self.dx + self.du);
        if self.columns.iter().any(|c| c.len() != rows) {
            return Err(LabError::Dimension(format!(
                "basis columns must have {rows} entries"
            )));
        }
        let flat: Vec<f64> = self.columns.iter().flatten().copied().collect();
        Representation::new(
            Matrix::from_column_slice(rows, self.columns.len(), &flat),
            self.dx,
            self.du,
        )
    }

    pub fn load(path: &Path) -> Result<Representation> {
        let text = read_text(path)?;
        let f: Self = serde_json::from_str(&text).map_err(|e| LabError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        f.to_rep()
    }
}

/// A scenario with every quantity needed by the adaptive loop materialized.
#[derive(Debug, Clone)]
pub struct ResolvedScenario {
    pub scenario: Scenario,
    pub system: LinearSystem,
    pub config: AdaptiveRunConfig,
    /// Distance of the basis in use from the unperturbed builder output (or
    /// from the lumped basis for learned representations).
    pub distance: f64,
}

impl ResolvedScenario {
    pub fn config_for(&self, seed: u64) -> AdaptiveRunConfig {
        AdaptiveRunConfig {
            seed,
            ..self.config.clone()
        }
    }
}

fn build_representation(
    spec: &RepresentationSpec,
    sys: &LinearSystem,
    dt: f64,
    k0: &Matrix,
    weights: &LqrWeights,
    learned: Option<&Representation>,
    base_dir: &Path,
) -> Result<(Representation, Option<AffineBase>)> {
    let basis = match spec.builder {
        Builder::Full => full_basis(sys)?,
        Builder::ScaleKnownA => scale_known_a(sys)?,
        Builder::Lumped => lumped_cartpole(sys, dt)?,
        Builder::ExtendedLumped => extended_lumped(sys, dt, k0, weights)?,
        Builder::KnownA => known_a_embedding(sys)?,
        Builder::KnownB => known_b_embedding(sys)?,
        Builder::Learned => {
            let rep = match (learned, &spec.path) {
                (Some(rep), _) => rep.clone(),
                (None, Some(p)) => RepresentationFile::load(&base_dir.join(p))?,
                (None, None) => {
                    return Err(LabError::Config(
                        "learned representation needs a `path`".into(),
                    ))
                }
            };
            return Ok((rep, None));
        }
    };
    Ok((basis.rep, basis.base))
}

/// Builds the system, basis and run configuration. `learned` supplies the
/// basis for the `learned` builder when it is not read from disk.
pub fn resolve(
    scenario: &Scenario,
    learned: Option<&Representation>,
    base_dir: &Path,
) -> Result<ResolvedScenario> {
    let system = scenario.system.build()?;
    let (dx, du) = (system.dx(), system.du());
    let k0 = scenario.k0(dx, du)?;
    let weights = LqrWeights::identity(dx, du);
    let (rep, base) = build_representation(
        &scenario.representation,
        &system,
        scenario.system.dt(),
        &k0,
        &weights,
        learned,
        base_dir,
    )?;
    let (rep, distance) = match scenario.representation.perturb_distance {
        Some(d) => {
            let p = perturb_to_distance(&rep, d, scenario.representation.perturb_seed)?;
            let dist = subspace_distance(&p, &rep)?;
            (p, dist)
        }
        None if scenario.representation.builder == Builder::Learned && (dx, du) == (4, 1) => {
            let dist = subspace_distance(&rep, &lumped_representation(scenario.system.dt()))?;
            (rep, dist)
        }
        None => (rep, 0.0),
    };
    let run = &scenario.run;
    let config = AdaptiveRunConfig {
        k0,
        tau1: run.tau1,
        k_fin: run.k_fin,
        exploration: scenario.exploration.to_exploration(),
        x_b: run.x_b,
        k_b: run.k_b,
        abort_rule: run.abort_rule,
        rep,
        base,
        weights,
        noise_std: run.noise_std,
        seed: scenario.seed,
        cumulative_data: run.cumulative_data,
    };
    config.validate(&system)?;
    Ok(ResolvedScenario {
        scenario: scenario.clone(),
        system,
        config,
        distance,
    })
}
