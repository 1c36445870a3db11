//! Experiment harness: scenario files, Monte-Carlo runs, figure bundles,
//! result files and the theory-constant report.

mod bundle;
mod output;
mod report;
mod scenario;

use std::path::PathBuf;

pub use bundle::{
    bundle_scenarios, reproduce, BundleOutput, BundleSettings, Figure, Manifest, ManifestEntry,
    PretrainRecord, LEARNED_FILE, MANIFEST_FILE, PERTURB_SEED,
};
pub use output::{
    csv_text, format_g12, logged_times, parse_csv, rows_for_trace, run_scenario, summarize,
    write_scenario, ResultRow, ScenarioResult, Summary, CSV_HEADER,
};
pub use report::{
    check, run_pretrain_job, write_report, CheckConfig, CheckParams, CheckReport, Comparison,
    ExcitationReport, OfflineDataSpec, PretrainJob, PretrainSummary,
};
pub use scenario::{
    resolve, Builder, ExplorationKind, ExplorationSpec, RepresentationFile, RepresentationSpec,
    ResolvedScenario, RunSpec, Scenario, SystemKind, SystemSpec, DEFAULT_TRIALS, SCHEMA_VERSION,
};

pub const OUT_ENV: &str = "LQR_LAB_OUT";
pub const DEFAULT_OUT: &str = "results";

/// `explicit`, else `$LQR_LAB_OUT`, else `./results`.
pub fn output_root(explicit: Option<PathBuf>) -> PathBuf {
    explicit
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}
