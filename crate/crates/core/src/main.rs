use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::{error, info};

use lqr_lab::labrun::{
    check, output_root, reproduce, resolve, run_pretrain_job, run_scenario, write_report,
    write_scenario, BundleSettings, CheckConfig, Figure, PretrainJob, Scenario,
};
use lqr_lab::Result;

#[derive(Parser)]
#[command(
    name = "lqr-lab",
    version,
    about = "Adaptive LQR experiments with structured dynamics bases"
)]
struct Cli {
    /// Base seed (overrides the scenario's)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Trials per scenario (overrides the scenario's)
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Only report errors
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario file
    Run {
        scenario: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a figure bundle (fig1, fig2a, fig2b, fig3)
    Reproduce {
        figure: Figure,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Learn a representation from offline multi-task data
    Pretrain {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate theory constants and excitation levels for a system and basis
    Check {
        config: PathBuf,
        /// Also write the report to this file
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parent_dir(p: &Path) -> PathBuf {
    p.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { scenario, out } => {
            let mut s = Scenario::load(&scenario)?;
            if let Some(seed) = cli.seed {
                s.seed = seed;
            }
            if let Some(trials) = cli.trials {
                s.trials = trials;
            }
            let resolved = resolve(&s, None, &parent_dir(&scenario))?;
            info!("running {} ({} trials)", s.name, s.trials);
            let result = run_scenario(&resolved)?;
            let (csv, summary) = write_scenario(&output_root(out), &result)?;
            info!("wrote {} and {}", csv.display(), summary.display());
        }
        Command::Reproduce { figure, out } => {
            let mut settings = BundleSettings::default();
            if let Some(seed) = cli.seed {
                settings.seed = seed;
            }
            if let Some(trials) = cli.trials {
                settings.trials = trials;
            }
            let dir = output_root(out);
            info!("reproducing {figure} into {}", dir.display());
            let bundle = reproduce(figure, &settings, &dir)?;
            for r in &bundle.results {
                let last = r.summary.mean_regret.last().copied().unwrap_or(f64::NAN);
                info!(
                    "{}: mean regret at T = {:.1}, abort rate {:.2}",
                    r.name, last, r.summary.abort_rate
                );
            }
        }
        Command::Pretrain { config, out } => {
            let mut job = PretrainJob::load(&config)?;
            if let Some(seed) = cli.seed {
                job.seed = seed;
            }
            let dir = output_root(out);
            let summary = run_pretrain_job(&job, &parent_dir(&config), &dir)?;
            info!(
                "pretraining finished after {} iterations (objective {:.6e})",
                summary.iterations, summary.objective
            );
            if let Some(d) = summary.lumped_distance {
                info!("distance from the lumped basis: {d:.4}");
            }
        }
        Command::Check { config, out } => {
            let cfg = CheckConfig::load(&config)?;
            let report = check(&cfg)?;
            let text = serde_json::to_string_pretty(&report)
                .map_err(|e| lqr_lab::LabError::Config(e.to_string()))?;
            println!("{text}");
            if let Some(path) = out {
                write_report(&path, &report)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::FAILURE
        }
    }
}
