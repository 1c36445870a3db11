use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adaptive::{run_adaptive, RegretTrace};
use crate::error::{LabError, Result};

use super::scenario::ResolvedScenario;

pub const CSV_HEADER: &str = "scenario,seed,t,cumulative_cost,regret,epoch,aborted";

/// `%.12g`: twelve significant digits, trailing zeros dropped.
pub fn format_g12(x: f64) -> String {
    const DIGITS: i32 = 12;
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{:.*e}", (DIGITS - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..DIGITS).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (DIGITS - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub scenario: String,
    pub seed: u64,
    pub t: usize,
    pub cumulative_cost: f64,
    pub regret: f64,
    pub epoch: usize,
    pub aborted: bool,
}

impl ResultRow {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.scenario,
            self.seed,
            self.t,
            format_g12(self.cumulative_cost),
            format_g12(self.regret),
            self.epoch,
            u8::from(self.aborted)
        )
    }

    pub fn parse_csv_line(line: &str) -> Result<Self> {
        let bad = || LabError::Parse {
            path: PathBuf::from("<csv>"),
            message: format!("malformed row {line:?}"),
        };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(bad());
        }
        Ok(Self {
            scenario: f[0].to_string(),
            seed: f[1].parse().map_err(|_| bad())?,
            t: f[2].parse().map_err(|_| bad())?,
            cumulative_cost: f[3].parse().map_err(|_| bad())?,
            regret: f[4].parse().map_err(|_| bad())?,
            epoch: f[5].parse().map_err(|_| bad())?,
            aborted: match f[6] {
                "0" => false,
                "1" => true,
                _ => return Err(bad()),
            },
        })
    }
}

/// Powers of two up to `T`, every epoch end, and `T` itself.
pub fn logged_times(trace: &RegretTrace) -> Vec<usize> {
    let horizon = trace.horizon();
    let mut ts: Vec<usize> = (0..usize::BITS)
        .map(|p| 1usize << p)
        .take_while(|&t| t <= horizon)
        .collect();
    ts.extend(trace.epochs.iter().map(|e| e.end));
    ts.push(horizon);
    ts.sort_unstable();
    ts.dedup();
    ts
}

pub fn rows_for_trace(scenario: &str, seed: u64, trace: &RegretTrace) -> Vec<ResultRow> {
    logged_times(trace)
        .into_iter()
        .map(|t| ResultRow {
            scenario: scenario.to_string(),
            seed,
            t,
            cumulative_cost: trace.cumulative_cost[t - 1],
            regret: trace.regret_at(t),
            epoch: trace.epoch_of(t),
            aborted: trace.aborted_by(t),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub scenario: String,
    pub trials: usize,
    #[serde(rename = "logged_T")]
    pub logged_t: Vec<usize>,
    pub mean_regret: Vec<f64>,
    pub median_regret: Vec<f64>,
    pub abort_rate: f64,
    pub learned_distance: Option<f64>,
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Statistics over the rows as written, so they can be recomputed from the CSV.
pub fn summarize(
    scenario: &str,
    rows: &[ResultRow],
    learned_distance: Option<f64>,
) -> Result<Summary> {
    let mut seeds: Vec<u64> = rows.iter().map(|r| r.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    if seeds.is_empty() {
        return Err(LabError::InvalidArgument("no rows to summarize".into()));
    }
    let mut logged_t: Vec<usize> = rows.iter().map(|r| r.t).collect();
    logged_t.sort_unstable();
    logged_t.dedup();
    let written = |x: f64| -> f64 { format_g12(x).parse().expect("formatted float") };
    let mut mean_regret = Vec::with_capacity(logged_t.len());
    let mut median_regret = Vec::with_capacity(logged_t.len());
    for &t in &logged_t {
        let mut vals: Vec<f64> = rows
            .iter()
            .filter(|r| r.t == t)
            .map(|r| written(r.regret))
            .collect();
        if vals.len() != seeds.len() {
            return Err(LabError::InvalidArgument(format!(
                "t = {t} logged for {} of {} seeds",
                vals.len(),
                seeds.len()
            )));
        }
        mean_regret.push(vals.iter().sum::<f64>() / vals.len() as f64);
        median_regret.push(median(&mut vals));
    }
    let last = logged_t[logged_t.len() - 1];
    let aborted = rows.iter().filter(|r| r.t == last && r.aborted).count();
    Ok(Summary {
        scenario: scenario.to_string(),
        trials: seeds.len(),
        logged_t,
        mean_regret,
        median_regret,
        abort_rate: aborted as f64 / seeds.len() as f64,
        learned_distance,
    })
}

#[derive(Debug, Clone)]
pub struct ScenarioResult {
    pub name: String,
    pub seeds: Vec<u64>,
    pub traces: Vec<RegretTrace>,
    pub rows: Vec<ResultRow>,
    pub summary: Summary,
}

impl ScenarioResult {
    /// Seed-mean regret at step `t` taken from the full traces.
    pub fn mean_regret_at(&self, t: usize) -> f64 {
        self.traces.iter().map(|tr| tr.regret_at(t)).sum::<f64>() / self.traces.len() as f64
    }

    pub fn abort_count(&self) -> usize {
        self.traces
            .iter()
            .filter(|t| t.aborted_at.is_some())
            .count()
    }
}

/// Runs every trial of a resolved scenario. Trials execute in parallel and
/// are collected in seed order.
pub fn run_scenario(resolved: &ResolvedScenario) -> Result<ScenarioResult> {
    run_scenario_with(resolved, None)
}

pub(crate) fn run_scenario_with(
    resolved: &ResolvedScenario,
    learned_distance: Option<f64>,
) -> Result<ScenarioResult> {
    let name = resolved.scenario.name.clone();
    let seeds = resolved.scenario.seeds();
    let traces = seeds
        .par_iter()
        .map(|&s| run_adaptive(&resolved.system, &resolved.config_for(s)))
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<ResultRow> = seeds
        .iter()
        .zip(&traces)
        .flat_map(|(&s, tr)| rows_for_trace(&name, s, tr))
        .collect();
    let summary = summarize(&name, &rows, learned_distance)?;
    Ok(ScenarioResult {
        name,
        seeds,
        traces,
        rows,
        summary,
    })
}

pub fn csv_text(rows: &[ResultRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{}", r.to_csv_line());
    }
    out
}

pub fn parse_csv(text: &str) -> Result<Vec<ResultRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(LabError::Parse {
            path: PathBuf::from("<csv>"),
            message: "missing or wrong header".into(),
        });
    }
    lines.map(ResultRow::parse_csv_line).collect()
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| LabError::io(path, e))
}

pub(crate) fn json_text<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)
        .map_err(|e| LabError::Config(format!("serialization failed: {e}")))?;
    s.push('\n');
    Ok(s)
}

/// Writes `<name>.csv` and `<name>.summary.json` into `dir`; returns both paths.
pub fn write_scenario(dir: &Path, result: &ScenarioResult) -> Result<(PathBuf, PathBuf)> {
    let csv = dir.join(format!("{}.csv", result.name));
    let summary = dir.join(format!("{}.summary.json", result.name));
    write_file(&csv, &csv_text(&result.rows))?;
    write_file(&summary, &json_text(&result.summary)?)?;
    Ok((csv, summary))
}
