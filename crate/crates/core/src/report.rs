//! Output files of a run: the residual history as CSV and the full run
//! report as JSON.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::krylov::{SolverReport, PHASE_TOTAL};

pub const CSV_HEADER: &str = "iteration,relative_residual";

/// One line per outer iteration. Values use the shortest representation
/// that parses back to the identical `f64`.
pub fn residual_csv(report: &SolverReport) -> String {
    let mut out = String::with_capacity(32 * (report.residual_history.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for (it, res) in &report.residual_history {
        out.push_str(&format!("{it},{res:e}\n"));
    }
    out
}

/// Parses a residual CSV back into `(iteration, residual)` rows.
pub fn parse_residual_csv(text: &str) -> Result<Vec<(usize, f64)>> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(Error::Config(format!("residual CSV must start with '{CSV_HEADER}'")));
    }
    lines
        .enumerate()
        .map(|(n, line)| {
            let bad = || Error::Config(format!("residual CSV row {}: '{line}'", n + 1));
            let (a, b) = line.split_once(',').ok_or_else(bad)?;
            Ok((a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepeatRun {
    pub outer_iterations: usize,
    pub total_time: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepeatSummary {
    pub runs: Vec<RepeatRun>,
    pub mean_outer_iterations: f64,
    pub stddev_outer_iterations: f64,
    pub mean_total_time: f64,
    pub stddev_total_time: f64,
}

fn mean_stddev(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl RepeatSummary {
    pub fn from_reports(reports: &[SolverReport]) -> Self {
        let runs: Vec<RepeatRun> = reports
            .iter()
            .map(|r| RepeatRun { outer_iterations: r.outer_iterations, total_time: r.phase_timings.get(PHASE_TOTAL) })
            .collect();
        let its: Vec<f64> = runs.iter().map(|r| r.outer_iterations as f64).collect();
        let times: Vec<f64> = runs.iter().map(|r| r.total_time).collect();
        let (mean_outer_iterations, stddev_outer_iterations) = mean_stddev(&its);
        let (mean_total_time, stddev_total_time) = mean_stddev(&times);
        RepeatSummary { runs, mean_outer_iterations, stddev_outer_iterations, mean_total_time, stddev_total_time }
    }
}

/// The JSON run report: the first run's solver report, the resolved config
/// and, for repeated runs, per-run and aggregate statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    #[serde(flatten)]
    pub solver: SolverReport,
    pub solver_name: String,
    pub rank_count: usize,
    pub rhs_norm: f64,
    pub warnings: Vec<String>,
    pub repeats: RepeatSummary,
    pub config: RunConfig,
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    let mut f = fs::File::create(path)
        .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))?;
    f.write_all(contents.as_bytes())
        .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))
}

/// Writes whichever outputs the config names.
pub fn write_outputs(report: &RunReport) -> Result<()> {
    if let Some(path) = &report.config.residual_csv {
        write_file(path, &residual_csv(&report.solver))?;
    }
    if let Some(path) = &report.config.report_json {
        let json = serde_json::to_string_pretty(report).expect("report serializes");
        write_file(path, &(json + "\n"))?;
    }
    Ok(())
}
