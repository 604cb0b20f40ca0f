//! CSV and JSON writers. Floats use Rust's shortest round-trip formatting.
//!
//! Wall-clock times go to `timing.csv` / `timing.json`, apart from the
//! deterministic `trials.csv` / `summary.json`.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::Context;
use serde::Serialize;

use crate::experiment::{spectrum_peaks, SingleRun, SummaryRow, TimingRow, TrialRecord};

pub const TRIALS_HEADER: &str = "snr_db,trial_index,method,rmse_deg,theta_hat,residual,solve_iters,solver_status";

pub fn write_trials_csv<W: Write>(records: &[TrialRecord], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{TRIALS_HEADER}")?;
    for r in records {
        let theta: Vec<String> = r.theta_hat.iter().map(|t| t.to_string()).collect();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.snr_db,
            r.trial_index,
            r.method,
            r.rmse_deg,
            theta.join(";"),
            r.residual,
            r.solve_iters,
            r.solver_status
        )?;
    }
    Ok(())
}

pub fn write_timing_csv<W: Write>(records: &[TrialRecord], mut out: W) -> std::io::Result<()> {
    writeln!(out, "snr_db,trial_index,method,runtime_s")?;
    for r in records {
        writeln!(out, "{},{},{},{}", r.snr_db, r.trial_index, r.method, r.runtime_s)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct Summary<'a> {
    seed: u64,
    trials_per_snr: usize,
    rows: &'a [SummaryRow],
}

pub fn write_sweep(dir: &Path, seed: u64, trials_per_snr: usize, records: &[TrialRecord], rows: &[SummaryRow], timing: &[TimingRow]) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut buf = Vec::new();
    write_trials_csv(records, &mut buf)?;
    write_file(&dir.join("trials.csv"), &buf)?;
    let summary = Summary { seed, trials_per_snr, rows };
    write_json(&dir.join("summary.json"), &summary)?;
    let mut buf = Vec::new();
    write_timing_csv(records, &mut buf)?;
    write_file(&dir.join("timing.csv"), &buf)?;
    write_json(&dir.join("timing.json"), &timing)?;
    Ok(())
}

/// `result.json` of a single solve.
#[derive(Debug, Serialize)]
pub struct ResultJson {
    pub method: String,
    pub doas_deg: Vec<f64>,
    pub theta_hat: Vec<f64>,
    pub rmse_deg: f64,
    pub support: Vec<usize>,
    /// Signed offsets on the support, degrees.
    pub beta_hat_deg: Vec<f64>,
    pub h_hat: Vec<[f64; 2]>,
    pub residual: f64,
    pub sign_residuals: Vec<f64>,
    pub objective: f64,
    pub eta: f64,
    pub sigma1_ratio: f64,
    pub solver_status: String,
    pub solver_iterations: usize,
    /// Grid angles of spectrum peaks at or above half the maximum.
    pub peaks_deg: Vec<f64>,
    pub warnings: Vec<String>,
}

impl ResultJson {
    pub fn from_run(method: &str, run: &SingleRun) -> Self {
        let r = &run.result;
        let angles = run.grid.angles_deg();
        Self {
            method: method.to_string(),
            doas_deg: run.scenario.doas_deg.clone(),
            theta_hat: r.theta_hat.clone(),
            rmse_deg: run.rmse_deg,
            support: r.support.clone(),
            beta_hat_deg: r.support.iter().map(|&i| r.beta_hat[i].to_degrees()).collect(),
            h_hat: r.h_hat.iter().map(|c| [c.re, c.im]).collect(),
            residual: r.residual,
            sign_residuals: r.sign_residuals.clone(),
            objective: r.objective,
            eta: r.eta,
            sigma1_ratio: r.sigma1_ratio,
            solver_status: r.solver_status.as_str().to_string(),
            solver_iterations: r.solver_iterations,
            peaks_deg: spectrum_peaks(&r.spectrum, 0.5).into_iter().map(|i| angles[i]).collect(),
            warnings: r.warnings.clone(),
        }
    }
}

/// `spectrum.csv`, `result.json`, and on request the program dump and the
/// solver iteration log.
pub fn write_single(dir: &Path, method: &str, run: &SingleRun, dump_program: bool, solver_log: bool) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut buf = Vec::new();
    run.result.write_spectrum_csv(&run.grid, &mut buf)?;
    write_file(&dir.join("spectrum.csv"), &buf)?;
    write_json(&dir.join("result.json"), &ResultJson::from_run(method, run))?;
    if dump_program {
        let mut buf = Vec::new();
        selfcal::socp::write_program(&run.program, &mut buf)?;
        write_file(&dir.join("program.txt"), &buf)?;
    }
    if solver_log {
        let mut buf = Vec::new();
        run.solution.write_log_csv(&mut buf)?;
        write_file(&dir.join("solver_log.csv"), &buf)?;
    }
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

pub fn write_file(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Method;

    #[test]
    fn trials_csv_layout_and_floats() {
        let rec = TrialRecord {
            snr_db: 10.0,
            trial_index: 3,
            method: Method::OngridAblation,
            rmse_deg: 0.1,
            theta_hat: vec![13.5, -2.25],
            residual: 1e-7,
            solve_iters: 12,
            runtime_s: 0.5,
            solver_status: "optimal".into(),
        };
        let mut buf = Vec::new();
        write_trials_csv(&[rec], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], TRIALS_HEADER);
        assert_eq!(lines[1], "10,3,ongrid-ablation,0.1,13.5;-2.25,0.0000001,12,optimal");
    }
}
