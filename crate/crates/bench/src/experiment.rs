//! Scenarios, single runs, and Monte-Carlo sweeps over SNR and methods.
//!
//! Every `(snr index, trial index)` pair owns a ChaCha8 stream derived from the
//! experiment seed, so a trial's data do not depend on which other trials run
//! or on how they are scheduled. All methods of a trial see the same data.

use std::time::Instant;

use anyhow::{bail, Context};
use ndarray::{Array1, Array2};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use selfcal::array::{dft_calibration_basis, simulate};
use selfcal::lifting::DictionaryKind;
use selfcal::recovery::{estimate, estimate_detailed, matched_rmse};
use selfcal::{
    AngleGrid, ArrayGeometry, CalibrationModel, Complex64, ConicProgram, ConicSolution, GroundTruth, LiftedOperator,
    RecoveryResult, SnapshotSet, SourceScene,
};

use crate::config::{ExperimentConfig, Method};

/// Seeds of one trial: `(data, calibration)`.
pub fn trial_seeds(seed: u64, snr_index: usize, trial_index: usize) -> (u64, u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((snr_index as u64) << 32) | trial_index as u64);
    (rng.next_u64(), rng.next_u64())
}

/// One simulated realisation, self-contained for later solving.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub num_sensors: usize,
    pub spacing_ratio: f64,
    pub grid_start: f64,
    pub grid_stop: f64,
    pub grid_step: f64,
    pub calibration_m: usize,
    /// Gain coefficients as `[re, im]`.
    pub h: Vec<[f64; 2]>,
    pub doas_deg: Vec<f64>,
    pub snr_db: f64,
    pub noise_variance: f64,
    pub rng_seed: u64,
    /// `M` rows of `L` entries, each `[re, im]`.
    pub observations: Vec<Vec<[f64; 2]>>,
    pub truth_support: Vec<usize>,
    /// Signed offsets in radians, in scene order.
    pub truth_beta: Vec<f64>,
}

impl Scenario {
    pub fn geometry(&self) -> anyhow::Result<ArrayGeometry> {
        Ok(ArrayGeometry::new(self.num_sensors, self.spacing_ratio)?)
    }

    pub fn grid(&self) -> anyhow::Result<AngleGrid> {
        Ok(AngleGrid::from_degrees(self.grid_start, self.grid_stop, self.grid_step)?)
    }

    pub fn calibration(&self) -> anyhow::Result<CalibrationModel> {
        let basis = dft_calibration_basis(self.num_sensors, self.calibration_m)?;
        let h = Array1::from_iter(self.h.iter().map(|&[re, im]| Complex64::new(re, im)));
        Ok(CalibrationModel::new(basis, h)?)
    }

    pub fn snapshots(&self) -> anyhow::Result<SnapshotSet> {
        let m = self.observations.len();
        let l = self.observations.first().map_or(0, Vec::len);
        if m != self.num_sensors || l == 0 || self.observations.iter().any(|r| r.len() != l) {
            bail!("observations must be {} rows of equal nonzero length", self.num_sensors);
        }
        Ok(SnapshotSet {
            observations: Array2::from_shape_fn((m, l), |(i, t)| {
                let [re, im] = self.observations[i][t];
                Complex64::new(re, im)
            }),
            noise_variance: self.noise_variance,
            rng_seed: self.rng_seed,
        })
    }
}

/// Builds the scenario of one `(snr, trial)` cell.
pub fn make_scenario(cfg: &ExperimentConfig, snr_index: usize, trial_index: usize) -> anyhow::Result<Scenario> {
    make_scenario_with_truth(cfg, snr_index, trial_index).map(|(s, _)| s)
}

/// As [`make_scenario`], also returning the simulated ground truth.
pub fn make_scenario_with_truth(
    cfg: &ExperimentConfig,
    snr_index: usize,
    trial_index: usize,
) -> anyhow::Result<(Scenario, GroundTruth)> {
    let snr_db = *cfg
        .snr_db_list
        .get(snr_index)
        .with_context(|| format!("no SNR at index {snr_index}"))?;
    let (data_seed, cal_seed) = trial_seeds(cfg.seed, snr_index, trial_index);
    let geom = ArrayGeometry::new(cfg.geometry.num_sensors, cfg.geometry.spacing_ratio)?;
    let grid = AngleGrid::from_degrees(cfg.grid.start, cfg.grid.stop, cfg.grid.step)?;
    let m = cfg.calibration.m;
    let calibration = match (&cfg.calibration.h, cfg.calibration.h_seed) {
        (Some(h), _) => CalibrationModel::new(
            dft_calibration_basis(geom.num_sensors, m)?,
            Array1::from_iter(h.iter().map(|&[re, im]| Complex64::new(re, im))),
        )?,
        (None, Some(s)) => CalibrationModel::random_dft(geom.num_sensors, m, s)?,
        (None, None) => CalibrationModel::random_dft(geom.num_sensors, m, cal_seed)?,
    };
    let scene = match &cfg.scene.powers {
        Some(p) => SourceScene::new(cfg.scene.doas_deg.clone(), cfg.scene.snapshots, p.clone(), snr_db)?,
        None => SourceScene::unit_power(cfg.scene.doas_deg.clone(), cfg.scene.snapshots, snr_db)?,
    };
    let (snap, truth) = simulate(&geom, &calibration, &scene, &grid, cfg.scene.truth_model.into(), data_seed)?;
    let scenario = Scenario {
        num_sensors: geom.num_sensors,
        spacing_ratio: geom.spacing_ratio,
        grid_start: cfg.grid.start,
        grid_stop: cfg.grid.stop,
        grid_step: cfg.grid.step,
        calibration_m: m,
        h: calibration.coefficients.iter().map(|c| [c.re, c.im]).collect(),
        doas_deg: cfg.scene.doas_deg.clone(),
        snr_db,
        noise_variance: snap.noise_variance,
        rng_seed: snap.rng_seed,
        observations: snap
            .observations
            .rows()
            .into_iter()
            .map(|r| r.iter().map(|c| [c.re, c.im]).collect())
            .collect(),
        truth_support: truth.support.clone(),
        truth_beta: truth.support.iter().map(|&i| truth.beta[i]).collect(),
    };
    Ok((scenario, truth))
}

/// How a method turns shared snapshots into a program.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MethodVariant {
    pub method: Method,
    pub kind: DictionaryKind,
    /// Snapshots kept, counted from the first; `None` keeps all.
    pub snapshots: Option<usize>,
}

impl MethodVariant {
    pub fn for_method(method: Method) -> Self {
        match method {
            Method::Proposed => Self { method, kind: DictionaryKind::OffGrid, snapshots: None },
            Method::OngridAblation => Self { method, kind: DictionaryKind::OnGrid, snapshots: None },
            // the first snapshot only, no averaging
            Method::SingleSnapshotAblation => Self { method, kind: DictionaryKind::OffGrid, snapshots: Some(1) },
        }
    }

    pub fn prepare(&self, snap: &SnapshotSet) -> SnapshotSet {
        match self.snapshots {
            Some(k) => snap.truncated(k),
            None => snap.clone(),
        }
    }

    pub fn operator(&self, geom: &ArrayGeometry, grid: &AngleGrid, cal: &CalibrationModel, snapshots: usize) -> anyhow::Result<LiftedOperator> {
        let l = self.snapshots.map_or(snapshots, |k| k.min(snapshots));
        Ok(LiftedOperator::new(geom, grid, &cal.basis, l, self.kind)?)
    }
}

/// The variants of every method named in the config, in config order.
pub fn ablation_methods(cfg: &ExperimentConfig) -> Vec<MethodVariant> {
    cfg.method.to_vec().into_iter().map(MethodVariant::for_method).collect()
}

/// One row of `trials.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub snr_db: f64,
    pub trial_index: usize,
    pub method: Method,
    /// NaN when the estimator returned an error.
    pub rmse_deg: f64,
    pub theta_hat: Vec<f64>,
    pub residual: f64,
    pub solve_iters: usize,
    pub runtime_s: f64,
    pub solver_status: String,
}

/// Everything a single solve produces.
pub struct SingleRun {
    pub scenario: Scenario,
    pub grid: AngleGrid,
    pub result: RecoveryResult,
    pub program: ConicProgram,
    pub solution: ConicSolution,
    pub rmse_deg: f64,
    pub runtime_s: f64,
}

/// Solves one scenario with one method.
pub fn solve_scenario(cfg: &ExperimentConfig, scenario: Scenario, method: Method) -> anyhow::Result<SingleRun> {
    let geom = scenario.geometry()?;
    let grid = scenario.grid()?;
    let cal = scenario.calibration()?;
    let variant = MethodVariant::for_method(method);
    let snap = variant.prepare(&scenario.snapshots()?);
    let op = variant.operator(&geom, &grid, &cal, snap.num_snapshots())?;
    let t = Instant::now();
    let k = cfg.scene.sources;
    let (result, program, solution) = estimate_detailed(&op, &grid, &snap, k, &cfg.estimator_settings())?;
    let runtime_s = t.elapsed().as_secs_f64();
    let rmse_deg = matched_rmse(&result.theta_hat, &scenario.doas_deg)?;
    Ok(SingleRun { scenario, grid, result, program, solution, rmse_deg, runtime_s })
}

/// First SNR, first trial, first configured method.
pub fn run_single(cfg: &ExperimentConfig) -> anyhow::Result<SingleRun> {
    let method = cfg.method.to_vec()[0];
    solve_scenario(cfg, make_scenario(cfg, 0, 0)?, method)
}

fn run_trial(cfg: &ExperimentConfig, snr_index: usize, trial_index: usize, variants: &[MethodVariant]) -> Vec<TrialRecord> {
    let snr_db = cfg.snr_db_list[snr_index];
    let failed = |method, msg: String, runtime_s| {
        log::warn!("snr {snr_db} trial {trial_index} {method}: {msg}");
        TrialRecord {
            snr_db,
            trial_index,
            method,
            rmse_deg: f64::NAN,
            theta_hat: Vec::new(),
            residual: f64::NAN,
            solve_iters: 0,
            runtime_s,
            solver_status: "error".into(),
        }
    };
    let prepared = make_scenario(cfg, snr_index, trial_index).and_then(|s| {
        Ok((s.geometry()?, s.grid()?, s.calibration()?, s.snapshots()?, s.doas_deg))
    });
    let (geom, grid, cal, snap, doas) = match prepared {
        Ok(p) => p,
        Err(e) => return variants.iter().map(|v| failed(v.method, format!("{e:#}"), 0.0)).collect(),
    };
    let settings = cfg.estimator_settings();
    variants
        .iter()
        .map(|v| {
            let t = Instant::now();
            let out = v
                .operator(&geom, &grid, &cal, snap.num_snapshots())
                .and_then(|op| Ok(estimate(&op, &grid, &v.prepare(&snap), cfg.scene.sources, &settings)?))
                .and_then(|r| Ok((matched_rmse(&r.theta_hat, &doas)?, r)));
            let runtime_s = t.elapsed().as_secs_f64();
            match out {
                Ok((rmse_deg, r)) => TrialRecord {
                    snr_db,
                    trial_index,
                    method: v.method,
                    rmse_deg,
                    theta_hat: r.theta_hat,
                    residual: r.residual,
                    solve_iters: r.solver_iterations,
                    runtime_s,
                    solver_status: r.solver_status.as_str().to_string(),
                },
                Err(e) => failed(v.method, format!("{e:#}"), runtime_s),
            }
        })
        .collect()
}

/// Runs every `(snr, trial, method)` cell. Records come back ordered by SNR
/// index, trial, then method, whatever the thread count.
pub fn run_sweep(cfg: &ExperimentConfig, threads: usize) -> anyhow::Result<Vec<TrialRecord>> {
    let variants = ablation_methods(cfg);
    let cells: Vec<(usize, usize)> = (0..cfg.snr_db_list.len())
        .flat_map(|s| (0..cfg.trials_per_snr).map(move |t| (s, t)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .context("building the worker pool")?;
    let per_cell: Vec<Vec<TrialRecord>> =
        pool.install(|| cells.par_iter().map(|&(s, t)| run_trial(cfg, s, t, &variants)).collect());
    Ok(per_cell.into_iter().flatten().collect())
}

/// Aggregate of one `(snr, method)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub snr_db: f64,
    pub method: Method,
    pub trials: usize,
    /// Trials whose estimator returned an error; excluded from the RMSE.
    pub failures: usize,
    /// `√(mean rmse_deg²)` over successful trials.
    pub rmse_mean: Option<f64>,
    /// Half-width of a normal-approximation 95% interval on `rmse_mean`.
    pub rmse_ci95: Option<f64>,
}

/// Mean runtime of one `(snr, method)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub snr_db: f64,
    pub method: Method,
    pub mean_runtime: f64,
}

/// Aggregates in SNR-list then method order.
pub fn summarize(cfg: &ExperimentConfig, records: &[TrialRecord]) -> (Vec<SummaryRow>, Vec<TimingRow>) {
    let mut rows = Vec::new();
    let mut timing = Vec::new();
    for &snr_db in &cfg.snr_db_list {
        for method in cfg.method.to_vec() {
            let cell: Vec<&TrialRecord> = records
                .iter()
                .filter(|r| r.snr_db == snr_db && r.method == method)
                .collect();
            let sq: Vec<f64> = cell.iter().filter(|r| r.rmse_deg.is_finite()).map(|r| r.rmse_deg.powi(2)).collect();
            let (rmse_mean, rmse_ci95) = rmse_with_ci(&sq);
            rows.push(SummaryRow {
                snr_db,
                method,
                trials: cell.len(),
                failures: cell.len() - sq.len(),
                rmse_mean,
                rmse_ci95,
            });
            let n = cell.len().max(1) as f64;
            timing.push(TimingRow {
                snr_db,
                method,
                mean_runtime: cell.iter().map(|r| r.runtime_s).sum::<f64>() / n,
            });
        }
    }
    (rows, timing)
}

/// RMSE from per-trial squared errors and the delta-method 95% half-width.
pub fn rmse_with_ci(squared: &[f64]) -> (Option<f64>, Option<f64>) {
    let n = squared.len();
    if n == 0 {
        return (None, None);
    }
    let mean = squared.iter().sum::<f64>() / n as f64;
    let rmse = mean.sqrt();
    if n < 2 {
        return (Some(rmse), None);
    }
    let var = squared.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let half_ms = 1.96 * (var / n as f64).sqrt();
    // d√u/du = 1/(2√u)
    let ci = if rmse > 0.0 { half_ms / (2.0 * rmse) } else { 0.0 };
    (Some(rmse), Some(ci))
}

/// Indices of local maxima at or above `level` (plateaus count once, at their
/// first bin).
pub fn spectrum_peaks(spectrum: &[f64], level: f64) -> Vec<usize> {
    let n = spectrum.len();
    let mut peaks = Vec::new();
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && spectrum[j + 1] == spectrum[i] {
            j += 1;
        }
        let left = i == 0 || spectrum[i - 1] < spectrum[i];
        let right = j + 1 == n || spectrum[j + 1] < spectrum[i];
        if left && right && spectrum[i] >= level {
            peaks.push(i);
        }
        i = j + 1;
    }
    peaks
}
