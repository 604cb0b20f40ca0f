//! Acceptance criteria, one PASS/FAIL line each. Every criterion runs even
//! when an earlier one fails; the test fails if any criterion does.

use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use selfcal::array::dft_calibration_basis;
use selfcal::lifting::DictionaryKind;
use selfcal::socp::corollary1_check;
use selfcal::solver::testing::{lp_program, lp_vertex_enumeration, random_feasible_program, random_lp};
use selfcal::solver::{self, SolveStatus};
use selfcal::{AngleGrid, ArrayGeometry, Complex64, LiftedMatrix, LiftedOperator, SolverSettings};

use selfcal_bench::config::{ExperimentConfig, Method, Methods};
use selfcal_bench::experiment::{make_scenario_with_truth, run_single, run_sweep, solve_scenario, spectrum_peaks, summarize};

fn config(name: &str) -> ExperimentConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name);
    ExperimentConfig::load(&path).unwrap()
}

fn cg(rng: &mut ChaCha8Rng) -> Complex64 {
    Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// |⟨a, b⟩| / (‖a‖‖b‖), invariant to a complex scale of either side.
fn correlation(a: &Array2<Complex64>, b: &Array2<Complex64>) -> f64 {
    let ip: Complex64 = a.iter().zip(b).map(|(x, y)| x.conj() * y).sum();
    let na = a.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    ip.norm() / (na * nb)
}

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn run(id: usize, name: &str, budget: Option<Duration>, f: impl FnOnce() -> Verdict) -> bool {
    let start = Instant::now();
    let out = catch_unwind(AssertUnwindSafe(f));
    let elapsed = start.elapsed();
    let (mut pass, mut detail) = match out {
        Ok(v) => (v.pass, v.detail),
        Err(e) => {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            (false, format!("panicked: {msg}"))
        }
    };
    let timing = match budget {
        Some(b) => {
            if elapsed > b {
                pass = false;
                detail.push_str("; over time budget");
            }
            format!("{:.1} s of {} s", elapsed.as_secs_f64(), b.as_secs())
        }
        None => format!("{:.1} s", elapsed.as_secs_f64()),
    };
    let line = format!(
        "{} criterion {id} ({name}): {detail} [{timing}]\n",
        if pass { "PASS" } else { "FAIL" }
    );
    // bypass the test harness capture so the lines always show
    let _ = std::io::stderr().write_all(line.as_bytes());
    pass
}

fn c1_operator_identity() -> Verdict {
    let (big_m, m, n, l) = (8, 4, 12, 3);
    let geom = ArrayGeometry::new(big_m, 0.5).unwrap();
    let grid = AngleGrid::from_degrees(-60.0, 60.0, 10.0).unwrap();
    assert_eq!(grid.len(), n);
    let basis = dft_calibration_basis(big_m, m).unwrap();
    let op = LiftedOperator::new(&geom, &grid, &basis, l, DictionaryKind::OffGrid).unwrap();
    let phi = op.materialize_phi(usize::MAX).unwrap();
    let g = &op.dictionary().combined;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let h = Array1::from_shape_fn(m, |_| cg(&mut rng));
        let x = Array2::from_shape_fn((2 * n, l), |_| cg(&mut rng));
        let lifted = LiftedMatrix::from_rank_one(&h, x.view());
        let lhs = phi.dot(&lifted.columnstack());
        // direct model: Y = diag(B h) G X
        let d = basis.dot(&h);
        let y = Array2::from_shape_fn((big_m, l), |(i, t)| d[i] * (0..2 * n).map(|j| g[[i, j]] * x[[j, t]]).sum::<Complex64>());
        let rhs = LiftedOperator::vec_transpose(&y);
        let err = (&lhs - &rhs).iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        let scale = rhs.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        worst = worst.max(err / scale);
    }
    verdict(worst <= 1e-10, format!("worst relative error {worst:.2e} over 20 rank-one inputs (limit 1e-10)"))
}

fn c2_norm_chain() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut violations = 0;
    for _ in 0..1000 {
        let m = rng.random_range(1..=4);
        let n = rng.random_range(1..=6);
        let l = rng.random_range(1..=(12 / n));
        let x = Array2::from_shape_fn((m, 2 * l * n), |_| cg(&mut rng) * rng.random_range(0.0..3.0));
        let rep = corollary1_check(&x, n).unwrap();
        // entrywise l1 recomputed here rather than taken from the report
        let l1: f64 = x.iter().map(|v| v.norm()).sum();
        let upper = ((2 * m * l) as f64).sqrt() * rep.group_212;
        let slack = 1e-9;
        if l1 > upper * (1.0 + slack) || rep.nuclear > l1 * (1.0 + slack) || rep.violated {
            violations += 1;
        }
    }
    verdict(violations == 0, format!("{violations} violations in 1000 random matrices (slack 1e-9 relative)"))
}

fn c3_solver_certification() -> Verdict {
    let set = SolverSettings::default();
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    for seed in 0..50 {
        let p = random_feasible_program(seed, 200);
        assert!(p.num_variables() <= 200);
        let sol = solver::solve(&p, &set).unwrap();
        if sol.status != SolveStatus::Optimal {
            failures.push(format!("seed {seed}: {}", sol.status));
            continue;
        }
        let mut r = sol.slacks.clone();
        p.a_eq.gemv(&sol.primal, &mut r, 1.0, 1.0);
        r.iter_mut().zip(&p.b_eq).for_each(|(v, b)| *v -= b);
        let pres = norm(&r) / (1.0 + norm(&p.b_eq));
        let mut d = p.objective.clone();
        p.a_eq.gemv_t(&sol.dual, &mut d, 1.0, 1.0);
        let dres = norm(&d) / (1.0 + norm(&p.objective));
        let cx: f64 = p.objective.iter().zip(&sol.primal).map(|(a, b)| a * b).sum();
        let bz: f64 = p.b_eq.iter().zip(&sol.dual).map(|(a, b)| a * b).sum();
        let gap = (cx + bz).abs() / (1.0 + cx.abs());
        worst = worst.max(pres).max(dres).max(gap);
    }
    let mut lp_err: f64 = 0.0;
    for seed in 0..20 {
        let (a, b, c) = random_lp(seed, 5, 8);
        let sol = solver::solve(&lp_program(&a, &b, &c), &set).unwrap();
        let oracle = lp_vertex_enumeration(&a, &b, &c).unwrap();
        let obj: f64 = c.iter().zip(&sol.primal).map(|(x, y)| x * y).sum();
        lp_err = lp_err.max((obj - oracle).abs() / (1.0 + oracle.abs()));
    }
    let pass = failures.is_empty() && worst <= 1e-7 && lp_err <= 1e-6;
    verdict(
        pass,
        format!(
            "50 SOCPs: worst residual/gap {worst:.2e} (limit 1e-7), non-optimal {:?}; 20 LPs: worst objective error {lp_err:.2e} (limit 1e-6)",
            failures
        ),
    )
}

fn c4_noiseless_on_grid() -> Verdict {
    let cfg = config("noiseless_ongrid.toml");
    let (scenario, truth) = make_scenario_with_truth(&cfg, 0, 0).unwrap();
    let grid = scenario.grid().unwrap();
    assert_eq!(grid.len(), 30);
    let h = scenario.calibration().unwrap().coefficients;
    let run = solve_scenario(&cfg, scenario, Method::Proposed).unwrap();
    let r = &run.result;
    let exact_bin = r.support == truth.support;
    let err = (r.theta_hat[0] - cfg.scene.doas_deg[0]).abs();
    let truth_x = LiftedMatrix::from_rank_one(&h, LiftedMatrix::stack_blocks(&truth.sbar, &truth.p()).view());
    let est_x = LiftedMatrix::from_rank_one(&r.h_hat, LiftedMatrix::stack_blocks(&r.sbar_hat, &r.p_hat).view());
    let corr = correlation(&est_x.entries, &truth_x.entries);
    verdict(
        exact_bin && err < 1e-4 && corr >= 0.99,
        format!(
            "theta_hat {:?} vs {:?} (|error| {err:.4} deg, limit 1e-4), bin {:?} vs {:?}, factor correlation {corr:.4} (limit 0.99)",
            r.theta_hat, cfg.scene.doas_deg, r.support, truth.support
        ),
    )
}

fn c5_off_grid_desk() -> Verdict {
    let cfg = config("offgrid_desk.toml");
    assert_eq!(cfg.method.to_vec(), vec![Method::Proposed, Method::OngridAblation]);
    let records = run_sweep(&cfg, 1).unwrap();
    let (rows, _) = summarize(&cfg, &records);
    let rmse = rows[0].rmse_mean.unwrap_or(f64::INFINITY);
    let ablation = rows[1].rmse_mean.unwrap_or(f64::INFINITY);
    let trials = cfg.trials_per_snr;
    let wins = (0..trials)
        .filter(|&t| {
            let get = |m| records.iter().find(|r| r.trial_index == t && r.method == m).unwrap().rmse_deg;
            get(Method::Proposed) < get(Method::OngridAblation)
        })
        .count();
    let share = wins as f64 / trials as f64;
    verdict(
        rmse < 1.5 && share >= 0.7,
        format!(
            "proposed RMSE {rmse:.4} deg (limit 1.5), on-grid ablation {ablation:.4} deg, proposed better in {wins}/{trials} paired trials (need 70%)"
        ),
    )
}

fn c6_resolution() -> Verdict {
    let cfg = config("resolution.toml");
    let run = run_single(&cfg).unwrap();
    let angles = run.grid.angles_deg();
    let peaks: Vec<f64> = spectrum_peaks(&run.result.spectrum, 0.5).into_iter().map(|i| angles[i]).collect();
    let step = cfg.grid.step;
    let t = &cfg.scene.doas_deg;
    let near = peaks.len() == 2 && {
        // largest peak-to-truth distance under the better pairing
        let direct = (peaks[0] - t[0]).abs().max((peaks[1] - t[1]).abs());
        let swapped = (peaks[1] - t[0]).abs().max((peaks[0] - t[1]).abs());
        direct.min(swapped) <= step
    };
    verdict(
        near,
        format!("peaks >= 0.5 at {peaks:?} deg, truth {:?}, need exactly two within {step} deg", cfg.scene.doas_deg),
    )
}

fn c7_saturation() -> Verdict {
    let cfg = config("snr_sweep.toml");
    assert_eq!(cfg.snr_db_list, vec![0.0, 10.0, 20.0, 30.0]);
    let records = run_sweep(&cfg, 1).unwrap();
    let (rows, _) = summarize(&cfg, &records);
    let r: Vec<f64> = rows.iter().map(|x| x.rmse_mean.unwrap_or(f64::NAN)).collect();
    let c: Vec<f64> = rows.iter().map(|x| x.rmse_ci95.unwrap_or(0.0)).collect();
    // an increase counts only when the intervals separate
    let not_up = |a: usize, b: usize| r[b] <= r[a] || r[b] - c[b] <= r[a] + c[a];
    let monotone = not_up(0, 1) && not_up(1, 2);
    let plateau = r[3] >= 0.5 * r[2];
    verdict(
        monotone && plateau,
        format!(
            "RMSE ± CI95 at 0/10/20/30 dB: {}; non-increasing to 20 dB: {monotone}; RMSE(30) >= 0.5 RMSE(20): {plateau}",
            r.iter().zip(&c).map(|(a, b)| format!("{a:.3}±{b:.3}")).collect::<Vec<_>>().join(", ")
        ),
    )
}

/// Share of seeds where the support and the offset sign are both right;
/// even trial indices use +r/2, odd ones -r/2.
fn sign_share(snr_db: f64, seeds: usize) -> (usize, usize) {
    let mut cfg = config("sign_recovery.toml");
    cfg.snr_db_list = vec![snr_db];
    let plus = cfg.scene.doas_deg[0];
    let bin = (plus / cfg.grid.step).round() * cfg.grid.step;
    let minus = 2.0 * bin - plus;
    let mut correct = 0;
    for t in 0..seeds {
        let mut c = cfg.clone();
        c.scene.doas_deg = vec![if t % 2 == 0 { plus } else { minus }];
        let (scenario, truth) = make_scenario_with_truth(&c, 0, t).unwrap();
        let run = solve_scenario(&c, scenario, Method::Proposed).unwrap();
        let r = &run.result;
        let i = truth.support[0];
        if r.support == truth.support && r.beta_hat[i].signum() == truth.beta[i].signum() && r.beta_hat[i] != 0.0 {
            correct += 1;
        }
    }
    (correct, seeds)
}

fn c8_sign_recovery() -> Verdict {
    let noiseless = config("sign_recovery.toml").snr_db_list[0];
    let (a, n_a) = sign_share(noiseless, 20);
    let (b, n_b) = sign_share(10.0, 50);
    verdict(
        a == n_a && b as f64 >= 0.9 * n_b as f64,
        format!("noiseless: {a}/{n_a} correct bin and sign (need all); 10 dB: {b}/{n_b} (need 90%)"),
    )
}

fn c9_determinism() -> Verdict {
    let exe = env!("CARGO_BIN_EXE_selfcal");
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = config("offgrid_desk.toml");
    cfg.trials_per_snr = 2;
    cfg.snr_db_list = vec![10.0, 20.0];
    cfg.method = Methods::Many(Method::ALL.to_vec());
    let cfg_path = tmp.path().join("small.toml");
    std::fs::write(&cfg_path, cfg.to_toml()).unwrap();
    let cli = |args: &[&str], out: &Path| {
        let status = Command::new(exe)
            .args(args)
            .arg("--config")
            .arg(&cfg_path)
            .arg("--out")
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success(), "{args:?} failed");
    };
    let runs: Vec<(&str, Vec<&str>, Vec<&str>)> = vec![
        ("simulate", vec!["simulate", "--seed", "11"], vec!["scenario.json"]),
        ("resolve", vec!["resolve", "--seed", "11", "--dump-program", "--solver-log"], vec!["spectrum.csv", "result.json", "program.txt", "solver_log.csv"]),
        ("sweep", vec!["sweep", "--seed", "11"], vec!["trials.csv", "summary.json"]),
    ];
    let mut compared = 0;
    let mut mismatches = Vec::new();
    for (name, args, files) in &runs {
        let a = tmp.path().join(format!("{name}_a"));
        let b = tmp.path().join(format!("{name}_b"));
        cli(args, &a);
        let mut args_b = args.clone();
        if *name == "sweep" {
            // a different thread count must not change the results
            args_b.extend(["--threads", "2"]);
        }
        cli(&args_b, &b);
        for f in files {
            compared += 1;
            if std::fs::read(a.join(f)).unwrap() != std::fs::read(b.join(f)).unwrap() {
                mismatches.push(format!("{name}/{f}"));
            }
        }
    }
    // solve from the simulated scenario, twice
    let scen: PathBuf = tmp.path().join("simulate_a").join("scenario.json");
    for tag in ["solve_a", "solve_b"] {
        let status = Command::new(exe)
            .args(["solve", "--scenario"])
            .arg(&scen)
            .arg("--config")
            .arg(&cfg_path)
            .arg("--out")
            .arg(tmp.path().join(tag))
            .status()
            .unwrap();
        assert!(status.success());
    }
    for f in ["spectrum.csv", "result.json"] {
        compared += 1;
        let a = std::fs::read(tmp.path().join("solve_a").join(f)).unwrap();
        let b = std::fs::read(tmp.path().join("solve_b").join(f)).unwrap();
        if a != b {
            mismatches.push(format!("solve/{f}"));
        }
    }
    verdict(
        mismatches.is_empty(),
        format!("{compared} output files compared across repeated runs, mismatches {mismatches:?}"),
    )
}

#[test]
fn acceptance_criteria() {
    let secs = Duration::from_secs;
    let results = [
        run(1, "operator identity", Some(secs(5)), c1_operator_identity),
        run(2, "norm chain", Some(secs(10)), c2_norm_chain),
        run(3, "solver certification", Some(secs(60)), c3_solver_certification),
        run(4, "noiseless on-grid exactness", Some(secs(120)), c4_noiseless_on_grid),
        run(5, "off-grid desk-scale accuracy", Some(secs(1800)), c5_off_grid_desk),
        run(6, "resolution", Some(secs(120)), c6_resolution),
        run(7, "saturation", None, c7_saturation),
        run(8, "sign recovery", None, c8_sign_recovery),
        run(9, "determinism", None, c9_determinism),
    ];
    let failed: Vec<usize> = results.iter().enumerate().filter(|(_, &p)| !p).map(|(i, _)| i + 1).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
