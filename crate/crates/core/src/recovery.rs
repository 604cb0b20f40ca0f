//! From a solved lifted matrix to calibration and direction estimates:
//! rank-one factorisation, support detection, off-grid magnitudes, and sign
//! selection by residual over all `2^K` patterns.

use std::io::Write;

use ndarray::{Array1, Array2};

use crate::array::SnapshotSet;
use crate::lifting::{AngleGrid, DictionaryKind, LiftedMatrix, LiftedOperator};
use crate::linalg;
use crate::socp::{build_program, select_eta, ConicProgram};
use crate::solver::{self, ConicSolution, SolveStatus, SolverSettings};
use crate::{Cplx, Error, Real, Result};

/// Largest `K` for which all sign patterns are enumerated.
pub const MAX_SIGN_ENUMERATION: usize = 20;

/// How the noise-ball radius is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EtaRule {
    /// Quantile of the noise norm at this confidence level.
    Quantile(f64),
    Fixed(f64),
}

impl Default for EtaRule {
    fn default() -> Self {
        EtaRule::Quantile(0.95)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorSettings<T> {
    pub eta_rule: EtaRule,
    pub solver: SolverSettings<T>,
    /// Spectrum level below which a support row counts as vanished.
    pub support_threshold: T,
    /// Coupling bound used in the program; the grid half interval when `None`.
    pub r_override: Option<T>,
}

impl<T: Real> Default for EstimatorSettings<T> {
    fn default() -> Self {
        Self {
            eta_rule: EtaRule::default(),
            solver: SolverSettings::default(),
            support_threshold: T::lit(1e-3),
            r_override: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RecoveryResult<T> {
    pub h_hat: Array1<Cplx<T>>,
    /// `N × L`.
    pub sbar_hat: Array2<Cplx<T>>,
    /// `N × L`; zero for the on-grid model.
    pub p_hat: Array2<Cplx<T>>,
    /// Signed offsets in radians, zero off the support.
    pub beta_hat: Array1<T>,
    /// Ascending grid indices.
    pub support: Vec<usize>,
    /// Degrees, one per support entry in the same order.
    pub theta_hat: Vec<T>,
    /// `‖A(X̃) − Y‖_F` of the selected sign pattern.
    pub residual: T,
    /// Residual of every sign pattern, indexed by pattern (bit `k` set = negative `β` on `support[k]`).
    pub sign_residuals: Vec<T>,
    pub spectrum: Vec<T>,
    pub sigma1_ratio: T,
    pub objective: T,
    pub eta: T,
    pub solver_status: SolveStatus,
    pub solver_iterations: usize,
    pub warnings: Vec<String>,
    /// The relaxed solution.
    pub lifted: LiftedMatrix<T>,
}

impl<T: Real> RecoveryResult<T> {
    /// Writes `angle_deg,amplitude` rows, one per grid bin.
    pub fn write_spectrum_csv<W: Write>(&self, grid: &AngleGrid<T>, out: W) -> std::io::Result<()> {
        write_spectrum_csv(grid, &self.spectrum, out)
    }
}

pub fn write_spectrum_csv<T: Real, W: Write>(grid: &AngleGrid<T>, spectrum: &[T], mut out: W) -> std::io::Result<()> {
    writeln!(out, "angle_deg,amplitude")?;
    for (a, s) in grid.angles_deg().iter().zip(spectrum) {
        writeln!(out, "{},{}", a.to_f64_lossy(), s.to_f64_lossy())?;
    }
    Ok(())
}

/// `(h, xrow, σ₁/Σσ)` of a rank-one factorisation.
pub type RankOneFactor<T> = (Array1<Cplx<T>>, Array1<Cplx<T>>, T);

/// Leading singular triple as `(h, xrow, σ₁/Σσ)` with `X̃ ≈ h xrowᵀ`,
/// `h = √σ₁ u₁`, `xrow = √σ₁ conj(w₁)`, and the largest-modulus entry of `h`
/// rotated to the positive real axis.
pub fn rank_one_factor<T: Real>(x: &Array2<Cplx<T>>) -> Result<RankOneFactor<T>> {
    if x.is_empty() {
        return Err(Error::Degenerate("empty lifted matrix".into()));
    }
    let svd = linalg::svd(x);
    let total: T = svd.sigma.iter().copied().sum();
    let s1 = svd.sigma[0];
    if !(s1 > T::zero()) {
        return Err(Error::Degenerate("lifted matrix is zero".into()));
    }
    let root = s1.sqrt();
    let mut h: Array1<Cplx<T>> = svd.u.column(0).mapv(|v| v * root);
    let mut xrow: Array1<Cplx<T>> = svd.w.column(0).mapv(|v| v.conj() * root);
    let mut best = 0;
    for (i, v) in h.iter().enumerate() {
        if v.norm() > h[best].norm() {
            best = i;
        }
    }
    let phase = h[best] / h[best].norm();
    h.mapv_inplace(|v| v * phase.conj());
    xrow.mapv_inplace(|v| v * phase);
    Ok((h, xrow, s1 / total))
}

/// Per-bin magnitude of `xrow` over every snapshot block, normalised to peak
/// 1, and the `K` strongest bins (greedy, ties to the lower index, no two
/// selected bins adjacent). The support is returned in ascending order.
pub fn detect_support<T: Real>(xrow: &Array1<Cplx<T>>, n: usize, k: usize) -> Result<(Vec<usize>, Vec<T>)> {
    if k == 0 || k > n {
        return Err(Error::Config(format!("cannot select {k} sources from {n} bins")));
    }
    if n == 0 || !xrow.len().is_multiple_of(n) {
        return Err(Error::Dimension(format!("row of length {} is not a multiple of N = {n}", xrow.len())));
    }
    let mut spectrum = vec![T::zero(); n];
    for (c, v) in xrow.iter().enumerate() {
        spectrum[c % n] += v.norm_sqr();
    }
    spectrum.iter_mut().for_each(|v| *v = v.sqrt());
    let peak = spectrum.iter().copied().fold(T::zero(), T::max);
    if peak > T::zero() {
        spectrum.iter_mut().for_each(|v| *v /= peak);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| spectrum[b].partial_cmp(&spectrum[a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
    let mut support: Vec<usize> = Vec::with_capacity(k);
    for &i in &order {
        if support.len() == k {
            break;
        }
        if support.iter().all(|&j: &usize| i.abs_diff(j) >= 2) {
            support.push(i);
        }
    }
    // not enough separated bins: fill with the strongest remaining ones
    for &i in &order {
        if support.len() == k {
            break;
        }
        if !support.contains(&i) {
            support.push(i);
        }
    }
    support.sort_unstable();
    Ok((support, spectrum))
}

/// `|βᵢ| = ‖p̂ row i‖ / ‖ŝ̄ row i‖`, clamped to `[0, r]`. Rows whose spectrum
/// is below `threshold` get 0 and a warning.
pub fn beta_magnitude<T: Real>(
    sbar: &Array2<Cplx<T>>,
    p: &Array2<Cplx<T>>,
    support: &[usize],
    spectrum: &[T],
    r: T,
    threshold: T,
) -> (Vec<T>, Vec<String>) {
    let mut warnings = Vec::new();
    let mags = support
        .iter()
        .map(|&i| {
            let ns = sbar.row(i).iter().map(|v| v.norm_sqr()).sum::<T>().sqrt();
            let np = p.row(i).iter().map(|v| v.norm_sqr()).sum::<T>().sqrt();
            if spectrum[i] < threshold || !(ns > T::zero()) {
                warnings.push(format!("bin {i}: vanishing signal row, offset set to 0"));
                return T::zero();
            }
            (np / ns).min(r).max(T::zero())
        })
        .collect();
    (mags, warnings)
}

/// Candidate lifted matrix `ĥ [x₁ᵀ … x_Lᵀ]` with `s̄` kept on the support and
/// `p = β s̄` there.
fn candidate<T: Real>(
    op: &LiftedOperator<T>,
    h: &Array1<Cplx<T>>,
    sbar: &Array2<Cplx<T>>,
    support: &[usize],
    betas: &[T],
) -> LiftedMatrix<T> {
    let n = op.grid_len();
    let l = op.num_snapshots();
    let w = op.snapshot_width();
    let mut x = Array2::zeros((w, l));
    for (&i, &b) in support.iter().zip(betas) {
        for t in 0..l {
            x[[i, t]] = sbar[[i, t]];
            if w == 2 * n {
                x[[n + i, t]] = sbar[[i, t]] * b;
            }
        }
    }
    LiftedMatrix::from_rank_one(h, x.view())
}

fn residual_norm<T: Real>(op: &LiftedOperator<T>, x: &LiftedMatrix<T>, y: &Array2<Cplx<T>>) -> Result<T> {
    let r = op.apply_forward(x)? - y;
    Ok(linalg::frobenius(&r))
}

/// Signed offsets minimising the data residual over all `2^K` sign patterns.
/// Returns the signed offsets (support order), the chosen residual and every
/// pattern's residual. Equal residuals resolve to the lowest pattern index,
/// so all-zero magnitudes give the all-positive pattern.
pub fn recover_sign<T: Real>(
    op: &LiftedOperator<T>,
    y: &Array2<Cplx<T>>,
    h: &Array1<Cplx<T>>,
    sbar: &Array2<Cplx<T>>,
    magnitudes: &[T],
    support: &[usize],
) -> Result<(Vec<T>, T, Vec<T>)> {
    let k = support.len();
    if k > MAX_SIGN_ENUMERATION {
        return Err(Error::Config(format!(
            "{k} sources exceed the sign enumeration limit {MAX_SIGN_ENUMERATION}"
        )));
    }
    if magnitudes.len() != k {
        return Err(Error::Dimension("one magnitude per support entry required".into()));
    }
    let mut residuals = Vec::with_capacity(1 << k);
    let mut best = 0usize;
    for pattern in 0..(1usize << k) {
        let betas: Vec<T> = (0..k)
            .map(|j| if pattern >> j & 1 == 1 { -magnitudes[j] } else { magnitudes[j] })
            .collect();
        let res = residual_norm(op, &candidate(op, h, sbar, support, &betas), y)?;
        if res < residuals.get(best).copied().unwrap_or(T::infinity()) {
            best = pattern;
        }
        residuals.push(res);
    }
    let signed = (0..k)
        .map(|j| if best >> j & 1 == 1 { -magnitudes[j] } else { magnitudes[j] })
        .collect();
    Ok((signed, residuals[best], residuals))
}

/// Number of sources from a spectrum. Not implemented: `K` is taken as known.
pub fn estimate_model_order<T: Real>(_spectrum: &[T]) -> Result<usize> {
    Err(Error::Config("model-order selection is not implemented; pass the number of sources".into()))
}

/// Full pipeline on one set of snapshots with `k` sources.
pub fn estimate<T: Real>(
    op: &LiftedOperator<T>,
    grid: &AngleGrid<T>,
    snapshots: &SnapshotSet<T>,
    k: usize,
    settings: &EstimatorSettings<T>,
) -> Result<RecoveryResult<T>> {
    estimate_detailed(op, grid, snapshots, k, settings).map(|d| d.0)
}

/// As [`estimate`], also returning the cone program and the solver output.
pub fn estimate_detailed<T: Real>(
    op: &LiftedOperator<T>,
    grid: &AngleGrid<T>,
    snapshots: &SnapshotSet<T>,
    k: usize,
    settings: &EstimatorSettings<T>,
) -> Result<(RecoveryResult<T>, ConicProgram<T>, ConicSolution<T>)> {
    let n = op.grid_len();
    if grid.len() != n {
        return Err(Error::Dimension(format!("grid has {} bins, operator {n}", grid.len())));
    }
    let y = &snapshots.observations;
    if k > MAX_SIGN_ENUMERATION {
        return Err(Error::Config(format!(
            "{k} sources exceed the sign enumeration limit {MAX_SIGN_ENUMERATION}"
        )));
    }
    let eta = match settings.eta_rule {
        EtaRule::Quantile(conf) => T::lit(select_eta(
            snapshots.noise_variance.to_f64_lossy(),
            op.num_sensors(),
            op.num_snapshots(),
            conf,
        )?),
        EtaRule::Fixed(v) => T::lit(v),
    };
    let r = settings.r_override.unwrap_or(grid.half_interval);
    let program = build_program(op, y, eta, r)?;
    let sol = solver::solve(&program, &settings.solver)?;
    let mut warnings = Vec::new();
    if !sol.status.is_optimal() {
        warnings.push(format!("solver ended with status {}: {}", sol.status, sol.message));
    }
    let lifted = program.extract_lifted(&sol.primal)?;
    let (h_hat, xrow, sigma1_ratio) = rank_one_factor(&lifted.entries)?;
    let (support, spectrum) = detect_support(&xrow, n, k)?;

    let l = op.num_snapshots();
    let w = op.snapshot_width();
    let off_grid = op.kind() == DictionaryKind::OffGrid;
    let sbar_hat = Array2::from_shape_fn((n, l), |(i, t)| xrow[t * w + i]);
    let p_hat = if off_grid {
        Array2::from_shape_fn((n, l), |(i, t)| xrow[t * w + n + i])
    } else {
        Array2::zeros((n, l))
    };
    let (mags, warn) = if off_grid {
        beta_magnitude(&sbar_hat, &p_hat, &support, &spectrum, r, settings.support_threshold)
    } else {
        (vec![T::zero(); support.len()], Vec::new())
    };
    warnings.extend(warn);
    let (signed, residual, sign_residuals) = recover_sign(op, y, &h_hat, &sbar_hat, &mags, &support)?;
    let mut beta_hat = Array1::zeros(n);
    for (&i, &b) in support.iter().zip(&signed) {
        beta_hat[i] = b;
    }
    let theta_hat = support
        .iter()
        .zip(&signed)
        .map(|(&i, &b)| (grid.angles[i] + b).to_degrees())
        .collect();
    for w in &warnings {
        log::warn!("{w}");
    }
    let result = RecoveryResult {
        h_hat,
        sbar_hat,
        p_hat,
        beta_hat,
        support,
        theta_hat,
        residual,
        sign_residuals,
        spectrum,
        sigma1_ratio,
        objective: sol.primal_objective,
        eta,
        solver_status: sol.status,
        solver_iterations: sol.iterations,
        warnings,
        lifted,
    };
    Ok((result, program, sol))
}

/// Root-mean-square angle error of one estimate, `√((1/K) Σ (θ̂ − θ)²)`,
/// under the pairing of estimates to truths that minimises it.
pub fn matched_rmse(estimates: &[f64], truth: &[f64]) -> Result<f64> {
    let k = truth.len();
    if estimates.len() != k || k == 0 {
        return Err(Error::Dimension(format!(
            "{} estimates for {k} true directions",
            estimates.len()
        )));
    }
    if k > 8 {
        return Err(Error::Config("assignment search limited to 8 sources".into()));
    }
    let mut perm: Vec<usize> = (0..k).collect();
    let mut best = f64::INFINITY;
    permute(&mut perm, 0, &mut |p| {
        let sse: f64 = p.iter().enumerate().map(|(i, &j)| (estimates[j] - truth[i]).powi(2)).sum();
        best = best.min(sse);
    });
    Ok((best / k as f64).sqrt())
}

fn permute(p: &mut Vec<usize>, start: usize, f: &mut impl FnMut(&[usize])) {
    if start == p.len() {
        f(p);
        return;
    }
    for i in start..p.len() {
        p.swap(start, i);
        permute(p, start + 1, f);
        p.swap(start, i);
    }
}
