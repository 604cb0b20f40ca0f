//! Physical scenario synthesis: uniform linear array response, per-sensor
//! calibration gains `D = diag(B h)`, stochastic sources and noisy snapshots.
//!
//! Angles are radians everywhere except [`SourceScene::true_doas_deg`], which
//! is the I/O-facing description of the scene.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::lifting::AngleGrid;
use crate::{Cplx, Error, Real, Result};

/// Uniform linear array of `num_sensors` elements spaced `spacing_ratio`
/// wavelengths apart.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGeometry<T> {
    pub num_sensors: usize,
    pub spacing_ratio: T,
}

impl<T: Real> ArrayGeometry<T> {
    pub fn new(num_sensors: usize, spacing_ratio: T) -> Result<Self> {
        if num_sensors < 2 {
            return Err(Error::Domain(format!(
                "array needs at least 2 sensors, got {num_sensors}"
            )));
        }
        if !(spacing_ratio > T::zero()) || !spacing_ratio.is_finite() {
            return Err(Error::Domain(format!(
                "spacing ratio must be positive, got {spacing_ratio}"
            )));
        }
        Ok(Self {
            num_sensors,
            spacing_ratio,
        })
    }

    /// Phase-centre offset of sensor `k`, i.e. `k - (M-1)/2`.
    fn offset(&self, k: usize) -> T {
        T::from_usize_lossy(k) - T::from_usize_lossy(self.num_sensors - 1) / T::lit(2.0)
    }
}

fn check_angle<T: Real>(angle: T) -> Result<()> {
    // endfire itself is admissible: the search grid starts at -90 degrees
    if !angle.is_finite() || angle.abs() > T::FRAC_PI_2() * (T::one() + T::epsilon()) {
        return Err(Error::Domain(format!(
            "angle {angle} rad outside [-pi/2, pi/2]"
        )));
    }
    Ok(())
}

/// Array response to a unit plane wave from `angle` (radians from broadside).
///
/// Entry `k` is `exp(-j (k - (M-1)/2) 2π (d/λ) sin(angle))`.
pub fn steering_vector<T: Real>(geometry: &ArrayGeometry<T>, angle: T) -> Result<Array1<Cplx<T>>> {
    check_angle(angle)?;
    Ok(steering_unchecked(geometry, angle))
}

pub(crate) fn steering_unchecked<T: Real>(geometry: &ArrayGeometry<T>, angle: T) -> Array1<Cplx<T>> {
    let kappa = T::TAU() * geometry.spacing_ratio * angle.sin();
    Array1::from_shape_fn(geometry.num_sensors, |k| {
        Cplx::from_polar(T::one(), -geometry.offset(k) * kappa)
    })
}

/// Derivative of [`steering_vector`] with respect to the angle in radians.
pub fn steering_derivative<T: Real>(
    geometry: &ArrayGeometry<T>,
    angle: T,
) -> Result<Array1<Cplx<T>>> {
    check_angle(angle)?;
    Ok(derivative_unchecked(geometry, angle))
}

pub(crate) fn derivative_unchecked<T: Real>(
    geometry: &ArrayGeometry<T>,
    angle: T,
) -> Array1<Cplx<T>> {
    let kappa = T::TAU() * geometry.spacing_ratio;
    let a = steering_unchecked(geometry, angle);
    Array1::from_shape_fn(geometry.num_sensors, |k| {
        let factor = Cplx::new(T::zero(), -geometry.offset(k) * kappa * angle.cos());
        factor * a[k]
    })
}

/// First `m` columns of the unnormalised `M×M` DFT matrix, entries
/// `exp(-j 2π k l / M)`.
pub fn dft_calibration_basis<T: Real>(num_sensors: usize, m: usize) -> Result<Array2<Cplx<T>>> {
    if m == 0 || m >= num_sensors {
        return Err(Error::Domain(format!(
            "calibration basis needs 0 < m < M, got m={m}, M={num_sensors}"
        )));
    }
    let big_m = T::from_usize_lossy(num_sensors);
    Ok(Array2::from_shape_fn((num_sensors, m), |(k, l)| {
        // reduce k*l mod M first so the phase stays exact for large indices
        let kl = T::from_usize_lossy((k * l) % num_sensors);
        Cplx::from_polar(T::one(), -T::TAU() * kl / big_m)
    }))
}

/// Circular complex Gaussian draw with total variance `variance`.
pub fn complex_gaussian<T: Real, R: Rng + ?Sized>(rng: &mut R, variance: T) -> Cplx<T> {
    let scale = (variance / T::lit(2.0)).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Cplx::new(T::lit(re) * scale, T::lit(im) * scale)
}

/// Per-sensor gains `d = B h` parameterised by a known basis `B` (`M×m`).
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationModel<T> {
    pub basis: Array2<Cplx<T>>,
    pub coefficients: Array1<Cplx<T>>,
    pub gains: Array1<Cplx<T>>,
}

impl<T: Real> CalibrationModel<T> {
    pub fn new(basis: Array2<Cplx<T>>, coefficients: Array1<Cplx<T>>) -> Result<Self> {
        let (big_m, m) = basis.dim();
        if m >= big_m {
            return Err(Error::Domain(format!(
                "calibration subspace dimension m={m} must be below M={big_m}"
            )));
        }
        if coefficients.len() != m {
            return Err(Error::Dimension(format!(
                "basis has {m} columns but {} coefficients given",
                coefficients.len()
            )));
        }
        let gains = basis.dot(&coefficients);
        Ok(Self {
            basis,
            coefficients,
            gains,
        })
    }

    /// DFT basis with coefficients drawn i.i.d. standard circular Gaussian.
    pub fn random_dft(num_sensors: usize, m: usize, seed: u64) -> Result<Self> {
        let basis = dft_calibration_basis(num_sensors, m)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = Array1::from_shape_fn(m, |_| complex_gaussian(&mut rng, T::one()));
        Self::new(basis, h)
    }

    pub fn num_sensors(&self) -> usize {
        self.basis.nrows()
    }

    pub fn subspace_dim(&self) -> usize {
        self.basis.ncols()
    }
}

/// Far-field narrowband sources seen over `num_snapshots` snapshots.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceScene<T> {
    pub true_doas_deg: Vec<T>,
    pub num_snapshots: usize,
    pub source_powers: Vec<T>,
    pub snr_db: T,
}

impl<T: Real> SourceScene<T> {
    pub fn new(true_doas_deg: Vec<T>, num_snapshots: usize, source_powers: Vec<T>, snr_db: T) -> Result<Self> {
        let scene = Self {
            true_doas_deg,
            num_snapshots,
            source_powers,
            snr_db,
        };
        scene.validate()?;
        Ok(scene)
    }

    /// Unit-power sources.
    pub fn unit_power(true_doas_deg: Vec<T>, num_snapshots: usize, snr_db: T) -> Result<Self> {
        let k = true_doas_deg.len();
        Self::new(true_doas_deg, num_snapshots, vec![T::one(); k], snr_db)
    }

    pub fn validate(&self) -> Result<()> {
        if self.true_doas_deg.is_empty() {
            return Err(Error::Domain("scene needs at least one source".into()));
        }
        if self.num_snapshots == 0 {
            return Err(Error::Domain("scene needs at least one snapshot".into()));
        }
        if self.source_powers.len() != self.true_doas_deg.len() {
            return Err(Error::Dimension(format!(
                "{} source powers for {} sources",
                self.source_powers.len(),
                self.true_doas_deg.len()
            )));
        }
        for &theta in &self.true_doas_deg {
            if !theta.is_finite() || theta.abs() >= T::lit(90.0) {
                return Err(Error::Domain(format!("DoA {theta} deg outside (-90, 90)")));
            }
        }
        if self.source_powers.iter().any(|&p| !(p > T::zero())) {
            return Err(Error::Domain("source powers must be positive".into()));
        }
        if !self.snr_db.is_finite() {
            return Err(Error::Domain("snr_db must be finite".into()));
        }
        Ok(())
    }

    pub fn num_sources(&self) -> usize {
        self.true_doas_deg.len()
    }

    /// Noise variance per sensor and snapshot: total source power over the
    /// linear SNR.
    pub fn noise_variance(&self) -> T {
        let total: T = self.source_powers.iter().copied().sum();
        total / T::lit(10.0).powf(self.snr_db / T::lit(10.0))
    }
}

/// Observed snapshots `Y` (`M×L`).
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSet<T> {
    pub observations: Array2<Cplx<T>>,
    pub noise_variance: T,
    pub rng_seed: u64,
}

impl<T: Real> SnapshotSet<T> {
    pub fn num_sensors(&self) -> usize {
        self.observations.nrows()
    }

    pub fn num_snapshots(&self) -> usize {
        self.observations.ncols()
    }

    /// Keeps only the first `count` snapshots.
    pub fn truncated(&self, count: usize) -> Self {
        let count = count.min(self.num_snapshots());
        Self {
            observations: self.observations.slice(ndarray::s![.., ..count]).to_owned(),
            noise_variance: self.noise_variance,
            rng_seed: self.rng_seed,
        }
    }
}

/// Which forward model generates the observations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TruthModel {
    /// `Y = D (Ā + B̄ Γ) S̄ + N`, the first-order model the estimator assumes.
    #[default]
    Linearized,
    /// `Y = D A(θ) S + N` with the true steering vectors.
    Exact,
}

/// Sparse representation of the simulated scene on the search grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth<T> {
    /// `N×L` source matrix, nonzero only on the support rows.
    pub sbar: Array2<Cplx<T>>,
    /// Signed offsets `θ - φ` in radians, zero off the support.
    pub beta: Array1<T>,
    /// Grid index of each source, in scene order.
    pub support: Vec<usize>,
}

impl<T: Real> GroundTruth<T> {
    /// `P = Γ S̄`.
    pub fn p(&self) -> Array2<Cplx<T>> {
        let mut p = self.sbar.clone();
        for (mut row, &b) in p.rows_mut().into_iter().zip(self.beta.iter()) {
            row.mapv_inplace(|v| v * b);
        }
        p
    }
}

/// Maps each true DoA onto its nearest grid bin.
pub fn nearest_bins<T: Real>(grid: &AngleGrid<T>, doas_rad: &[T]) -> Result<Vec<(usize, T)>> {
    let mut out = Vec::with_capacity(doas_rad.len());
    let first = grid.angles[0];
    let step = grid.step();
    for &theta in doas_rad {
        let pos = ((theta - first) / step).round();
        let last = T::from_usize_lossy(grid.len() - 1);
        if !(pos >= T::zero() && pos <= last) {
            return Err(Error::Scenario(format!(
                "DoA {:.4} deg lies outside the grid span",
                theta.to_degrees()
            )));
        }
        let idx = pos.to_usize().expect("nonnegative bin");
        let beta = theta - grid.angles[idx];
        if beta.abs() > grid.half_interval * T::lit(1.0 + 1e-9) {
            return Err(Error::Scenario(format!(
                "DoA {:.4} deg is farther than half a bin from the grid",
                theta.to_degrees()
            )));
        }
        if out.iter().any(|&(j, _)| j == idx) {
            return Err(Error::Scenario(format!(
                "two sources map to grid bin {idx}"
            )));
        }
        out.push((idx, beta));
    }
    Ok(out)
}

/// Draws one realisation of the scene.
///
/// Source symbols are drawn first (`K×L`, row-major), then the noise (`M×L`,
/// row-major), from a ChaCha8 stream seeded with `seed`.
pub fn simulate<T: Real>(
    geometry: &ArrayGeometry<T>,
    calibration: &CalibrationModel<T>,
    scene: &SourceScene<T>,
    grid: &AngleGrid<T>,
    model: TruthModel,
    seed: u64,
) -> Result<(SnapshotSet<T>, GroundTruth<T>)> {
    scene.validate()?;
    let big_m = geometry.num_sensors;
    if calibration.num_sensors() != big_m {
        return Err(Error::Dimension(format!(
            "calibration has {} sensors, geometry {big_m}",
            calibration.num_sensors()
        )));
    }
    let doas: Vec<T> = scene.true_doas_deg.iter().map(|d| d.to_radians()).collect();
    let bins = nearest_bins(grid, &doas)?;
    let k = doas.len();
    let l = scene.num_snapshots;
    let noise_variance = scene.noise_variance();
    if !(noise_variance > T::zero()) {
        return Err(Error::Domain("noise variance must be positive".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let signals = Array2::from_shape_fn((k, l), |(i, _)| {
        complex_gaussian(&mut rng, scene.source_powers[i])
    });

    let mut clean = Array2::<Cplx<T>>::zeros((big_m, l));
    for (src, &(bin, beta)) in bins.iter().enumerate() {
        let column = match model {
            TruthModel::Linearized => {
                let phi = grid.angles[bin];
                let a = steering_unchecked(geometry, phi);
                let da = derivative_unchecked(geometry, phi);
                a + da.mapv(|v| v * beta)
            }
            TruthModel::Exact => steering_unchecked(geometry, doas[src]),
        };
        for s in 0..big_m {
            let resp = calibration.gains[s] * column[s];
            for t in 0..l {
                clean[[s, t]] += resp * signals[[src, t]];
            }
        }
    }
    let noise = Array2::from_shape_fn((big_m, l), |_| complex_gaussian(&mut rng, noise_variance));
    let observations = clean + noise;

    let n = grid.len();
    let mut sbar = Array2::zeros((n, l));
    let mut beta = Array1::zeros(n);
    for (src, &(bin, b)) in bins.iter().enumerate() {
        sbar.row_mut(bin).assign(&signals.row(src));
        beta[bin] = b;
    }
    Ok((
        SnapshotSet {
            observations,
            noise_variance,
            rng_seed: seed,
        },
        GroundTruth {
            sbar,
            beta,
            support: bins.iter().map(|&(b, _)| b).collect(),
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn ula8() -> ArrayGeometry<f64> {
        ArrayGeometry::new(8, 0.5).unwrap()
    }

    #[test]
    fn broadside_steering_is_all_ones() {
        for m in [2, 5, 8] {
            let g = ArrayGeometry::new(m, 0.5).unwrap();
            let a = steering_vector(&g, 0.0).unwrap();
            for v in a.iter() {
                assert_abs_diff_eq!(v.re, 1.0, epsilon = 1e-15);
                assert_abs_diff_eq!(v.im, 0.0, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn steering_odd_symmetry() {
        let g = ula8();
        let a = steering_vector(&g, 0.37).unwrap();
        let b = steering_vector(&g, -0.37).unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            assert_abs_diff_eq!((x - y.conj()).norm(), 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn steering_matches_independent_evaluation() {
        // Values from a standalone evaluation of exp(-j (k-3.5) π sin θ),
        // θ = 13.2220°, computed in Python with numpy.
        let expected = [
            (-0.810_006_319_568_885_1, 0.586_421_147_519_825_7),
            (-0.223_694_234_368_169_6, 0.974_659_371_016_581_6),
            (0.473_232_587_140_674_8, 0.880_937_522_454_426_8),
            (0.936_150_257_779_656_9, 0.351_600_191_779_074_6),
            (0.936_150_257_779_656_9, -0.351_600_191_779_074_6),
            (0.473_232_587_140_674_8, -0.880_937_522_454_426_8),
            (-0.223_694_234_368_169_6, -0.974_659_371_016_581_6),
            (-0.810_006_319_568_885_1, -0.586_421_147_519_825_7),
        ];
        let a = steering_vector(&ula8(), 13.2220f64.to_radians()).unwrap();
        for (v, (re, im)) in a.iter().zip(expected) {
            assert_abs_diff_eq!(v.re, re, epsilon = 1e-12);
            assert_abs_diff_eq!(v.im, im, epsilon = 1e-12);
        }
    }

    #[test]
    fn out_of_range_angle_is_rejected() {
        let g = ula8();
        assert!(matches!(steering_vector(&g, 1.6), Err(Error::Domain(_))));
        assert!(matches!(steering_derivative(&g, -1.6), Err(Error::Domain(_))));
        assert!(steering_vector(&g, f64::NAN).is_err());
    }

    #[test]
    fn derivative_at_broadside() {
        let g = ula8();
        let d = steering_derivative(&g, 0.0).unwrap();
        for (k, v) in d.iter().enumerate() {
            let expect = -(k as f64 - 3.5) * std::f64::consts::PI;
            assert_abs_diff_eq!(v.re, 0.0, epsilon = 1e-14);
            assert_abs_diff_eq!(v.im, expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn derivative_vanishes_towards_endfire() {
        let g = ula8();
        let near = std::f64::consts::FRAC_PI_2 - 1e-9;
        let d = steering_derivative(&g, near).unwrap();
        assert!(d.iter().all(|v| v.norm() < 1e-7));
        let d = steering_derivative(&g, -std::f64::consts::FRAC_PI_2).unwrap();
        assert!(d.iter().all(|v| v.norm() < 1e-14));
    }

    #[test]
    fn derivative_matches_central_differences() {
        let g = ula8();
        let delta = 1e-5;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let phi: f64 = rng.random_range(-1.4..1.4);
            let ap = steering_vector(&g, phi + delta).unwrap();
            let am = steering_vector(&g, phi - delta).unwrap();
            let d = steering_derivative(&g, phi).unwrap();
            let err: f64 = (0..8)
                .map(|k| ((ap[k] - am[k]) / (2.0 * delta) - d[k]).norm_sqr())
                .sum::<f64>()
                .sqrt();
            assert!(err <= 1e-6, "fd error {err} at {phi}");
        }
    }

    #[test]
    fn dft_basis_gram() {
        let b = dft_calibration_basis::<f64>(8, 4).unwrap();
        assert_eq!(b.dim(), (8, 4));
        for k in 0..8 {
            assert_abs_diff_eq!(b[[k, 0]].re, 1.0, epsilon = 1e-15);
        }
        for p in 0..4 {
            for q in 0..4 {
                let g: Cplx<f64> = (0..8).map(|k| b[[k, p]].conj() * b[[k, q]]).sum();
                let expect = if p == q { 8.0 } else { 0.0 };
                assert_abs_diff_eq!(g.re, expect, epsilon = 1e-12);
                assert_abs_diff_eq!(g.im, 0.0, epsilon = 1e-12);
            }
        }
        assert!(dft_calibration_basis::<f64>(8, 8).is_err());
    }

    #[test]
    fn gains_equal_basis_times_coefficients() {
        let cal = CalibrationModel::<f64>::random_dft(8, 3, 5).unwrap();
        for k in 0..8 {
            let d: Cplx<f64> = (0..3).map(|j| cal.basis[[k, j]] * cal.coefficients[j]).sum();
            assert_abs_diff_eq!((d - cal.gains[k]).norm(), 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn snr_bookkeeping() {
        let scene = SourceScene::unit_power(vec![10.0], 4, 13.0).unwrap();
        let snr = 10.0 * (1.0f64 / scene.noise_variance()).log10();
        assert_abs_diff_eq!(snr, 13.0, epsilon = 1e-12);
    }

    #[test]
    fn empirical_noise_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let var = 2.5;
        let n = 1_000_000;
        let acc: f64 = (0..n).map(|_| complex_gaussian(&mut rng, var).norm_sqr()).sum();
        let est = acc / n as f64;
        assert!((est - var).abs() / var < 0.01, "estimated {est}");
    }

    fn one_degree_grid() -> AngleGrid<f64> {
        AngleGrid::from_degrees(-90.0, 90.0, 1.0).unwrap()
    }

    #[test]
    fn off_grid_source_maps_to_nearest_bin() {
        let grid = one_degree_grid();
        let bins = nearest_bins(&grid, &[13.2220f64.to_radians()]).unwrap();
        assert_eq!(bins[0].0, 103);
        assert_abs_diff_eq!(grid.angles[103].to_degrees(), 13.0, epsilon = 1e-9);
        assert_abs_diff_eq!(bins[0].1, 0.2220f64.to_radians(), epsilon = 1e-12);
    }

    #[test]
    fn colliding_sources_are_rejected() {
        let grid = one_degree_grid();
        let err = nearest_bins(&grid, &[13.1f64.to_radians(), 12.9f64.to_radians()]);
        assert!(matches!(err, Err(Error::Scenario(_))));
        let grid = AngleGrid::from_degrees(0.0, 10.0, 1.0).unwrap();
        assert!(matches!(
            nearest_bins(&grid, &[30.0f64.to_radians()]),
            Err(Error::Scenario(_))
        ));
    }

    #[test]
    fn simulate_is_reproducible_and_shaped() {
        let g = ula8();
        let cal = CalibrationModel::random_dft(8, 4, 1).unwrap();
        let scene = SourceScene::unit_power(vec![13.222, 28.6022], 7, 10.0).unwrap();
        let grid = one_degree_grid();
        let (y1, truth) = simulate(&g, &cal, &scene, &grid, TruthModel::Linearized, 42).unwrap();
        let (y2, _) = simulate(&g, &cal, &scene, &grid, TruthModel::Linearized, 42).unwrap();
        assert_eq!(y1.observations.dim(), (8, 7));
        assert_eq!(y1.observations, y2.observations);
        // 28.6022 deg is nearest to the 29 deg bin
        assert_eq!(truth.support, vec![103, 119]);
        assert!((truth.beta[119].to_degrees() + 0.3978).abs() < 1e-9);
        let nonzero_rows = truth
            .sbar
            .rows()
            .into_iter()
            .filter(|r| r.iter().any(|v| v.norm() > 0.0))
            .count();
        assert_eq!(nonzero_rows, 2);
        assert!(truth.beta.iter().all(|b| b.abs() <= grid.half_interval));
        let (y3, _) = simulate(&g, &cal, &scene, &grid, TruthModel::Linearized, 43).unwrap();
        assert_ne!(y1.observations, y3.observations);
    }

    #[test]
    fn noiseless_on_grid_with_identity_gains() {
        let g = ula8();
        let basis = dft_calibration_basis(8, 4).unwrap();
        let mut h = Array1::zeros(4);
        h[0] = Cplx::new(1.0, 0.0);
        let cal = CalibrationModel::new(basis, h).unwrap();
        assert!(cal.gains.iter().all(|d| (d - Cplx::new(1.0, 0.0)).norm() < 1e-15));
        let scene = SourceScene::unit_power(vec![20.0], 3, 300.0).unwrap();
        let grid = one_degree_grid();
        let (y, truth) = simulate(&g, &cal, &scene, &grid, TruthModel::Linearized, 9).unwrap();
        assert_eq!(truth.beta[110], 0.0);
        let a = steering_vector(&g, 20f64.to_radians()).unwrap();
        for s in 0..8 {
            for t in 0..3 {
                let expect = a[s] * truth.sbar[[110, t]];
                assert!((y.observations[[s, t]] - expect).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn exact_and_linearized_models_agree_on_grid() {
        let g = ula8();
        let cal = CalibrationModel::random_dft(8, 2, 4).unwrap();
        let scene = SourceScene::unit_power(vec![-30.0, 45.0], 5, 20.0).unwrap();
        let grid = one_degree_grid();
        let (a, _) = simulate(&g, &cal, &scene, &grid, TruthModel::Linearized, 8).unwrap();
        let (b, _) = simulate(&g, &cal, &scene, &grid, TruthModel::Exact, 8).unwrap();
        for (x, y) in a.observations.iter().zip(b.observations.iter()) {
            assert!((x - y).norm() < 1e-12);
        }
    }
}
