use ndarray::Array2;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::{column_norms, ConicProgram, VariableMap};
use crate::lifting::{DictionaryKind, LiftedMatrix, LiftedOperator};
use crate::solver::{Cone, CscMatrix};
use crate::{Cplx, Error, Real, Result};

/// Programs above this many variables are refused.
pub const MAX_VARIABLES: usize = 4_000_000;

/// Upper bound on stored constraint-matrix entries (about 1.2 GB of triplets).
pub const MAX_NONZEROS: usize = 50_000_000;

/// Noise-ball radius `η` with `P(‖N‖_F ≤ η) = confidence` for i.i.d. circular
/// Gaussian noise of variance `σ²` on an `M × L` observation.
///
/// `‖N‖_F²` is `σ²/2` times a chi-square variable with `2ML` degrees of freedom.
pub fn select_eta(noise_variance: f64, num_sensors: usize, num_snapshots: usize, confidence: f64) -> Result<f64> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::Domain(format!("confidence {confidence} outside (0, 1)")));
    }
    if !(noise_variance >= 0.0) || !noise_variance.is_finite() {
        return Err(Error::Domain(format!("noise variance {noise_variance} is invalid")));
    }
    let dof = 2 * num_sensors * num_snapshots;
    if dof == 0 {
        return Err(Error::Dimension("empty observation".into()));
    }
    if noise_variance == 0.0 {
        return Ok(0.0);
    }
    let chi = ChiSquared::new(dof as f64).map_err(|e| Error::Domain(e.to_string()))?;
    Ok((0.5 * noise_variance * chi.inverse_cdf(confidence)).sqrt())
}

struct Layout {
    m: usize,
    n: usize,
    l: usize,
    width: usize,
    cols: usize,
    big_m: usize,
    x0: usize,
    v0: usize,
    b0: usize,
    q: usize,
    z0: usize,
    nvars: usize,
}

impl Layout {
    fn new<T: Real>(op: &LiftedOperator<T>) -> Self {
        let m = op.subspace_dim();
        let n = op.grid_len();
        let l = op.num_snapshots();
        let width = op.snapshot_width();
        let cols = op.lifted_cols();
        let big_m = op.num_sensors();
        let x0 = 0;
        let v0 = x0 + 2 * m * cols;
        let b0 = v0 + cols;
        let q = b0 + n;
        let z0 = q + 1;
        let nvars = z0 + 2 * big_m * l;
        Self {
            m,
            n,
            l,
            width,
            cols,
            big_m,
            x0,
            v0,
            b0,
            q,
            z0,
            nvars,
        }
    }

    /// Real index of the real part of `X̃[row, col]`.
    fn xvar(&self, row: usize, col: usize) -> usize {
        self.x0 + 2 * (col * self.m + row)
    }
}

/// Builds the cone program
///
/// ```text
/// minimise q
///   Φ vec(X̃) − vec(Yᵀ) = z,  ‖z‖ ≤ η
///   ‖X̃_{:,k}‖ ≤ v_k,  v ≥ 0
///   v(p block) ≤ r · v(s̄ block)       (off-grid only)
///   ‖(v_c : c ≡ i mod N)‖ ≤ bᵢ,  Σ bᵢ ≤ q
/// ```
///
/// Variables are `[X̃ | v | b | q | z]`, complex entries stored as interleaved
/// `(re, im)` pairs with `X̃` stacked column-major. Constraint blocks in order:
/// zero cone (residual definition), orthants (`v ≥ 0`, coupling, `Σb ≤ q`),
/// the residual ball, one cone per column, one cone per grid bin.
pub fn build_program<T: Real>(
    op: &LiftedOperator<T>,
    y: &Array2<Cplx<T>>,
    eta: T,
    r: T,
) -> Result<ConicProgram<T>> {
    let lay = Layout::new(op);
    if y.dim() != (lay.big_m, lay.l) {
        return Err(Error::Dimension(format!(
            "observations are {:?}, operator expects {}x{}",
            y.dim(),
            lay.big_m,
            lay.l
        )));
    }
    if !(eta.is_finite() && eta > T::epsilon()) {
        return Err(Error::Domain(format!("eta = {eta:e} is not a usable noise radius")));
    }
    if !(r.is_finite() && r >= T::zero()) {
        return Err(Error::Domain(format!("r = {r:e} must be finite and nonnegative")));
    }
    if lay.nvars > MAX_VARIABLES {
        return Err(Error::Resource(format!(
            "program would have {} variables (limit {MAX_VARIABLES})",
            lay.nvars
        )));
    }
    // the residual block is dense: 4 real entries per (row, lifted entry)
    let phi_nnz = 4 * lay.big_m * lay.l * lay.width * lay.m;
    if phi_nnz > MAX_NONZEROS {
        return Err(Error::Resource(format!(
            "measurement block would store {phi_nnz} nonzeros (limit {MAX_NONZEROS})"
        )));
    }
    let y_norm = y.iter().map(|v| v.norm_sqr()).sum::<T>().sqrt();
    if eta >= y_norm {
        log::debug!("eta {eta:e} >= |Y| {y_norm:e}: the zero matrix is optimal");
    }

    let off_grid = op.kind() == DictionaryKind::OffGrid;
    let (m, n, l, w, cols, big_m) = (lay.m, lay.n, lay.l, lay.width, lay.cols, lay.big_m);
    let mut trip: Vec<(usize, usize, T)> = Vec::new();
    let mut rhs: Vec<T> = Vec::new();
    let mut cones = Vec::new();
    let one = T::one();

    // residual definition: Φ x − z = y (interleaved)
    let basis = op.basis();
    let g = &op.dictionary().combined;
    let row0 = rhs.len();
    for i in 0..big_m {
        for t in 0..l {
            let row = row0 + 2 * (i * l + t);
            for j in 0..w {
                let gij = g[[i, j]];
                let col = t * w + j;
                for k in 0..m {
                    let phi = gij * basis[[i, k]];
                    let v = lay.xvar(k, col);
                    // re: Re φ·xr − Im φ·xi ; im: Im φ·xr + Re φ·xi
                    trip.push((row, v, phi.re));
                    trip.push((row, v + 1, -phi.im));
                    trip.push((row + 1, v, phi.im));
                    trip.push((row + 1, v + 1, phi.re));
                }
            }
            trip.push((row, lay.z0 + 2 * (i * l + t), -one));
            trip.push((row + 1, lay.z0 + 2 * (i * l + t) + 1, -one));
            rhs.push(y[[i, t]].re);
            rhs.push(y[[i, t]].im);
        }
    }
    cones.push(Cone::Zero(2 * big_m * l));

    // v ≥ 0
    let row0 = rhs.len();
    for k in 0..cols {
        trip.push((row0 + k, lay.v0 + k, -one));
        rhs.push(T::zero());
    }
    cones.push(Cone::NonNeg(cols));

    // r·v_s − v_p ≥ 0
    if off_grid {
        let row0 = rhs.len();
        for t in 0..l {
            for i in 0..n {
                let row = row0 + t * n + i;
                trip.push((row, lay.v0 + t * w + i, -r));
                trip.push((row, lay.v0 + t * w + n + i, one));
                rhs.push(T::zero());
            }
        }
        cones.push(Cone::NonNeg(l * n));
    }

    // q − Σ b ≥ 0
    let row = rhs.len();
    trip.push((row, lay.q, -one));
    for i in 0..n {
        trip.push((row, lay.b0 + i, one));
    }
    rhs.push(T::zero());
    cones.push(Cone::NonNeg(1));

    // (η, z)
    let row0 = rhs.len();
    rhs.push(eta);
    for k in 0..2 * big_m * l {
        trip.push((row0 + 1 + k, lay.z0 + k, -one));
        rhs.push(T::zero());
    }
    cones.push(Cone::SecondOrder(1 + 2 * big_m * l));

    // (v_k, X̃_{:,k})
    for k in 0..cols {
        let row0 = rhs.len();
        trip.push((row0, lay.v0 + k, -one));
        rhs.push(T::zero());
        for row in 0..m {
            let v = lay.xvar(row, k);
            trip.push((row0 + 1 + 2 * row, v, -one));
            trip.push((row0 + 2 + 2 * row, v + 1, -one));
            rhs.push(T::zero());
            rhs.push(T::zero());
        }
        cones.push(Cone::SecondOrder(1 + 2 * m));
    }

    // (bᵢ, v_c for columns c ≡ i mod N); acting on v keeps v tight at the
    // optimum, otherwise v_s could grow for free and void the coupling
    let per_group = cols / n;
    for i in 0..n {
        let row0 = rhs.len();
        trip.push((row0, lay.b0 + i, -one));
        rhs.push(T::zero());
        for blk in 0..per_group {
            trip.push((row0 + 1 + blk, lay.v0 + blk * n + i, -one));
            rhs.push(T::zero());
        }
        cones.push(Cone::SecondOrder(1 + per_group));
    }

    let a_eq = CscMatrix::from_triplets(rhs.len(), lay.nvars, &trip)?;
    let mut objective = vec![T::zero(); lay.nvars];
    objective[lay.q] = one;
    let variable_map = VariableMap {
        slices: vec![
            ("x".into(), lay.x0..lay.v0),
            ("v".into(), lay.v0..lay.b0),
            ("b".into(), lay.b0..lay.q),
            ("q".into(), lay.q..lay.z0),
            ("z".into(), lay.z0..lay.nvars),
        ],
        lifted_shape: Some((m, cols)),
    };
    let program = ConicProgram {
        objective,
        a_eq,
        b_eq: rhs,
        cones,
        variable_map,
    };
    program.variable_map.validate(lay.nvars)?;
    Ok(program)
}

/// Program point for a given lifted matrix: `v` the column norms, `bᵢ` the
/// group norms, `q = Σ bᵢ`, `z = A(X̃) − Y`. Feasible exactly when `X̃`
/// satisfies the residual ball and the coupling bound.
pub fn lifted_point<T: Real>(
    program: &ConicProgram<T>,
    op: &LiftedOperator<T>,
    y: &Array2<Cplx<T>>,
    x: &LiftedMatrix<T>,
) -> Result<Vec<T>> {
    let lay = Layout::new(op);
    if program.num_variables() != lay.nvars {
        return Err(Error::Dimension("program does not belong to this operator".into()));
    }
    let mut out = vec![T::zero(); lay.nvars];
    for c in 0..lay.cols {
        for row in 0..lay.m {
            let v = lay.xvar(row, c);
            out[v] = x.entries[[row, c]].re;
            out[v + 1] = x.entries[[row, c]].im;
        }
    }
    let norms = column_norms(&x.entries);
    out[lay.v0..lay.b0].copy_from_slice(&norms);
    let mut groups = vec![T::zero(); lay.n];
    for (c, &v) in norms.iter().enumerate() {
        groups[c % lay.n] += v * v;
    }
    let mut total = T::zero();
    for (i, g) in groups.into_iter().enumerate() {
        out[lay.b0 + i] = g.sqrt();
        total += g.sqrt();
    }
    out[lay.q] = total;
    let resid = op.apply_forward(x)? - y;
    for i in 0..lay.big_m {
        for t in 0..lay.l {
            let k = lay.z0 + 2 * (i * lay.l + t);
            out[k] = resid[[i, t]].re;
            out[k + 1] = resid[[i, t]].im;
        }
    }
    Ok(out)
}
