//! Symmetric cones, Nesterov–Todd scalings and Jordan-algebra helpers.
//!
//! Second-order cone vectors are laid out `(t, u)` with membership `‖u‖ ≤ t`.

use crate::Real;

/// One block of the slack cone product.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cone {
    /// `{0}ⁿ`: equality rows.
    Zero(usize),
    /// Nonnegative orthant.
    NonNeg(usize),
    /// `{(t, u) : ‖u‖₂ ≤ t}` of total dimension `n` (including `t`).
    SecondOrder(usize),
}

impl Cone {
    pub fn dim(&self) -> usize {
        match *self {
            Cone::Zero(n) | Cone::NonNeg(n) | Cone::SecondOrder(n) => n,
        }
    }

    /// Barrier degree; the zero cone does not contribute.
    pub fn degree(&self) -> usize {
        match *self {
            Cone::Zero(_) => 0,
            Cone::NonNeg(n) => n,
            Cone::SecondOrder(_) => 1,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Cone::Zero(_) => "zero",
            Cone::NonNeg(_) => "nonneg",
            Cone::SecondOrder(_) => "soc",
        }
    }
}

/// Euclidean projection onto the second-order cone.
pub fn project_soc<T: Real>(point: &[T]) -> Vec<T> {
    if point.is_empty() {
        return Vec::new();
    }
    let t = point[0];
    let u = &point[1..];
    let nu = norm(u);
    if nu <= t {
        point.to_vec()
    } else if nu <= -t {
        vec![T::zero(); point.len()]
    } else {
        let scale = (t + nu) / T::lit(2.0);
        let mut out = Vec::with_capacity(point.len());
        out.push(scale);
        out.extend(u.iter().map(|&v| scale * v / nu));
        out
    }
}

pub(crate) fn norm<T: Real>(x: &[T]) -> T {
    x.iter().map(|&v| v * v).sum::<T>().sqrt()
}

pub(crate) fn dot<T: Real>(x: &[T], y: &[T]) -> T {
    x.iter().zip(y).map(|(&a, &b)| a * b).sum()
}

/// `t² - ‖u‖²`.
fn soc_residual<T: Real>(x: &[T]) -> T {
    let u = norm(&x[1..]);
    (x[0] - u) * (x[0] + u)
}

/// Nesterov–Todd scaling of one cone block.
#[derive(Debug, Clone)]
pub(crate) enum Scaling<T> {
    Zero,
    /// `W = diag(w)`.
    NonNeg { w: Vec<T> },
    /// `W = eta * W̄(wbar)`, `W̄ = [w₀ w₁ᵀ; w₁ I + w₁w₁ᵀ/(1+w₀)]`, `wbar₀² − ‖wbar₁‖² = 1`.
    Soc { eta: T, wbar: Vec<T> },
}

impl<T: Real> Scaling<T> {
    pub fn identity(cone: &Cone) -> Self {
        match *cone {
            Cone::Zero(_) => Scaling::Zero,
            Cone::NonNeg(n) => Scaling::NonNeg { w: vec![T::one(); n] },
            Cone::SecondOrder(n) => {
                let mut wbar = vec![T::zero(); n];
                wbar[0] = T::one();
                Scaling::Soc { eta: T::one(), wbar }
            }
        }
    }

    /// NT scaling point for interior `s`, `z`. Returns `None` when either
    /// leaves the cone interior numerically.
    pub fn compute(cone: &Cone, s: &[T], z: &[T]) -> Option<Self> {
        match cone {
            Cone::Zero(_) => Some(Scaling::Zero),
            Cone::NonNeg(_) => {
                let mut w = Vec::with_capacity(s.len());
                for (&si, &zi) in s.iter().zip(z) {
                    if !(si > T::zero() && zi > T::zero()) {
                        return None;
                    }
                    w.push((si / zi).sqrt());
                }
                Some(Scaling::NonNeg { w })
            }
            Cone::SecondOrder(_) => {
                let rs = soc_residual(s);
                let rz = soc_residual(z);
                if !(rs > T::zero() && rz > T::zero() && s[0] > T::zero() && z[0] > T::zero()) {
                    return None;
                }
                let s_scale = rs.sqrt();
                let z_scale = rz.sqrt();
                let sbar: Vec<T> = s.iter().map(|&v| v / s_scale).collect();
                let zbar: Vec<T> = z.iter().map(|&v| v / z_scale).collect();
                let gamma = ((T::one() + dot(&sbar, &zbar)) / T::lit(2.0)).sqrt();
                let two_gamma = T::lit(2.0) * gamma;
                let mut wbar: Vec<T> = Vec::with_capacity(s.len());
                wbar.push((sbar[0] + zbar[0]) / two_gamma);
                for k in 1..s.len() {
                    wbar.push((sbar[k] - zbar[k]) / two_gamma);
                }
                // renormalise onto the hyperboloid to curb drift
                let r = soc_residual(&wbar);
                if !(r > T::zero()) {
                    return None;
                }
                let rr = r.sqrt();
                wbar.iter_mut().for_each(|v| *v /= rr);
                let eta = (s_scale / z_scale).sqrt();
                if !eta.is_finite() {
                    return None;
                }
                Some(Scaling::Soc { eta, wbar })
            }
        }
    }

    /// `out = W x` (`W` is symmetric for both cone families).
    pub fn mul_w(&self, x: &[T], out: &mut [T]) {
        match self {
            Scaling::Zero => out.iter_mut().for_each(|v| *v = T::zero()),
            Scaling::NonNeg { w } => {
                for ((o, &wi), &xi) in out.iter_mut().zip(w).zip(x) {
                    *o = wi * xi;
                }
            }
            Scaling::Soc { eta, wbar } => {
                wbar_mul(wbar, x, out, false);
                out.iter_mut().for_each(|v| *v *= *eta);
            }
        }
    }

    /// `out = W⁻¹ x`.
    pub fn mul_winv(&self, x: &[T], out: &mut [T]) {
        match self {
            Scaling::Zero => out.iter_mut().for_each(|v| *v = T::zero()),
            Scaling::NonNeg { w } => {
                for ((o, &wi), &xi) in out.iter_mut().zip(w).zip(x) {
                    *o = xi / wi;
                }
            }
            Scaling::Soc { eta, wbar } => {
                wbar_mul(wbar, x, out, true);
                out.iter_mut().for_each(|v| *v /= *eta);
            }
        }
    }

    /// Upper triangle of `H = WᵀW`, packed column by column
    /// (`(0,0), (0,1), (1,1), (0,2), …`); diagonal only for the orthant.
    pub fn h_packed(&self, out: &mut Vec<T>) {
        out.clear();
        match self {
            Scaling::Zero => {}
            Scaling::NonNeg { w } => out.extend(w.iter().map(|&v| v * v)),
            Scaling::Soc { eta, wbar } => {
                // H = eta² (2 w wᵀ − J)
                let e2 = *eta * *eta;
                let two = T::lit(2.0);
                for j in 0..wbar.len() {
                    for i in 0..=j {
                        let mut v = two * wbar[i] * wbar[j];
                        if i == j {
                            v += if i == 0 { -T::one() } else { T::one() };
                        }
                        out.push(e2 * v);
                    }
                }
            }
        }
    }

    /// `out = H x`.
    pub fn mul_h(&self, x: &[T], out: &mut [T]) {
        match self {
            Scaling::Zero => out.iter_mut().for_each(|v| *v = T::zero()),
            Scaling::NonNeg { w } => {
                for ((o, &wi), &xi) in out.iter_mut().zip(w).zip(x) {
                    *o = wi * wi * xi;
                }
            }
            Scaling::Soc { eta, wbar } => {
                let e2 = *eta * *eta;
                let two_wx = T::lit(2.0) * dot(wbar, x);
                for k in 0..x.len() {
                    let jx = if k == 0 { x[0] } else { -x[k] };
                    out[k] = e2 * (two_wx * wbar[k] - jx);
                }
            }
        }
    }
}

/// `W̄ x`, or `W̄⁻¹ x = J W̄ J x` when `inverse`.
fn wbar_mul<T: Real>(w: &[T], x: &[T], out: &mut [T], inverse: bool) {
    let w0 = w[0];
    let w1 = &w[1..];
    let x0 = x[0];
    let x1 = &x[1..];
    let w1x1 = dot(w1, x1);
    let tail = w1x1 / (T::one() + w0);
    if inverse {
        out[0] = w0 * x0 - w1x1;
        let coef = tail - x0;
        for k in 0..w1.len() {
            out[k + 1] = x1[k] + coef * w1[k];
        }
    } else {
        out[0] = w0 * x0 + w1x1;
        let coef = tail + x0;
        for k in 0..w1.len() {
            out[k + 1] = x1[k] + coef * w1[k];
        }
    }
}

/// Jordan product `x ∘ y` for one cone block.
pub(crate) fn circ<T: Real>(cone: &Cone, x: &[T], y: &[T], out: &mut [T]) {
    match cone {
        Cone::Zero(_) => out.iter_mut().for_each(|v| *v = T::zero()),
        Cone::NonNeg(_) => {
            for ((o, &a), &b) in out.iter_mut().zip(x).zip(y) {
                *o = a * b;
            }
        }
        Cone::SecondOrder(_) => {
            out[0] = dot(x, y);
            for k in 1..x.len() {
                out[k] = x[0] * y[k] + y[0] * x[k];
            }
        }
    }
}

/// Solves `lambda ∘ out = d`.
pub(crate) fn inv_circ<T: Real>(cone: &Cone, lambda: &[T], d: &[T], out: &mut [T]) {
    match cone {
        Cone::Zero(_) => out.iter_mut().for_each(|v| *v = T::zero()),
        Cone::NonNeg(_) => {
            for ((o, &l), &v) in out.iter_mut().zip(lambda).zip(d) {
                *o = v / l;
            }
        }
        Cone::SecondOrder(_) => {
            let l0 = lambda[0];
            let l1 = &lambda[1..];
            let rho = soc_residual(lambda);
            let x0 = (l0 * d[0] - dot(l1, &d[1..])) / rho;
            out[0] = x0;
            for k in 1..lambda.len() {
                out[k] = (d[k] - x0 * lambda[k]) / l0;
            }
        }
    }
}

/// Adds `alpha · e` (the cone identity) to `x`.
pub(crate) fn add_identity<T: Real>(cone: &Cone, x: &mut [T], alpha: T) {
    match cone {
        Cone::Zero(_) => {}
        Cone::NonNeg(_) => x.iter_mut().for_each(|v| *v += alpha),
        Cone::SecondOrder(_) => x[0] += alpha,
    }
}

/// Largest `a` such that `x + a e` sits on the boundary; negative when `x` is interior.
/// Returns the shift needed to enter the cone (max eigenvalue deficit).
pub(crate) fn min_eigenvalue<T: Real>(cone: &Cone, x: &[T]) -> T {
    match cone {
        Cone::Zero(_) => T::zero(),
        Cone::NonNeg(_) => x.iter().copied().fold(T::infinity(), T::min),
        Cone::SecondOrder(_) => x[0] - norm(&x[1..]),
    }
}

/// Largest step `a ∈ [0, amax]` keeping `x + a dx` in the cone.
pub(crate) fn step_length<T: Real>(cone: &Cone, x: &[T], dx: &[T], amax: T) -> T {
    match cone {
        Cone::Zero(_) => amax,
        Cone::NonNeg(_) => {
            let mut a = amax;
            for (&xi, &di) in x.iter().zip(dx) {
                if di < T::zero() {
                    a = a.min(-xi / di);
                }
            }
            a.max(T::zero())
        }
        Cone::SecondOrder(_) => soc_step(x, dx, amax),
    }
}

fn soc_step<T: Real>(x: &[T], d: &[T], amax: T) -> T {
    // f(a) = (x0 + a d0)² − ‖x1 + a d1‖² = A a² + 2 B a + C, C > 0
    let a2 = d[0] * d[0] - dot(&d[1..], &d[1..]);
    let b = x[0] * d[0] - dot(&x[1..], &d[1..]);
    let c = soc_residual(x).max(T::zero());
    let mut alpha = amax;
    let tiny = T::epsilon() * (a2.abs() + b.abs() + c).max(T::min_positive_value());
    if a2.abs() <= tiny {
        if b < T::zero() {
            alpha = alpha.min(-c / (T::lit(2.0) * b));
        }
    } else {
        let disc = b * b - a2 * c;
        if disc >= T::zero() {
            let sq = disc.sqrt();
            // stable pair of roots of A a² + 2 B a + C
            let q = if b >= T::zero() { -(b + sq) } else { -(b - sq) };
            let mut roots = [T::infinity(), T::infinity()];
            if q != T::zero() {
                roots[0] = q / a2;
                roots[1] = c / q;
            } else {
                roots[0] = T::zero();
            }
            for r in roots {
                if r > T::zero() && r.is_finite() {
                    alpha = alpha.min(r);
                }
            }
        }
    }
    // the t component must remain nonnegative as well
    if d[0] < T::zero() {
        alpha = alpha.min(-x[0] / d[0]);
    }
    alpha.max(T::zero())
}
