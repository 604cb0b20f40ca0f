//! Problem generators and reference solutions used by the test suites.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{Cone, CscMatrix};
use crate::socp::{ConicProgram, VariableMap};

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Random point strictly inside `cone`.
fn interior(rng: &mut ChaCha8Rng, cone: &Cone) -> Vec<f64> {
    match *cone {
        Cone::Zero(d) => vec![0.0; d],
        Cone::NonNeg(d) => (0..d).map(|_| rng.random_range(0.1..2.0)).collect(),
        Cone::SecondOrder(d) => {
            let mut v: Vec<f64> = (0..d).map(|_| gauss(rng)).collect();
            let u = v[1..].iter().map(|x| x * x).sum::<f64>().sqrt();
            v[0] = u + rng.random_range(0.1..2.0);
            v
        }
    }
}

/// A random conic program with strictly feasible primal and dual, hence an
/// attained optimum. At most `max_vars` variables.
pub fn random_feasible_program(seed: u64, max_vars: usize) -> ConicProgram<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=max_vars.max(2));
    let mut cones = Vec::new();
    let zero_rows = rng.random_range(0..=n / 2);
    if zero_rows > 0 {
        cones.push(Cone::Zero(zero_rows));
    }
    // enough conic rows that the problem is bounded
    let mut conic_rows = 0;
    while conic_rows < n + 2 {
        let cone = if rng.random_bool(0.5) {
            Cone::NonNeg(rng.random_range(1..=6))
        } else {
            Cone::SecondOrder(rng.random_range(2..=8))
        };
        conic_rows += cone.dim();
        cones.push(cone);
    }
    let p: usize = cones.iter().map(Cone::dim).sum();
    let density = if n > 50 { 0.15 } else { 0.6 };
    let mut trip = Vec::new();
    for c in 0..n {
        for r in 0..p {
            if rng.random_bool(density) {
                trip.push((r, c, gauss(&mut rng)));
            }
        }
    }
    let a = CscMatrix::from_triplets(p, n, &trip).expect("valid triplets");
    let x0: Vec<f64> = (0..n).map(|_| gauss(&mut rng)).collect();
    let mut s0 = Vec::with_capacity(p);
    let mut z0 = Vec::with_capacity(p);
    for cone in &cones {
        s0.extend(interior(&mut rng, cone));
        match cone {
            Cone::Zero(d) => z0.extend((0..*d).map(|_| gauss(&mut rng))),
            _ => z0.extend(interior(&mut rng, cone)),
        }
    }
    let mut b = s0;
    a.gemv(&x0, &mut b, 1.0, 1.0);
    let mut c = vec![0.0; n];
    a.gemv_t(&z0, &mut c, -1.0, 0.0);
    ConicProgram {
        objective: c,
        a_eq: a,
        b_eq: b,
        cones,
        variable_map: VariableMap::default(),
    }
}

/// `min cᵀx s.t. A x = b, x ≥ 0` in standard conic form.
pub fn lp_program(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> ConicProgram<f64> {
    let m = a.len();
    let n = c.len();
    let mut trip = Vec::new();
    for (i, row) in a.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            trip.push((i, j, v));
        }
    }
    for j in 0..n {
        trip.push((m + j, j, -1.0));
    }
    let mut rhs = b.to_vec();
    rhs.extend(std::iter::repeat_n(0.0, n));
    ConicProgram {
        objective: c.to_vec(),
        a_eq: CscMatrix::from_triplets(m + n, n, &trip).expect("valid triplets"),
        b_eq: rhs,
        cones: vec![Cone::Zero(m), Cone::NonNeg(n)],
        variable_map: VariableMap::default(),
    }
}

/// Random bounded, feasible LP `(A, b, c)` of size `m × n`.
pub fn random_lp(seed: u64, m: usize, n: usize) -> (Vec<Vec<f64>>, Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a: Vec<Vec<f64>> = (0..m).map(|_| (0..n).map(|_| gauss(&mut rng)).collect()).collect();
    let x: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
    let b: Vec<f64> = a.iter().map(|row| row.iter().zip(&x).map(|(u, v)| u * v).sum()).collect();
    // c = Aᵀy + w with w > 0 keeps the LP bounded below
    let y: Vec<f64> = (0..m).map(|_| gauss(&mut rng)).collect();
    let c: Vec<f64> = (0..n)
        .map(|j| (0..m).map(|i| a[i][j] * y[i]).sum::<f64>() + rng.random_range(0.1..1.0))
        .collect();
    (a, b, c)
}

/// Optimal LP value by enumerating every basis (all `m`-column subsets).
pub fn lp_vertex_enumeration(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> Option<f64> {
    let m = a.len();
    let n = c.len();
    let mut best: Option<f64> = None;
    let mut cols: Vec<usize> = (0..m).collect();
    loop {
        let mat: Vec<Vec<f64>> = (0..m).map(|i| cols.iter().map(|&j| a[i][j]).collect()).collect();
        if let Some(xb) = gauss_solve(mat, b.to_vec()) {
            if xb.iter().all(|&v| v >= -1e-9) {
                let obj: f64 = cols.iter().zip(&xb).map(|(&j, &v)| c[j] * v).sum();
                best = Some(best.map_or(obj, |o: f64| o.min(obj)));
            }
        }
        // next combination
        let mut k = m;
        loop {
            if k == 0 {
                return best;
            }
            k -= 1;
            if cols[k] < n - m + k {
                cols[k] += 1;
                for t in k + 1..m {
                    cols[t] = cols[t - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Gaussian elimination with partial pivoting; `None` when singular.
fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for k in 0..n {
        let piv = (k..n).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs()))?;
        if a[piv][k].abs() < 1e-10 {
            return None;
        }
        a.swap(k, piv);
        b.swap(k, piv);
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            for j in k..n {
                a[i][j] -= f * a[k][j];
            }
            b[i] -= f * b[k];
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|j| a[k][j] * x[j]).sum();
        x[k] = (b[k] - s) / a[k][k];
    }
    Some(x)
}

/// Max violation of `s ∈ K` and `z ∈ K*` (zero-cone duals are free).
pub fn cone_membership_violation(cones: &[Cone], s: &[f64], z: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    let mut o = 0;
    for cone in cones {
        let d = cone.dim();
        for (v, dual) in [(&s[o..o + d], false), (&z[o..o + d], true)] {
            let viol = match cone {
                Cone::Zero(_) if dual => 0.0,
                Cone::Zero(_) => v.iter().fold(0.0f64, |m, x| m.max(x.abs())),
                Cone::NonNeg(_) => v.iter().fold(0.0f64, |m, &x| m.max(-x)),
                Cone::SecondOrder(_) => {
                    let u = v[1..].iter().map(|x| x * x).sum::<f64>().sqrt();
                    (u - v[0]).max(0.0)
                }
            };
            worst = worst.max(viol);
        }
        o += d;
    }
    worst
}
