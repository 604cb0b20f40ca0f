//! Small dense complex linear algebra: one-sided Jacobi SVD and norms.

use ndarray::{Array1, Array2};

use crate::{Cplx, Real};

/// Thin SVD `X = U diag(σ) Wᴴ`, singular values in descending order.
#[derive(Debug, Clone)]
pub struct Svd<T> {
    pub u: Array2<Cplx<T>>,
    pub sigma: Vec<T>,
    pub w: Array2<Cplx<T>>,
}

/// Thin SVD by one-sided (Hestenes) Jacobi rotations.
///
/// Accurate to working precision in the small singular values as well,
/// which the nuclear norm of near-rank-one matrices relies on.
pub fn svd<T: Real>(x: &Array2<Cplx<T>>) -> Svd<T> {
    let (rows, cols) = x.dim();
    if rows >= cols {
        let (u, sigma, v) = jacobi(x.clone());
        Svd { u, sigma, w: v }
    } else {
        let xh = x.t().mapv(|v| v.conj());
        let (u, sigma, v) = jacobi(xh);
        Svd { u: v, sigma, w: u }
    }
}

pub fn singular_values<T: Real>(x: &Array2<Cplx<T>>) -> Vec<T> {
    svd(x).sigma
}

/// Orthogonalises the columns of a tall `a`; returns `(U, σ, V)` with `a = U diag(σ) Vᴴ`.
fn jacobi<T: Real>(mut a: Array2<Cplx<T>>) -> (Array2<Cplx<T>>, Vec<T>, Array2<Cplx<T>>) {
    let (p, q) = a.dim();
    let zero = Cplx::new(T::zero(), T::zero());
    let mut v = Array2::from_shape_fn((q, q), |(i, j)| {
        if i == j {
            Cplx::new(T::one(), T::zero())
        } else {
            zero
        }
    });
    let tol = T::epsilon() * T::from_usize_lossy(p.max(1));
    let tiny = T::min_positive_value();
    for _sweep in 0..80 {
        let mut rotated = false;
        for i in 0..q {
            for j in (i + 1)..q {
                let mut alpha = T::zero();
                let mut beta = T::zero();
                let mut gamma = zero;
                for k in 0..p {
                    let ai = a[[k, i]];
                    let aj = a[[k, j]];
                    alpha += ai.norm_sqr();
                    beta += aj.norm_sqr();
                    gamma += ai.conj() * aj;
                }
                let g = gamma.norm();
                if g <= tiny || g <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let phase_conj = (gamma / g).conj();
                let zeta = (beta - alpha) / (T::lit(2.0) * g);
                let t = if zeta >= T::zero() {
                    T::one() / (zeta + (T::one() + zeta * zeta).sqrt())
                } else {
                    -T::one() / (-zeta + (T::one() + zeta * zeta).sqrt())
                };
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                for k in 0..p {
                    let ai = a[[k, i]];
                    let aj = a[[k, j]] * phase_conj;
                    a[[k, i]] = ai * c - aj * s;
                    a[[k, j]] = ai * s + aj * c;
                }
                for k in 0..q {
                    let vi = v[[k, i]];
                    let vj = v[[k, j]] * phase_conj;
                    v[[k, i]] = vi * c - vj * s;
                    v[[k, j]] = vi * s + vj * c;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<T> = (0..q)
        .map(|j| a.column(j).iter().map(|z| z.norm_sqr()).sum::<T>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..q).collect();
    order.sort_by(|&x, &y| norms[y].partial_cmp(&norms[x]).unwrap_or(std::cmp::Ordering::Equal));
    let mut u = Array2::zeros((p, q));
    let mut vs = Array2::zeros((q, q));
    let mut sigma = Vec::with_capacity(q);
    for (dst, &src) in order.iter().enumerate() {
        let s = norms[src];
        sigma.push(s);
        if s > T::zero() {
            for k in 0..p {
                u[[k, dst]] = a[[k, src]] / s;
            }
        }
        vs.column_mut(dst).assign(&v.column(src));
    }
    (u, sigma, vs)
}

/// Sum of singular values.
pub fn nuclear_norm<T: Real>(x: &Array2<Cplx<T>>) -> T {
    singular_values(x).into_iter().sum()
}

/// Sum of entry moduli.
pub fn entrywise_l1<T: Real>(x: &Array2<Cplx<T>>) -> T {
    x.iter().map(|v| v.norm()).sum()
}

pub fn frobenius<T: Real>(x: &Array2<Cplx<T>>) -> T {
    x.iter().map(|v| v.norm_sqr()).sum::<T>().sqrt()
}

pub fn vec_norm<T: Real>(x: &Array1<Cplx<T>>) -> T {
    x.iter().map(|v| v.norm_sqr()).sum::<T>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Array2<Cplx<f64>> {
        Array2::from_shape_fn((r, c), |_| Cplx::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    fn reconstruct(s: &Svd<f64>) -> Array2<Cplx<f64>> {
        let k = s.sigma.len();
        let mut out = Array2::zeros((s.u.nrows(), s.w.nrows()));
        for t in 0..k {
            for i in 0..s.u.nrows() {
                for j in 0..s.w.nrows() {
                    out[[i, j]] += s.u[[i, t]] * s.sigma[t] * s.w[[j, t]].conj();
                }
            }
        }
        out
    }

    #[test]
    fn reconstructs_wide_and_tall() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (r, c) in [(3, 10), (10, 3), (4, 4), (1, 6), (6, 1)] {
            let x = random(&mut rng, r, c);
            let s = svd(&x);
            let err = frobenius(&(reconstruct(&s) - &x));
            assert!(err < 1e-12, "{r}x{c}: {err}");
            assert!(s.sigma.windows(2).all(|w| w[0] >= w[1]));
            // orthonormal left factor
            let k = s.sigma.len();
            for a in 0..k {
                for b in 0..k {
                    let d: Cplx<f64> = (0..r).map(|i| s.u[[i, a]].conj() * s.u[[i, b]]).sum();
                    let expect = if a == b { 1.0 } else { 0.0 };
                    assert!((d - Cplx::new(expect, 0.0)).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn rank_one_nuclear_norm_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u = random(&mut rng, 4, 1);
        let w = random(&mut rng, 9, 1);
        let nu = frobenius(&u);
        let nw = frobenius(&w);
        let x = Array2::from_shape_fn((4, 9), |(i, j)| u[[i, 0]] / nu * (w[[j, 0]] / nw).conj());
        let s = singular_values(&x);
        assert!((s[0] - 1.0).abs() < 1e-14);
        assert!(s[1..].iter().all(|&v| v < 1e-14));
    }

    #[test]
    fn zero_matrix() {
        let x = Array2::<Cplx<f64>>::zeros((3, 5));
        assert_eq!(nuclear_norm(&x), 0.0);
    }

    #[test]
    fn identity_like_has_equal_values() {
        let mut x = Array2::<Cplx<f64>>::zeros((3, 7));
        for i in 0..3 {
            x[[i, 2 * i]] = Cplx::new(0.0, 2.0);
        }
        let s = singular_values(&x);
        assert!(s.iter().all(|&v| (v - 2.0).abs() < 1e-15));
    }

    #[test]
    fn works_in_single_precision() {
        let x = Array2::from_shape_fn((2, 5), |(i, j)| Cplx::new((i + j) as f32, (i as f32) - 1.0));
        let xd = x.mapv(|v| Cplx::new(v.re as f64, v.im as f64));
        let a = nuclear_norm(&x) as f64;
        let b = nuclear_norm(&xd);
        assert!((a - b).abs() < 1e-5 * b);
    }
}
