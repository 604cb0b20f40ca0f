//! Regularised quasi-definite KKT system
//!
//! ```text
//! [ δI   Aᵀ      ] [Δx]   [r_x]
//! [ A   −(H + δI)] [Δz] = [r_z]
//! ```
//!
//! with `H = WᵀW` block-diagonal over the cones (zero for equality rows),
//! factored by sparse `LDLᵀ` under an approximate-minimum-degree ordering.
//! Solves are polished by iterative refinement against the unregularised
//! matrix. When a factorisation breaks down or a refined solve stays
//! inaccurate, δ is raised a hundredfold (up to `MAX_REG`) and the system is
//! refactored; refinement still targets the unregularised matrix.

use super::cones::{Cone, Scaling};
use super::ldl::LdlFactor;
use super::sparse::CscMatrix;
use crate::{Error, Real, Result};

/// Ceiling for the escalated regularisation.
const MAX_REG: f64 = 1e-4;

#[derive(Debug, Clone, Copy)]
enum Slot {
    XDiag,
    A(usize),
    /// Entry `k` of the packed `H` of cone `c`.
    H(usize, usize),
    ZeroDiag,
}

#[derive(Debug)]
pub(crate) struct KktSystem<T> {
    n: usize,
    p: usize,
    a: CscMatrix<T>,
    cones: Vec<Cone>,
    offsets: Vec<usize>,
    perm: Vec<usize>,
    colptr: Vec<usize>,
    rowval: Vec<usize>,
    values: Vec<T>,
    slots: Vec<Slot>,
    diagonal: Vec<bool>,
    signs: Vec<i8>,
    ldl: LdlFactor<T>,
    static_reg: T,
    /// Regularisation of the current factor, at least `static_reg`.
    reg: T,
    scalings: Vec<Scaling<T>>,
    work: Vec<T>,
    resid: Vec<T>,
}

impl<T: Real> KktSystem<T> {
    pub fn new(a: &CscMatrix<T>, cones: &[Cone], static_reg: T) -> Result<Self> {
        let n = a.ncols;
        let p = a.nrows;
        let dim = n + p;
        let mut offsets = Vec::with_capacity(cones.len());
        let mut off = 0;
        for c in cones {
            offsets.push(off);
            off += c.dim();
        }
        if off != p {
            return Err(Error::InvalidProgram(format!(
                "cone dimensions sum to {off}, constraint rows {p}"
            )));
        }

        // upper-triangular entries in natural order: (row, col, slot)
        let mut entries: Vec<(usize, usize, Slot)> = Vec::new();
        for j in 0..n {
            entries.push((j, j, Slot::XDiag));
        }
        for j in 0..n {
            for k in a.colptr[j]..a.colptr[j + 1] {
                entries.push((j, n + a.rowval[k], Slot::A(k)));
            }
        }
        for (ci, cone) in cones.iter().enumerate() {
            let o = n + offsets[ci];
            match *cone {
                Cone::Zero(d) => {
                    for t in 0..d {
                        entries.push((o + t, o + t, Slot::ZeroDiag));
                    }
                }
                Cone::NonNeg(d) => {
                    for t in 0..d {
                        entries.push((o + t, o + t, Slot::H(ci, t)));
                    }
                }
                Cone::SecondOrder(d) => {
                    let mut k = 0;
                    for j in 0..d {
                        for i in 0..=j {
                            entries.push((o + i, o + j, Slot::H(ci, k)));
                            k += 1;
                        }
                    }
                }
            }
        }

        // ordering on the natural upper pattern
        let (nat_colptr, nat_rowval) = pattern_csc(dim, entries.iter().map(|&(r, c, _)| (r, c)));
        let (perm, iperm) = if dim == 0 {
            (Vec::new(), Vec::new())
        } else {
            let control = amd::Control::default();
            let (perm, iperm, _info) = amd::order::<usize>(dim, &nat_colptr, &nat_rowval, &control)
                .map_err(|s| Error::InvalidProgram(format!("ordering failed: {s:?}")))?;
            (perm, iperm)
        };

        // permuted upper pattern with slot bookkeeping
        let mut counts = vec![0usize; dim + 1];
        let permuted: Vec<(usize, usize)> = entries
            .iter()
            .map(|&(r, c, _)| {
                let (pr, pc) = (iperm[r], iperm[c]);
                if pr <= pc {
                    (pr, pc)
                } else {
                    (pc, pr)
                }
            })
            .collect();
        for &(_, c) in &permuted {
            counts[c + 1] += 1;
        }
        for c in 0..dim {
            counts[c + 1] += counts[c];
        }
        let colptr = counts.clone();
        let mut next = counts;
        let mut order: Vec<usize> = (0..entries.len()).collect();
        order.sort_by_key(|&e| (permuted[e].1, permuted[e].0));
        let mut rowval = vec![0usize; entries.len()];
        let mut slots = vec![Slot::XDiag; entries.len()];
        for &e in &order {
            let (r, c) = permuted[e];
            let pos = next[c];
            next[c] += 1;
            rowval[pos] = r;
            slots[pos] = entries[e].2;
        }
        let diagonal = (0..rowval.len())
            .map(|pos| matches!(slots[pos], Slot::XDiag | Slot::ZeroDiag) || {
                let col = colptr.partition_point(|&c| c <= pos) - 1;
                rowval[pos] == col
            })
            .collect();
        let signs = (0..dim)
            .map(|k| if perm[k] < n { 1i8 } else { -1i8 })
            .collect();
        let ldl = LdlFactor::analyze(dim, &colptr, &rowval)?;
        log::debug!(
            "kkt: dim {dim}, nnz(K) {}, nnz(L) {}",
            rowval.len(),
            ldl.nnz_l()
        );
        Ok(Self {
            n,
            p,
            a: a.clone(),
            cones: cones.to_vec(),
            offsets,
            perm,
            values: vec![T::zero(); rowval.len()],
            colptr,
            rowval,
            slots,
            diagonal,
            signs,
            ldl,
            static_reg,
            reg: static_reg,
            scalings: cones.iter().map(Scaling::identity).collect(),
            work: vec![T::zero(); dim],
            resid: vec![T::zero(); dim],
        })
    }

    /// Installs new cone scalings and refactors.
    pub fn update(&mut self, scalings: &[Scaling<T>]) -> Result<()> {
        self.scalings.clone_from_slice(scalings);
        self.reg = self.static_reg;
        loop {
            match self.factor() {
                Ok(()) => return Ok(()),
                Err(e) => {
                    if !self.escalate() {
                        return Err(e);
                    }
                }
            }
        }
    }

    /// Raises the regularisation; false once the ceiling is reached.
    fn escalate(&mut self) -> bool {
        let next = (self.reg * T::lit(100.0)).max(T::lit(1e-12));
        if next > T::lit(MAX_REG) {
            return false;
        }
        log::debug!("kkt: regularisation raised to {next:e}");
        self.reg = next;
        true
    }

    fn factor(&mut self) -> Result<()> {
        let packed_all: Vec<Vec<T>> = self
            .scalings
            .iter()
            .map(|s| {
                let mut v = Vec::new();
                s.h_packed(&mut v);
                v
            })
            .collect();
        let reg = self.reg;
        for (pos, slot) in self.slots.iter().enumerate() {
            let diag = self.diagonal[pos];
            let v = match *slot {
                Slot::XDiag => reg,
                Slot::A(k) => self.a.nzval[k],
                Slot::ZeroDiag => -reg,
                Slot::H(c, k) => {
                    let h = -packed_all[c][k];
                    if diag {
                        h - reg
                    } else {
                        h
                    }
                }
            };
            self.values[pos] = v;
        }
        let eps = T::lit(1e-13);
        let delta = T::lit(2e-7);
        self.ldl
            .factor(&self.colptr, &self.rowval, &self.values, &self.signs, eps, delta)
    }

    /// `y = K x` with the unregularised matrix.
    fn mul_true(&self, x: &[T], y: &mut [T]) {
        let n = self.n;
        let (xx, xz) = x.split_at(n);
        let (yx, yz) = y.split_at_mut(n);
        self.a.gemv_t(xz, yx, T::one(), T::zero());
        self.a.gemv(xx, yz, T::one(), T::zero());
        let mut tmp = Vec::new();
        for (ci, cone) in self.cones.iter().enumerate() {
            let o = self.offsets[ci];
            let d = cone.dim();
            tmp.resize(d, T::zero());
            self.scalings[ci].mul_h(&xz[o..o + d], &mut tmp);
            for t in 0..d {
                yz[o + t] -= tmp[t];
            }
        }
    }

    fn solve_regularized(&mut self, rhs: &[T], out: &mut [T]) {
        for k in 0..rhs.len() {
            self.work[k] = rhs[self.perm[k]];
        }
        self.ldl.solve(&mut self.work);
        for k in 0..rhs.len() {
            out[self.perm[k]] = self.work[k];
        }
    }

    /// Solves `K [x; z] = [rx; rz]` to working accuracy.
    pub fn solve(&mut self, rx: &[T], rz: &[T], x: &mut [T], z: &mut [T]) {
        let n = self.n;
        let dim = n + self.p;
        let mut rhs = Vec::with_capacity(dim);
        rhs.extend_from_slice(rx);
        rhs.extend_from_slice(rz);
        let rhs_norm = rhs.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        // a solve this far off means the factor is unusable
        let accept = T::lit(100.0) * T::epsilon().sqrt() * (T::one() + rhs_norm);
        let mut sol = vec![T::zero(); dim];
        let mut err = self.refined_solve(&rhs, rhs_norm, &mut sol);
        while !(err <= accept) && self.escalate() {
            if self.factor().is_err() {
                continue;
            }
            let mut trial = vec![T::zero(); dim];
            let e = self.refined_solve(&rhs, rhs_norm, &mut trial);
            if e < err {
                sol = trial;
                err = e;
            }
        }
        x.copy_from_slice(&sol[..n]);
        z.copy_from_slice(&sol[n..]);
    }

    /// Regularised solve plus refinement; returns the final max-norm
    /// residual against the unregularised matrix.
    fn refined_solve(&mut self, rhs: &[T], rhs_norm: T, sol: &mut [T]) -> T {
        let dim = rhs.len();
        self.solve_regularized(rhs, sol);
        let tol = T::lit(1e-13) * (T::one() + rhs_norm);
        let mut kx = vec![T::zero(); dim];
        let mut corr = vec![T::zero(); dim];
        let mut best = sol.to_vec();
        let mut best_err = T::infinity();
        for _ in 0..10 {
            self.mul_true(sol, &mut kx);
            let mut err = T::zero();
            for k in 0..dim {
                self.resid[k] = rhs[k] - kx[k];
                err = err.max(self.resid[k].abs());
            }
            if self.resid.iter().any(|v| !v.is_finite()) {
                break;
            }
            let improved = err < best_err * T::lit(0.5);
            if err < best_err {
                best.copy_from_slice(sol);
                best_err = err;
            }
            if err <= tol || !improved {
                break;
            }
            let resid = std::mem::take(&mut self.resid);
            self.solve_regularized(&resid, &mut corr);
            self.resid = resid;
            for k in 0..dim {
                sol[k] += corr[k];
            }
        }
        sol.copy_from_slice(&best);
        best_err
    }
}

/// Column pointers and sorted row indices for a set of `(row, col)` pairs.
fn pattern_csc(dim: usize, pairs: impl Iterator<Item = (usize, usize)>) -> (Vec<usize>, Vec<usize>) {
    let mut cols: Vec<Vec<usize>> = vec![Vec::new(); dim];
    for (r, c) in pairs {
        cols[c].push(r);
    }
    let mut colptr = Vec::with_capacity(dim + 1);
    let mut rowval = Vec::new();
    colptr.push(0);
    for mut col in cols {
        col.sort_unstable();
        col.dedup();
        rowval.extend(col);
        colptr.push(rowval.len());
    }
    (colptr, rowval)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system_exactly() {
        // A: 3 constraints over 2 variables; cones: zero(1), nonneg(2)
        let a = CscMatrix::from_triplets(
            3,
            2,
            &[(0, 0, 1.0), (0, 1, 1.0), (1, 0, -1.0), (2, 1, -1.0)],
        )
        .unwrap();
        let cones = [Cone::Zero(1), Cone::NonNeg(2)];
        let mut kkt = KktSystem::new(&a, &cones, 1e-8).unwrap();
        let scalings = vec![
            Scaling::Zero,
            Scaling::NonNeg { w: vec![2.0, 0.5] },
        ];
        kkt.update(&scalings).unwrap();
        let (mut x, mut z) = (vec![0.0; 2], vec![0.0; 3]);
        kkt.solve(&[1.0, -2.0], &[3.0, 0.5, 1.0], &mut x, &mut z);
        // check K [x; z] = rhs with H = diag(0, 4, 0.25)
        let r1: [f64; 2] = [a.to_dense()[0][0] * z[0] - z[1], z[0] - z[2]];
        assert!((r1[0] - 1.0).abs() < 1e-10 && (r1[1] + 2.0).abs() < 1e-10);
        let r2: [f64; 3] = [x[0] + x[1], -x[0] - 4.0 * z[1], -x[1] - 0.25 * z[2]];
        assert!((r2[0] - 3.0).abs() < 1e-10);
        assert!((r2[1] - 0.5).abs() < 1e-10);
        assert!((r2[2] - 1.0).abs() < 1e-10);
    }
}
