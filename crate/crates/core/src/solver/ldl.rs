//! Up-looking sparse `L D Lᵀ` factorisation of quasi-definite matrices.
//!
//! The input is the upper triangle (diagonal included) in CSC form, already
//! permuted. The elimination tree and column counts are computed once; the
//! numeric phase can then be repeated for new values on the same pattern.

use crate::{Error, Real, Result};

const NONE: usize = usize::MAX;

#[derive(Debug, Clone)]
pub struct LdlFactor<T> {
    n: usize,
    etree: Vec<usize>,
    lp: Vec<usize>,
    li: Vec<usize>,
    lx: Vec<T>,
    d: Vec<T>,
    dinv: Vec<T>,
    // scratch
    y_vals: Vec<T>,
    y_marked: Vec<bool>,
    y_idx: Vec<usize>,
    elim_buffer: Vec<usize>,
    next_space: Vec<usize>,
    /// Pivots replaced by dynamic regularisation in the last factorisation.
    pub regularized_pivots: usize,
}

impl<T: Real> LdlFactor<T> {
    /// Symbolic analysis of the upper-triangular pattern.
    pub fn analyze(n: usize, colptr: &[usize], rowval: &[usize]) -> Result<Self> {
        let mut etree = vec![NONE; n];
        let mut lnz = vec![0usize; n];
        let mut work = vec![NONE; n];
        for j in 0..n {
            work[j] = j;
            let mut has_diag = false;
            for &i in &rowval[colptr[j]..colptr[j + 1]] {
                if i > j {
                    return Err(Error::InvalidProgram("KKT pattern not upper triangular".into()));
                }
                if i == j {
                    has_diag = true;
                    continue;
                }
                let mut k = i;
                while work[k] != j {
                    if etree[k] == NONE {
                        etree[k] = j;
                    }
                    lnz[k] += 1;
                    work[k] = j;
                    k = etree[k];
                }
            }
            if !has_diag {
                return Err(Error::InvalidProgram(format!("KKT column {j} lacks a diagonal")));
            }
        }
        let mut lp = vec![0usize; n + 1];
        for k in 0..n {
            lp[k + 1] = lp[k] + lnz[k];
        }
        let total = lp[n];
        Ok(Self {
            n,
            etree,
            lp,
            li: vec![0; total],
            lx: vec![T::zero(); total],
            d: vec![T::zero(); n],
            dinv: vec![T::zero(); n],
            y_vals: vec![T::zero(); n],
            y_marked: vec![false; n],
            y_idx: vec![0; n],
            elim_buffer: vec![0; n],
            next_space: vec![0; n],
            regularized_pivots: 0,
        })
    }

    pub fn nnz_l(&self) -> usize {
        self.lp[self.n]
    }

    /// Numeric factorisation. `signs[k]` is the expected sign of pivot `k`;
    /// pivots with the wrong sign or magnitude below `eps` are replaced by
    /// `signs[k] * delta`.
    pub fn factor(
        &mut self,
        colptr: &[usize],
        rowval: &[usize],
        values: &[T],
        signs: &[i8],
        eps: T,
        delta: T,
    ) -> Result<()> {
        let n = self.n;
        self.regularized_pivots = 0;
        self.next_space[..n].copy_from_slice(&self.lp[..n]);
        for k in 0..n {
            let mut nnz_y = 0;
            self.d[k] = T::zero();
            for p in colptr[k]..colptr[k + 1] {
                let i = rowval[p];
                if i == k {
                    self.d[k] = values[p];
                    continue;
                }
                self.y_vals[i] = values[p];
                if self.y_marked[i] {
                    continue;
                }
                self.y_marked[i] = true;
                self.elim_buffer[0] = i;
                let mut n_elim = 1;
                let mut next = self.etree[i];
                while next != NONE && next < k {
                    if self.y_marked[next] {
                        break;
                    }
                    self.y_marked[next] = true;
                    self.elim_buffer[n_elim] = next;
                    n_elim += 1;
                    next = self.etree[next];
                }
                while n_elim > 0 {
                    n_elim -= 1;
                    self.y_idx[nnz_y] = self.elim_buffer[n_elim];
                    nnz_y += 1;
                }
            }
            for t in (0..nnz_y).rev() {
                let c = self.y_idx[t];
                let slot = self.next_space[c];
                let yc = self.y_vals[c];
                for j in self.lp[c]..slot {
                    self.y_vals[self.li[j]] -= self.lx[j] * yc;
                }
                self.li[slot] = k;
                let l = yc * self.dinv[c];
                self.lx[slot] = l;
                self.d[k] -= yc * l;
                self.next_space[c] += 1;
                self.y_vals[c] = T::zero();
                self.y_marked[c] = false;
            }
            let sign = if signs[k] >= 0 { T::one() } else { -T::one() };
            if !(self.d[k] * sign > eps) {
                self.d[k] = sign * delta;
                self.regularized_pivots += 1;
            }
            if !self.d[k].is_finite() {
                return Err(Error::Degenerate(format!("non-finite pivot at {k}")));
            }
            self.dinv[k] = T::one() / self.d[k];
        }
        Ok(())
    }

    /// Solves `L D Lᵀ x = b` in place.
    pub fn solve(&self, x: &mut [T]) {
        let n = self.n;
        for i in 0..n {
            let xi = x[i];
            if xi != T::zero() {
                for j in self.lp[i]..self.lp[i + 1] {
                    x[self.li[j]] -= self.lx[j] * xi;
                }
            }
        }
        for i in 0..n {
            x[i] *= self.dinv[i];
        }
        for i in (0..n).rev() {
            let mut acc = x[i];
            for j in self.lp[i]..self.lp[i + 1] {
                acc -= self.lx[j] * x[self.li[j]];
            }
            x[i] = acc;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Upper triangle of a dense symmetric matrix in CSC form.
    fn upper(a: &[Vec<f64>]) -> (Vec<usize>, Vec<usize>, Vec<f64>) {
        let n = a.len();
        let mut colptr = vec![0];
        let mut rowval = vec![];
        let mut vals = vec![];
        for j in 0..n {
            for i in 0..=j {
                if a[i][j] != 0.0 || i == j {
                    rowval.push(i);
                    vals.push(a[i][j]);
                }
            }
            colptr.push(rowval.len());
        }
        (colptr, rowval, vals)
    }

    #[test]
    fn solves_quasi_definite_system() {
        // [ 4 1 0 2 ; 1 3 0 0 ; 0 0 -2 1 ; 2 0 1 -5 ]
        let a = vec![
            vec![4.0, 1.0, 0.0, 2.0],
            vec![1.0, 3.0, 0.0, 0.0],
            vec![0.0, 0.0, -2.0, 1.0],
            vec![2.0, 0.0, 1.0, -5.0],
        ];
        let (cp, ri, v) = upper(&a);
        let mut f = LdlFactor::analyze(4, &cp, &ri).unwrap();
        f.factor(&cp, &ri, &v, &[1, 1, -1, -1], 1e-14, 1e-7).unwrap();
        assert_eq!(f.regularized_pivots, 0);
        let xs = [1.0, -2.0, 0.5, 3.0];
        let mut b: Vec<f64> = (0..4).map(|i| (0..4).map(|j| a[i][j] * xs[j]).sum()).collect();
        f.solve(&mut b);
        for (x, e) in b.iter().zip(xs) {
            assert!((x - e).abs() < 1e-12);
        }
    }

    #[test]
    fn refactor_with_new_values() {
        let a = vec![vec![2.0, 1.0], vec![1.0, -1.0]];
        let (cp, ri, mut v) = upper(&a);
        let mut f = LdlFactor::analyze(2, &cp, &ri).unwrap();
        f.factor(&cp, &ri, &v, &[1, -1], 1e-14, 1e-7).unwrap();
        v[0] = 10.0;
        f.factor(&cp, &ri, &v, &[1, -1], 1e-14, 1e-7).unwrap();
        let mut b = vec![10.0, 1.0];
        f.solve(&mut b);
        assert!((b[0] - 1.0).abs() < 1e-14 && b[1].abs() < 1e-14);
    }

    #[test]
    fn missing_diagonal_is_rejected() {
        assert!(LdlFactor::<f64>::analyze(2, &[0, 0, 1], &[0]).is_err());
    }
}
