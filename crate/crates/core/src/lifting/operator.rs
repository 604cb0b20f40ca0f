use ndarray::{Array1, Array2};

use super::{AngleGrid, Dictionary, DictionaryKind, LiftedMatrix};
use crate::array::ArrayGeometry;
use crate::{Cplx, Error, Real, Result};

/// Memory ceiling for materialising `Φ` densely (2 GiB).
pub const DEFAULT_PHI_BUDGET_BYTES: usize = 2 << 30;

/// Lifted measurement map `A(X̃) = { bᵢᴴ X̃ G̃ᵢ }ᵢ` with
/// `G̃ᵢ = blkdiag(gᵢ, …, gᵢ)` (`L` copies) and `bᵢ` the `i`-th column of `Bᴴ`.
///
/// The vectorised form is `Φ · vec(X̃) = vec(Yᵀ)`, where `vec` stacks columns.
/// `vec(Yᵀ)` is therefore sensor-major: entry `i·L + l` is `Y[i, l]`.
#[derive(Debug, Clone)]
pub struct LiftedOperator<T> {
    basis: Array2<Cplx<T>>,
    dictionary: Dictionary<T>,
    num_snapshots: usize,
}

impl<T: Real> LiftedOperator<T> {
    pub fn new(
        geometry: &ArrayGeometry<T>,
        grid: &AngleGrid<T>,
        basis: &Array2<Cplx<T>>,
        num_snapshots: usize,
        kind: DictionaryKind,
    ) -> Result<Self> {
        let dictionary = Dictionary::build_kind(geometry, grid, kind);
        Self::from_dictionary(dictionary, basis.clone(), num_snapshots)
    }

    pub fn from_dictionary(
        dictionary: Dictionary<T>,
        basis: Array2<Cplx<T>>,
        num_snapshots: usize,
    ) -> Result<Self> {
        if basis.nrows() != dictionary.num_sensors() {
            return Err(Error::Dimension(format!(
                "basis has {} rows, dictionary {} sensors",
                basis.nrows(),
                dictionary.num_sensors()
            )));
        }
        if basis.ncols() == 0 || num_snapshots == 0 {
            return Err(Error::Dimension("empty basis or zero snapshots".into()));
        }
        Ok(Self {
            basis,
            dictionary,
            num_snapshots,
        })
    }

    pub fn num_sensors(&self) -> usize {
        self.basis.nrows()
    }

    /// `m`, the calibration subspace dimension (rows of `X̃`).
    pub fn subspace_dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn num_snapshots(&self) -> usize {
        self.num_snapshots
    }

    pub fn grid_len(&self) -> usize {
        self.dictionary.grid_len()
    }

    pub fn kind(&self) -> DictionaryKind {
        self.dictionary.kind
    }

    pub fn dictionary(&self) -> &Dictionary<T> {
        &self.dictionary
    }

    pub fn basis(&self) -> &Array2<Cplx<T>> {
        &self.basis
    }

    /// Columns of `X̃` per snapshot (`2N` off-grid, `N` on-grid).
    pub fn snapshot_width(&self) -> usize {
        self.dictionary.combined.ncols()
    }

    /// Column count of `X̃`.
    pub fn lifted_cols(&self) -> usize {
        self.snapshot_width() * self.num_snapshots
    }

    /// `bᵢ` = `i`-th column of `Bᴴ`.
    pub fn b(&self, i: usize) -> Array1<Cplx<T>> {
        self.basis.row(i).mapv(|v| v.conj())
    }

    /// `G̃ᵢ`, block diagonal with `L` copies of `gᵢ`.
    pub fn g_tilde(&self, i: usize) -> Array2<Cplx<T>> {
        let w = self.snapshot_width();
        let l = self.num_snapshots;
        let g = self.dictionary.combined.row(i);
        let mut out = Array2::zeros((w * l, l));
        for t in 0..l {
            for j in 0..w {
                out[[t * w + j, t]] = g[j];
            }
        }
        out
    }

    fn check_lifted(&self, x: &LiftedMatrix<T>) -> Result<()> {
        if x.nrows() != self.subspace_dim() || x.ncols() != self.lifted_cols() {
            return Err(Error::Dimension(format!(
                "lifted matrix is {}x{}, operator expects {}x{}",
                x.nrows(),
                x.ncols(),
                self.subspace_dim(),
                self.lifted_cols()
            )));
        }
        Ok(())
    }

    /// `A(X̃)` as an `M × L` matrix, without forming `Φ`.
    pub fn apply_forward(&self, x: &LiftedMatrix<T>) -> Result<Array2<Cplx<T>>> {
        self.check_lifted(x)?;
        let big_m = self.num_sensors();
        let m = self.subspace_dim();
        let w = self.snapshot_width();
        let g = &self.dictionary.combined;
        let mut out = Array2::zeros((big_m, self.num_snapshots));
        let mut row = vec![Cplx::new(T::zero(), T::zero()); x.ncols()];
        for i in 0..big_m {
            // bᵢᴴ X̃ = B[i, :] X̃
            row.iter_mut().for_each(|v| *v = Cplx::new(T::zero(), T::zero()));
            for r in 0..m {
                let coef = self.basis[[i, r]];
                for (acc, &v) in row.iter_mut().zip(x.entries.row(r).iter()) {
                    *acc += coef * v;
                }
            }
            for t in 0..self.num_snapshots {
                let mut acc = Cplx::new(T::zero(), T::zero());
                for j in 0..w {
                    acc += row[t * w + j] * g[[i, j]];
                }
                out[[i, t]] = acc;
            }
        }
        Ok(out)
    }

    /// Adjoint of [`apply_forward`](Self::apply_forward) under the inner
    /// product `⟨U, V⟩ = Σ conj(U) V`.
    pub fn apply_adjoint(&self, r: &Array2<Cplx<T>>) -> Result<LiftedMatrix<T>> {
        let big_m = self.num_sensors();
        if r.dim() != (big_m, self.num_snapshots) {
            return Err(Error::Dimension(format!(
                "residual is {:?}, operator expects {}x{}",
                r.dim(),
                big_m,
                self.num_snapshots
            )));
        }
        let m = self.subspace_dim();
        let w = self.snapshot_width();
        let g = &self.dictionary.combined;
        let mut out = Array2::zeros((m, self.lifted_cols()));
        for t in 0..self.num_snapshots {
            for j in 0..w {
                let c = t * w + j;
                for i in 0..big_m {
                    let weight = g[[i, j]].conj() * r[[i, t]];
                    for row in 0..m {
                        out[[row, c]] += self.basis[[i, row]].conj() * weight;
                    }
                }
            }
        }
        Ok(LiftedMatrix::new(out))
    }

    /// Bytes a dense complex `Φ` would occupy.
    pub fn phi_bytes(&self) -> usize {
        let rows = self.num_sensors() * self.num_snapshots;
        let cols = self.subspace_dim() * self.lifted_cols();
        rows.saturating_mul(cols)
            .saturating_mul(2 * std::mem::size_of::<T>())
    }

    /// Dense `Φ = [φ₁, …, φ_M]ᴴ` with `φᵢ = G̃ᵢ* ⊗ bᵢ`.
    pub fn materialize_phi(&self, budget_bytes: usize) -> Result<Array2<Cplx<T>>> {
        let need = self.phi_bytes();
        if need > budget_bytes {
            return Err(Error::Resource(format!(
                "dense Phi needs {need} bytes, budget is {budget_bytes}; use apply_forward/apply_adjoint instead"
            )));
        }
        let big_m = self.num_sensors();
        let l = self.num_snapshots;
        let m = self.subspace_dim();
        let cols = m * self.lifted_cols();
        let mut phi = Array2::zeros((big_m * l, cols));
        for i in 0..big_m {
            let varphi = kron(&self.g_tilde(i).mapv(|v| v.conj()), &self.b(i));
            for t in 0..l {
                for c in 0..cols {
                    phi[[i * l + t, c]] = varphi[[c, t]].conj();
                }
            }
        }
        Ok(phi)
    }

    /// `vec(Yᵀ)` for an `M × L` matrix.
    pub fn vec_transpose(y: &Array2<Cplx<T>>) -> Array1<Cplx<T>> {
        y.iter().copied().collect()
    }
}

/// Kronecker product of a matrix with a column vector.
fn kron<T: Real>(a: &Array2<Cplx<T>>, b: &Array1<Cplx<T>>) -> Array2<Cplx<T>> {
    let (r, c) = a.dim();
    let n = b.len();
    Array2::from_shape_fn((r * n, c), |(i, j)| a[[i / n, j]] * b[i % n])
}
