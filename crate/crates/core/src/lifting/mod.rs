//! Search grid, first-order off-grid dictionary `G = [Ā, B̄]`, and the lifted
//! linear measurement operator acting on `X̃ = h [x₁ᵀ … x_Lᵀ]`.

mod operator;

pub use operator::{LiftedOperator, DEFAULT_PHI_BUDGET_BYTES};

use ndarray::{s, Array1, Array2, ArrayView2};

use crate::array::{derivative_unchecked, steering_unchecked, ArrayGeometry};
use crate::{Cplx, Error, Real, Result};

/// Uniform grid of candidate directions in radians.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleGrid<T> {
    pub angles: Vec<T>,
    /// Half of the grid spacing, the bound on `|β|`.
    pub half_interval: T,
    /// The same angles in degrees, exact when the grid was given in degrees.
    pub degrees: Vec<T>,
}

impl<T: Real> AngleGrid<T> {
    pub fn new(angles: Vec<T>, half_interval: T) -> Result<Self> {
        if angles.is_empty() {
            return Err(Error::Domain("grid is empty".into()));
        }
        if !(half_interval > T::zero()) {
            return Err(Error::Domain("grid half interval must be positive".into()));
        }
        let limit = T::FRAC_PI_2() * (T::one() + T::epsilon());
        if angles.iter().any(|a| !a.is_finite() || a.abs() > limit) {
            return Err(Error::Domain("grid angles must lie in [-pi/2, pi/2]".into()));
        }
        let step = half_interval * T::lit(2.0);
        for w in angles.windows(2) {
            let d = w[1] - w[0];
            if (d - step).abs() > step * T::lit(1e-6) {
                return Err(Error::Domain(
                    "grid must be strictly increasing with uniform spacing".into(),
                ));
            }
        }
        Ok(Self {
            degrees: angles.iter().map(|a| a.to_degrees()).collect(),
            angles,
            half_interval,
        })
    }

    /// Half-open grid `[start, stop)` with spacing `step`, all in degrees.
    pub fn from_degrees(start_deg: T, stop_deg: T, step_deg: T) -> Result<Self> {
        if !(step_deg > T::zero()) || !step_deg.is_finite() {
            return Err(Error::Domain(format!("grid step must be positive, got {step_deg}")));
        }
        if !(stop_deg > start_deg) {
            return Err(Error::Domain(format!(
                "grid stop {stop_deg} must exceed start {start_deg}"
            )));
        }
        let count = ((stop_deg - start_deg) / step_deg - T::lit(1e-9)).ceil();
        let count = count.to_usize().unwrap_or(0);
        if count == 0 {
            return Err(Error::Domain("grid is empty".into()));
        }
        let degrees: Vec<T> = (0..count)
            .map(|i| start_deg + T::from_usize_lossy(i) * step_deg)
            .collect();
        let angles = degrees.iter().map(|d| d.to_radians()).collect();
        let mut grid = Self::new(angles, (step_deg / T::lit(2.0)).to_radians())?;
        grid.degrees = degrees;
        Ok(grid)
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }

    pub fn step(&self) -> T {
        self.half_interval * T::lit(2.0)
    }

    pub fn angles_deg(&self) -> Vec<T> {
        self.degrees.clone()
    }
}

/// Whether the dictionary carries the derivative block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DictionaryKind {
    /// `G = [Ā, B̄]`: each snapshot contributes an `s̄` and a `p` block.
    #[default]
    OffGrid,
    /// `G = Ā`: the on-grid model, no `p` block.
    OnGrid,
}

impl DictionaryKind {
    pub fn blocks_per_snapshot(self) -> usize {
        match self {
            DictionaryKind::OffGrid => 2,
            DictionaryKind::OnGrid => 1,
        }
    }
}

/// Steering and derivative columns over a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary<T> {
    pub steering_block: Array2<Cplx<T>>,
    pub derivative_block: Array2<Cplx<T>>,
    /// `[Ā, B̄]` for the off-grid kind, `Ā` for the on-grid kind.
    pub combined: Array2<Cplx<T>>,
    pub kind: DictionaryKind,
}

impl<T: Real> Dictionary<T> {
    pub fn build(geometry: &ArrayGeometry<T>, grid: &AngleGrid<T>) -> Self {
        Self::build_kind(geometry, grid, DictionaryKind::OffGrid)
    }

    pub fn build_kind(geometry: &ArrayGeometry<T>, grid: &AngleGrid<T>, kind: DictionaryKind) -> Self {
        let m = geometry.num_sensors;
        let n = grid.len();
        let mut steering_block = Array2::zeros((m, n));
        let mut derivative_block = Array2::zeros((m, n));
        for (i, &phi) in grid.angles.iter().enumerate() {
            steering_block.column_mut(i).assign(&steering_unchecked(geometry, phi));
            derivative_block
                .column_mut(i)
                .assign(&derivative_unchecked(geometry, phi));
        }
        let combined = match kind {
            DictionaryKind::OffGrid => {
                ndarray::concatenate![ndarray::Axis(1), steering_block, derivative_block]
            }
            DictionaryKind::OnGrid => steering_block.clone(),
        };
        Self {
            steering_block,
            derivative_block,
            combined,
            kind,
        }
    }

    pub fn num_sensors(&self) -> usize {
        self.combined.nrows()
    }

    pub fn grid_len(&self) -> usize {
        self.steering_block.ncols()
    }

    /// `gᵢ`, row `i` of `G` as a column vector.
    pub fn row(&self, i: usize) -> Array1<Cplx<T>> {
        self.combined.row(i).to_owned()
    }
}

/// Lifted unknown `X̃` (`m × B·L·N` with `B` blocks per snapshot).
///
/// Column layout: `[s̄₁ | p₁ | s̄₂ | p₂ | … | p_L]`, each block `N` wide; the
/// on-grid layout drops the `p` blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedMatrix<T> {
    pub entries: Array2<Cplx<T>>,
}

impl<T: Real> LiftedMatrix<T> {
    pub fn new(entries: Array2<Cplx<T>>) -> Self {
        Self { entries }
    }

    pub fn zeros(m: usize, cols: usize) -> Self {
        Self::new(Array2::zeros((m, cols)))
    }

    /// `h [x₁ᵀ … x_Lᵀ]` from `X = [x₁ … x_L]` (`B·N × L`).
    pub fn from_rank_one(h: &Array1<Cplx<T>>, x: ArrayView2<Cplx<T>>) -> Self {
        let (rows, l) = x.dim();
        let m = h.len();
        let entries = Array2::from_shape_fn((m, rows * l), |(r, c)| h[r] * x[[c % rows, c / rows]]);
        Self { entries }
    }

    /// Stacks `s̄` and `p` (both `N × L`) into the `2N × L` matrix `X`.
    pub fn stack_blocks(sbar: &Array2<Cplx<T>>, p: &Array2<Cplx<T>>) -> Array2<Cplx<T>> {
        ndarray::concatenate![ndarray::Axis(0), *sbar, *p]
    }

    pub fn nrows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.entries.ncols()
    }

    /// Column-major vectorisation.
    pub fn columnstack(&self) -> Array1<Cplx<T>> {
        self.entries.t().iter().copied().collect()
    }

    pub fn from_columnstack(m: usize, v: &Array1<Cplx<T>>) -> Result<Self> {
        if m == 0 || !v.len().is_multiple_of(m) {
            return Err(Error::Dimension(format!(
                "vector of length {} is not a stack of {m}-columns",
                v.len()
            )));
        }
        let cols = v.len() / m;
        Ok(Self::new(Array2::from_shape_fn((m, cols), |(r, c)| v[c * m + r])))
    }

    pub fn frobenius_norm(&self) -> T {
        self.entries.iter().map(|v| v.norm_sqr()).sum::<T>().sqrt()
    }

    /// Columns belonging to snapshot `l` when there are `width` columns per snapshot.
    pub fn snapshot_block(&self, l: usize, width: usize) -> ArrayView2<'_, Cplx<T>> {
        self.entries.slice(s![.., l * width..(l + 1) * width])
    }
}
