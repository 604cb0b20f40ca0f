//! Block norms of the lifted matrix and the second-order cone program whose
//! optimum minimises the group norm under the noise-ball constraint.

mod builder;
mod format;

pub use builder::{build_program, lifted_point, select_eta};
pub use format::{read_program, write_program};

use std::ops::Range;

use ndarray::Array2;

use crate::lifting::LiftedMatrix;
use crate::linalg;
use crate::solver::{Cone, CscMatrix};
use crate::{Cplx, Error, Real, Result};

/// Relative slack allowed when checking the norm inequalities.
pub const NORM_CHAIN_SLACK: f64 = 1e-9;

/// Group norm `Σᵢ ‖[X̃_{:,i}, X̃_{:,i+N}, …]‖_F` where group `i` collects every
/// column congruent to `i` modulo `n`.
pub fn group_norm<T: Real>(x: &Array2<Cplx<T>>, n: usize) -> Result<T> {
    if n == 0 || !x.ncols().is_multiple_of(n) {
        return Err(Error::Dimension(format!(
            "{} columns do not split into groups of period {n}",
            x.ncols()
        )));
    }
    let mut groups = vec![T::zero(); n];
    for (c, col) in x.columns().into_iter().enumerate() {
        groups[c % n] += col.iter().map(|v| v.norm_sqr()).sum::<T>();
    }
    Ok(groups.into_iter().map(|g| g.sqrt()).sum())
}

/// The two-layer block norm for an off-grid lifted matrix with `2LN` columns.
pub fn norm_212<T: Real>(x: &LiftedMatrix<T>, n: usize, l: usize) -> Result<T> {
    if x.ncols() != 2 * l * n {
        return Err(Error::Dimension(format!(
            "{} columns, expected 2LN = {}",
            x.ncols(),
            2 * l * n
        )));
    }
    group_norm(&x.entries, n)
}

/// Column 2-norms of `X̃`.
pub fn column_norms<T: Real>(x: &Array2<Cplx<T>>) -> Vec<T> {
    x.columns()
        .into_iter()
        .map(|c| c.iter().map(|v| v.norm_sqr()).sum::<T>().sqrt())
        .collect()
}

/// The nuclear, entrywise and group norms of one lifted matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct NormReport<T> {
    pub nuclear: T,
    pub entrywise_l1: T,
    pub group_212: T,
    pub column_norms: Vec<T>,
    /// `√(entries per group)`, the constant in front of the group norm.
    pub group_factor: T,
    /// Set when `group_factor·group_212 ≥ entrywise_l1 ≥ nuclear` fails beyond the slack.
    pub violated: bool,
}

impl<T: Real> NormReport<T> {
    /// `group_factor·group_212 − entrywise_l1` and `entrywise_l1 − nuclear`.
    pub fn margins(&self) -> (T, T) {
        (
            self.group_factor * self.group_212 - self.entrywise_l1,
            self.entrywise_l1 - self.nuclear,
        )
    }
}

/// Evaluates `√(m·G)·‖X̃‖₂,₁,₂ ≥ ‖X̃‖₁ ≥ ‖X̃‖*` where `G` is the number of
/// columns per group (`2L` for the off-grid layout).
pub fn corollary1_check<T: Real>(x: &Array2<Cplx<T>>, n: usize) -> Result<NormReport<T>> {
    let group_212 = group_norm(x, n)?;
    let per_group = x.nrows() * (x.ncols() / n);
    let nuclear = linalg::nuclear_norm(x);
    let entrywise_l1 = linalg::entrywise_l1(x);
    let group_factor = T::from_usize_lossy(per_group).sqrt();
    let slack = T::lit(NORM_CHAIN_SLACK);
    let upper = group_factor * group_212;
    let violated = entrywise_l1 > upper + slack * upper.max(T::one())
        || nuclear > entrywise_l1 + slack * entrywise_l1.max(T::one());
    Ok(NormReport {
        nuclear,
        entrywise_l1,
        group_212,
        column_norms: column_norms(x),
        group_factor,
        violated,
    })
}

/// Named slices of the variable vector.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VariableMap {
    pub slices: Vec<(String, Range<usize>)>,
    /// Shape `(m, columns)` of the lifted matrix stored in slice `"x"`, if any.
    pub lifted_shape: Option<(usize, usize)>,
}

impl VariableMap {
    pub fn get(&self, name: &str) -> Option<Range<usize>> {
        self.slices
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, r)| r.clone())
    }

    /// Slices must be disjoint and lie inside `0..n`.
    pub fn validate(&self, n: usize) -> Result<()> {
        let mut ranges: Vec<Range<usize>> = self.slices.iter().map(|(_, r)| r.clone()).collect();
        ranges.sort_by_key(|r| r.start);
        for w in ranges.windows(2) {
            if w[0].end > w[1].start {
                return Err(Error::InvalidProgram("variable slices overlap".into()));
            }
        }
        if ranges.iter().any(|r| r.end > n || r.start > r.end) {
            return Err(Error::InvalidProgram("variable slice out of range".into()));
        }
        Ok(())
    }
}

/// Standard-form conic program: minimise `cᵀx` subject to `A x + s = b`,
/// `s` in the product of `cones` (in order).
#[derive(Debug, Clone, PartialEq)]
pub struct ConicProgram<T> {
    pub objective: Vec<T>,
    pub a_eq: CscMatrix<T>,
    pub b_eq: Vec<T>,
    pub cones: Vec<Cone>,
    pub variable_map: VariableMap,
}

impl<T: Real> ConicProgram<T> {
    pub fn num_variables(&self) -> usize {
        self.objective.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.b_eq.len()
    }

    /// `b − A x`.
    pub fn slack(&self, x: &[T]) -> Vec<T> {
        let mut s = self.b_eq.clone();
        self.a_eq.gemv(x, &mut s, -T::one(), T::one());
        s
    }

    /// Largest amount by which `b − A x` misses its cone (0 when feasible).
    pub fn cone_violation(&self, x: &[T]) -> T {
        let s = self.slack(x);
        let mut worst = T::zero();
        let mut o = 0;
        for cone in &self.cones {
            let d = cone.dim();
            let blk = &s[o..o + d];
            let v = match cone {
                Cone::Zero(_) => blk.iter().fold(T::zero(), |m, v| m.max(v.abs())),
                Cone::NonNeg(_) => blk.iter().fold(T::zero(), |m, &v| m.max(-v)),
                Cone::SecondOrder(_) => {
                    let u = blk[1..].iter().map(|&v| v * v).sum::<T>().sqrt();
                    (u - blk[0]).max(T::zero())
                }
            };
            worst = worst.max(v);
            o += d;
        }
        worst
    }

    /// Reads the lifted matrix out of a primal vector.
    pub fn extract_lifted(&self, x: &[T]) -> Result<LiftedMatrix<T>> {
        let (m, cols) = self
            .variable_map
            .lifted_shape
            .ok_or_else(|| Error::InvalidProgram("program has no lifted variable".into()))?;
        let r = self
            .variable_map
            .get("x")
            .ok_or_else(|| Error::InvalidProgram("program has no lifted variable".into()))?;
        if x.len() != self.num_variables() || r.len() != 2 * m * cols {
            return Err(Error::Dimension("primal vector does not match the program".into()));
        }
        let v = &x[r];
        Ok(LiftedMatrix::new(Array2::from_shape_fn((m, cols), |(row, c)| {
            let k = c * m + row;
            Cplx::new(v[2 * k], v[2 * k + 1])
        })))
    }
}
