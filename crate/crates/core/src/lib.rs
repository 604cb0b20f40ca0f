//! Direction-of-arrival estimation for sensor arrays with unknown per-sensor
//! complex gains and off-grid sources.
//!
//! The received snapshots are modelled as `Y = diag(B h) (Ā + B̄ Γ) S̄ + N`,
//! lifted to a linear measurement of the rank-one matrix `X̃ = h [x₁ᵀ … x_Lᵀ]`,
//! and recovered by minimising a two-layer block norm of `X̃` under a noise
//! ball constraint. That problem is expressed as a second-order cone program
//! and solved by the bundled interior-point solver; the solution is then
//! factored into calibration and direction estimates.
//!
//! All numerical code is generic over [`Real`] (`f32` or `f64`); the aliases at
//! the bottom of this module pin the common `f64` instantiations.

// `!(a < b)` is deliberate where NaN must take the failure branch, and the
// index loops follow the matrix formulas
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod array;
pub mod error;
pub mod lifting;
pub mod linalg;
pub mod recovery;
pub mod socp;
pub mod solver;

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

pub use error::{Error, Result};

/// Complex scalar over a [`Real`] field.
pub type Cplx<T> = num_complex::Complex<T>;

/// Floating-point field the library is generic over: `f32` or `f64`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from an `f64` literal.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable")
    }
}

impl<T> Real for T where
    T: Float
        + FloatConst
        + FromPrimitive
        + ToPrimitive
        + NumAssign
        + Sum
        + Default
        + Debug
        + Display
        + LowerExp
        + Send
        + Sync
        + 'static
{
}

pub type Complex64 = Cplx<f64>;
pub type Complex32 = Cplx<f32>;

pub type ArrayGeometry = array::ArrayGeometry<f64>;
pub type CalibrationModel = array::CalibrationModel<f64>;
pub type SourceScene = array::SourceScene<f64>;
pub type SnapshotSet = array::SnapshotSet<f64>;
pub type GroundTruth = array::GroundTruth<f64>;
pub type AngleGrid = lifting::AngleGrid<f64>;
pub type Dictionary = lifting::Dictionary<f64>;
pub type LiftedMatrix = lifting::LiftedMatrix<f64>;
pub type LiftedOperator = lifting::LiftedOperator<f64>;
pub type ConicProgram = socp::ConicProgram<f64>;
pub type NormReport = socp::NormReport<f64>;
pub type SolverSettings = solver::SolverSettings<f64>;
pub type ConicSolution = solver::ConicSolution<f64>;
pub type RecoveryResult = recovery::RecoveryResult<f64>;
pub type EstimatorSettings = recovery::EstimatorSettings<f64>;
