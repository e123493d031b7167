//! Grid solvers for the constraint floor, the expectation-constrained value
//! on the augmented (t, x, m) domain, and the state-constrained value, with
//! policy extraction and residual auditing.
//!
//! All solvers use the same explicit monotone scheme. Drift terms are upwind
//! differences. Each diffusion column `c = (σ_{·k}, a_k)` is discretized by
//! a directional second difference `(V(p + kc) + V(p − kc) − 2V(p)) / 2k²`,
//! with `k` chosen so that the x-displacement is exactly one cell on the
//! dominant state axis; the remaining coordinates (other state axes and m)
//! are read by multilinear interpolation, which keeps every weight
//! nonnegative. Columns with no state component are plain one-cell second
//! differences in m. Outside the box, reads are clamped to the boundary
//! node (constant ghost values). The martingale control of each column is
//! maximized over the breakpoints of its piecewise-linear stencil, which is
//! exact on `[−A, A]`. The time step is split into explicit
//! substeps satisfying the CFL bound of the scheme.

mod field;
mod grid;
mod hamiltonian;
mod io;
mod residual;
mod scheme;
mod solve;

use thiserror::Error;

pub use field::{neg_inf, FieldKind, FieldMeta, PolicyField, PolicyInterp, ValueField, TIE_BREAK};
pub use grid::{Axis, Grid};
pub use hamiltonian::{hamiltonian, hamiltonian_state, minimize_martingale_term, HamiltonianValue};
pub use io::{read_binary, write_binary, write_csv, FieldIoError, BINARY_MAGIC};
pub use residual::{viscosity_residual, Residual};
pub use solve::{
    extract_policy, solve_constraint_floor, solve_expectation_constrained, solve_expectation_constrained_with_floor,
    solve_state_constrained, solve_unconstrained,
};

use crate::model::{ControlSet, EvalError, ModelError, ProblemSpec};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HjbError {
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("explicit step {dt} exceeds the CFL bound {bound}")]
    CflViolation { dt: f64, bound: f64 },
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("coefficient evaluation failed: {0}")]
    Eval(#[from] EvalError),
    #[error("domain contains no grid nodes with an admissible stencil")]
    NoInteriorNodes,
    #[error("field is masked at every node")]
    MaskedOnly,
    #[error("floor field does not live on the (t, x) part of the grid")]
    FloorMismatch,
}

/// Discretization of the minimization in the Hamiltonian.
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianParams {
    /// Bound `A` of the martingale control, `a ∈ [−A, A]^d`.
    pub truncation: f64,
    /// Points per axis for box control sets; `None` keeps the spec's value.
    pub control_points: Option<usize>,
    /// Discount rate; `None` uses the spec's.
    pub discount: Option<f64>,
    /// Split output steps into CFL-admissible substeps. When false, an
    /// inadmissible output step is an error.
    pub substepping: bool,
    /// Mask margin below the floor; `None` means one m-cell.
    pub mask_margin: Option<f64>,
}

impl Default for HamiltonianParams {
    fn default() -> Self {
        HamiltonianParams {
            truncation: 2.0,
            control_points: None,
            discount: None,
            substepping: true,
            mask_margin: None,
        }
    }
}

impl HamiltonianParams {
    pub fn with_truncation(mut self, a: f64) -> Self {
        self.truncation = a;
        self
    }

    pub fn check(&self) -> Result<(), HjbError> {
        if !(self.truncation > 0.0) || !self.truncation.is_finite() {
            return Err(HjbError::Params(format!("truncation A must be positive, got {}", self.truncation)));
        }
        if self.control_points == Some(0) {
            return Err(HjbError::Params("control_points must be at least 1".into()));
        }
        if let Some(r) = self.discount {
            if !(r >= 0.0) {
                return Err(HjbError::Params(format!("discount must be nonnegative, got {r}")));
            }
        }
        if let Some(mm) = self.mask_margin {
            if !(mm >= 0.0) {
                return Err(HjbError::Params(format!("mask margin must be nonnegative, got {mm}")));
            }
        }
        Ok(())
    }

    /// The control set with this discretization applied.
    pub fn control_set(&self, spec: &ProblemSpec) -> ControlSet {
        match (&spec.controls, self.control_points) {
            (ControlSet::Box { lo, hi, .. }, Some(n)) => ControlSet::Box {
                lo: lo.clone(),
                hi: hi.clone(),
                points_per_axis: if lo.iter().zip(hi).any(|(l, h)| l < h) { n.max(2) } else { n },
            },
            (set, _) => set.clone(),
        }
    }

    /// Discretized controls in lexicographic order.
    pub fn control_grid<S: Real>(&self, spec: &ProblemSpec) -> Vec<Vec<S>> {
        self.control_set(spec).grid()
    }

    pub fn discount_for(&self, spec: &ProblemSpec) -> f64 {
        self.discount.unwrap_or(spec.discount)
    }
}
