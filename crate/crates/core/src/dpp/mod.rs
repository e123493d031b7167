//! Monte Carlo checks of the weak dynamic programming principle, of right
//! continuity in the constraint level, and of the open/closed
//! state-constraint equality, against solved grid fields.

mod checks;
mod report;

use std::sync::Arc;

use thiserror::Error;

pub use checks::{check_dpp_lower, check_dpp_upper, check_open_closed, check_right_continuity, DppSettings, RightContinuity};
pub use report::{Point, VerificationReport, Verdict};

use crate::hjb::{
    solve_expectation_constrained, solve_state_constrained, FieldKind, Grid, HamiltonianParams, HjbError, PolicyField, ValueField,
};
use crate::model::ProblemSpec;
use crate::scalar::Real;
use crate::sde::SimError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DppError {
    #[error(transparent)]
    Hjb(#[from] HjbError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("the point {0:?} is masked in the solved field")]
    MaskedPoint(Vec<f64>),
    #[error("check needs a {expected:?} field, the fixture holds {found:?}")]
    WrongField { expected: FieldKind, found: FieldKind },
    #[error("the problem has no invariance feedback û")]
    MissingFeedback,
    #[error("invalid check input: {0}")]
    Input(String),
}

/// A problem with its solved value and policy fields.
#[derive(Debug, Clone)]
pub struct TestFixture<S> {
    pub name: String,
    pub spec: ProblemSpec,
    pub params: HamiltonianParams,
    pub value: ValueField<S>,
    pub policy: Arc<PolicyField<S>>,
    /// Simulation steps over the full horizon.
    pub steps: usize,
}

impl<S: Real> TestFixture<S> {
    /// Solves the expectation-constrained problem on `grid`.
    pub fn expectation(name: &str, spec: ProblemSpec, grid: &Grid<S>, params: HamiltonianParams) -> Result<TestFixture<S>, DppError> {
        let (value, policy) = solve_expectation_constrained(&spec, grid, &params)?;
        Ok(Self::from_fields(name, spec, params, value, policy))
    }

    /// Solves the state-constrained problem on `grid`.
    pub fn state(name: &str, spec: ProblemSpec, grid: &Grid<S>, params: HamiltonianParams) -> Result<TestFixture<S>, DppError> {
        let (value, policy) = solve_state_constrained(&spec, grid, &params)?;
        Ok(Self::from_fields(name, spec, params, value, policy))
    }

    pub fn from_fields(name: &str, spec: ProblemSpec, params: HamiltonianParams, value: ValueField<S>, policy: PolicyField<S>) -> TestFixture<S> {
        let steps = value.grid.nt;
        TestFixture {
            name: name.to_string(),
            spec,
            params,
            value,
            policy: Arc::new(policy),
            steps,
        }
    }

    pub fn with_steps(mut self, steps: usize) -> TestFixture<S> {
        self.steps = steps.max(1);
        self
    }

    /// Grid error allowance `h`: the largest spatial or m spacing.
    pub fn grid_h(&self) -> f64 {
        let g = &self.value.grid;
        g.x.iter()
            .map(|a| a.step().as_f64())
            .chain(g.m.iter().map(|a| a.step().as_f64()))
            .fold(0.0, f64::max)
    }

    /// Simulation steps from `t` to the horizon, proportional to the
    /// remaining time.
    pub(crate) fn steps_from(&self, t: f64) -> usize {
        let g = &self.value.grid;
        let (t0, t1) = (g.t0.as_f64(), g.t1.as_f64());
        ((self.steps as f64) * (t1 - t) / (t1 - t0)).round().max(1.0) as usize
    }
}
