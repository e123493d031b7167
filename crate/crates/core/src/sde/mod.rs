//! Euler–Maruyama simulation of the controlled state `X`, the martingale
//! `M = m + ∫ aᵀ dW` and the running-minimum distance `Y`, driven by
//! composable control programs.

mod io;
mod program;
mod simulate;

use thiserror::Error;

pub use io::{path_bundle_filename, write_paths_csv};
pub use program::{concatenate, switch_to_feedback, ControlProgram, Event, MartingaleProgram, ProgramState, Region, StepView, StoppingRule};
pub use simulate::{coarsen_increments, first_exit, simulate, simulate_batch, simulate_driven, stopping_node, AugmentedPath, PathRng, SimStart};

use crate::model::{EvalError, ModelError};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid time grid: {0}")]
    Grid(String),
    #[error("invalid start: {0}")]
    Start(String),
    #[error("coefficient evaluation failed: {0}")]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("program emits {found} values, expected {expected}")]
    Arity { expected: usize, found: usize },
}

/// Uniform time grid `t0 = s_0 < … < s_N = T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid<S> {
    pub t0: S,
    pub t1: S,
    pub steps: usize,
}

impl<S: Real> TimeGrid<S> {
    pub fn new(t0: S, t1: S, steps: usize) -> Result<TimeGrid<S>, SimError> {
        if steps == 0 {
            return Err(SimError::Grid("at least one step is required".into()));
        }
        if !(t1 > t0) || !t0.is_finite() || !t1.is_finite() {
            return Err(SimError::Grid(format!("need finite t0 < T, got [{t0}, {t1}]")));
        }
        Ok(TimeGrid { t0, t1, steps })
    }

    pub fn step(&self) -> S {
        (self.t1 - self.t0) / S::from_usize_lossy(self.steps)
    }

    /// Node time `s_i`; exact at both ends.
    pub fn time(&self, i: usize) -> S {
        if i >= self.steps {
            return self.t1;
        }
        self.t0 + (self.t1 - self.t0) * S::from_usize_lossy(i) / S::from_usize_lossy(self.steps)
    }

    /// Index of the first node at or after `t`.
    pub fn node_at_or_after(&self, t: S) -> usize {
        (0..=self.steps)
            .find(|&i| self.time(i) >= t - S::lit(1e-12) * (S::one() + t.abs()))
            .unwrap_or(self.steps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_nodes() {
        let g = TimeGrid::new(0.0, 1.0, 100).unwrap();
        assert_eq!(g.time(0), 0.0);
        assert_eq!(g.time(50), 0.5);
        assert_eq!(g.time(100), 1.0);
        assert_eq!(g.node_at_or_after(0.5), 50);
        assert_eq!(g.node_at_or_after(0.505), 51);
        assert!(TimeGrid::new(1.0, 1.0, 3).is_err());
        assert!(TimeGrid::new(0.0, 1.0, 0).is_err());
    }
}
