//! Control programs: decision rules evaluated node by node along a path.
//!
//! A program sees only the current node (time, state, martingale, running
//! minimum) and the trigger state of its own switches, so every decision is
//! non-anticipative by construction.

use std::sync::Arc;

use super::SimError;
use crate::hjb::{PolicyField, PolicyInterp};
use crate::model::{Bindings, Expr, ProblemSpec};
use crate::scalar::Real;

/// Closed axis-aligned box in (t, x, m). Unbounded sides are infinite.
#[derive(Debug, Clone, PartialEq)]
pub struct Region<S> {
    pub t: (S, S),
    pub x: Vec<(S, S)>,
    pub m: (S, S),
}

impl<S: Real> Region<S> {
    fn all() -> (S, S) {
        (S::neg_infinity(), S::infinity())
    }

    /// The whole (t, x, m) space in dimension `d`.
    pub fn everything(d: usize) -> Region<S> {
        Region {
            t: Self::all(),
            x: vec![Self::all(); d],
            m: Self::all(),
        }
    }

    /// `lo ≤ x1 ≤ hi` in dimension 1.
    pub fn x_interval(lo: S, hi: S) -> Region<S> {
        Region {
            t: Self::all(),
            x: vec![(lo, hi)],
            m: Self::all(),
        }
    }

    pub fn x_box(lo: &[S], hi: &[S]) -> Region<S> {
        Region {
            t: Self::all(),
            x: lo.iter().copied().zip(hi.iter().copied()).collect(),
            m: Self::all(),
        }
    }

    pub fn with_t(mut self, lo: S, hi: S) -> Region<S> {
        self.t = (lo, hi);
        self
    }

    pub fn with_m(mut self, lo: S, hi: S) -> Region<S> {
        self.m = (lo, hi);
        self
    }

    pub fn contains(&self, t: S, x: &[S], m: S) -> bool {
        let inside = |v: S, (lo, hi): (S, S)| v >= lo && v <= hi;
        inside(t, self.t) && inside(m, self.m) && self.x.iter().zip(x).all(|(b, v)| inside(*v, *b))
    }
}

/// What a program sees at node `step`.
#[derive(Debug, Clone, Copy)]
pub struct StepView<'a, S> {
    pub step: usize,
    pub steps: usize,
    pub t: S,
    pub x: &'a [S],
    pub m: S,
    pub y: S,
}

/// Stopping rule detected at time nodes: the first node where it fires.
#[derive(Debug, Clone, PartialEq)]
pub enum StoppingRule<S> {
    /// The start node.
    Immediate,
    /// The last node.
    Terminal,
    /// First node at or after the given time.
    AtTime(S),
    /// First node where (t, X, M) leaves the region.
    FirstExit(Region<S>),
    /// First node where the running minimum `Y` is at most the level.
    YLevel(S),
}

impl<S: Real> StoppingRule<S> {
    pub fn fires(&self, v: &StepView<'_, S>) -> bool {
        match self {
            StoppingRule::Immediate => true,
            StoppingRule::Terminal => v.step >= v.steps,
            StoppingRule::AtTime(t) => v.t >= *t - S::lit(1e-12) * (S::one() + t.abs()),
            StoppingRule::FirstExit(r) => !r.contains(v.t, v.x, v.m),
            StoppingRule::YLevel(eps) => v.y <= *eps,
        }
    }
}

/// Event decided at the switching time from the node there.
#[derive(Debug, Clone, PartialEq)]
pub enum Event<S> {
    Never,
    Always,
    Inside(Region<S>),
    Outside(Region<S>),
}

impl<S: Real> Event<S> {
    pub fn holds(&self, v: &StepView<'_, S>) -> bool {
        match self {
            Event::Never => false,
            Event::Always => true,
            Event::Inside(r) => r.contains(v.t, v.x, v.m),
            Event::Outside(r) => !r.contains(v.t, v.x, v.m),
        }
    }
}

/// Decision rule producing one vector per step.
#[derive(Debug, Clone)]
pub enum ControlProgram<S> {
    Constant(Vec<S>),
    /// `values[j]` on `[breaks[j−1], breaks[j])`; `values` has one more entry
    /// than `breaks`.
    TimeTable { breaks: Vec<S>, values: Vec<Vec<S>> },
    /// Lookup in a solved policy at (t, X, M); `martingale` selects the `a`
    /// part instead of `u`.
    Feedback {
        policy: Arc<PolicyField<S>>,
        mode: PolicyInterp,
        martingale: bool,
    },
    /// Closed-form law of (t, x, m, y), one expression per coordinate.
    Law(Vec<Expr>),
    /// `base` until the monitor first fires, `then` from that node on.
    Switch {
        base: Box<ControlProgram<S>>,
        monitor: StoppingRule<S>,
        then: Box<ControlProgram<S>>,
    },
    /// `base` up to and including τ; after τ, `then` on the event and
    /// `base` off it.
    Concat {
        base: Box<ControlProgram<S>>,
        tau: StoppingRule<S>,
        event: Event<S>,
        then: Box<ControlProgram<S>>,
    },
}

/// Per-path trigger state of a program's switches: for each switch (in
/// preorder), the node where it fired and the event decided there.
#[derive(Debug, Clone, Default)]
pub struct ProgramState {
    trig: Vec<Option<(usize, bool)>>,
}

impl<S: Real> ControlProgram<S> {
    pub fn feedback(policy: Arc<PolicyField<S>>, mode: PolicyInterp) -> ControlProgram<S> {
        ControlProgram::Feedback {
            policy,
            mode,
            martingale: false,
        }
    }

    pub fn law(exprs: &[Expr]) -> ControlProgram<S> {
        ControlProgram::Law(exprs.to_vec())
    }

    fn switches(&self) -> usize {
        match self {
            ControlProgram::Switch { base, then, .. } | ControlProgram::Concat { base, then, .. } => {
                1 + base.switches() + then.switches()
            }
            _ => 0,
        }
    }

    pub fn new_state(&self) -> ProgramState {
        ProgramState {
            trig: vec![None; self.switches()],
        }
    }

    /// Number of values emitted per step, or an error naming the mismatch.
    pub fn check_width(&self, width: usize) -> Result<(), SimError> {
        let bad = |found: usize| {
            if found == width {
                Ok(())
            } else {
                Err(SimError::Arity { expected: width, found })
            }
        };
        match self {
            ControlProgram::Constant(v) => bad(v.len()),
            ControlProgram::TimeTable { breaks, values } => {
                if values.len() != breaks.len() + 1 {
                    return Err(SimError::Arity {
                        expected: breaks.len() + 1,
                        found: values.len(),
                    });
                }
                values.iter().try_for_each(|v| bad(v.len()))
            }
            ControlProgram::Feedback { policy, martingale, .. } => bad(if *martingale { policy.d } else { policy.k }),
            ControlProgram::Law(e) => bad(e.len()),
            ControlProgram::Switch { base, then, .. } | ControlProgram::Concat { base, then, .. } => {
                base.check_width(width)?;
                then.check_width(width)
            }
        }
    }

    /// Updates switch triggers with node `v`. Must be called for every node
    /// in order, before [`emit`](Self::emit) at that node.
    pub fn observe(&self, v: &StepView<'_, S>, state: &mut ProgramState) {
        self.observe_at(v, &mut state.trig, &mut 0);
    }

    fn observe_at(&self, v: &StepView<'_, S>, trig: &mut [Option<(usize, bool)>], id: &mut usize) {
        match self {
            ControlProgram::Switch { base, monitor, then } => {
                let me = *id;
                *id += 1;
                if trig[me].is_none() && monitor.fires(v) {
                    trig[me] = Some((v.step, true));
                }
                base.observe_at(v, trig, id);
                then.observe_at(v, trig, id);
            }
            ControlProgram::Concat { base, tau, event, then } => {
                let me = *id;
                *id += 1;
                if trig[me].is_none() && tau.fires(v) {
                    trig[me] = Some((v.step, event.holds(v)));
                }
                base.observe_at(v, trig, id);
                then.observe_at(v, trig, id);
            }
            _ => {}
        }
    }

    /// Writes the decision at node `v` into `out`.
    pub fn emit(&self, spec: &ProblemSpec, v: &StepView<'_, S>, state: &ProgramState, out: &mut [S]) -> Result<(), SimError> {
        self.emit_at(spec, v, &state.trig, &mut 0, out)
    }

    fn emit_at(
        &self,
        spec: &ProblemSpec,
        v: &StepView<'_, S>,
        trig: &[Option<(usize, bool)>],
        id: &mut usize,
        out: &mut [S],
    ) -> Result<(), SimError> {
        match self {
            ControlProgram::Constant(c) => out.copy_from_slice(c),
            ControlProgram::TimeTable { breaks, values } => {
                let j = breaks.iter().take_while(|b| v.t >= **b).count();
                out.copy_from_slice(&values[j]);
            }
            ControlProgram::Feedback { policy, mode, martingale } => {
                let m = policy.grid.m.as_ref().map(|_| v.m);
                policy.lookup(v.t, v.x, m, *mode, *martingale, out);
            }
            ControlProgram::Law(exprs) => {
                let b = Bindings::new(v.x, &[]).with_t(v.t).with_m(v.m).with_y(v.y);
                for (o, e) in out.iter_mut().zip(exprs) {
                    *o = e.eval(&b)?;
                }
            }
            ControlProgram::Switch { base, then, .. } => {
                let me = *id;
                *id += 1;
                let mut skip = 0;
                let fired = trig[me].is_some();
                if fired {
                    base.skip(&mut skip);
                    *id += skip;
                    return then.emit_at(spec, v, trig, id, out);
                }
                base.emit_at(spec, v, trig, id, out)?;
            }
            ControlProgram::Concat { base, then, .. } => {
                let me = *id;
                *id += 1;
                let switched = matches!(trig[me], Some((at, true)) if v.step > at);
                if switched {
                    let mut skip = 0;
                    base.skip(&mut skip);
                    *id += skip;
                    return then.emit_at(spec, v, trig, id, out);
                }
                base.emit_at(spec, v, trig, id, out)?;
            }
        }
        Ok(())
    }

    fn skip(&self, n: &mut usize) {
        *n += self.switches();
    }
}

/// `base` up to and including τ, then `continuation` on Γ and `base` off Γ.
pub fn concatenate<S: Real>(
    base: ControlProgram<S>,
    continuation: ControlProgram<S>,
    tau: StoppingRule<S>,
    gamma: Event<S>,
) -> ControlProgram<S> {
    ControlProgram::Concat {
        base: Box::new(base),
        tau,
        event: gamma,
        then: Box::new(continuation),
    }
}

/// Follows `base` until the running minimum `Y` first reaches `eps`, then
/// the invariance feedback `û` of the problem.
pub fn switch_to_feedback<S: Real>(spec: &ProblemSpec, base: ControlProgram<S>, eps: S) -> Result<ControlProgram<S>, SimError> {
    if spec.domain.is_none() {
        return Err(crate::model::ModelError::NoDomain.into());
    }
    let law = spec
        .feedback_hat
        .as_ref()
        .ok_or(crate::model::ModelError::MissingFeedback("feedback_hat"))?;
    Ok(ControlProgram::Switch {
        base: Box::new(base),
        monitor: StoppingRule::YLevel(eps),
        then: Box::new(ControlProgram::Law(law.clone())),
    })
}

/// Martingale control program with its bound `A`; emitted values are
/// clamped to `[−A, A]`.
#[derive(Debug, Clone)]
pub struct MartingaleProgram<S> {
    pub program: ControlProgram<S>,
    pub bound: S,
}

impl<S: Real> MartingaleProgram<S> {
    /// `a ≡ 0` in dimension `d`.
    pub fn zero(d: usize) -> MartingaleProgram<S> {
        MartingaleProgram {
            program: ControlProgram::Constant(vec![S::zero(); d]),
            bound: S::zero(),
        }
    }

    pub fn constant(a: Vec<S>, bound: S) -> MartingaleProgram<S> {
        MartingaleProgram {
            program: ControlProgram::Constant(a),
            bound,
        }
    }

    /// The martingale part of a solved policy.
    pub fn feedback(policy: Arc<PolicyField<S>>, mode: PolicyInterp, bound: S) -> MartingaleProgram<S> {
        MartingaleProgram {
            program: ControlProgram::Feedback {
                policy,
                mode,
                martingale: true,
            },
            bound,
        }
    }

    pub fn emit(&self, spec: &ProblemSpec, v: &StepView<'_, S>, state: &ProgramState, out: &mut [S]) -> Result<(), SimError> {
        self.program.emit(spec, v, state, out)?;
        for a in out.iter_mut() {
            *a = if a.is_nan() { S::zero() } else { a.max(-self.bound).min(self.bound) };
        }
        Ok(())
    }
}
