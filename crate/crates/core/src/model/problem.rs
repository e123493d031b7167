//! Problem specification: dynamics, control set, reward, constraint and the
//! optional state domain.

use thiserror::Error;

use super::expr::{Bindings, EvalError, Expr, ParseError, Var};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("horizon must be positive, got {0}")]
    NonPositiveHorizon(f64),
    #[error("dimension must be positive")]
    ZeroDimension,
    #[error("control set is empty")]
    EmptyControlSet,
    #[error("invalid control set: {0}")]
    InvalidControlSet(String),
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("{what}: expected {expected} entries, found {found}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        found: usize,
    },
    #[error("{what} may not reference `{var}`")]
    ForbiddenVariable { what: String, var: Var },
    #[error("{what}: {source}")]
    Parse {
        what: String,
        #[source]
        source: ParseError,
    },
    #[error("evaluation failed: {0}")]
    Eval(#[from] EvalError),
    #[error("problem has no domain descriptor")]
    NoDomain,
    #[error("problem has no feedback law `{0}`")]
    MissingFeedback(&'static str),
    #[error("discount must be nonnegative, got {0}")]
    NegativeDiscount(f64),
    #[error("validation box is empty or has wrong dimension")]
    EmptyBox,
}

/// The control set `U`.
#[derive(Debug, Clone, PartialEq)]
pub enum ControlSet {
    /// Product of closed intervals, discretized with `points_per_axis` nodes
    /// per coordinate for grid minimization.
    Box {
        lo: Vec<f64>,
        hi: Vec<f64>,
        points_per_axis: usize,
    },
    /// Finite list of control values.
    Points { dim: usize, points: Vec<Vec<f64>> },
}

impl ControlSet {
    pub fn interval(lo: f64, hi: f64, points: usize) -> Result<ControlSet, ModelError> {
        ControlSet::boxed(vec![lo], vec![hi], points)
    }

    pub fn boxed(lo: Vec<f64>, hi: Vec<f64>, points_per_axis: usize) -> Result<ControlSet, ModelError> {
        let set = ControlSet::Box {
            lo,
            hi,
            points_per_axis,
        };
        set.check()?;
        Ok(set)
    }

    pub fn points(points: Vec<Vec<f64>>) -> Result<ControlSet, ModelError> {
        let dim = points.first().map(Vec::len).ok_or(ModelError::EmptyControlSet)?;
        let set = ControlSet::Points { dim, points };
        set.check()?;
        Ok(set)
    }

    pub fn singleton(u: Vec<f64>) -> Result<ControlSet, ModelError> {
        ControlSet::points(vec![u])
    }

    fn check(&self) -> Result<(), ModelError> {
        match self {
            ControlSet::Box {
                lo,
                hi,
                points_per_axis,
            } => {
                if lo.is_empty() {
                    return Err(ModelError::EmptyControlSet);
                }
                if lo.len() != hi.len() {
                    return Err(ModelError::DimensionMismatch {
                        what: "control box upper bounds".into(),
                        expected: lo.len(),
                        found: hi.len(),
                    });
                }
                for (l, h) in lo.iter().zip(hi) {
                    if !(l.is_finite() && h.is_finite()) {
                        return Err(ModelError::InvalidControlSet("bounds must be finite".into()));
                    }
                    if l > h {
                        return Err(ModelError::InvalidControlSet(format!("lower bound {l} exceeds upper bound {h}")));
                    }
                }
                if *points_per_axis == 0 {
                    return Err(ModelError::InvalidControlSet("points_per_axis must be at least 1".into()));
                }
                if *points_per_axis == 1 && lo.iter().zip(hi).any(|(l, h)| l < h) {
                    return Err(ModelError::InvalidControlSet(
                        "a nondegenerate interval needs at least 2 points per axis".into(),
                    ));
                }
                Ok(())
            }
            ControlSet::Points { dim, points } => {
                if points.is_empty() || *dim == 0 {
                    return Err(ModelError::EmptyControlSet);
                }
                for p in points {
                    if p.len() != *dim {
                        return Err(ModelError::DimensionMismatch {
                            what: "control point".into(),
                            expected: *dim,
                            found: p.len(),
                        });
                    }
                    if p.iter().any(|v| !v.is_finite()) {
                        return Err(ModelError::InvalidControlSet("control points must be finite".into()));
                    }
                }
                Ok(())
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ControlSet::Box { lo, .. } => lo.len(),
            ControlSet::Points { dim, .. } => *dim,
        }
    }

    /// Discretized control values in lexicographic order (first coordinate
    /// varies slowest; list order for finite sets).
    pub fn grid<S: Real>(&self) -> Vec<Vec<S>> {
        match self {
            ControlSet::Points { points, .. } => points
                .iter()
                .map(|p| p.iter().map(|&v| S::lit(v)).collect())
                .collect(),
            ControlSet::Box {
                lo,
                hi,
                points_per_axis,
            } => {
                let axes: Vec<Vec<f64>> = lo
                    .iter()
                    .zip(hi)
                    .map(|(&l, &h)| {
                        if l == h {
                            vec![l]
                        } else {
                            let n = *points_per_axis;
                            (0..n)
                                .map(|i| if i + 1 == n { h } else { l + (h - l) * i as f64 / (n - 1) as f64 })
                                .collect()
                        }
                    })
                    .collect();
                let mut out: Vec<Vec<S>> = vec![Vec::new()];
                for axis in &axes {
                    out = out
                        .into_iter()
                        .flat_map(|prefix| {
                            axis.iter().map(move |&v| {
                                let mut p = prefix.clone();
                                p.push(S::lit(v));
                                p
                            })
                        })
                        .collect();
                }
                out
            }
        }
    }

    /// Componentwise bounds of the set.
    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            ControlSet::Box { lo, hi, .. } => (lo.clone(), hi.clone()),
            ControlSet::Points { dim, points } => {
                let mut lo = vec![f64::INFINITY; *dim];
                let mut hi = vec![f64::NEG_INFINITY; *dim];
                for p in points {
                    for k in 0..*dim {
                        lo[k] = lo[k].min(p[k]);
                        hi[k] = hi[k].max(p[k]);
                    }
                }
                (lo, hi)
            }
        }
    }

    pub fn contains<S: Real>(&self, u: &[S]) -> bool {
        if u.len() != self.dim() {
            return false;
        }
        match self {
            ControlSet::Box { lo, hi, .. } => u
                .iter()
                .zip(lo.iter().zip(hi))
                .all(|(v, (l, h))| v.as_f64() >= *l && v.as_f64() <= *h),
            ControlSet::Points { points, .. } => points
                .iter()
                .any(|p| p.iter().zip(u).all(|(a, b)| S::lit(*a) == *b)),
        }
    }

    /// Projects `u` into the set: clamping for boxes, nearest point (first in
    /// list order on ties) for finite sets.
    pub fn project<S: Real>(&self, u: &mut [S]) {
        match self {
            ControlSet::Box { lo, hi, .. } => {
                for (v, (l, h)) in u.iter_mut().zip(lo.iter().zip(hi)) {
                    let c = v.max(S::lit(*l)).min(S::lit(*h));
                    *v = if c.is_nan() { S::lit(*l) } else { c };
                }
            }
            ControlSet::Points { points, .. } => {
                let mut best = 0;
                let mut best_d = S::infinity();
                for (i, p) in points.iter().enumerate() {
                    let d: S = p.iter().zip(u.iter()).map(|(a, b)| (S::lit(*a) - *b).powi(2)).sum();
                    if d < best_d {
                        best_d = d;
                        best = i;
                    }
                }
                for (v, p) in u.iter_mut().zip(&points[best]) {
                    *v = S::lit(*p);
                }
            }
        }
    }
}

/// Description of the open state domain `O`.
#[derive(Debug, Clone, PartialEq)]
pub enum Domain {
    /// `{x : normal·x > offset}`.
    HalfSpace { normal: Vec<f64>, offset: f64 },
    /// Open box `∏ (lo_i, hi_i)`.
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// Open ball.
    Ball { center: Vec<f64>, radius: f64 },
    /// `{x : δ(x) > 0}` for a user expression δ.
    Level(Expr),
}

impl Domain {
    pub(crate) fn check(&self, dim: usize) -> Result<(), ModelError> {
        let mismatch = |what: &str, found: usize| ModelError::DimensionMismatch {
            what: what.into(),
            expected: dim,
            found,
        };
        match self {
            Domain::HalfSpace { normal, offset } => {
                if normal.len() != dim {
                    return Err(mismatch("half-space normal", normal.len()));
                }
                let n2: f64 = normal.iter().map(|v| v * v).sum();
                if !(n2 > 0.0 && n2.is_finite() && offset.is_finite()) {
                    return Err(ModelError::InvalidDomain("half-space normal must be nonzero and finite".into()));
                }
            }
            Domain::Box { lo, hi } => {
                if lo.len() != dim {
                    return Err(mismatch("domain box lower bounds", lo.len()));
                }
                if hi.len() != dim {
                    return Err(mismatch("domain box upper bounds", hi.len()));
                }
                if lo.iter().zip(hi).any(|(l, h)| !(l < h)) {
                    return Err(ModelError::InvalidDomain("domain box must have lo < hi".into()));
                }
            }
            Domain::Ball { center, radius } => {
                if center.len() != dim {
                    return Err(mismatch("ball center", center.len()));
                }
                if !(*radius > 0.0 && radius.is_finite()) {
                    return Err(ModelError::InvalidDomain("ball radius must be positive".into()));
                }
            }
            Domain::Level(e) => {
                check_vars(e, "domain level function", dim, 0, &[])?;
            }
        }
        Ok(())
    }

    /// Signed inside-positive function δ: the signed Euclidean distance for
    /// the built-in shapes, the user expression otherwise.
    pub fn delta<S: Real>(&self, x: &[S]) -> Result<S, EvalError> {
        match self {
            Domain::HalfSpace { normal, offset } => {
                let norm = normal.iter().map(|v| v * v).sum::<f64>().sqrt();
                let dot: S = normal.iter().zip(x).map(|(n, v)| S::lit(*n) * *v).sum();
                Ok((dot - S::lit(*offset)) / S::lit(norm))
            }
            Domain::Box { lo, hi } => {
                let mut inside = S::infinity();
                let mut outside = S::zero();
                for ((l, h), v) in lo.iter().zip(hi).zip(x) {
                    let below = *v - S::lit(*l);
                    let above = S::lit(*h) - *v;
                    let slack = below.min(above);
                    inside = inside.min(slack);
                    if slack < S::zero() {
                        outside = outside + slack * slack;
                    }
                }
                if inside >= S::zero() {
                    Ok(inside)
                } else {
                    Ok(-outside.sqrt())
                }
            }
            Domain::Ball { center, radius } => {
                let r: S = center
                    .iter()
                    .zip(x)
                    .map(|(c, v)| (*v - S::lit(*c)).powi(2))
                    .sum::<S>()
                    .sqrt();
                Ok(S::lit(*radius) - r)
            }
            Domain::Level(e) => e.eval(&Bindings::new(x, &[])),
        }
    }

    pub fn contains<S: Real>(&self, x: &[S]) -> Result<bool, EvalError> {
        Ok(self.delta(x)? > S::zero())
    }

    pub fn contains_closure<S: Real>(&self, x: &[S]) -> Result<bool, EvalError> {
        Ok(self.delta(x)? >= S::zero())
    }

    pub fn is_analytic(&self) -> bool {
        !matches!(self, Domain::Level(_))
    }
}

/// A constrained control problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub dim: usize,
    pub horizon: f64,
    /// Drift μ(x, u), one expression per state coordinate.
    pub drift: Vec<Expr>,
    /// Diffusion σ(x, u), row-major `dim × dim`.
    pub diffusion: Vec<Expr>,
    /// Reward f(x).
    pub reward: Expr,
    /// Constraint function g(x) or g(x, y).
    pub constraint: Expr,
    pub controls: ControlSet,
    pub domain: Option<Domain>,
    /// Invariance feedback û(x).
    pub feedback_hat: Option<Vec<Expr>>,
    /// Inward feedback ǔ(x).
    pub feedback_check: Option<Vec<Expr>>,
    pub discount: f64,
    /// Step positive coordinates in log space when simulating.
    pub log_stepping: bool,
    /// User assertion that f is lower semicontinuous.
    pub reward_lsc_asserted: bool,
    /// User assertion that g is upper semicontinuous.
    pub constraint_usc_asserted: bool,
}

fn parse_named(what: &str, text: &str) -> Result<Expr, ModelError> {
    Expr::parse(text).map_err(|source| ModelError::Parse {
        what: what.to_string(),
        source,
    })
}

/// Rejects variables outside `x1..x{dim}`, `u1..u{controls}` and `extra`.
fn check_vars(e: &Expr, what: &str, dim: usize, controls: usize, extra: &[Var]) -> Result<(), ModelError> {
    for v in e.vars() {
        let ok = match v {
            Var::X(i) => i < dim,
            Var::U(i) => i < controls,
            other => extra.contains(&other),
        };
        if !ok {
            return Err(match v {
                Var::X(i) if i >= dim => ModelError::DimensionMismatch {
                    what: format!("{what} references x{}", i + 1),
                    expected: dim,
                    found: i + 1,
                },
                Var::U(i) if i >= controls && controls > 0 => ModelError::DimensionMismatch {
                    what: format!("{what} references u{}", i + 1),
                    expected: controls,
                    found: i + 1,
                },
                _ => ModelError::ForbiddenVariable {
                    what: what.to_string(),
                    var: v,
                },
            });
        }
    }
    Ok(())
}

impl ProblemSpec {
    /// Builds and checks a problem from expression sources. `diffusion` is
    /// row-major `dim × dim`.
    pub fn new(
        dim: usize,
        horizon: f64,
        drift: &[&str],
        diffusion: &[&str],
        reward: &str,
        constraint: &str,
        controls: ControlSet,
    ) -> Result<ProblemSpec, ModelError> {
        let drift = drift
            .iter()
            .enumerate()
            .map(|(i, s)| parse_named(&format!("drift[{i}]"), s))
            .collect::<Result<Vec<_>, _>>()?;
        let diffusion = diffusion
            .iter()
            .enumerate()
            .map(|(i, s)| parse_named(&format!("diffusion[{i}]"), s))
            .collect::<Result<Vec<_>, _>>()?;
        let spec = ProblemSpec {
            dim,
            horizon,
            drift,
            diffusion,
            reward: parse_named("reward", reward)?,
            constraint: parse_named("constraint", constraint)?,
            controls,
            domain: None,
            feedback_hat: None,
            feedback_check: None,
            discount: 0.0,
            log_stepping: false,
            reward_lsc_asserted: false,
            constraint_usc_asserted: false,
        };
        spec.check()?;
        Ok(spec)
    }

    pub fn with_domain(mut self, domain: Domain) -> Result<ProblemSpec, ModelError> {
        self.domain = Some(domain);
        self.check()?;
        Ok(self)
    }

    pub fn with_level_domain(self, delta: &str) -> Result<ProblemSpec, ModelError> {
        let e = parse_named("domain level function", delta)?;
        self.with_domain(Domain::Level(e))
    }

    pub fn with_feedback_hat(mut self, law: &[&str]) -> Result<ProblemSpec, ModelError> {
        self.feedback_hat = Some(
            law.iter()
                .map(|s| parse_named("feedback_hat", s))
                .collect::<Result<_, _>>()?,
        );
        self.check()?;
        Ok(self)
    }

    pub fn with_feedback_check(mut self, law: &[&str]) -> Result<ProblemSpec, ModelError> {
        self.feedback_check = Some(
            law.iter()
                .map(|s| parse_named("feedback_check", s))
                .collect::<Result<_, _>>()?,
        );
        self.check()?;
        Ok(self)
    }

    pub fn with_discount(mut self, rho: f64) -> Result<ProblemSpec, ModelError> {
        self.discount = rho;
        self.check()?;
        Ok(self)
    }

    pub fn with_horizon(mut self, horizon: f64) -> Result<ProblemSpec, ModelError> {
        self.horizon = horizon;
        self.check()?;
        Ok(self)
    }

    pub fn with_log_stepping(mut self, on: bool) -> ProblemSpec {
        self.log_stepping = on;
        self
    }

    /// Same problem with a different reward.
    pub fn with_reward(mut self, reward: &str) -> Result<ProblemSpec, ModelError> {
        self.reward = parse_named("reward", reward)?;
        self.check()?;
        Ok(self)
    }

    pub fn with_constraint(mut self, constraint: &str) -> Result<ProblemSpec, ModelError> {
        self.constraint = parse_named("constraint", constraint)?;
        self.check()?;
        Ok(self)
    }

    /// Structural checks: positive horizon, matching dimensions, allowed
    /// variables. Coefficients are time-homogeneous functions of (x, u).
    pub fn check(&self) -> Result<(), ModelError> {
        if self.dim == 0 {
            return Err(ModelError::ZeroDimension);
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(ModelError::NonPositiveHorizon(self.horizon));
        }
        if !(self.discount >= 0.0) || !self.discount.is_finite() {
            return Err(ModelError::NegativeDiscount(self.discount));
        }
        self.controls.check()?;
        let d = self.dim;
        let k = self.controls.dim();
        if self.drift.len() != d {
            return Err(ModelError::DimensionMismatch {
                what: "drift".into(),
                expected: d,
                found: self.drift.len(),
            });
        }
        if self.diffusion.len() != d * d {
            return Err(ModelError::DimensionMismatch {
                what: "diffusion (row-major d×d)".into(),
                expected: d * d,
                found: self.diffusion.len(),
            });
        }
        for e in &self.drift {
            check_vars(e, "drift", d, k, &[])?;
        }
        for e in &self.diffusion {
            check_vars(e, "diffusion", d, k, &[])?;
        }
        check_vars(&self.reward, "reward", d, 0, &[])?;
        check_vars(&self.constraint, "constraint", d, 0, &[Var::Y])?;
        if let Some(dom) = &self.domain {
            dom.check(d)?;
        }
        for (name, law) in [("feedback_hat", &self.feedback_hat), ("feedback_check", &self.feedback_check)] {
            if let Some(law) = law {
                if law.len() != k {
                    return Err(ModelError::DimensionMismatch {
                        what: name.into(),
                        expected: k,
                        found: law.len(),
                    });
                }
                for e in law {
                    check_vars(e, name, d, 0, &[])?;
                }
            }
        }
        Ok(())
    }

    pub fn control_dim(&self) -> usize {
        self.controls.dim()
    }

    /// True when g depends on the running-minimum distance `y`.
    pub fn constraint_uses_y(&self) -> bool {
        self.constraint.uses(Var::Y)
    }

    pub fn drift_at<S: Real>(&self, x: &[S], u: &[S], out: &mut [S]) -> Result<(), EvalError> {
        let b = Bindings::new(x, u);
        for (o, e) in out.iter_mut().zip(&self.drift) {
            *o = e.eval(&b)?;
        }
        Ok(())
    }

    /// Row-major σ(x, u).
    pub fn diffusion_at<S: Real>(&self, x: &[S], u: &[S], out: &mut [S]) -> Result<(), EvalError> {
        let b = Bindings::new(x, u);
        for (o, e) in out.iter_mut().zip(&self.diffusion) {
            *o = e.eval(&b)?;
        }
        Ok(())
    }

    pub fn reward_at<S: Real>(&self, x: &[S]) -> Result<S, EvalError> {
        self.reward.eval(&Bindings::new(x, &[]))
    }

    /// g(x, y); `y` is only consulted when the expression references it.
    pub fn constraint_at<S: Real>(&self, x: &[S], y: S) -> Result<S, EvalError> {
        self.constraint.eval(&Bindings::new(x, &[]).with_y(y))
    }

    pub fn delta_at<S: Real>(&self, x: &[S]) -> Result<S, ModelError> {
        let dom = self.domain.as_ref().ok_or(ModelError::NoDomain)?;
        Ok(dom.delta(x)?)
    }

    fn eval_law<S: Real>(law: &[Expr], x: &[S], out: &mut [S]) -> Result<(), EvalError> {
        let b = Bindings::new(x, &[]);
        for (o, e) in out.iter_mut().zip(law) {
            *o = e.eval(&b)?;
        }
        Ok(())
    }

    /// û(x), projected into U.
    pub fn feedback_hat_at<S: Real>(&self, x: &[S], out: &mut [S]) -> Result<(), ModelError> {
        let law = self.feedback_hat.as_ref().ok_or(ModelError::MissingFeedback("feedback_hat"))?;
        Self::eval_law(law, x, out)?;
        self.controls.project(out);
        Ok(())
    }

    /// ǔ(x), projected into U.
    pub fn feedback_check_at<S: Real>(&self, x: &[S], out: &mut [S]) -> Result<(), ModelError> {
        let law = self
            .feedback_check
            .as_ref()
            .ok_or(ModelError::MissingFeedback("feedback_check"))?;
        Self::eval_law(law, x, out)?;
        self.controls.project(out);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geometric() -> ProblemSpec {
        ProblemSpec::new(1, 1.0, &["u1*x1"], &["x1"], "x1", "0", ControlSet::interval(0.0, 1.0, 11).unwrap()).unwrap()
    }

    #[test]
    fn evaluates_coefficients() {
        let s = geometric();
        let mut mu = [0.0];
        let mut sig = [0.0];
        s.drift_at(&[2.0], &[0.5], &mut mu).unwrap();
        s.diffusion_at(&[2.0], &[0.5], &mut sig).unwrap();
        assert_eq!((mu[0], sig[0]), (1.0, 2.0));
        assert_eq!(s.reward_at(&[3.0_f64]).unwrap(), 3.0);
    }

    #[test]
    fn structural_errors() {
        let u = ControlSet::interval(0.0, 1.0, 3).unwrap();
        assert!(matches!(
            ProblemSpec::new(1, 0.0, &["u1"], &["1"], "x1", "x1", u.clone()),
            Err(ModelError::NonPositiveHorizon(_))
        ));
        assert!(matches!(
            ProblemSpec::new(1, 1.0, &["u1", "0"], &["1"], "x1", "x1", u.clone()),
            Err(ModelError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            ProblemSpec::new(1, 1.0, &["u1*x2"], &["1"], "x1", "x1", u.clone()),
            Err(ModelError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            ProblemSpec::new(1, 1.0, &["u1*t"], &["1"], "x1", "x1", u.clone()),
            Err(ModelError::ForbiddenVariable { .. })
        ));
        assert!(matches!(
            ProblemSpec::new(1, 1.0, &["u1"], &["1"], "y", "x1", u),
            Err(ModelError::ForbiddenVariable { .. })
        ));
        assert!(matches!(ControlSet::points(vec![]), Err(ModelError::EmptyControlSet)));
        assert!(ControlSet::interval(1.0, 0.0, 3).is_err());
    }

    #[test]
    fn control_grid_is_lexicographic() {
        let u = ControlSet::boxed(vec![0.0, -1.0], vec![1.0, 1.0], 3).unwrap();
        let g: Vec<Vec<f64>> = u.grid();
        assert_eq!(g.len(), 9);
        assert_eq!(g[0], vec![0.0, -1.0]);
        assert_eq!(g[1], vec![0.0, 0.0]);
        assert_eq!(g[3], vec![0.5, -1.0]);
        assert_eq!(g[8], vec![1.0, 1.0]);
        assert!(g.iter().all(|p| u.contains(p)));
    }

    #[test]
    fn projection() {
        let b = ControlSet::interval(-1.0, 1.0, 5).unwrap();
        let mut u = [3.0];
        b.project(&mut u);
        assert_eq!(u, [1.0]);
        let p = ControlSet::points(vec![vec![-1.0], vec![1.0]]).unwrap();
        let mut v = [0.0];
        p.project(&mut v);
        assert_eq!(v, [-1.0]);
        let mut w = [0.2_f32];
        p.project(&mut w);
        assert_eq!(w, [1.0]);
    }

    #[test]
    fn analytic_deltas() {
        let half = Domain::HalfSpace {
            normal: vec![1.0],
            offset: 0.0,
        };
        assert_eq!(half.delta(&[0.3]).unwrap(), 0.3);
        assert_eq!(half.delta(&[-1.0]).unwrap(), -1.0);
        let ball = Domain::Ball {
            center: vec![0.0, 0.0],
            radius: 1.0,
        };
        assert!((ball.delta(&[0.6, 0.0]).unwrap() - 0.4_f64).abs() < 1e-15);
        let bx = Domain::Box {
            lo: vec![0.0, 0.0],
            hi: vec![1.0, 1.0],
        };
        assert_eq!(bx.delta(&[0.25, 0.5]).unwrap(), 0.25);
        assert_eq!(bx.delta(&[-3.0, 5.0]).unwrap(), -5.0);
    }

    #[test]
    fn feedback_is_projected() {
        let s = geometric().with_feedback_hat(&["2"]).unwrap();
        let mut u = [0.0];
        s.feedback_hat_at(&[1.0], &mut u).unwrap();
        assert_eq!(u, [1.0]);
        assert!(matches!(
            s.feedback_check_at(&[1.0], &mut u),
            Err(ModelError::MissingFeedback(_))
        ));
    }
}
