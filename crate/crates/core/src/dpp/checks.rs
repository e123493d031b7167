use super::report::{Point, VerificationReport, Verdict};
use super::{DppError, TestFixture};
use crate::hjb::{FieldKind, PolicyInterp, ValueField};
use crate::model::{delta_gradient, validate_problem, ValidationBox};
use crate::scalar::Real;
use crate::sde::{
    simulate_batch, stopping_node, switch_to_feedback, AugmentedPath, ControlProgram, MartingaleProgram, SimStart, StoppingRule, TimeGrid,
};

const COUNTABLE_TAU: &str = "stopping times are node-valued, so countably- and general-valued τ are not distinguished";

/// Sampling and verdict settings shared by the Monte Carlo checks.
#[derive(Debug, Clone, PartialEq)]
pub struct DppSettings {
    pub n_paths: usize,
    pub seed: u64,
    /// A check whose `3·SE` exceeds this is inconclusive.
    pub scale: f64,
    /// Minimal fraction of paths whose stopped state must lie in the
    /// readable domain for the lower inequality.
    pub invariance: f64,
    /// Tolerance on |V̄_grid − V̂_closed| for the open/closed check.
    pub open_closed_tol: f64,
}

impl Default for DppSettings {
    fn default() -> Self {
        DppSettings {
            n_paths: 10_000,
            seed: 0,
            scale: 0.1,
            invariance: 0.999,
            open_closed_tol: 0.1,
        }
    }
}

/// δ-sweep settings for [`check_right_continuity`].
#[derive(Debug, Clone, PartialEq)]
pub struct RightContinuity {
    /// Decreasing δ values.
    pub deltas: Vec<f64>,
    /// Bound on the gap at the last δ.
    pub tol: f64,
}

impl Default for RightContinuity {
    fn default() -> Self {
        RightContinuity {
            deltas: vec![0.2, 0.1, 0.05, 0.025],
            tol: 0.05,
        }
    }
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 || v.iter().all(|x| *x == v[0]) {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn unmasked_extremes<S: Real>(field: &ValueField<S>) -> (f64, f64) {
    field
        .values
        .iter()
        .zip(&field.mask)
        .filter(|(_, &m)| !m)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (v, _)| (lo.min(v.as_f64()), hi.max(v.as_f64())))
}

fn expect_kind<S: Real>(fx: &TestFixture<S>, kind: FieldKind) -> Result<(), DppError> {
    if fx.value.meta.kind != kind {
        return Err(DppError::WrongField {
            expected: kind,
            found: fx.value.meta.kind,
        });
    }
    Ok(())
}

fn level(point: &Point) -> Result<f64, DppError> {
    point.m.ok_or_else(|| DppError::Input("the point needs a constraint level m".into()))
}

struct Stopped {
    f_terminal: f64,
    g_terminal: f64,
    m_terminal: f64,
    node: usize,
    t: f64,
    x: Vec<f64>,
    m: f64,
}

#[allow(clippy::too_many_arguments)]
fn sample<S: Real>(
    fx: &TestFixture<S>,
    point: &Point,
    m0: f64,
    nu: &ControlProgram<S>,
    alpha: &MartingaleProgram<S>,
    tau: &StoppingRule<S>,
    settings: &DppSettings,
) -> Result<Vec<Stopped>, DppError> {
    let t1 = fx.value.grid.t1;
    let grid = TimeGrid::new(S::lit(point.t), t1, fx.steps_from(point.t))?;
    let start = SimStart::new(S::lit(point.t), point.x.iter().map(|v| S::lit(*v)).collect(), S::lit(m0));
    let spec = &fx.spec;
    let summarize = |p: &AugmentedPath<S>| -> Result<Stopped, DppError> {
        if p.divergent {
            return Err(DppError::Input(format!("path {} diverged", p.index)));
        }
        let n = p.steps();
        let i = stopping_node(p, tau);
        let xt = p.terminal_x();
        Ok(Stopped {
            f_terminal: spec.reward_at(xt).map_err(crate::sde::SimError::from)?.as_f64(),
            g_terminal: spec.constraint_at(xt, p.y[n]).map_err(crate::sde::SimError::from)?.as_f64(),
            m_terminal: p.terminal_m().as_f64(),
            node: i,
            t: p.grid.time(i).as_f64(),
            x: p.x_at(i).iter().map(|v| v.as_f64()).collect(),
            m: p.m[i].as_f64(),
        })
    };
    simulate_batch(spec, &start, nu, alpha, &grid, settings.seed, settings.n_paths, summarize)?
        .into_iter()
        .collect()
}

fn at<S: Real>(field: &ValueField<S>, t: f64, x: &[f64], m: Option<f64>, extended: bool) -> Option<f64> {
    let xs: Vec<S> = x.iter().map(|v| S::lit(*v)).collect();
    let m = m.map(S::lit);
    let v = if extended {
        field.interpolate_extended(S::lit(t), &xs, m)
    } else {
        field.interpolate(S::lit(t), &xs, m)
    };
    v.map(|v| v.as_f64())
}

/// Upper inequality `F(t, x; ν) ≤ E[φ(τ, X_τ, M_τ)]` with φ the solved V
/// read by interpolation (masked corners take the monotone extension) and
/// φ = f at the horizon. Both sides come from the same paths; the slack
/// is `E[φ] − F` with the standard error of the paired difference.
///
/// The input `(ν, α)` must be admissible on the sample: the mean of g(X_T)
/// at most `m + 2·SE` and `M_T ≥ g(X_T)` on every path. Otherwise the
/// report is tagged inadmissible and inconclusive.
pub fn check_dpp_upper<S: Real>(
    fx: &TestFixture<S>,
    point: &Point,
    nu: &ControlProgram<S>,
    alpha: &MartingaleProgram<S>,
    tau: &StoppingRule<S>,
    settings: &DppSettings,
) -> Result<VerificationReport, DppError> {
    expect_kind(fx, FieldKind::ExpectationConstrained)?;
    let m0 = level(point)?;
    let paths = sample(fx, point, m0, nu, alpha, tau, settings)?;
    let (_, hi) = unmasked_extremes(&fx.value);
    let mut report = VerificationReport::new(&format!("dpp_upper/{}", fx.name), point.coords(), settings.n_paths, settings.seed);

    let g: Vec<f64> = paths.iter().map(|p| p.g_terminal).collect();
    let (g_mean, g_se) = mean_se(&g);
    let violations = paths.iter().filter(|p| p.m_terminal < p.g_terminal).count();

    let full = fx.steps_from(point.t);
    let phi: Vec<f64> = paths
        .iter()
        .map(|p| {
            if p.node == full && p.m_terminal >= p.g_terminal {
                p.f_terminal
            } else {
                at(&fx.value, p.t, &p.x, Some(p.m), true).unwrap_or(hi)
            }
        })
        .collect();
    let diff: Vec<f64> = phi.iter().zip(&paths).map(|(ph, p)| ph - p.f_terminal).collect();
    let (phi_mean, _) = mean_se(&phi);
    let (f_mean, _) = mean_se(&paths.iter().map(|p| p.f_terminal).collect::<Vec<_>>());
    let (slack, se) = mean_se(&diff);
    report.estimate = phi_mean;
    report.slack = slack;
    report.se = se;
    report.values = vec![f_mean, phi_mean];
    report.judge(fx.grid_h(), settings.scale);
    if g_mean > m0 + 2.0 * g_se || violations > 0 {
        report.verdict = Verdict::Inconclusive;
        report.note(format!(
            "inadmissible input: mean g(X_T) = {g_mean:.6} (level {m0}), {violations} paths with M_T < g(X_T)"
        ));
    }
    report.note(COUNTABLE_TAU);
    Ok(report)
}

/// Lower inequality `V(t, x, m + δ) ≥ E[φ(τ, X_τ, M_τ)]` with
/// φ(s, y, m) = V(s, y, m − h_m) (one m-cell down, so φ ≤ V) and φ = f at
/// the horizon where `M_T ≥ g(X_T)`. The pair `(ν, α)` need not be
/// admissible, but the stopped state must be readable (unmasked, inside
/// the m-range) on at least `settings.invariance` of the paths; the
/// remaining paths take the smallest unmasked field value.
#[allow(clippy::too_many_arguments)]
pub fn check_dpp_lower<S: Real>(
    fx: &TestFixture<S>,
    point: &Point,
    delta: f64,
    nu: &ControlProgram<S>,
    alpha: &MartingaleProgram<S>,
    tau: &StoppingRule<S>,
    settings: &DppSettings,
) -> Result<VerificationReport, DppError> {
    expect_kind(fx, FieldKind::ExpectationConstrained)?;
    let m0 = level(point)?;
    if !(delta >= 0.0) {
        return Err(DppError::Input(format!("δ must be nonnegative, got {delta}")));
    }
    let bound = at(&fx.value, point.t, &point.x, Some(m0 + delta), false).ok_or_else(|| DppError::MaskedPoint(point.coords()))?;
    let axis = fx.value.grid.m.as_ref().expect("expectation-constrained fields carry an m axis");
    let (hm, m_lo) = (axis.step().as_f64(), axis.lo.as_f64());
    let (lo, _) = unmasked_extremes(&fx.value);

    let paths = sample(fx, point, m0, nu, alpha, tau, settings)?;
    let full = fx.steps_from(point.t);
    let mut outside = 0usize;
    let phi: Vec<f64> = paths
        .iter()
        .map(|p| {
            let v = if p.node == full {
                (p.m_terminal >= p.g_terminal).then_some(p.f_terminal)
            } else if p.m - hm < m_lo {
                None
            } else {
                at(&fx.value, p.t, &p.x, Some(p.m - hm), false)
            };
            v.unwrap_or_else(|| {
                outside += 1;
                lo
            })
        })
        .collect();
    let (mean, se) = mean_se(&phi);
    let mut report = VerificationReport::new(&format!("dpp_lower/{}", fx.name), point.coords(), settings.n_paths, settings.seed);
    report.delta = Some(delta);
    report.estimate = mean;
    report.se = se;
    report.slack = bound - mean;
    report.values = vec![bound, mean];
    report.judge(fx.grid_h(), settings.scale);
    let inside = 1.0 - outside as f64 / paths.len() as f64;
    if inside < settings.invariance {
        report.verdict = Verdict::Inconclusive;
        report.note(format!("invariance violated: stopped state readable on {:.4} of paths", inside));
    } else if outside > 0 {
        report.note(format!("{outside} paths stopped outside the readable domain"));
    }
    if delta == 0.0 {
        report.note("δ = 0 is a stronger-than-theorem probe");
    }
    report.note(COUNTABLE_TAU);
    Ok(report)
}

/// Gaps `V(t, x, m + δ) − V(t, x, m)` of the solved field along a
/// decreasing δ sequence. Passes when the gaps are nonincreasing within
/// `2h` and the last one is at most `cfg.tol`. Without û and with neither
/// a bounded reward nor linear growth the report is inconclusive.
pub fn check_right_continuity<S: Real>(fx: &TestFixture<S>, point: &Point, cfg: &RightContinuity) -> Result<VerificationReport, DppError> {
    expect_kind(fx, FieldKind::ExpectationConstrained)?;
    let m0 = level(point)?;
    if cfg.deltas.is_empty() || cfg.deltas.windows(2).any(|w| !(w[1] < w[0])) || cfg.deltas.iter().any(|d| !(*d > 0.0)) {
        return Err(DppError::Input("δ sequence must be positive and strictly decreasing".into()));
    }
    if fx.spec.domain.is_some() && fx.spec.feedback_hat.is_none() {
        return Err(DppError::MissingFeedback);
    }
    let mut report = VerificationReport::new(&format!("right_continuity/{}", fx.name), point.coords(), 0, 0);
    report.delta = cfg.deltas.last().copied();
    if fx.spec.feedback_hat.is_none() {
        let g = &fx.value.grid;
        let region = ValidationBox::new(g.x.iter().map(|a| a.lo.as_f64()).collect(), g.x.iter().map(|a| a.hi.as_f64()).collect());
        let checked = validate_problem(&fx.spec, &region, 0).map(|r| r.growth_assumption_holds());
        if checked != Ok(true) {
            report.note("inconclusive: assumptions unmet (no û, and neither a bounded reward nor linear growth)");
            return Ok(report);
        }
    }
    let base = at(&fx.value, point.t, &point.x, Some(m0), false).ok_or_else(|| DppError::MaskedPoint(point.coords()))?;
    let mut gaps = Vec::with_capacity(cfg.deltas.len());
    for d in &cfg.deltas {
        let v = at(&fx.value, point.t, &point.x, Some(m0 + d), false).ok_or_else(|| DppError::MaskedPoint(point.coords()))?;
        gaps.push(v - base);
    }
    let h = fx.grid_h();
    let monotone = gaps.windows(2).all(|w| w[1] <= w[0] + 2.0 * h);
    let last = *gaps.last().expect("nonempty");
    report.estimate = last;
    report.slack = cfg.tol - last;
    report.values = gaps;
    report.verdict = if monotone && last <= cfg.tol { Verdict::Pass } else { Verdict::Fail };
    if !monotone {
        report.note("gaps increase as δ decreases");
    }
    Ok(report)
}

/// Value of the state-constrained field at a probe, with the one-sided
/// inward limit `2V(x + hn) − V(x + 2hn)` where the probe cell is not
/// readable (probes on the boundary).
fn closed_grid_value<S: Real>(fx: &TestFixture<S>, point: &Point) -> Result<(f64, bool), DppError> {
    if let Some(v) = at(&fx.value, point.t, &point.x, None, false) {
        return Ok((v, false));
    }
    let domain = fx.spec.domain.as_ref().ok_or_else(|| DppError::MaskedPoint(point.coords()))?;
    let grad = delta_gradient(domain, &point.x).map_err(crate::sde::SimError::from)?;
    let norm = grad.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm > 0.0) {
        return Err(DppError::MaskedPoint(point.coords()));
    }
    let h = fx.grid_h();
    let shifted = |k: f64| -> Vec<f64> { point.x.iter().zip(&grad).map(|(x, g)| x + k * h * g / norm).collect() };
    let v1 = at(&fx.value, point.t, &shifted(1.0), None, false);
    let v2 = at(&fx.value, point.t, &shifted(2.0), None, false);
    match (v1, v2) {
        (Some(a), Some(b)) => Ok((2.0 * a - b, true)),
        _ => Err(DppError::MaskedPoint(point.coords())),
    }
}

/// Compares the solved state-constrained value with a Monte Carlo estimate
/// of the closed-constraint value: the best mean reward over candidate
/// programs (the solved policy read two ways, û, and switches from the
/// policy to û at two levels) whose paths never leave the closed domain.
/// `class_r` is the outcome of the class-R check when one was run; a
/// failed check makes the report inconclusive.
pub fn check_open_closed<S: Real>(
    fx: &TestFixture<S>,
    probes: &[Point],
    class_r: Option<bool>,
    settings: &DppSettings,
) -> Result<VerificationReport, DppError> {
    expect_kind(fx, FieldKind::StateConstrained)?;
    if probes.is_empty() {
        return Err(DppError::Input("no probe points".into()));
    }
    let spec = &fx.spec;
    if spec.domain.is_some() && spec.feedback_hat.is_none() {
        return Err(DppError::MissingFeedback);
    }
    let mut report = VerificationReport::new(&format!("open_closed/{}", fx.name), probes[0].coords(), settings.n_paths, settings.seed);
    if class_r == Some(false) {
        report.note("inconclusive: class-R sufficient condition failed");
        return Ok(report);
    }
    if class_r.is_none() {
        report.note("class-R condition not assessed");
    }

    let mut candidates: Vec<(&str, ControlProgram<S>)> = vec![
        ("policy-linear", ControlProgram::feedback(fx.policy.clone(), PolicyInterp::Linear)),
        ("policy-nearest", ControlProgram::feedback(fx.policy.clone(), PolicyInterp::Nearest)),
    ];
    if let Some(law) = &spec.feedback_hat {
        let policy = ControlProgram::feedback(fx.policy.clone(), PolicyInterp::Linear);
        candidates.push(("feedback-hat", ControlProgram::law(law)));
        candidates.push(("switch-0.05", switch_to_feedback(spec, policy.clone(), S::lit(0.05))?));
        candidates.push(("switch-0.2", switch_to_feedback(spec, policy, S::lit(0.2))?));
    }
    let alpha = MartingaleProgram::zero(spec.dim);
    let t1 = fx.value.grid.t1;

    let mut worst: f64 = 0.0;
    let mut worst_se: f64 = 0.0;
    for (k, probe) in probes.iter().enumerate() {
        let (grid_value, extrapolated) = closed_grid_value(fx, probe)?;
        let grid = TimeGrid::new(S::lit(probe.t), t1, fx.steps_from(probe.t))?;
        let start = SimStart::new(S::lit(probe.t), probe.x.iter().map(|v| S::lit(*v)).collect(), S::zero());
        let mut best: Option<(f64, f64, &str)> = None;
        for (label, program) in &candidates {
            let seed = settings.seed.wrapping_add(k as u64);
            let outcomes = simulate_batch(spec, &start, program, &alpha, &grid, seed, settings.n_paths, |p| {
                let inside = match &spec.domain {
                    Some(d) => !p.divergent && (0..=p.steps()).all(|i| d.delta(p.x_at(i)).map(|v| v >= S::zero()).unwrap_or(false)),
                    None => !p.divergent,
                };
                let f = spec.reward_at(p.terminal_x()).map(|v| v.as_f64()).unwrap_or(f64::NAN);
                (inside, f)
            })?;
            if outcomes.iter().any(|(inside, f)| !inside || !f.is_finite()) {
                continue;
            }
            let (mean, se) = mean_se(&outcomes.iter().map(|o| o.1).collect::<Vec<_>>());
            if best.map_or(true, |b| mean > b.0) {
                best = Some((mean, se, label));
            }
        }
        let Some((mc, se, label)) = best else {
            report.note(format!("probe {:?}: no candidate stays in the closed domain", probe.coords()));
            report.values.push(f64::NAN);
            continue;
        };
        let gap = (grid_value - mc).abs();
        if k == 0 {
            report.estimate = mc;
        }
        worst = worst.max(gap);
        worst_se = worst_se.max(se);
        report.values.push(gap);
        report.note(format!(
            "probe {:?}: grid {grid_value:.6}{}, closed MC {mc:.6} ± {se:.6} ({label})",
            probe.coords(),
            if extrapolated { " (one-sided limit)" } else { "" }
        ));
    }
    report.se = worst_se;
    report.slack = settings.open_closed_tol - worst;
    report.verdict = if report.values.iter().any(|v| v.is_nan()) {
        Verdict::Inconclusive
    } else if worst <= settings.open_closed_tol {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    Ok(report)
}
