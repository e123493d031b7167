//! Sampled checks of the boundary hypotheses: invariance of the feedback
//! û, the inward curve of ǔ, the class-R sufficient condition, and the
//! regularity bound on the state-constrained Hamiltonian.

use thiserror::Error;

use crate::dpp::{VerificationReport, Verdict};
use crate::model::{delta_gradient, project_to_boundary, ModelError, ProblemSpec};
use crate::sde::{simulate_batch, ControlProgram, MartingaleProgram, PathRng, SimError, SimStart, TimeGrid};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BoundaryError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("the point is not on the boundary: δ = {0}")]
    NotOnBoundary(f64),
    #[error("Dδ vanishes at the boundary point")]
    DegenerateNormal,
    #[error("no boundary points found in the declared box")]
    NoBoundaryPoints,
    #[error("inward curve blew up before ε = {0}")]
    BlowUp(f64),
    #[error("invalid input: {0}")]
    Input(String),
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// A boundary point with its inner normal and a neighborhood radius.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryProbe {
    pub x0: Vec<f64>,
    /// `Dδ(x0) / |Dδ(x0)|`.
    pub normal: Vec<f64>,
    pub radius: f64,
}

impl BoundaryProbe {
    /// Requires `|δ(x0)| ≤ tol` and a nonvanishing gradient.
    pub fn new(spec: &ProblemSpec, x0: Vec<f64>, radius: f64, tol: f64) -> Result<BoundaryProbe, BoundaryError> {
        let domain = spec.domain.as_ref().ok_or(ModelError::NoDomain)?;
        let d: f64 = spec.delta_at(&x0)?;
        if d.abs() > tol {
            return Err(BoundaryError::NotOnBoundary(d));
        }
        let g = delta_gradient(domain, &x0)?;
        let n = norm(&g);
        if !(n > 1e-12) {
            return Err(BoundaryError::DegenerateNormal);
        }
        Ok(BoundaryProbe {
            x0,
            normal: g.iter().map(|v| v / n).collect(),
            radius,
        })
    }
}

/// Offsets `ℓ(ε) = x̌(ε) − x0` of the ǔ-driven ODE, with `λ(ε) = ε`.
#[derive(Debug, Clone, PartialEq)]
pub struct InwardCurve {
    pub eps: Vec<f64>,
    pub offsets: Vec<Vec<f64>>,
    pub lambda: Vec<f64>,
}

impl InwardCurve {
    /// `max |ℓ(ε)| / ε` over the samples.
    pub fn ratio_bound(&self) -> f64 {
        self.eps
            .iter()
            .zip(&self.offsets)
            .map(|(e, l)| norm(l) / e)
            .fold(0.0, f64::max)
    }
}

fn checked_drift(spec: &ProblemSpec, x: &[f64], u: &mut [f64], out: &mut [f64]) -> Result<(), BoundaryError> {
    spec.feedback_check_at(x, u)?;
    spec.drift_at(x, u, out).map_err(ModelError::from)?;
    Ok(())
}

/// Solves `x' = μ(x, ǔ(x))`, `x(0) = x0` by classical RK4 with step
/// `ε_min / 10` and records the offsets at the given (positive,
/// increasing) ε samples.
pub fn build_inward_curve(spec: &ProblemSpec, probe: &BoundaryProbe, eps: &[f64]) -> Result<InwardCurve, BoundaryError> {
    if spec.feedback_check.is_none() {
        return Err(ModelError::MissingFeedback("feedback_check").into());
    }
    if eps.is_empty() || eps.iter().any(|e| !(*e > 0.0)) || eps.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(BoundaryError::Input("ε samples must be positive and increasing".into()));
    }
    let d = spec.dim;
    let step = eps[0] / 10.0;
    let mut u = vec![0.0; spec.control_dim()];
    let mut x = probe.x0.clone();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    let mut tmp = vec![0.0; d];
    let mut s = 0.0;
    let mut offsets = Vec::with_capacity(eps.len());
    for &target in eps {
        let pieces = ((target - s) / step).ceil().max(1.0) as usize;
        let h = (target - s) / pieces as f64;
        for _ in 0..pieces {
            checked_drift(spec, &x, &mut u, &mut k1)?;
            tmp.iter_mut().zip(&x).zip(&k1).for_each(|((t, x), k)| *t = x + 0.5 * h * k);
            checked_drift(spec, &tmp, &mut u, &mut k2)?;
            tmp.iter_mut().zip(&x).zip(&k2).for_each(|((t, x), k)| *t = x + 0.5 * h * k);
            checked_drift(spec, &tmp, &mut u, &mut k3)?;
            tmp.iter_mut().zip(&x).zip(&k3).for_each(|((t, x), k)| *t = x + h * k);
            checked_drift(spec, &tmp, &mut u, &mut k4)?;
            for j in 0..d {
                x[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(BoundaryError::BlowUp(target));
            }
        }
        s = target;
        offsets.push(x.iter().zip(&probe.x0).map(|(a, b)| a - b).collect());
    }
    Ok(InwardCurve {
        eps: eps.to_vec(),
        offsets,
        lambda: eps.to_vec(),
    })
}

/// Simulation settings for [`check_feedback_invariance`].
#[derive(Debug, Clone, PartialEq)]
pub struct InvarianceSettings {
    pub n_paths: usize,
    pub steps: usize,
    pub seed: u64,
}

impl Default for InvarianceSettings {
    fn default() -> Self {
        InvarianceSettings {
            n_paths: 10_000,
            steps: 100,
            seed: 0,
        }
    }
}

/// Simulates the û closed loop on `[0, T]` from each probe and counts the
/// path nodes with `δ(X) ≤ 0`. Passes iff there are none.
pub fn check_feedback_invariance(
    spec: &ProblemSpec,
    probes: &[Vec<f64>],
    settings: &InvarianceSettings,
) -> Result<VerificationReport, BoundaryError> {
    let mut report = VerificationReport::new("feedback_invariance", probes.first().cloned().unwrap_or_default(), settings.n_paths, settings.seed);
    let Some(domain) = spec.domain.as_ref() else {
        report.estimate = 0.0;
        report.slack = 0.0;
        report.verdict = Verdict::Pass;
        report.note("no domain: invariance holds vacuously");
        return Ok(report);
    };
    let law = spec
        .feedback_hat
        .as_ref()
        .ok_or(ModelError::MissingFeedback("feedback_hat"))?;
    let program = ControlProgram::law(law);
    let alpha = MartingaleProgram::zero(spec.dim);
    let grid = TimeGrid::new(0.0, spec.horizon, settings.steps)?;
    let (mut bad, mut total) = (0usize, 0usize);
    for (k, probe) in probes.iter().enumerate() {
        let start = SimStart::new(0.0, probe.clone(), 0.0);
        let counts = simulate_batch(spec, &start, &program, &alpha, &grid, settings.seed.wrapping_add(k as u64), settings.n_paths, |p| {
            (0..=p.steps())
                .filter(|&i| p.divergent || domain.delta(p.x_at(i)).map(|v: f64| v <= 0.0).unwrap_or(true))
                .count()
        })?;
        let here: usize = counts.iter().sum();
        if here > 0 {
            report.note(format!("probe {probe:?}: {here} nodes with δ ≤ 0"));
        }
        bad += here;
        total += settings.n_paths * (settings.steps + 1);
    }
    let fraction = bad as f64 / total.max(1) as f64;
    report.estimate = fraction;
    report.slack = -fraction;
    report.values = vec![bad as f64, total as f64];
    report.verdict = if bad == 0 { Verdict::Pass } else { Verdict::Fail };
    Ok(report)
}

/// Sampling settings for [`check_class_r_sufficient`].
#[derive(Debug, Clone, PartialEq)]
pub struct ClassRConfig {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// Uniform draws projected onto the boundary.
    pub samples: usize,
    /// Neighborhood radius r.
    pub radius: f64,
    /// Neighborhood draws per boundary point.
    pub neighbors: usize,
    /// Bound on the sampled |σ(y, ǔ(y))|.
    pub tol: f64,
    pub seed: u64,
}

impl ClassRConfig {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> ClassRConfig {
        ClassRConfig {
            lo,
            hi,
            samples: 1000,
            radius: 0.05,
            neighbors: 8,
            tol: 1e-9,
            seed: 0,
        }
    }
}

/// Samples boundary points in the box (uniform draws, Newton-projected
/// onto `{δ = 0}`, kept when `|δ| ≤ 1e-3·diameter`) and their
/// neighborhoods. Reports `ι̂ = min μ(z, ǔ(z))ᵀDδ(y)` over neighbors `z`
/// and `σ̂ = max |σ(y', ǔ(y'))|` over neighbors `y'` in the closed domain;
/// passes iff `ι̂ > 0` and `σ̂ ≤ tol`.
pub fn check_class_r_sufficient(spec: &ProblemSpec, cfg: &ClassRConfig) -> Result<VerificationReport, BoundaryError> {
    let domain = spec.domain.as_ref().ok_or(ModelError::NoDomain)?;
    if spec.feedback_check.is_none() {
        return Err(ModelError::MissingFeedback("feedback_check").into());
    }
    let d = spec.dim;
    if cfg.lo.len() != d || cfg.hi.len() != d || cfg.lo.iter().zip(&cfg.hi).any(|(l, h)| !(l < h)) {
        return Err(BoundaryError::Input("sampling box must have lo < hi in every coordinate".into()));
    }
    let diameter = norm(&cfg.lo.iter().zip(&cfg.hi).map(|(l, h)| h - l).collect::<Vec<_>>());
    let tol_b = 1e-3 * diameter;
    let in_box = |z: &[f64]| z.iter().zip(cfg.lo.iter().zip(&cfg.hi)).all(|(v, (l, h))| v >= l && v <= h);
    let mut rng = PathRng::new(cfg.seed, 0, d);

    let mut boundary = Vec::new();
    let mut x = vec![0.0; d];
    for _ in 0..cfg.samples {
        for j in 0..d {
            x[j] = cfg.lo[j] + (cfg.hi[j] - cfg.lo[j]) * rng.uniform();
        }
        if let Some(z) = project_to_boundary(domain, &x)? {
            if in_box(&z) && domain.delta(&z).map_err(ModelError::from)?.abs() <= tol_b {
                boundary.push(z);
            }
        }
    }
    if boundary.is_empty() {
        return Err(BoundaryError::NoBoundaryPoints);
    }

    let mut ball = |center: &[f64]| -> Vec<f64> {
        let mut dir = vec![0.0; d];
        rng.fill(&mut dir);
        let n = norm(&dir).max(1e-300);
        let r = cfg.radius * rng.uniform().powf(1.0 / d as f64);
        center.iter().zip(&dir).map(|(c, v)| c + r * v / n).collect()
    };
    let mut u = vec![0.0; spec.control_dim()];
    let mut mu = vec![0.0; d];
    let mut sig = vec![0.0; d * d];
    let (mut iota, mut iota_at) = (f64::INFINITY, Vec::new());
    let (mut sigma, mut sigma_at) = (0.0f64, Vec::new());
    for y in &boundary {
        let grad = delta_gradient(domain, y)?;
        let mut neighbors = vec![y.clone()];
        neighbors.extend((0..cfg.neighbors).map(|_| ball(y)));
        for z in &neighbors {
            spec.feedback_check_at(z, &mut u)?;
            spec.drift_at(z, &u, &mut mu).map_err(ModelError::from)?;
            let v: f64 = mu.iter().zip(&grad).map(|(a, b)| a * b).sum();
            if v < iota {
                iota = v;
                iota_at = z.clone();
            }
            if domain.delta(z).map_err(ModelError::from)? >= 0.0 || z == y {
                spec.diffusion_at(z, &u, &mut sig).map_err(ModelError::from)?;
                let s = sig.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                if s > sigma {
                    sigma = s;
                    sigma_at = z.clone();
                }
            }
        }
    }
    let mut report = VerificationReport::new("class_r_sufficient", boundary[0].clone(), boundary.len(), cfg.seed);
    report.estimate = iota;
    report.slack = iota.min(cfg.tol - sigma);
    report.values = vec![iota, sigma];
    report.note(format!("{} boundary points sampled, tol_b = {tol_b:e}", boundary.len()));
    let pass = iota > 0.0 && sigma <= cfg.tol;
    report.verdict = if pass { Verdict::Pass } else { Verdict::Fail };
    if !(iota > 0.0) {
        report.note(format!("ι̂ = {iota} at {iota_at:?}"));
    }
    if sigma > cfg.tol {
        report.note(format!("σ̂ = {sigma} at {sigma_at:?}"));
    }
    Ok(report)
}

/// Sampling settings for [`check_hamiltonian_regularity`].
#[derive(Debug, Clone, PartialEq)]
pub struct RegularityConfig {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// Total tuples; half are drawn in the inner half-box, half in the
    /// full box.
    pub budget: usize,
    pub seed: u64,
}

impl RegularityConfig {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, budget: usize, seed: u64) -> RegularityConfig {
        RegularityConfig { lo, hi, budget, seed }
    }
}

struct Tuple {
    x: Vec<f64>,
    y: Vec<f64>,
    p: Vec<f64>,
    q: Vec<f64>,
    /// Symmetric `2d × 2d`, row-major.
    big_q: Vec<f64>,
    n: f64,
}

fn column(sig: &[f64], d: usize, i: usize) -> impl Iterator<Item = f64> + '_ {
    (0..d).map(move |j| sig[j * d + i])
}

/// Upper bound on `H(y,q,Y) − H(x,p,X)` for `H(x,p,A) = inf_u(−μ·p −
/// ½tr(σσᵀA))` over the pairs allowed by the matrix inequality with η → 0:
/// testing it on `(σⁱ(x), σⁱ(y))` bounds the second-order part by
/// `n²|σⁱ(x) − σⁱ(y)|² + (σⁱ(x), σⁱ(y))ᵀQ(σⁱ(x), σⁱ(y))` per column.
fn lhs(spec: &ProblemSpec, controls: &[Vec<f64>], t: &Tuple) -> Result<f64, ModelError> {
    let d = spec.dim;
    let (mut mx, mut my) = (vec![0.0; d], vec![0.0; d]);
    let (mut sx, mut sy) = (vec![0.0; d * d], vec![0.0; d * d]);
    let mut stacked = vec![0.0; 2 * d];
    let mut best = f64::NEG_INFINITY;
    for u in controls {
        spec.drift_at(&t.x, u, &mut mx)?;
        spec.drift_at(&t.y, u, &mut my)?;
        spec.diffusion_at(&t.x, u, &mut sx)?;
        spec.diffusion_at(&t.y, u, &mut sy)?;
        let mut v = 0.0;
        for j in 0..d {
            v += (mx[j] - my[j]) * t.q[j] + mx[j] * (t.p[j] - t.q[j]);
        }
        let mut second = 0.0;
        for i in 0..d {
            for (k, (a, b)) in column(&sx, d, i).zip(column(&sy, d, i)).enumerate() {
                stacked[k] = a;
                stacked[d + k] = b;
                second += t.n * t.n * (a - b) * (a - b);
            }
            for r in 0..2 * d {
                for c in 0..2 * d {
                    second += stacked[r] * t.big_q[r * 2 * d + c] * stacked[c];
                }
            }
        }
        best = best.max(v + 0.5 * second);
    }
    Ok(best)
}

fn rhs(t: &Tuple) -> f64 {
    let dxy = norm(&t.x.iter().zip(&t.y).map(|(a, b)| a - b).collect::<Vec<_>>());
    let dpq = norm(&t.p.iter().zip(&t.q).map(|(a, b)| a - b).collect::<Vec<_>>());
    let nx = norm(&t.x);
    dxy * (1.0 + norm(&t.q) + t.n * t.n * dxy) + (1.0 + nx) * dpq + (1.0 + nx * nx) * norm(&t.big_q)
}

/// Smallest α consistent with `count` sampled tuples with `x` in the box
/// `[lo, hi]` intersected with the closed domain.
fn alpha_hat(
    spec: &ProblemSpec,
    controls: &[Vec<f64>],
    lo: &[f64],
    hi: &[f64],
    count: usize,
    rng: &mut PathRng,
) -> Result<(f64, Vec<f64>), BoundaryError> {
    let d = spec.dim;
    let inside = |z: &[f64]| -> Result<bool, ModelError> {
        match &spec.domain {
            Some(dom) => Ok(dom.contains_closure(z)?),
            None => Ok(true),
        }
    };
    let (mut best, mut at) = (0.0f64, Vec::new());
    let mut drawn = 0;
    let mut tries = 0usize;
    while drawn < count {
        tries += 1;
        if tries > 100 * count.max(1) {
            return Err(BoundaryError::Input("sampling box misses the closed domain".into()));
        }
        let x: Vec<f64> = (0..d).map(|j| lo[j] + (hi[j] - lo[j]) * rng.uniform()).collect();
        let mut dir = vec![0.0; d];
        rng.fill(&mut dir);
        let len = norm(&dir).max(1e-300);
        let r = rng.uniform();
        let y: Vec<f64> = x.iter().zip(&dir).map(|(a, v)| a + r * v / len).collect();
        if !inside(&x)? || !inside(&y)? {
            continue;
        }
        let mut p = vec![0.0; d];
        let mut q = vec![0.0; d];
        rng.fill(&mut p);
        rng.fill(&mut q);
        let mut big_q = vec![0.0; 4 * d * d];
        rng.fill(&mut big_q);
        for a in 0..2 * d {
            for b in 0..a {
                let s = 0.5 * (big_q[a * 2 * d + b] + big_q[b * 2 * d + a]);
                big_q[a * 2 * d + b] = s;
                big_q[b * 2 * d + a] = s;
            }
        }
        let n = (10.0 * rng.uniform()).ceil().clamp(1.0, 10.0);
        let t = Tuple { x, y, p, q, big_q, n };
        let ratio = lhs(spec, controls, &t)?.max(0.0) / rhs(&t);
        drawn += 1;
        if !ratio.is_finite() {
            return Ok((f64::INFINITY, t.x));
        }
        if ratio > best {
            best = ratio;
            at = t.x;
        }
    }
    Ok((best, at))
}

/// Estimates the smallest constant α in the regularity bound from sampled
/// tuples `(x, y, p, q, Q, n)`. Half of the budget samples `x` in the inner
/// half-box and half in the full box; passes iff α̂ is finite and the
/// full-box estimate stays below twice the inner one.
pub fn check_hamiltonian_regularity(spec: &ProblemSpec, cfg: &RegularityConfig) -> Result<VerificationReport, BoundaryError> {
    let d = spec.dim;
    if cfg.lo.len() != d || cfg.hi.len() != d || cfg.lo.iter().zip(&cfg.hi).any(|(l, h)| !(l < h)) {
        return Err(BoundaryError::Input("sampling box must have lo < hi in every coordinate".into()));
    }
    let controls = spec.controls.grid::<f64>();
    let mut rng = PathRng::new(cfg.seed, 0, d);
    let (inner_lo, inner_hi): (Vec<f64>, Vec<f64>) = cfg
        .lo
        .iter()
        .zip(&cfg.hi)
        .map(|(l, h)| {
            let (c, w) = (0.5 * (l + h), 0.25 * (h - l));
            (c - w, c + w)
        })
        .unzip();
    let half = (cfg.budget / 2).max(1);
    let (inner, inner_at) = alpha_hat(spec, &controls, &inner_lo, &inner_hi, half, &mut rng)?;
    let (full, full_at) = alpha_hat(spec, &controls, &cfg.lo, &cfg.hi, cfg.budget.saturating_sub(half).max(1), &mut rng)?;
    let alpha = inner.max(full);
    let at = if full >= inner { full_at } else { inner_at };
    let mut report = VerificationReport::new("hamiltonian_regularity", at, cfg.budget, cfg.seed);
    report.estimate = alpha;
    report.values = vec![inner, full];
    report.slack = 2.0 * inner - full;
    let stable = full < 2.0 * inner || full == 0.0;
    report.verdict = if alpha.is_finite() && stable { Verdict::Pass } else { Verdict::Fail };
    if !stable {
        report.note(format!("α̂ grows from {inner} on the inner half-box to {full} on the full box"));
    }
    Ok(report)
}
