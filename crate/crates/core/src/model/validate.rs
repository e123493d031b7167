//! Sampled checks of the standing assumptions on a problem.
//!
//! Lipschitz and growth conditions cannot be decided symbolically. Each
//! check estimates its constant twice, once on the declared box and once on
//! the concentric box of half the width, and warns when the estimate keeps
//! growing with the box (ratio above [`GROWTH_RATIO`]).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::distance::domain_distance;
use super::problem::{ModelError, ProblemSpec};

/// Full-box over half-box ratio above which a sampled constant is treated
/// as unbounded.
pub const GROWTH_RATIO: f64 = 1.5;
/// Ratio below which |f| counts as bounded on the box.
pub const BOUNDED_RATIO: f64 = 1.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Warn,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationCheck {
    pub name: String,
    pub status: CheckStatus,
    /// Named numeric evidence, e.g. the full- and half-box estimates.
    pub evidence: Vec<(String, f64)>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub seed: u64,
    pub checks: Vec<ValidationCheck>,
    /// Sampled states, in draw order.
    pub probe_points: Vec<Vec<f64>>,
}

impl ValidationReport {
    pub fn status(&self) -> CheckStatus {
        self.checks.iter().map(|c| c.status).max().unwrap_or(CheckStatus::Pass)
    }

    pub fn check(&self, name: &str) -> Option<&ValidationCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Either f is bounded or μ, σ have linear growth.
    pub fn growth_assumption_holds(&self) -> bool {
        let ok = |n: &str| self.check(n).map(|c| c.status == CheckStatus::Pass).unwrap_or(false);
        ok("reward_bounded") || ok("linear_growth")
    }
}

/// Region over which the assumptions are sampled.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// Samples per nested box.
    pub samples: usize,
    /// Points declared to lie in the domain.
    pub interior_probes: Vec<Vec<f64>>,
    /// Points declared to lie outside the closed domain.
    pub exterior_probes: Vec<Vec<f64>>,
}

impl ValidationBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> ValidationBox {
        ValidationBox {
            lo,
            hi,
            samples: 2000,
            interior_probes: Vec::new(),
            exterior_probes: Vec::new(),
        }
    }

    pub fn cube(dim: usize, lo: f64, hi: f64) -> ValidationBox {
        ValidationBox::new(vec![lo; dim], vec![hi; dim])
    }

    fn half(&self) -> (Vec<f64>, Vec<f64>) {
        let lo = self
            .lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| 0.5 * (l + h) - 0.25 * (h - l))
            .collect();
        let hi = self
            .lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| 0.5 * (l + h) + 0.25 * (h - l))
            .collect();
        (lo, hi)
    }
}

struct Sampler<'a> {
    spec: &'a ProblemSpec,
    controls: Vec<Vec<f64>>,
    failures: usize,
}

impl Sampler<'_> {
    fn coeff_norms(&mut self, x: &[f64], u: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
        let d = self.spec.dim;
        let mut mu = vec![0.0; d];
        let mut sig = vec![0.0; d * d];
        if self.spec.drift_at(x, u, &mut mu).is_err() || self.spec.diffusion_at(x, u, &mut sig).is_err() {
            self.failures += 1;
            return None;
        }
        Some((mu, sig))
    }

    fn constraint_value(&mut self, x: &[f64]) -> Option<f64> {
        let y = match &self.spec.domain {
            Some(dom) => domain_distance(dom, x).unwrap_or(0.0),
            None => 1.0,
        };
        match self.spec.constraint_at(x, y) {
            Ok(v) => Some(v),
            Err(_) => {
                self.failures += 1;
                None
            }
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn diff_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

#[derive(Default, Clone, Copy)]
struct Estimates {
    lip_mu: f64,
    lip_sigma: f64,
    linear: f64,
    quad_f: f64,
    quad_g: f64,
    sup_f: f64,
}

fn sample_region(
    s: &mut Sampler<'_>,
    rng: &mut ChaCha8Rng,
    lo: &[f64],
    hi: &[f64],
    n: usize,
    points: &mut Vec<Vec<f64>>,
) -> Estimates {
    let mut est = Estimates::default();
    let d = lo.len();
    for _ in 0..n {
        let x: Vec<f64> = (0..d).map(|i| rng.gen_range(lo[i]..=hi[i])).collect();
        let step: Vec<f64> = (0..d)
            .map(|i| (hi[i] - lo[i]).max(1e-12) * 1e-3 * rng.gen_range(-1.0..=1.0))
            .collect();
        let x2: Vec<f64> = x.iter().zip(&step).map(|(a, b)| a + b).collect();
        let dx = norm(&step);
        let controls = s.controls.clone();
        for u in &controls {
            if let (Some((mu, sig)), Some((mu2, sig2))) = (s.coeff_norms(&x, u), s.coeff_norms(&x2, u)) {
                if dx > 0.0 {
                    est.lip_mu = est.lip_mu.max(diff_norm(&mu, &mu2) / dx);
                    est.lip_sigma = est.lip_sigma.max(diff_norm(&sig, &sig2) / dx);
                }
                est.linear = est.linear.max((norm(&mu) + norm(&sig)) / (1.0 + norm(&x)));
            }
        }
        let r2 = 1.0 + x.iter().map(|a| a * a).sum::<f64>();
        match s.spec.reward_at(&x) {
            Ok(f) => {
                est.quad_f = est.quad_f.max(f.abs() / r2);
                est.sup_f = est.sup_f.max(f.abs());
            }
            Err(_) => s.failures += 1,
        }
        if let Some(g) = s.constraint_value(&x) {
            est.quad_g = est.quad_g.max(g.abs() / r2);
        }
        points.push(x);
    }
    est
}

fn growth_check(name: &str, full: f64, half: f64, limit: f64, what: &str) -> ValidationCheck {
    let ratio = if half > 0.0 {
        full / half
    } else if full > 0.0 {
        f64::INFINITY
    } else {
        1.0
    };
    let status = if !full.is_finite() {
        CheckStatus::Fail
    } else if ratio > limit {
        CheckStatus::Warn
    } else {
        CheckStatus::Pass
    };
    let message = match status {
        CheckStatus::Pass => format!("{what}: estimate {full:.4} stable over nested boxes"),
        CheckStatus::Warn => format!("{what}: estimate grows with the box ({half:.4} -> {full:.4})"),
        CheckStatus::Fail => format!("{what}: non-finite estimate"),
    };
    ValidationCheck {
        name: name.to_string(),
        status,
        evidence: vec![("full_box".into(), full), ("half_box".into(), half), ("ratio".into(), ratio)],
        message,
    }
}

/// Samples the standing assumptions of `spec` over `region`. Pure in
/// `(spec, region, seed)`.
pub fn validate_problem(spec: &ProblemSpec, region: &ValidationBox, seed: u64) -> Result<ValidationReport, ModelError> {
    spec.check()?;
    if region.lo.len() != spec.dim
        || region.hi.len() != spec.dim
        || region.samples == 0
        || region.lo.iter().zip(&region.hi).any(|(l, h)| !(l <= h) || !l.is_finite() || !h.is_finite())
    {
        return Err(ModelError::EmptyBox);
    }
    let mut controls: Vec<Vec<f64>> = spec.controls.grid();
    if controls.len() > 64 {
        let stride = controls.len().div_ceil(64);
        let last = controls.last().cloned();
        controls = controls.into_iter().step_by(stride).collect();
        if let Some(l) = last {
            if controls.last() != Some(&l) {
                controls.push(l);
            }
        }
    }
    let mut sampler = Sampler {
        spec,
        controls,
        failures: 0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::new();
    let full = sample_region(&mut sampler, &mut rng, &region.lo, &region.hi, region.samples, &mut points);
    let (hlo, hhi) = region.half();
    let half = sample_region(&mut sampler, &mut rng, &hlo, &hhi, region.samples, &mut points);

    let mut checks = vec![
        growth_check("drift_lipschitz", full.lip_mu, half.lip_mu, GROWTH_RATIO, "Lipschitz constant of mu"),
        growth_check(
            "diffusion_lipschitz",
            full.lip_sigma,
            half.lip_sigma,
            GROWTH_RATIO,
            "Lipschitz constant of sigma",
        ),
        growth_check("linear_growth", full.linear, half.linear, GROWTH_RATIO, "(|mu|+|sigma|)/(1+|x|)"),
        growth_check("reward_quadratic_growth", full.quad_f, half.quad_f, GROWTH_RATIO, "|f|/(1+|x|^2)"),
        growth_check(
            "constraint_quadratic_growth",
            full.quad_g,
            half.quad_g,
            GROWTH_RATIO,
            "|g|/(1+|x|^2)",
        ),
    ];
    let mut bounded = growth_check("reward_bounded", full.sup_f, half.sup_f, BOUNDED_RATIO, "sup |f|");
    if bounded.status == CheckStatus::Warn {
        bounded.message = format!("sup |f| grows with the box ({:.4} -> {:.4})", half.sup_f, full.sup_f);
    }
    checks.push(bounded);

    if let Some(dom) = &spec.domain {
        let mut wrong = Vec::new();
        let mut failures = 0usize;
        for p in &region.interior_probes {
            match dom.delta(p) {
                Ok(v) if v > 0.0 => {}
                Ok(_) => wrong.push(p.clone()),
                Err(_) => failures += 1,
            }
        }
        for p in &region.exterior_probes {
            match dom.delta(p) {
                Ok(v) if v < 0.0 => {}
                Ok(_) => wrong.push(p.clone()),
                Err(_) => failures += 1,
            }
        }
        for p in &points {
            if dom.delta(p).is_err() {
                failures += 1;
            }
        }
        let status = if !wrong.is_empty() {
            CheckStatus::Fail
        } else if failures > 0 {
            CheckStatus::Warn
        } else {
            CheckStatus::Pass
        };
        let message = if let Some(w) = wrong.first() {
            format!("delta has the wrong sign at declared probe {w:?}")
        } else if failures > 0 {
            format!("delta failed to evaluate at {failures} points")
        } else {
            format!(
                "delta consistent at {} declared probes",
                region.interior_probes.len() + region.exterior_probes.len()
            )
        };
        checks.push(ValidationCheck {
            name: "domain_sign".into(),
            status,
            evidence: vec![
                ("wrong_sign".into(), wrong.len() as f64),
                ("evaluation_failures".into(), failures as f64),
            ],
            message,
        });
    }

    let asserted = spec.reward_lsc_asserted && spec.constraint_usc_asserted;
    checks.push(ValidationCheck {
        name: "semicontinuity".into(),
        status: if asserted { CheckStatus::Pass } else { CheckStatus::Warn },
        evidence: vec![
            ("reward_lsc_asserted".into(), f64::from(u8::from(spec.reward_lsc_asserted))),
            ("constraint_usc_asserted".into(), f64::from(u8::from(spec.constraint_usc_asserted))),
        ],
        message: if asserted {
            "semicontinuity of f and g asserted by the user".into()
        } else {
            "semicontinuity of f and g is not machine-checked and was not asserted".into()
        },
    });

    checks.push(ValidationCheck {
        name: "evaluation".into(),
        status: if sampler.failures == 0 {
            CheckStatus::Pass
        } else {
            CheckStatus::Warn
        },
        evidence: vec![("failures".into(), sampler.failures as f64)],
        message: format!("{} coefficient evaluations failed in the box", sampler.failures),
    });

    Ok(ValidationReport {
        seed,
        checks,
        probe_points: points,
    })
}
