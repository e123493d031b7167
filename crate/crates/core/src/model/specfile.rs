//! Problem-spec files.
//!
//! A spec file is TOML with five sections; expressions are quoted strings in
//! the coefficient language of [`crate::model::expr`].
//!
//! ```toml
//! [dynamics]
//! dim = 1
//! horizon = 1.0
//! drift = ["u1"]            # one entry per state coordinate
//! diffusion = ["1"]         # row-major dim × dim
//! discount = 0.0            # optional, default 0
//! log_stepping = false      # optional, default false
//!
//! [objective]
//! reward = "x1"
//! lsc_asserted = true       # optional user assertion
//!
//! [constraint]
//! g = "indicator_leq0(x1)"
//! usc_asserted = true       # optional user assertion
//!
//! [controls]
//! kind = "box"              # or "points" with points = [[-1.0], [1.0]]
//! lo = [-1.0]
//! hi = [1.0]
//! points_per_axis = 21
//!
//! [domain]                  # optional section
//! kind = "halfspace"        # halfspace | box | ball | level
//! normal = [1.0]
//! offset = 0.0
//! feedback_hat = ["0"]      # optional invariance feedback
//! feedback_check = ["x1"]   # optional inward feedback
//! ```
//!
//! `box` domains take `lo`/`hi`, `ball` domains `center`/`radius`, and
//! `level` domains an expression `delta` that is positive inside. Unknown
//! keys are rejected. Syntax errors carry the line and column reported by
//! the TOML reader; semantic errors name the offending section.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::expr::Expr;
use super::problem::{ControlSet, Domain, ModelError, ProblemSpec};

#[derive(Debug, Error)]
pub enum SpecFileError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Syntax(String),
    #[error("[{section}] {source}")]
    Invalid {
        section: &'static str,
        #[source]
        source: ModelError,
    },
    #[error("[{section}] {message}")]
    Missing { section: &'static str, message: String },
}

impl SpecFileError {
    /// 1-based line of a syntax error, when known.
    pub fn line(&self) -> Option<usize> {
        match self {
            SpecFileError::Syntax(msg) => {
                let idx = msg.find("line ")?;
                msg[idx + 5..]
                    .split(|c: char| !c.is_ascii_digit())
                    .next()
                    .and_then(|n| n.parse().ok())
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileSpec {
    dynamics: Dynamics,
    objective: Objective,
    constraint: Constraint,
    controls: Controls,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    domain: Option<DomainSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Dynamics {
    dim: usize,
    horizon: f64,
    drift: Vec<String>,
    diffusion: Vec<String>,
    #[serde(default)]
    discount: f64,
    #[serde(default)]
    log_stepping: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Objective {
    reward: String,
    #[serde(default)]
    lsc_asserted: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Constraint {
    g: String,
    #[serde(default)]
    usc_asserted: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "lowercase")]
enum Controls {
    Box {
        lo: Vec<f64>,
        hi: Vec<f64>,
        points_per_axis: usize,
    },
    Points {
        points: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DomainSection {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    normal: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    offset: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lo: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hi: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    center: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    delta: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    feedback_hat: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    feedback_check: Option<Vec<String>>,
}

fn missing(section: &'static str, key: &str, kind: &str) -> SpecFileError {
    SpecFileError::Missing {
        section,
        message: format!("key `{key}` is required for kind `{kind}`"),
    }
}

fn invalid(section: &'static str) -> impl Fn(ModelError) -> SpecFileError {
    move |source| SpecFileError::Invalid { section, source }
}

fn strs(v: &[String]) -> Vec<&str> {
    v.iter().map(String::as_str).collect()
}

impl FileSpec {
    fn into_problem(self) -> Result<ProblemSpec, SpecFileError> {
        let controls = match self.controls {
            Controls::Box {
                lo,
                hi,
                points_per_axis,
            } => ControlSet::boxed(lo, hi, points_per_axis),
            Controls::Points { points } => ControlSet::points(points),
        }
        .map_err(invalid("controls"))?;
        let dy = &self.dynamics;
        let mut spec = ProblemSpec::new(
            dy.dim,
            dy.horizon,
            &strs(&dy.drift),
            &strs(&dy.diffusion),
            &self.objective.reward,
            &self.constraint.g,
            controls,
        )
        .map_err(|e| {
            let section = match &e {
                ModelError::Parse { what, .. } if what == "reward" => "objective",
                ModelError::Parse { what, .. } if what == "constraint" => "constraint",
                ModelError::ForbiddenVariable { what, .. } if what == "reward" => "objective",
                ModelError::ForbiddenVariable { what, .. } if what == "constraint" => "constraint",
                _ => "dynamics",
            };
            SpecFileError::Invalid { section, source: e }
        })?;
        spec = spec.with_discount(dy.discount).map_err(invalid("dynamics"))?;
        spec = spec.with_log_stepping(dy.log_stepping);
        spec.reward_lsc_asserted = self.objective.lsc_asserted;
        spec.constraint_usc_asserted = self.constraint.usc_asserted;

        if let Some(d) = self.domain {
            let kind = d.kind.as_str();
            let domain = match kind {
                "halfspace" => Domain::HalfSpace {
                    normal: d.normal.clone().ok_or_else(|| missing("domain", "normal", kind))?,
                    offset: d.offset.unwrap_or(0.0),
                },
                "box" => Domain::Box {
                    lo: d.lo.clone().ok_or_else(|| missing("domain", "lo", kind))?,
                    hi: d.hi.clone().ok_or_else(|| missing("domain", "hi", kind))?,
                },
                "ball" => Domain::Ball {
                    center: d.center.clone().ok_or_else(|| missing("domain", "center", kind))?,
                    radius: d.radius.ok_or_else(|| missing("domain", "radius", kind))?,
                },
                "level" => {
                    let text = d.delta.as_deref().ok_or_else(|| missing("domain", "delta", kind))?;
                    Domain::Level(Expr::parse(text).map_err(|source| SpecFileError::Invalid {
                        section: "domain",
                        source: ModelError::Parse {
                            what: "delta".into(),
                            source,
                        },
                    })?)
                }
                other => {
                    return Err(SpecFileError::Missing {
                        section: "domain",
                        message: format!("unknown kind `{other}` (expected halfspace, box, ball or level)"),
                    })
                }
            };
            spec = spec.with_domain(domain).map_err(invalid("domain"))?;
            if let Some(law) = &d.feedback_hat {
                spec = spec.with_feedback_hat(&strs(law)).map_err(invalid("domain"))?;
            }
            if let Some(law) = &d.feedback_check {
                spec = spec.with_feedback_check(&strs(law)).map_err(invalid("domain"))?;
            }
        }
        Ok(spec)
    }

    fn from_problem(spec: &ProblemSpec) -> FileSpec {
        let show = |v: &[Expr]| v.iter().map(|e| e.to_string()).collect::<Vec<_>>();
        let controls = match &spec.controls {
            ControlSet::Box {
                lo,
                hi,
                points_per_axis,
            } => Controls::Box {
                lo: lo.clone(),
                hi: hi.clone(),
                points_per_axis: *points_per_axis,
            },
            ControlSet::Points { points, .. } => Controls::Points { points: points.clone() },
        };
        let domain = spec.domain.as_ref().map(|d| {
            let mut sec = DomainSection {
                kind: String::new(),
                normal: None,
                offset: None,
                lo: None,
                hi: None,
                center: None,
                radius: None,
                delta: None,
                feedback_hat: spec.feedback_hat.as_deref().map(show),
                feedback_check: spec.feedback_check.as_deref().map(show),
            };
            match d {
                Domain::HalfSpace { normal, offset } => {
                    sec.kind = "halfspace".into();
                    sec.normal = Some(normal.clone());
                    sec.offset = Some(*offset);
                }
                Domain::Box { lo, hi } => {
                    sec.kind = "box".into();
                    sec.lo = Some(lo.clone());
                    sec.hi = Some(hi.clone());
                }
                Domain::Ball { center, radius } => {
                    sec.kind = "ball".into();
                    sec.center = Some(center.clone());
                    sec.radius = Some(*radius);
                }
                Domain::Level(e) => {
                    sec.kind = "level".into();
                    sec.delta = Some(e.to_string());
                }
            }
            sec
        });
        FileSpec {
            dynamics: Dynamics {
                dim: spec.dim,
                horizon: spec.horizon,
                drift: show(&spec.drift),
                diffusion: show(&spec.diffusion),
                discount: spec.discount,
                log_stepping: spec.log_stepping,
            },
            objective: Objective {
                reward: spec.reward.to_string(),
                lsc_asserted: spec.reward_lsc_asserted,
            },
            constraint: Constraint {
                g: spec.constraint.to_string(),
                usc_asserted: spec.constraint_usc_asserted,
            },
            controls,
            domain,
        }
    }
}

impl ProblemSpec {
    /// Parses a spec file body.
    pub fn from_spec_str(text: &str) -> Result<ProblemSpec, SpecFileError> {
        let file: FileSpec = toml::from_str(text).map_err(|e| SpecFileError::Syntax(e.to_string()))?;
        file.into_problem()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<ProblemSpec, SpecFileError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| SpecFileError::Io {
            path: path.display().to_string(),
            source,
        })?;
        ProblemSpec::from_spec_str(&text)
    }

    /// Canonical spec-file rendering; expressions are printed fully
    /// parenthesized, so re-parsing yields an identical problem.
    pub fn to_spec_string(&self) -> String {
        toml::to_string(&FileSpec::from_problem(self)).expect("spec serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GEOMETRIC: &str = r#"
[dynamics]
dim = 1
horizon = 1
drift = ["u1*x1"]
diffusion = ["x1"]
log_stepping = true

[objective]
reward = "x1"

[constraint]
g = "indicator_leq0(y)"

[controls]
kind = "box"
lo = [0.0]
hi = [1.0]
points_per_axis = 11

[domain]
kind = "halfspace"
normal = [1.0]
offset = 0.0
feedback_hat = ["0"]
"#;

    #[test]
    fn parses_full_spec() {
        let s = ProblemSpec::from_spec_str(GEOMETRIC).unwrap();
        assert_eq!(s.dim, 1);
        assert!(s.log_stepping);
        assert!(s.constraint_uses_y());
        assert!(s.domain.is_some() && s.feedback_hat.is_some());
        assert_eq!(s.delta_at(&[0.3_f64]).unwrap(), 0.3);
    }

    #[test]
    fn canonical_rendering_round_trips() {
        let s = ProblemSpec::from_spec_str(GEOMETRIC).unwrap();
        let again = ProblemSpec::from_spec_str(&s.to_spec_string()).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn syntax_errors_carry_line_numbers() {
        let broken = GEOMETRIC.replace("horizon = 1", "horizon = = 1");
        let err = ProblemSpec::from_spec_str(&broken).unwrap_err();
        assert_eq!(err.line(), Some(4), "{err}");
        let typo = GEOMETRIC.replace("log_stepping", "log_steping");
        let err = ProblemSpec::from_spec_str(&typo).unwrap_err();
        assert!(err.to_string().contains("log_steping"), "{err}");
    }

    #[test]
    fn semantic_errors_name_the_section() {
        let bad = GEOMETRIC.replace("horizon = 1", "horizon = 0");
        let err = ProblemSpec::from_spec_str(&bad).unwrap_err();
        assert!(err.to_string().starts_with("[dynamics]"), "{err}");
        let bad = GEOMETRIC.replace("reward = \"x1\"", "reward = \"x1 +\"");
        let err = ProblemSpec::from_spec_str(&bad).unwrap_err();
        assert!(err.to_string().starts_with("[objective]"), "{err}");
        let bad = GEOMETRIC.replace("kind = \"halfspace\"", "kind = \"ring\"");
        assert!(ProblemSpec::from_spec_str(&bad).is_err());
    }
}
