use serde::Serialize;

/// Evaluation point `(t, x)` or `(t, x, m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub t: f64,
    pub x: Vec<f64>,
    pub m: Option<f64>,
}

impl Point {
    pub fn new(t: f64, x: Vec<f64>, m: f64) -> Point {
        Point { t, x, m: Some(m) }
    }

    pub fn state(t: f64, x: Vec<f64>) -> Point {
        Point { t, x, m: None }
    }

    /// `[t, x1.., m]`.
    pub fn coords(&self) -> Vec<f64> {
        let mut v = vec![self.t];
        v.extend(&self.x);
        v.extend(self.m);
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Inconclusive,
    Fail,
}

/// Outcome of one check. `slack` is signed so that larger is better.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub name: String,
    pub point: Vec<f64>,
    pub estimate: f64,
    pub se: f64,
    pub slack: f64,
    pub verdict: Verdict,
    pub n: usize,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    /// Check-specific series (δ-gaps, per-probe differences, ...).
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub values: Vec<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl VerificationReport {
    pub fn new(name: &str, point: Vec<f64>, n: usize, seed: u64) -> VerificationReport {
        VerificationReport {
            name: name.to_string(),
            point,
            estimate: f64::NAN,
            se: 0.0,
            slack: f64::NAN,
            verdict: Verdict::Inconclusive,
            n,
            seed,
            delta: None,
            values: Vec::new(),
            notes: Vec::new(),
        }
    }

    /// One-sided inequality verdict: fail when `slack < −(3·SE + 2h)`,
    /// inconclusive when `3·SE` exceeds `scale`, pass otherwise.
    pub fn judge(&mut self, h: f64, scale: f64) {
        let allowance = 3.0 * self.se + 2.0 * h;
        self.verdict = if self.slack.is_nan() {
            Verdict::Inconclusive
        } else if self.slack < -allowance {
            Verdict::Fail
        } else if 3.0 * self.se > scale {
            Verdict::Inconclusive
        } else {
            Verdict::Pass
        };
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}
