//! Pointwise Hamiltonians of the augmented and state-constrained problems.

use super::HamiltonianParams;
use crate::model::{EvalError, ProblemSpec};
use crate::scalar::Real;

/// Minimal value and a minimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianValue<S> {
    pub value: S,
    pub u: Vec<S>,
    /// Martingale control; empty for the state Hamiltonian.
    pub a: Vec<S>,
}

/// Minimizes `−(½ q a² + b a)` over `[−A, A]`. Interior stationary point
/// when the quadratic is convex in `a` (q < 0), otherwise the better box
/// corner, `−A` on ties.
pub fn minimize_martingale_term<S: Real>(q: S, b: S, bound: S) -> (S, S) {
    let phi = |a: S| -((S::lit(0.5) * q * a + b) * a);
    if q < S::zero() {
        let a = (-b / q).max(-bound).min(bound);
        (phi(a), a)
    } else {
        let lo = phi(-bound);
        let hi = phi(bound);
        if lo <= hi {
            (lo, -bound)
        } else {
            (hi, bound)
        }
    }
}

/// `H(x, p, Q) = inf_{(u,a) ∈ U × [−A,A]^d} −L^{u,a}(x, p, Q)` with
/// `L = μ·p_x + ½ tr(σσᵀ Q_xx) + aᵀσᵀ Q_xm + ½ |a|² Q_mm`.
///
/// `p` has `d + 1` entries (x-gradient then the m-derivative, which does not
/// enter), `q` is the row-major `(d+1) × (d+1)` Hessian. The minimum over U
/// is exact on the control grid; ties keep the first control in
/// lexicographic order.
pub fn hamiltonian<S: Real>(
    spec: &ProblemSpec,
    params: &HamiltonianParams,
    x: &[S],
    p: &[S],
    q: &[S],
) -> Result<HamiltonianValue<S>, EvalError> {
    let d = spec.dim;
    let n = d + 1;
    assert_eq!(p.len(), n, "gradient must have d + 1 entries");
    assert_eq!(q.len(), n * n, "Hessian must be (d + 1) × (d + 1)");
    let bound = S::lit(params.truncation);
    let q_mm = q[d * n + d];
    let mut mu = vec![S::zero(); d];
    let mut sig = vec![S::zero(); d * d];
    let mut best: Option<HamiltonianValue<S>> = None;
    for u in params.control_grid::<S>(spec) {
        spec.drift_at(x, &u, &mut mu)?;
        spec.diffusion_at(x, &u, &mut sig)?;
        let mut l = S::zero();
        for i in 0..d {
            l = l + mu[i] * p[i];
        }
        for i in 0..d {
            for j in 0..d {
                let mut ss = S::zero();
                for k in 0..d {
                    ss = ss + sig[i * d + k] * sig[j * d + k];
                }
                l = l + S::lit(0.5) * ss * q[i * n + j];
            }
        }
        let mut value = -l;
        let mut a = vec![S::zero(); d];
        for k in 0..d {
            let mut b = S::zero();
            for j in 0..d {
                b = b + sig[j * d + k] * q[j * n + d];
            }
            let (v, ak) = minimize_martingale_term(q_mm, b, bound);
            value = value + v;
            a[k] = ak;
        }
        if best.as_ref().map_or(true, |bv| value < bv.value) {
            best = Some(HamiltonianValue { value, u, a });
        }
    }
    Ok(best.expect("control grid is nonempty"))
}

/// `H̄(x, p, Q) = inf_{u ∈ U} −(μ·p + ½ tr(σσᵀ Q))`.
pub fn hamiltonian_state<S: Real>(
    spec: &ProblemSpec,
    params: &HamiltonianParams,
    x: &[S],
    p: &[S],
    q: &[S],
) -> Result<HamiltonianValue<S>, EvalError> {
    let d = spec.dim;
    assert_eq!(p.len(), d, "gradient must have d entries");
    assert_eq!(q.len(), d * d, "Hessian must be d × d");
    let mut mu = vec![S::zero(); d];
    let mut sig = vec![S::zero(); d * d];
    let mut best: Option<HamiltonianValue<S>> = None;
    for u in params.control_grid::<S>(spec) {
        spec.drift_at(x, &u, &mut mu)?;
        spec.diffusion_at(x, &u, &mut sig)?;
        let mut l = S::zero();
        for i in 0..d {
            l = l + mu[i] * p[i];
            for j in 0..d {
                let mut ss = S::zero();
                for k in 0..d {
                    ss = ss + sig[i * d + k] * sig[j * d + k];
                }
                l = l + S::lit(0.5) * ss * q[i * d + j];
            }
        }
        let value = -l;
        if best.as_ref().map_or(true, |bv| value < bv.value) {
            best = Some(HamiltonianValue {
                value,
                u,
                a: Vec::new(),
            });
        }
    }
    Ok(best.expect("control grid is nonempty"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ControlSet;
    use proptest::prelude::*;

    fn params(a: f64) -> HamiltonianParams {
        HamiltonianParams {
            truncation: a,
            ..HamiltonianParams::default()
        }
    }

    #[test]
    fn pure_martingale_quadratic_hits_box_edge() {
        let s = ProblemSpec::new(1, 1.0, &["0"], &["0"], "0", "0", ControlSet::singleton(vec![0.0]).unwrap()).unwrap();
        let h = hamiltonian(&s, &params(2.0), &[0.0], &[0.0, 0.0], &[0.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(h.value, -2.0);
        assert_eq!(h.a, vec![-2.0]);
    }

    #[test]
    fn minimizes_over_finite_controls() {
        let u = ControlSet::points(vec![vec![-1.0], vec![1.0]]).unwrap();
        let s = ProblemSpec::new(1, 1.0, &["u1"], &["1"], "0", "0", u).unwrap();
        let h = hamiltonian(&s, &params(3.0), &[0.0], &[1.0, 0.0], &[0.0; 4]).unwrap();
        assert_eq!(h.value, -1.0);
        assert_eq!(h.u, vec![1.0]);
    }

    #[test]
    fn interior_martingale_minimizer() {
        let s = ProblemSpec::new(1, 1.0, &["0"], &["1"], "0", "0", ControlSet::singleton(vec![0.0]).unwrap()).unwrap();
        let (qxx, qxm, qmm) = (0.4, 0.3, -0.5);
        let h = hamiltonian::<f64>(&s, &params(10.0), &[0.0], &[0.0, 0.0], &[qxx, qxm, qxm, qmm]).unwrap();
        let a = -qxm / qmm;
        assert!((h.a[0] - a).abs() < 1e-15);
        let hand = -(0.5 * qxx + a * qxm + 0.5 * a * a * qmm);
        assert!((h.value - hand).abs() < 1e-15);
    }

    #[test]
    fn state_hamiltonian_examples() {
        let s = ProblemSpec::new(1, 1.0, &["u1"], &["0"], "0", "0", ControlSet::interval(-1.0, 1.0, 5).unwrap()).unwrap();
        let h = hamiltonian_state(&s, &params(1.0), &[0.0], &[1.0], &[0.0]).unwrap();
        assert_eq!((h.value, h.u[0]), (-1.0, 1.0));

        let g = ProblemSpec::new(1, 1.0, &["u1*x1"], &["x1"], "x1", "0", ControlSet::interval(0.0, 1.0, 2).unwrap()).unwrap();
        let h = hamiltonian_state(&g, &params(1.0), &[2.0], &[1.0], &[-0.25]).unwrap();
        assert_eq!((h.value, h.u[0]), (-1.5, 1.0));

        let one = ProblemSpec::new(1, 1.0, &["x1+u1"], &["2"], "0", "0", ControlSet::singleton(vec![0.5]).unwrap()).unwrap();
        let h = hamiltonian_state::<f64>(&one, &params(1.0), &[1.0], &[0.5], &[0.2]).unwrap();
        assert!((h.value - -(1.5 * 0.5 + 0.5 * 4.0 * 0.2)).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn closed_form_matches_dense_search(q in -3.0f64..3.0, b in -3.0f64..3.0, bound in 0.1f64..4.0) {
            let (v, a) = minimize_martingale_term(q, b, bound);
            prop_assert!(a.abs() <= bound);
            let n = 2000;
            for i in 0..=n {
                let t = -bound + 2.0 * bound * i as f64 / n as f64;
                prop_assert!(v <= -(0.5 * q * t * t + b * t) + 1e-12);
            }
        }
    }
}
