//! Distance to the complement of the state domain.

use super::problem::{Domain, ModelError, ProblemSpec};
use crate::scalar::Real;

/// Step of the central differences used for Dδ.
pub const GRADIENT_STEP: f64 = 1e-5;
/// Tolerance of the level-set projection, in δ units and in the tangential
/// residual.
pub const PROJECTION_TOL: f64 = 1e-8;

const MAX_NEWTON: usize = 100;
const MAX_OUTER: usize = 200;

fn delta64(domain: &Domain, x: &[f64]) -> Result<f64, ModelError> {
    Ok(domain.delta(x)?)
}

/// Central-difference gradient of δ at `x`.
pub fn delta_gradient(domain: &Domain, x: &[f64]) -> Result<Vec<f64>, ModelError> {
    let mut z = x.to_vec();
    let mut g = vec![0.0; x.len()];
    for i in 0..x.len() {
        z[i] = x[i] + GRADIENT_STEP;
        let up = delta64(domain, &z)?;
        z[i] = x[i] - GRADIENT_STEP;
        let down = delta64(domain, &z)?;
        z[i] = x[i];
        g[i] = (up - down) / (2.0 * GRADIENT_STEP);
    }
    Ok(g)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Damped Newton onto {δ = 0} starting from `z`, moving along Dδ.
fn newton_to_level(domain: &Domain, z: &mut [f64]) -> Result<bool, ModelError> {
    let mut val = delta64(domain, z)?;
    for _ in 0..MAX_NEWTON {
        if val.abs() <= PROJECTION_TOL {
            return Ok(true);
        }
        let g = delta_gradient(domain, z)?;
        let g2: f64 = g.iter().map(|a| a * a).sum();
        if !(g2 > 1e-300) {
            return Ok(false);
        }
        let mut step = 1.0;
        let base = z.to_vec();
        loop {
            for i in 0..z.len() {
                z[i] = base[i] - step * val * g[i] / g2;
            }
            match delta64(domain, z) {
                Ok(v) if v.abs() < val.abs() => {
                    val = v;
                    break;
                }
                _ => {}
            }
            step *= 0.5;
            if step < 1e-12 {
                z.copy_from_slice(&base);
                return Ok(false);
            }
        }
    }
    Ok(val.abs() <= PROJECTION_TOL)
}

/// Bisection along the ray from `x` in direction −Dδ(x) for the first sign
/// change of δ. Returns the crossing point.
fn bisect_along_gradient(domain: &Domain, x: &[f64]) -> Result<Option<Vec<f64>>, ModelError> {
    let g = delta_gradient(domain, x)?;
    let gn = norm(&g);
    if !(gn > 0.0) {
        return Ok(None);
    }
    let dir: Vec<f64> = g.iter().map(|a| -a / gn).collect();
    let at = |s: f64| -> Vec<f64> { x.iter().zip(&dir).map(|(a, d)| a + s * d).collect() };
    let mut hi = delta64(domain, x)?.max(1e-6);
    let mut found = false;
    for _ in 0..60 {
        if delta64(domain, &at(hi)).map(|v| v <= 0.0).unwrap_or(true) {
            found = true;
            break;
        }
        hi *= 2.0;
    }
    if !found {
        return Ok(None);
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if delta64(domain, &at(mid)).map(|v| v > 0.0).unwrap_or(false) {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < PROJECTION_TOL * 1e-2 {
            break;
        }
    }
    Ok(Some(at(0.5 * (lo + hi))))
}

/// Nearest point of {δ = 0} to an interior point `x`, by Newton projection
/// followed by tangential refinement.
fn project_to_level(domain: &Domain, x: &[f64]) -> Result<Option<Vec<f64>>, ModelError> {
    let mut z = x.to_vec();
    if !newton_to_level(domain, &mut z)? {
        match bisect_along_gradient(domain, x)? {
            Some(p) => z = p,
            None => return Ok(None),
        }
    }
    if x.len() == 1 {
        return Ok(Some(z));
    }
    for _ in 0..MAX_OUTER {
        let g = delta_gradient(domain, &z)?;
        let gn = norm(&g);
        if !(gn > 0.0) {
            break;
        }
        let n: Vec<f64> = g.iter().map(|a| a / gn).collect();
        let r: Vec<f64> = x.iter().zip(&z).map(|(a, b)| a - b).collect();
        let rn: f64 = r.iter().zip(&n).map(|(a, b)| a * b).sum();
        let tangential: Vec<f64> = r.iter().zip(&n).map(|(a, b)| a - rn * b).collect();
        if norm(&tangential) <= PROJECTION_TOL {
            break;
        }
        let before = norm(&r);
        let mut step = 1.0;
        loop {
            let mut cand: Vec<f64> = z.iter().zip(&tangential).map(|(a, t)| a + step * t).collect();
            let ok = newton_to_level(domain, &mut cand)?;
            let after = norm(&x.iter().zip(&cand).map(|(a, b)| a - b).collect::<Vec<_>>());
            if ok && after < before {
                z = cand;
                break;
            }
            step *= 0.5;
            if step < 1e-10 {
                return Ok(Some(z));
            }
        }
    }
    Ok(Some(z))
}

/// Euclidean distance from `x` to the complement of the domain; zero
/// outside. Exact for half-spaces, boxes and balls. Level-set domains use a
/// damped Newton projection onto {δ = 0} (tolerance [`PROJECTION_TOL`]) with
/// bisection along −Dδ as fallback; the projection is local, so for
/// nonconvex level sets the result is an upper bound on the true distance.
pub fn domain_distance(domain: &Domain, x: &[f64]) -> Result<f64, ModelError> {
    let d = delta64(domain, x)?;
    if d <= 0.0 {
        return Ok(0.0);
    }
    if domain.is_analytic() {
        return Ok(d);
    }
    match project_to_level(domain, x)? {
        Some(z) => Ok(norm(&x.iter().zip(&z).map(|(a, b)| a - b).collect::<Vec<_>>())),
        None => Ok(f64::INFINITY),
    }
}

/// Distance to the complement of the problem's domain.
pub fn distance_to_complement<S: Real>(spec: &ProblemSpec, x: &[S]) -> Result<S, ModelError> {
    let domain = spec.domain.as_ref().ok_or(ModelError::NoDomain)?;
    let xf: Vec<f64> = x.iter().map(|v| v.as_f64()).collect();
    Ok(S::lit(domain_distance(domain, &xf)?))
}

/// Nearest point of the boundary {δ = 0} to `x` (projection from either
/// side).
pub fn project_to_boundary(domain: &Domain, x: &[f64]) -> Result<Option<Vec<f64>>, ModelError> {
    let mut z = x.to_vec();
    if newton_to_level(domain, &mut z)? {
        Ok(Some(z))
    } else {
        Ok(None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::expr::Expr;
    use crate::model::problem::ControlSet;
    use proptest::prelude::*;

    fn spec_with(domain: Domain, dim: usize) -> ProblemSpec {
        let drift: Vec<&str> = vec!["0"; dim];
        let diff: Vec<&str> = vec!["0"; dim * dim];
        ProblemSpec::new(dim, 1.0, &drift, &diff, "0", "0", ControlSet::singleton(vec![0.0]).unwrap())
            .unwrap()
            .with_domain(domain)
            .unwrap()
    }

    fn half_line() -> ProblemSpec {
        spec_with(
            Domain::HalfSpace {
                normal: vec![1.0],
                offset: 0.0,
            },
            1,
        )
    }

    #[test]
    fn half_line_distances() {
        let s = half_line();
        assert_eq!(distance_to_complement(&s, &[0.3]).unwrap(), 0.3);
        assert_eq!(distance_to_complement(&s, &[-1.0]).unwrap(), 0.0);
    }

    #[test]
    fn unit_disk_radial_distance() {
        let s = spec_with(
            Domain::Ball {
                center: vec![0.0, 0.0],
                radius: 1.0,
            },
            2,
        );
        assert!((distance_to_complement(&s, &[0.6, 0.0]).unwrap() - 0.4_f64).abs() < 1e-15);
    }

    #[test]
    fn level_set_disk_matches_analytic() {
        let e = Expr::parse("1 - x1^2 - x2^2").unwrap();
        let dom = Domain::Level(e);
        for x in [[0.6_f64, 0.0], [0.3, -0.4], [0.0, 0.9], [0.05, 0.02]] {
            let exact = 1.0 - (x[0] * x[0] + x[1] * x[1]).sqrt();
            let got = domain_distance(&dom, &x).unwrap();
            assert!((got - exact).abs() < 1e-6, "{x:?}: {got} vs {exact}");
        }
        assert_eq!(domain_distance(&dom, &[2.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn level_set_interval() {
        let dom = Domain::Level(Expr::parse("x1*(1-x1)").unwrap());
        assert!((domain_distance(&dom, &[0.3]).unwrap() - 0.3).abs() < 1e-8);
        assert!((domain_distance(&dom, &[0.8]).unwrap() - 0.2).abs() < 1e-8);
    }

    #[test]
    fn missing_domain_is_an_error() {
        let s = ProblemSpec::new(1, 1.0, &["0"], &["0"], "0", "0", ControlSet::singleton(vec![0.0]).unwrap()).unwrap();
        assert!(matches!(distance_to_complement(&s, &[0.0_f64]), Err(ModelError::NoDomain)));
    }

    proptest! {
        #[test]
        fn analytic_distance_is_one_lipschitz(a in prop::array::uniform2(-3.0f64..3.0), b in prop::array::uniform2(-3.0f64..3.0)) {
            for dom in [
                Domain::Ball { center: vec![0.5, -0.5], radius: 1.5 },
                Domain::Box { lo: vec![-1.0, -2.0], hi: vec![2.0, 1.0] },
                Domain::HalfSpace { normal: vec![1.0, 2.0], offset: 0.3 },
            ] {
                let da = domain_distance(&dom, &a).unwrap();
                let db = domain_distance(&dom, &b).unwrap();
                let dist = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
                prop_assert!((da - db).abs() <= dist + 1e-12);
                prop_assert!(da >= 0.0);
            }
        }

        #[test]
        fn level_distance_is_one_lipschitz(a in prop::array::uniform2(-0.95f64..0.95), b in prop::array::uniform2(-0.95f64..0.95)) {
            let dom = Domain::Level(Expr::parse("1 - x1^2 - x2^2").unwrap());
            let da = domain_distance(&dom, &a).unwrap();
            let db = domain_distance(&dom, &b).unwrap();
            let dist = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
            prop_assert!((da - db).abs() <= dist + 1e-6);
        }
    }
}
