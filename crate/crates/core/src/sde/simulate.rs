//! Path simulation.

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::program::{ControlProgram, MartingaleProgram, Region, StepView, StoppingRule};
use super::{SimError, TimeGrid};
use crate::model::{distance_to_complement, EvalError, ProblemSpec};
use crate::scalar::Real;

/// Initial condition `(t, x, m, y)`. Without a domain `y` is carried as a
/// constant; with one the running minimum starts at `min(y, d(x))`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimStart<S> {
    pub t: S,
    pub x: Vec<S>,
    pub m: S,
    pub y: S,
}

impl<S: Real> SimStart<S> {
    pub fn new(t: S, x: Vec<S>, m: S) -> SimStart<S> {
        SimStart { t, x, m, y: S::infinity() }
    }

    pub fn with_y(mut self, y: S) -> SimStart<S> {
        self.y = y;
        self
    }
}

/// Independent standard normal stream of one path. Path `index` of a batch
/// with seed `seed` uses ChaCha8 stream `index`, and every step consumes the
/// same number of words, so step `i` of a path is reproducible on its own.
pub struct PathRng {
    rng: ChaCha8Rng,
    pairs: usize,
}

impl PathRng {
    pub fn new(seed: u64, index: u64, dim: usize) -> PathRng {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        PathRng {
            rng,
            pairs: dim.div_ceil(2),
        }
    }

    /// Uniform on (0, 1], so logarithms of it are finite.
    pub fn uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Normals of step `i`.
    pub fn step_normals(&mut self, i: usize, out: &mut [f64]) {
        self.rng.set_word_pos((i as u128) * (self.pairs as u128) * 4);
        self.fill(out);
    }

    /// Next `out.len()` normals (Box–Muller, two per pair of uniforms).
    pub fn fill(&mut self, out: &mut [f64]) {
        for chunk in out.chunks_mut(2) {
            let r = (-2.0 * self.uniform().ln()).sqrt();
            let th = std::f64::consts::TAU * self.uniform();
            chunk[0] = r * th.cos();
            if chunk.len() > 1 {
                chunk[1] = r * th.sin();
            }
        }
    }
}

/// One simulated path of `(X, M, Y)` on a time grid, with the Brownian
/// increments and the controls used. Node arrays have `steps + 1` entries,
/// step arrays `steps`.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedPath<S> {
    pub grid: TimeGrid<S>,
    pub d: usize,
    pub k: usize,
    pub x: Vec<S>,
    pub m: Vec<S>,
    pub y: Vec<S>,
    pub dw: Vec<S>,
    pub u: Vec<S>,
    pub a: Vec<S>,
    pub seed: u64,
    pub index: u64,
    /// Set when the state became non-finite; later nodes hold NaN.
    pub divergent: bool,
}

impl<S: Real> AugmentedPath<S> {
    pub fn steps(&self) -> usize {
        self.grid.steps
    }

    pub fn x_at(&self, i: usize) -> &[S] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    pub fn terminal_x(&self) -> &[S] {
        self.x_at(self.grid.steps)
    }

    pub fn terminal_m(&self) -> S {
        self.m[self.grid.steps]
    }

    pub fn dw_at(&self, i: usize) -> &[S] {
        &self.dw[i * self.d..(i + 1) * self.d]
    }

    pub fn u_at(&self, i: usize) -> &[S] {
        &self.u[i * self.k..(i + 1) * self.k]
    }

    pub fn a_at(&self, i: usize) -> &[S] {
        &self.a[i * self.d..(i + 1) * self.d]
    }
}

/// First node where (t, X, M) is outside the closed region, or `steps` when
/// the path stays inside.
pub fn first_exit<S: Real>(path: &AugmentedPath<S>, region: &Region<S>) -> usize {
    (0..=path.grid.steps)
        .find(|&i| !region.contains(path.grid.time(i), path.x_at(i), path.m[i]))
        .unwrap_or(path.grid.steps)
}

/// First node where the rule fires along the path, or `steps`.
pub fn stopping_node<S: Real>(path: &AugmentedPath<S>, rule: &StoppingRule<S>) -> usize {
    let n = path.grid.steps;
    (0..=n)
        .find(|&i| {
            rule.fires(&StepView {
                step: i,
                steps: n,
                t: path.grid.time(i),
                x: path.x_at(i),
                m: path.m[i],
                y: path.y[i],
            })
        })
        .unwrap_or(n)
}

fn check_start<S: Real>(spec: &ProblemSpec, start: &SimStart<S>, grid: &TimeGrid<S>) -> Result<(), SimError> {
    if start.x.len() != spec.dim {
        return Err(SimError::Start(format!("x has {} coordinates, expected {}", start.x.len(), spec.dim)));
    }
    if start.x.iter().any(|v| !v.is_finite()) || !start.m.is_finite() || start.y.is_nan() {
        return Err(SimError::Start("non-finite initial condition".into()));
    }
    let tol = S::lit(1e-12) * (S::one() + start.t.abs());
    if (grid.t0 - start.t).abs() > tol {
        return Err(SimError::Start(format!("grid starts at {} but the path at {}", grid.t0, start.t)));
    }
    Ok(())
}

/// Simulates path `index` of the batch with seed `seed`. Controls are
/// projected into U and martingale controls clamped to `[−A, A]`.
#[allow(clippy::too_many_arguments)]
pub fn simulate<S: Real>(
    spec: &ProblemSpec,
    start: &SimStart<S>,
    control: &ControlProgram<S>,
    martingale: &MartingaleProgram<S>,
    grid: &TimeGrid<S>,
    seed: u64,
    index: u64,
) -> Result<AugmentedPath<S>, SimError> {
    let mut rng = PathRng::new(seed, index, spec.dim);
    let mut z = vec![0.0; spec.dim];
    let sqh = grid.step().sqrt();
    let mut dw = Vec::with_capacity(grid.steps * spec.dim);
    for _ in 0..grid.steps {
        rng.fill(&mut z);
        dw.extend(z.iter().map(|v| S::lit(*v) * sqh));
    }
    let mut p = simulate_driven(spec, start, control, martingale, grid, &dw)?;
    p.seed = seed;
    p.index = index;
    Ok(p)
}

/// Sums consecutive groups of `factor` steps of `d`-dimensional increments,
/// giving the increments of the same Brownian path on a grid `factor` times
/// coarser.
pub fn coarsen_increments<S: Real>(dw: &[S], d: usize, factor: usize) -> Vec<S> {
    dw.chunks(d * factor)
        .flat_map(|block| (0..d).map(move |j| block.iter().skip(j).step_by(d).copied().sum::<S>()))
        .collect()
}

/// Like [`simulate`] but driven by given Brownian increments (`steps × d`,
/// row per step). The returned path has seed and index 0.
pub fn simulate_driven<S: Real>(
    spec: &ProblemSpec,
    start: &SimStart<S>,
    control: &ControlProgram<S>,
    martingale: &MartingaleProgram<S>,
    grid: &TimeGrid<S>,
    increments: &[S],
) -> Result<AugmentedPath<S>, SimError> {
    check_start(spec, start, grid)?;
    if increments.len() != grid.steps * spec.dim {
        return Err(SimError::Arity {
            expected: grid.steps * spec.dim,
            found: increments.len(),
        });
    }
    let d = spec.dim;
    let k = spec.control_dim();
    control.check_width(k)?;
    martingale.program.check_width(d)?;
    let n = grid.steps;

    let mut p = AugmentedPath {
        grid: *grid,
        d,
        k,
        x: Vec::with_capacity((n + 1) * d),
        m: Vec::with_capacity(n + 1),
        y: Vec::with_capacity(n + 1),
        dw: increments.to_vec(),
        u: vec![S::zero(); n * k],
        a: vec![S::zero(); n * d],
        seed: 0,
        index: 0,
        divergent: false,
    };
    let dist = |x: &[S]| -> Result<Option<S>, SimError> {
        match spec.domain {
            Some(_) => Ok(Some(distance_to_complement(spec, x)?)),
            None => Ok(None),
        }
    };
    let y0 = match dist(&start.x)? {
        Some(d0) => d0.min(start.y),
        None => start.y,
    };
    p.x.extend_from_slice(&start.x);
    p.m.push(start.m);
    p.y.push(y0);

    let mut cstate = control.new_state();
    let mut mstate = martingale.program.new_state();
    let mut mu = vec![S::zero(); d];
    let mut sig = vec![S::zero(); d * d];
    let mut next = vec![S::zero(); d];
    let half = S::lit(0.5);

    for i in 0..n {
        let (t, m, y) = (grid.time(i), p.m[i], p.y[i]);
        let xi = p.x[i * d..(i + 1) * d].to_vec();
        let view = StepView {
            step: i,
            steps: n,
            t,
            x: &xi,
            m,
            y,
        };
        control.observe(&view, &mut cstate);
        martingale.program.observe(&view, &mut mstate);
        let u = &mut p.u[i * k..(i + 1) * k];
        control.emit(spec, &view, &cstate, u)?;
        spec.controls.project(u);
        let a = &mut p.a[i * d..(i + 1) * d];
        martingale.emit(spec, &view, &mstate, a)?;

        let dw = &p.dw[i * d..(i + 1) * d];
        let u = &p.u[i * k..(i + 1) * k];
        let coeffs = spec.drift_at(&xi, u, &mut mu).and_then(|_| spec.diffusion_at(&xi, u, &mut sig));
        let mut ok = match coeffs {
            Ok(()) => mu.iter().chain(&sig).all(|v| v.is_finite()),
            Err(EvalError::NonFinite { .. }) => false,
            Err(e) => return Err(e.into()),
        };
        // Node differences rather than the nominal step, so constant drift
        // lands on the node times exactly.
        let h = grid.time(i + 1) - t;
        if ok {
            for j in 0..d {
                let row = &sig[j * d..(j + 1) * d];
                let noise: S = row.iter().zip(dw.iter()).map(|(s, w)| *s * *w).sum();
                let xj = xi[j];
                next[j] = if spec.log_stepping && xj > S::zero() {
                    let vol2: S = row.iter().map(|s| (*s / xj) * (*s / xj)).sum();
                    xj * ((mu[j] / xj - half * vol2) * h + noise / xj).exp()
                } else {
                    xj + mu[j] * h + noise
                };
            }
            ok = next.iter().all(|v| v.is_finite());
        }
        let a = &p.a[i * d..(i + 1) * d];
        let m_next = m + a.iter().zip(dw.iter()).map(|(a, w)| *a * *w).sum::<S>();
        if !ok || !m_next.is_finite() {
            p.divergent = true;
            let rest = n - i;
            p.x.extend(std::iter::repeat(S::nan()).take(rest * d));
            p.m.extend(std::iter::repeat(S::nan()).take(rest));
            p.y.extend(std::iter::repeat(S::nan()).take(rest));
            break;
        }
        let y_next = match dist(&next)? {
            Some(dn) => y.min(dn),
            None => y,
        };
        p.x.extend_from_slice(&next);
        p.m.push(m_next);
        p.y.push(y_next);
    }
    Ok(p)
}

/// Simulates paths `0..n` of the batch with seed `seed` in parallel and maps
/// each to a summary as soon as it is produced. Results are in path order.
#[allow(clippy::too_many_arguments)]
pub fn simulate_batch<S, R, F>(
    spec: &ProblemSpec,
    start: &SimStart<S>,
    control: &ControlProgram<S>,
    martingale: &MartingaleProgram<S>,
    grid: &TimeGrid<S>,
    seed: u64,
    n: usize,
    summary: F,
) -> Result<Vec<R>, SimError>
where
    S: Real,
    R: Send,
    F: Fn(&AugmentedPath<S>) -> R + Sync,
{
    (0..n as u64)
        .into_par_iter()
        .map(|i| simulate(spec, start, control, martingale, grid, seed, i).map(|p| summary(&p)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_normals_are_addressable() {
        let mut a = PathRng::new(7, 3, 3);
        let mut seq = [[0.0; 3]; 4];
        for s in seq.iter_mut() {
            a.fill(s);
        }
        let mut b = PathRng::new(7, 3, 3);
        let mut z = [0.0; 3];
        b.step_normals(2, &mut z);
        assert_eq!(z, seq[2]);
        let mut c = PathRng::new(7, 4, 3);
        c.step_normals(2, &mut z);
        assert_ne!(z, seq[2]);
    }

    #[test]
    fn normals_have_unit_variance() {
        let mut r = PathRng::new(1, 0, 2);
        let mut z = [0.0; 2];
        let (mut s1, mut s2) = (0.0, 0.0);
        let n = 200_000;
        for _ in 0..n / 2 {
            r.fill(&mut z);
            s1 += z[0] + z[1];
            s2 += z[0] * z[0] + z[1] * z[1];
        }
        let mean = s1 / n as f64;
        let var = s2 / n as f64 - mean * mean;
        assert!(mean.abs() < 0.01, "{mean}");
        assert!((var - 1.0).abs() < 0.01, "{var}");
    }
}
