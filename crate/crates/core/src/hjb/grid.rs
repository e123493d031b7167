//! Uniform tensor grids over (t, x) and (t, x, m).

use super::HjbError;
use crate::scalar::Real;

/// Uniform axis with `n ≥ 2` nodes on `[lo, hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Axis<S> {
    pub lo: S,
    pub hi: S,
    pub n: usize,
}

impl<S: Real> Axis<S> {
    pub fn new(lo: S, hi: S, n: usize) -> Result<Axis<S>, HjbError> {
        if n < 2 {
            return Err(HjbError::Grid(format!("axis needs at least 2 nodes, got {n}")));
        }
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(HjbError::Grid(format!("axis bounds must satisfy lo < hi, got [{lo}, {hi}]")));
        }
        Ok(Axis { lo, hi, n })
    }

    pub fn step(&self) -> S {
        (self.hi - self.lo) / S::from_usize_lossy(self.n - 1)
    }

    /// Node `i`; the last node is exactly `hi`.
    pub fn node(&self, i: usize) -> S {
        if i + 1 >= self.n {
            self.hi
        } else {
            self.lo + (self.hi - self.lo) * S::from_usize_lossy(i) / S::from_usize_lossy(self.n - 1)
        }
    }

    pub fn nodes(&self) -> Vec<S> {
        (0..self.n).map(|i| self.node(i)).collect()
    }

    /// Cell index and fractional offset of `v`, clamped into the axis.
    pub fn locate(&self, v: S) -> (usize, S) {
        let pos = (v - self.lo) / self.step();
        let max = S::from_usize_lossy(self.n - 1);
        if !(pos > S::zero()) {
            return (0, S::zero());
        }
        if pos >= max {
            return (self.n - 2, S::one());
        }
        let i = pos.floor().to_usize().unwrap_or(0).min(self.n - 2);
        (i, pos - S::from_usize_lossy(i))
    }

    /// Index of the node nearest to `v` (clamped).
    pub fn nearest(&self, v: S) -> usize {
        let (i, f) = self.locate(v);
        if f > S::lit(0.5) {
            i + 1
        } else {
            i
        }
    }
}

/// Time axis plus spatial axes, and optionally the constraint-level axis m.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<S> {
    pub t0: S,
    pub t1: S,
    /// Number of time intervals; there are `nt + 1` time slices.
    pub nt: usize,
    pub x: Vec<Axis<S>>,
    pub m: Option<Axis<S>>,
}

impl<S: Real> Grid<S> {
    pub fn new(t0: S, t1: S, nt: usize, x: Vec<Axis<S>>, m: Option<Axis<S>>) -> Result<Grid<S>, HjbError> {
        if nt < 1 {
            return Err(HjbError::Grid("need at least one time interval".into()));
        }
        if !(t0 < t1) {
            return Err(HjbError::Grid(format!("time interval must satisfy t0 < t1, got [{t0}, {t1}]")));
        }
        if x.is_empty() {
            return Err(HjbError::Grid("need at least one spatial axis".into()));
        }
        Ok(Grid { t0, t1, nt, x, m })
    }

    /// `[t0, t1] × [lo, hi]` with `nx` nodes, 1-d state.
    pub fn line(t0: S, t1: S, nt: usize, lo: S, hi: S, nx: usize) -> Result<Grid<S>, HjbError> {
        Grid::new(t0, t1, nt, vec![Axis::new(lo, hi, nx)?], None)
    }

    /// Adds (or replaces) the m-axis.
    pub fn with_m(mut self, lo: S, hi: S, nm: usize) -> Result<Grid<S>, HjbError> {
        self.m = Some(Axis::new(lo, hi, nm)?);
        Ok(self)
    }

    /// Same grid without the m-axis.
    pub fn spatial(&self) -> Grid<S> {
        Grid {
            m: None,
            ..self.clone()
        }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn ht(&self) -> S {
        (self.t1 - self.t0) / S::from_usize_lossy(self.nt)
    }

    pub fn time(&self, n: usize) -> S {
        if n >= self.nt {
            self.t1
        } else {
            self.t0 + (self.t1 - self.t0) * S::from_usize_lossy(n) / S::from_usize_lossy(self.nt)
        }
    }

    pub fn slices(&self) -> usize {
        self.nt + 1
    }

    pub fn nm(&self) -> usize {
        self.m.as_ref().map_or(1, |a| a.n)
    }

    /// Number of spatial x-nodes.
    pub fn nx_total(&self) -> usize {
        self.x.iter().map(|a| a.n).product()
    }

    /// Nodes per time slice.
    pub fn n_space(&self) -> usize {
        self.nx_total() * self.nm()
    }

    pub fn total_nodes(&self) -> usize {
        self.n_space() * self.slices()
    }

    /// Row-major strides of the x multi-index (x1 slowest).
    pub fn x_strides(&self) -> Vec<usize> {
        let mut s = vec![1; self.dim()];
        for j in (0..self.dim().saturating_sub(1)).rev() {
            s[j] = s[j + 1] * self.x[j + 1].n;
        }
        s
    }

    pub fn x_multi(&self, ix: usize) -> Vec<usize> {
        let strides = self.x_strides();
        strides
            .iter()
            .zip(&self.x)
            .map(|(st, ax)| (ix / st) % ax.n)
            .collect()
    }

    pub fn x_flat(&self, multi: &[usize]) -> usize {
        self.x_strides().iter().zip(multi).map(|(s, i)| s * i).sum()
    }

    pub fn x_coords(&self, ix: usize) -> Vec<S> {
        self.x_multi(ix)
            .iter()
            .zip(&self.x)
            .map(|(&i, ax)| ax.node(i))
            .collect()
    }

    /// Space index of x-node `ix` and m-node `jm`.
    pub fn space_index(&self, ix: usize, jm: usize) -> usize {
        ix * self.nm() + jm
    }

    /// Splits a space index into (x-node, m-node).
    pub fn split(&self, s: usize) -> (usize, usize) {
        (s / self.nm(), s % self.nm())
    }

    pub fn m_value(&self, jm: usize) -> Option<S> {
        self.m.as_ref().map(|a| a.node(jm))
    }

    /// Spacings of the spatial axes followed by the m spacing when present.
    pub fn spacings(&self) -> Vec<S> {
        let mut h: Vec<S> = self.x.iter().map(Axis::step).collect();
        if let Some(m) = &self.m {
            h.push(m.step());
        }
        h
    }

    /// Largest spatial or m spacing.
    pub fn h_max(&self) -> S {
        self.spacings().into_iter().fold(S::zero(), S::max)
    }

    /// Fractional slice position of time `t`, clamped into the grid.
    pub fn locate_time(&self, t: S) -> (usize, S) {
        let pos = (t - self.t0) / self.ht();
        let max = S::from_usize_lossy(self.nt);
        if !(pos > S::zero()) {
            return (0, S::zero());
        }
        if pos >= max {
            return (self.nt - 1, S::one());
        }
        let n = pos.floor().to_usize().unwrap_or(0).min(self.nt - 1);
        (n, pos - S::from_usize_lossy(n))
    }

    /// Whether x-node `ix` lies in the outer `frac` band of the box on any
    /// axis (the lateral truncation zone).
    pub fn in_outer_band(&self, ix: usize, frac: f64) -> bool {
        self.x_multi(ix).iter().zip(&self.x).any(|(&i, ax)| {
            let band = ((ax.n - 1) as f64 * frac).ceil() as usize;
            i < band || i + band > ax.n - 1
        })
    }
}
