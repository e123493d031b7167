//! Value and policy fields on a [`Grid`].

use serde::Serialize;

use super::grid::Grid;
use crate::scalar::Real;

/// Which equation a field solves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    /// Constraint floor v(t, x) = inf E[g(X_T)].
    Floor,
    /// Unconstrained value sup E[f(X_T)].
    Unconstrained,
    /// Expectation-constrained value V(t, x, m).
    ExpectationConstrained,
    /// State-constrained value on the closed domain.
    StateConstrained,
}

impl FieldKind {
    pub fn code(self) -> u32 {
        match self {
            FieldKind::Floor => 0,
            FieldKind::Unconstrained => 1,
            FieldKind::ExpectationConstrained => 2,
            FieldKind::StateConstrained => 3,
        }
    }

    pub fn from_code(c: u32) -> Option<FieldKind> {
        Some(match c {
            0 => FieldKind::Floor,
            1 => FieldKind::Unconstrained,
            2 => FieldKind::ExpectationConstrained,
            3 => FieldKind::StateConstrained,
            _ => return None,
        })
    }
}

/// Solver settings recorded with a field.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldMeta {
    pub kind: FieldKind,
    /// Martingale-control bound A (expectation-constrained fields only).
    pub truncation: Option<f64>,
    pub control_points: usize,
    /// Explicit sub-steps per output time interval.
    pub substeps: usize,
    pub mask_margin: f64,
    pub discount: f64,
}

/// Grid function with a domain mask. Masked nodes hold `-inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueField<S> {
    pub grid: Grid<S>,
    pub values: Vec<S>,
    pub mask: Vec<bool>,
    pub meta: FieldMeta,
}

/// Sentinel stored at masked nodes.
pub fn neg_inf<S: Real>() -> S {
    S::neg_infinity()
}

impl<S: Real> ValueField<S> {
    pub fn index(&self, n: usize, s: usize) -> usize {
        n * self.grid.n_space() + s
    }

    pub fn value(&self, n: usize, s: usize) -> S {
        self.values[self.index(n, s)]
    }

    pub fn masked(&self, n: usize, s: usize) -> bool {
        self.mask[self.index(n, s)]
    }

    pub fn slice(&self, n: usize) -> &[S] {
        let ns = self.grid.n_space();
        &self.values[n * ns..(n + 1) * ns]
    }

    pub fn slice_mask(&self, n: usize) -> &[bool] {
        let ns = self.grid.n_space();
        &self.mask[n * ns..(n + 1) * ns]
    }

    pub fn masked_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// True when every node is masked.
    pub fn fully_masked(&self) -> bool {
        self.mask.iter().all(|&m| m)
    }

    /// Value at grid node (slice `n`, x multi-index, m-node).
    pub fn at(&self, n: usize, x: &[usize], jm: usize) -> S {
        self.value(n, self.grid.space_index(self.grid.x_flat(x), jm))
    }

    /// Lowest unmasked m-node value of an x-column in slice `n`.
    pub fn column_floor_value(&self, n: usize, ix: usize) -> Option<S> {
        let nm = self.grid.nm();
        (0..nm)
            .map(|j| self.grid.space_index(ix, j))
            .find(|&s| !self.masked(n, s))
            .map(|s| self.value(n, s))
    }

    fn slice_interp(&self, n: usize, x: &[S], m: Option<S>, extend: bool) -> Option<S> {
        let g = &self.grid;
        let d = g.dim();
        let mut cells: Vec<(usize, S)> = x.iter().zip(&g.x).map(|(v, ax)| ax.locate(*v)).collect();
        if let Some(ax) = &g.m {
            cells.push(ax.locate(m.unwrap_or(ax.hi)));
        }
        let dims = cells.len();
        let strides = g.x_strides();
        let mut acc = S::zero();
        for corner in 0..(1usize << dims) {
            let mut w = S::one();
            let mut ix = 0usize;
            let mut jm = 0usize;
            for (k, (i, f)) in cells.iter().enumerate() {
                let up = corner >> k & 1 == 1;
                w = w * if up { *f } else { S::one() - *f };
                let node = if up { i + 1 } else { *i };
                if k < d {
                    ix += strides[k] * node;
                } else {
                    jm = node;
                }
            }
            if w == S::zero() {
                continue;
            }
            let s = g.space_index(ix, jm);
            let v = if self.masked(n, s) {
                if !extend {
                    return None;
                }
                self.column_floor_value(n, ix)?
            } else {
                self.value(n, s)
            };
            acc = acc + w * v;
        }
        Some(acc)
    }

    fn interp(&self, t: S, x: &[S], m: Option<S>, extend: bool) -> Option<S> {
        let (n, f) = self.grid.locate_time(t);
        let mut acc = S::zero();
        if f < S::one() {
            acc = acc + (S::one() - f) * self.slice_interp(n, x, m, extend)?;
        }
        if f > S::zero() {
            acc = acc + f * self.slice_interp(n + 1, x, m, extend)?;
        }
        Some(acc)
    }

    /// Multilinear interpolation in (t, x, m), clamped to the grid box.
    /// `None` when a corner with positive weight is masked.
    pub fn interpolate(&self, t: S, x: &[S], m: Option<S>) -> Option<S> {
        self.interp(t, x, m, false)
    }

    /// As [`interpolate`](Self::interpolate), with masked corners replaced by
    /// the lowest unmasked value of their x-column (the monotone extension).
    pub fn interpolate_extended(&self, t: S, x: &[S], m: Option<S>) -> Option<S> {
        self.interp(t, x, m, true)
    }
}

/// How a policy field is read off-grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyInterp {
    Nearest,
    Linear,
}

/// Per-node maximizing controls. Slice `n` holds the controls used on
/// `[t_n, t_{n+1})`; the last slice repeats the terminal argmax.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyField<S> {
    pub grid: Grid<S>,
    /// Control dimension.
    pub k: usize,
    /// Martingale-control dimension (0 without an m-axis).
    pub d: usize,
    pub u: Vec<S>,
    pub a: Vec<S>,
    pub truncation: Option<S>,
    pub tie_break: &'static str,
}

pub const TIE_BREAK: &str = "lexicographic-first";

impl<S: Real> PolicyField<S> {
    pub fn control(&self, n: usize, s: usize) -> &[S] {
        let i = (n * self.grid.n_space() + s) * self.k;
        &self.u[i..i + self.k]
    }

    pub fn martingale(&self, n: usize, s: usize) -> &[S] {
        let i = (n * self.grid.n_space() + s) * self.d;
        &self.a[i..i + self.d]
    }

    /// Slice used at time `t`: the last slice not after `t`.
    fn slice_at(&self, t: S) -> usize {
        let (n, f) = self.grid.locate_time(t);
        if f >= S::one() - S::lit(1e-9) {
            n + 1
        } else {
            n
        }
    }

    /// Control (`martingale = false`) or martingale control at (t, x, m).
    pub fn lookup(&self, t: S, x: &[S], m: Option<S>, mode: PolicyInterp, martingale: bool, out: &mut [S]) {
        let g = &self.grid;
        let n = self.slice_at(t).min(g.nt);
        let width = if martingale { self.d } else { self.k };
        out.iter_mut().for_each(|v| *v = S::zero());
        let read = |s: usize| -> &[S] {
            if martingale {
                self.martingale(n, s)
            } else {
                self.control(n, s)
            }
        };
        match mode {
            PolicyInterp::Nearest => {
                let multi: Vec<usize> = x.iter().zip(&g.x).map(|(v, ax)| ax.nearest(*v)).collect();
                let jm = match (&g.m, m) {
                    (Some(ax), Some(mv)) => ax.nearest(mv),
                    (Some(ax), None) => ax.n - 1,
                    _ => 0,
                };
                let s = g.space_index(g.x_flat(&multi), jm);
                out[..width].copy_from_slice(read(s));
            }
            PolicyInterp::Linear => {
                let d = g.dim();
                let mut cells: Vec<(usize, S)> = x.iter().zip(&g.x).map(|(v, ax)| ax.locate(*v)).collect();
                if let Some(ax) = &g.m {
                    cells.push(ax.locate(m.unwrap_or(ax.hi)));
                }
                let strides = g.x_strides();
                for corner in 0..(1usize << cells.len()) {
                    let mut w = S::one();
                    let mut ix = 0;
                    let mut jm = 0;
                    for (k, (i, f)) in cells.iter().enumerate() {
                        let up = corner >> k & 1 == 1;
                        w = w * if up { *f } else { S::one() - *f };
                        let node = if up { i + 1 } else { *i };
                        if k < d {
                            ix += strides[k] * node;
                        } else {
                            jm = node;
                        }
                    }
                    if w == S::zero() {
                        continue;
                    }
                    for (o, v) in out.iter_mut().zip(read(g.space_index(ix, jm))) {
                        *o = *o + w * *v;
                    }
                }
            }
        }
    }
}
