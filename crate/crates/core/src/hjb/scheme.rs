//! Explicit monotone scheme shared by all grid solvers.

use rayon::prelude::*;

use super::field::ValueField;
use super::grid::Grid;
use super::{HamiltonianParams, HjbError};
use crate::model::ProblemSpec;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Sense {
    Max,
    Min,
}

impl Sense {
    #[inline]
    fn better<S: Real>(self, new: S, old: S) -> bool {
        match self {
            Sense::Max => new > old,
            Sense::Min => new < old,
        }
    }
}

/// Directional second-difference stencil of one diffusion column at one
/// x-node.
#[derive(Debug, Clone)]
pub(crate) struct Column<S> {
    /// The state part of the column vanishes.
    zero: bool,
    /// Step `k` along the column.
    kstep: S,
    /// `1 / (2k²)`.
    inv2k2: S,
    /// Interpolation corners (x-node, weight) of `x + kσ` and `x − kσ`.
    plus: Vec<(usize, S)>,
    minus: Vec<(usize, S)>,
}

/// Coefficient tables and stencils of one problem on one grid.
pub(crate) struct Tables<S> {
    pub grid: Grid<S>,
    pub d: usize,
    pub nx: usize,
    pub nm: usize,
    pub has_m: bool,
    pub controls: Vec<Vec<S>>,
    a_max: S,
    hx: Vec<S>,
    hm: S,
    mu: Vec<S>,
    nbr: Vec<(usize, usize)>,
    groups: Vec<Vec<Column<S>>>,
    col_group: Vec<u32>,
    /// Largest diagonal coefficient over nodes and candidates, without the
    /// discount.
    pub diag_max: S,
}

/// Boundary data of the mask in the m direction: per x-column, the mask
/// threshold `v − margin` and the value `w` on it.
pub(crate) struct Cut<S> {
    pub thr: Vec<S>,
    pub w: Vec<S>,
    pub m_lo: S,
    pub hm: S,
}

/// Values being read by the scheme. Masked nodes are unreadable; with cut
/// data, points between the threshold and the lowest unmasked node of a
/// column are interpolated against the boundary value.
pub(crate) struct Source<'a, S> {
    pub values: &'a [S],
    pub mask: &'a [bool],
    pub cut: Option<&'a Cut<S>>,
}

impl<S: Real> Source<'_, S> {
    #[inline]
    fn read(&self, nm: usize, ix: usize, jm: usize) -> Option<S> {
        let s = ix * nm + jm;
        (!self.mask[s]).then(|| self.values[s])
    }

    /// Reads at fractional m-position `pos` (in cells). Positions above the
    /// axis are clamped to the top node; positions below it are unreadable.
    #[inline]
    fn read_m(&self, nm: usize, ix: usize, pos: S) -> Option<S> {
        if pos < S::zero() {
            return None;
        }
        let max = S::from_usize_lossy(nm - 1);
        let p = pos.min(max);
        let i = p.floor().to_usize().unwrap_or(0).min(nm - 1);
        let f = p - S::from_usize_lossy(i);
        if f == S::zero() || i + 1 >= nm {
            return self.read(nm, ix, i);
        }
        let hi = self.read(nm, ix, i + 1)?;
        match self.read(nm, ix, i) {
            Some(lo) => Some((S::one() - f) * lo + f * hi),
            None => {
                let cut = self.cut?;
                let m = cut.m_lo + p * cut.hm;
                let thr = cut.thr[ix];
                let m_hi = cut.m_lo + S::from_usize_lossy(i + 1) * cut.hm;
                if !(m >= thr) || !(thr < m_hi) {
                    return None;
                }
                let th = (m - thr) / (m_hi - thr);
                Some((S::one() - th) * cut.w[ix] + th * hi)
            }
        }
    }
}

/// Per-worker scratch space.
pub(crate) struct Scratch<S> {
    state: Vec<u8>,
    cached: Vec<(S, S)>,
    cands: Vec<S>,
    /// Generator value of every candidate from the last evaluation.
    pub values: Vec<Option<S>>,
    cur_a: Vec<S>,
    pub best_a: Vec<S>,
}

impl<S: Real> Scratch<S> {
    pub fn new(d: usize) -> Scratch<S> {
        Scratch {
            state: Vec::new(),
            cached: Vec::new(),
            cands: Vec::new(),
            values: Vec::new(),
            cur_a: vec![S::zero(); d],
            best_a: vec![S::zero(); d],
        }
    }
}

/// Cap on the m-crossing breakpoints visited per column.
const MAX_BREAKPOINTS: usize = 512;

fn snap<S: Real>(v: S) -> S {
    let r = v.round();
    if (v - r).abs() < S::lit(1e-9) {
        r
    } else {
        v
    }
}

/// Interpolation corners of the point `multi + offset` (in cells), clamped
/// into the grid.
fn corners<S: Real>(grid: &Grid<S>, multi: &[usize], offset: &[S]) -> Vec<(usize, S)> {
    let strides = grid.x_strides();
    let mut out = vec![(0usize, S::one())];
    for (j, ax) in grid.x.iter().enumerate() {
        let max = S::from_usize_lossy(ax.n - 1);
        let p = S::from_usize_lossy(multi[j]) + offset[j];
        let p = if p > S::zero() { p.min(max) } else { S::zero() };
        let i = p.floor().to_usize().unwrap_or(0).min(ax.n - 1);
        let f = p - S::from_usize_lossy(i);
        let mut next = Vec::with_capacity(out.len() * 2);
        for (base, w) in out {
            if f == S::zero() || i + 1 >= ax.n {
                next.push((base + strides[j] * i, w));
            } else {
                next.push((base + strides[j] * i, w * (S::one() - f)));
                next.push((base + strides[j] * (i + 1), w * f));
            }
        }
        out = next;
    }
    out
}

impl<S: Real> Tables<S> {
    pub fn build(spec: &ProblemSpec, params: &HamiltonianParams, grid: &Grid<S>) -> Result<Tables<S>, HjbError> {
        params.check()?;
        spec.check()?;
        let d = spec.dim;
        if grid.dim() != d {
            return Err(HjbError::Grid(format!("grid has {} spatial axes, problem has {d}", grid.dim())));
        }
        let controls: Vec<Vec<S>> = params.control_grid(spec);
        let nu = controls.len();
        let has_m = grid.m.is_some();
        let a_max = if has_m { S::lit(params.truncation) } else { S::zero() };
        let hx: Vec<S> = grid.x.iter().map(|a| a.step()).collect();
        let hm = grid.m.as_ref().map_or(S::one(), |a| a.step());
        let nx = grid.nx_total();

        type NodeTables<S> = (Vec<S>, Vec<Column<S>>, Vec<u32>, S);
        let per_node: Vec<Result<NodeTables<S>, HjbError>> = (0..nx)
            .into_par_iter()
            .map(|ix| {
                let multi = grid.x_multi(ix);
                let x = grid.x_coords(ix);
                let mut mu = vec![S::zero(); nu * d];
                let mut groups: Vec<(Vec<S>, Column<S>)> = Vec::new();
                let mut col_group = vec![0u32; nu * d];
                let mut sig = vec![S::zero(); d * d];
                let mut diag = S::zero();
                for (ui, u) in controls.iter().enumerate() {
                    spec.drift_at(&x, u, &mut mu[ui * d..(ui + 1) * d])?;
                    spec.diffusion_at(&x, u, &mut sig)?;
                    let mut dg = S::zero();
                    for j in 0..d {
                        dg = dg + mu[ui * d + j].abs() / hx[j];
                    }
                    for k in 0..d {
                        let col: Vec<S> = (0..d).map(|j| sig[j * d + k]).collect();
                        let gi = match groups.iter().position(|(c, _)| *c == col) {
                            Some(i) => i,
                            None => {
                                let r = col
                                    .iter()
                                    .zip(&hx)
                                    .fold(S::zero(), |acc, (s, h)| acc.max(s.abs() / *h));
                                let column = if r == S::zero() {
                                    Column {
                                        zero: true,
                                        kstep: S::zero(),
                                        inv2k2: S::zero(),
                                        plus: Vec::new(),
                                        minus: Vec::new(),
                                    }
                                } else {
                                    let kstep = S::one() / r;
                                    let off: Vec<S> = col.iter().zip(&hx).map(|(s, h)| snap(kstep * *s / *h)).collect();
                                    let neg: Vec<S> = off.iter().map(|v| -*v).collect();
                                    Column {
                                        zero: false,
                                        kstep,
                                        inv2k2: S::lit(0.5) * r * r,
                                        plus: corners(grid, &multi, &off),
                                        minus: corners(grid, &multi, &neg),
                                    }
                                };
                                groups.push((col, column));
                                groups.len() - 1
                            }
                        };
                        col_group[ui * d + k] = gi as u32;
                        let c = &groups[gi].1;
                        dg = dg
                            + if c.zero {
                                if has_m {
                                    a_max * a_max / (hm * hm)
                                } else {
                                    S::zero()
                                }
                            } else {
                                S::lit(2.0) * c.inv2k2
                            };
                    }
                    diag = diag.max(dg);
                }
                if mu.iter().any(|v| !v.is_finite()) || groups.iter().any(|(c, _)| c.iter().any(|v| !v.is_finite())) {
                    return Err(HjbError::Grid(format!("non-finite coefficients at grid node {x:?}")));
                }
                Ok((mu, groups.into_iter().map(|(_, c)| c).collect(), col_group, diag))
            })
            .collect();

        let mut mu = Vec::with_capacity(nx * nu * d);
        let mut groups = Vec::with_capacity(nx);
        let mut col_group = Vec::with_capacity(nx * nu * d);
        let mut diag_max = S::zero();
        for r in per_node {
            let (m, g, cg, dg) = r?;
            mu.extend(m);
            groups.push(g);
            col_group.extend(cg);
            diag_max = diag_max.max(dg);
        }
        let strides = grid.x_strides();
        let mut nbr = Vec::with_capacity(nx * d);
        for ix in 0..nx {
            let multi = grid.x_multi(ix);
            for j in 0..d {
                let down = if multi[j] == 0 { ix } else { ix - strides[j] };
                let up = if multi[j] + 1 == grid.x[j].n { ix } else { ix + strides[j] };
                nbr.push((down, up));
            }
        }
        Ok(Tables {
            grid: grid.clone(),
            d,
            nx,
            nm: grid.nm(),
            has_m,
            controls,
            a_max,
            hx,
            hm,
            mu,
            nbr,
            groups,
            col_group,
            diag_max,
        })
    }

    pub fn nu(&self) -> usize {
        self.controls.len()
    }

    /// Explicit substeps per output interval for the given discount.
    pub fn substeps(&self, discount: S, allow: bool) -> Result<usize, HjbError> {
        let ht = self.grid.ht();
        let rate = self.diag_max + discount;
        if rate == S::zero() {
            return Ok(1);
        }
        let need = (ht * rate * (S::one() - S::lit(1e-12))).ceil().to_usize().unwrap_or(usize::MAX).max(1);
        if need > 1 && !allow {
            return Err(HjbError::CflViolation {
                dt: ht.as_f64(),
                bound: (S::one() / rate).as_f64(),
            });
        }
        Ok(need)
    }

    /// Diffusion term of one column for martingale control `a`.
    #[inline]
    fn column_term(&self, col: &Column<S>, ix: usize, jm: usize, a: S, v0: S, src: &Source<'_, S>) -> Option<S> {
        let nm = self.nm;
        if col.zero {
            if !self.has_m || a == S::zero() {
                return Some(S::zero());
            }
            if jm == 0 {
                return None;
            }
            let up = src.read(nm, ix, (jm + 1).min(nm - 1))?;
            let dn = src.read(nm, ix, jm - 1)?;
            let c = S::lit(0.5) * a * a / (self.hm * self.hm);
            return Some(c * (up + dn - (v0 + v0)));
        }
        let mut vp = S::zero();
        let mut vm = S::zero();
        if self.has_m {
            let q = col.kstep * a / self.hm;
            let base = S::from_usize_lossy(jm);
            for &(c, w) in &col.plus {
                vp = vp + w * src.read_m(nm, c, base + q)?;
            }
            for &(c, w) in &col.minus {
                vm = vm + w * src.read_m(nm, c, base - q)?;
            }
        } else {
            for &(c, w) in &col.plus {
                vp = vp + w * src.read(nm, c, 0)?;
            }
            for &(c, w) in &col.minus {
                vm = vm + w * src.read(nm, c, 0)?;
            }
        }
        Some(col.inv2k2 * (vp + vm - (v0 + v0)))
    }

    /// Martingale controls at which the column term can attain its maximum
    /// over `[−A, A]`, in increasing order. The term is piecewise linear in
    /// `a` with kinks where either read crosses an m-node, so it suffices to
    /// visit those crossings and the ends of the feasible interval. Reads
    /// below the axis, or below a cut threshold, bound that interval; past
    /// the top of the axis the clamped read makes the term nonincreasing in
    /// `|a|` for fields monotone in m. A zero column is quadratic in `a` and
    /// needs only the ends and 0.
    fn martingale_candidates(&self, col: &Column<S>, jm: usize, src: &Source<'_, S>, out: &mut Vec<S>) {
        out.clear();
        let amax = self.a_max;
        if col.zero {
            out.extend([-amax, S::zero(), amax]);
            return;
        }
        let k = col.kstep;
        let room = S::from_usize_lossy(jm.min(self.nm - 1 - jm)) * self.hm / k;
        let mut lo = -amax.min(room);
        let mut hi = amax.min(room);
        if let Some(cut) = src.cut {
            let m = cut.m_lo + S::from_usize_lossy(jm) * cut.hm;
            for &(c, _) in &col.plus {
                if cut.thr[c].is_finite() {
                    lo = lo.max((cut.thr[c] - m) / k);
                }
            }
            for &(c, _) in &col.minus {
                if cut.thr[c].is_finite() {
                    hi = hi.min((m - cut.thr[c]) / k);
                }
            }
        }
        if lo > hi {
            return;
        }
        let step = self.hm / k;
        let tol = S::lit(1e-9);
        let first = (lo / step - tol).ceil();
        let last = (hi / step + tol).floor();
        let count = (last - first).to_usize().map_or(0, |c| c + 1);
        let stride = count.div_ceil(MAX_BREAKPOINTS).max(1);
        out.push(lo);
        let mut i = 0;
        while i < count {
            let a = (first + S::from_usize_lossy(i)) * step;
            if a > lo && a < hi {
                out.push(a);
            }
            i += stride;
        }
        if hi > lo {
            out.push(hi);
        }
    }

    /// Best discrete generator value `L_h V` at node (ix, jm) over the
    /// candidate controls, with its control index; the martingale controls of
    /// the winner are left in `scratch.best_a`. `None` when every candidate
    /// reads an unreadable node.
    ///
    /// With `restrict`, only the flagged controls are candidates.
    pub fn eval_node(
        &self,
        ix: usize,
        jm: usize,
        src: &Source<'_, S>,
        sense: Sense,
        scratch: &mut Scratch<S>,
        restrict: Option<&[bool]>,
    ) -> Option<(S, usize)> {
        let nm = self.nm;
        let d = self.d;
        let nu = self.nu();
        let v0 = src.read(nm, ix, jm)?;
        let groups = &self.groups[ix];
        scratch.state.clear();
        scratch.state.resize(groups.len(), 0);
        scratch.cached.clear();
        scratch.cached.resize(groups.len(), (S::zero(), S::zero()));
        scratch.values.clear();
        scratch.values.resize(nu, None);
        let mut best: Option<(S, usize)> = None;
        'controls: for u in 0..nu {
            if restrict.map_or(false, |r| !r[u]) {
                continue;
            }
            let mut l = S::zero();
            for j in 0..d {
                let m = self.mu[(ix * nu + u) * d + j];
                if m == S::zero() {
                    continue;
                }
                let (dn, up) = self.nbr[ix * d + j];
                let Some(r) = src.read(nm, if m > S::zero() { up } else { dn }, jm) else {
                    continue 'controls;
                };
                l = l + m.abs() / self.hx[j] * (r - v0);
            }
            for k in 0..d {
                let g = self.col_group[(ix * nu + u) * d + k] as usize;
                if scratch.state[g] == 0 {
                    let col = &groups[g];
                    let gbest = if !self.has_m {
                        self.column_term(col, ix, jm, S::zero(), v0, src).map(|v| (v, S::zero()))
                    } else {
                        self.martingale_candidates(col, jm, src, &mut scratch.cands);
                        let mut gbest: Option<(S, S)> = None;
                        for &a in &scratch.cands {
                            if let Some(v) = self.column_term(col, ix, jm, a, v0, src) {
                                if gbest.map_or(true, |(b, _)| v > b) {
                                    gbest = Some((v, a));
                                }
                            }
                        }
                        gbest
                    };
                    match gbest {
                        Some(b) => {
                            scratch.state[g] = 1;
                            scratch.cached[g] = b;
                        }
                        None => scratch.state[g] = 2,
                    }
                }
                if scratch.state[g] == 2 {
                    continue 'controls;
                }
                let (v, a) = scratch.cached[g];
                l = l + v;
                scratch.cur_a[k] = a;
            }
            scratch.values[u] = Some(l);
            if best.map_or(true, |(b, _)| sense.better(l, b)) {
                best = Some((l, u));
                scratch.best_a.copy_from_slice(&scratch.cur_a);
            }
        }
        best
    }

    /// Whether control `u` at x-node `ix` only reads x-nodes allowed by
    /// `active` (no m-axis).
    pub fn candidate_reads_active(&self, ix: usize, u: usize, active: &[bool]) -> bool {
        let d = self.d;
        let nu = self.nu();
        for j in 0..d {
            let m = self.mu[(ix * nu + u) * d + j];
            let (dn, up) = self.nbr[ix * d + j];
            if (m > S::zero() && !active[up]) || (m < S::zero() && !active[dn]) {
                return false;
            }
        }
        for k in 0..d {
            let col = &self.groups[ix][self.col_group[(ix * nu + u) * d + k] as usize];
            if col.plus.iter().chain(&col.minus).any(|&(c, _)| !active[c]) {
                return false;
            }
        }
        true
    }
}

/// Everything a backward sweep needs besides the tables.
pub(crate) struct Sweep<'a, S> {
    pub sense: Sense,
    pub discount: S,
    /// Terminal slice values and mask.
    pub terminal: Vec<S>,
    pub terminal_mask: Vec<bool>,
    /// Floor field whose slices define the mask `m < v − margin`.
    pub floor: Option<&'a ValueField<S>>,
    pub margin: S,
    /// Value on the mask threshold (spatial field). Nodes without a readable
    /// candidate take it.
    pub boundary: Option<&'a ValueField<S>>,
    /// Nodes masked at all times (outside the closed domain).
    pub static_mask: Option<&'a [bool]>,
    /// x-nodes whose values are copied from another field.
    pub dirichlet: Option<(&'a [bool], &'a ValueField<S>)>,
    /// Candidate controls restricted to the floor-optimal ones everywhere.
    pub restrict: Option<&'a FloorArgmin>,
    pub substeps: usize,
}

/// Per (slice, x-node), the controls attaining the floor's discrete minimum.
pub(crate) struct FloorArgmin {
    nu: usize,
    nx: usize,
    sets: Vec<bool>,
}

impl FloorArgmin {
    pub fn set(&self, n: usize, ix: usize) -> &[bool] {
        let i = (n * self.nx + ix) * self.nu;
        &self.sets[i..i + self.nu]
    }
}

impl<S: Real> Tables<S> {
    /// Floor-optimal control sets of a floor field solved on these (spatial)
    /// tables. Slice `n` is computed from the floor values of slice `n + 1`.
    pub fn floor_argmin(&self, floor: &ValueField<S>) -> FloorArgmin {
        let g = &self.grid;
        let nu = self.nu();
        let nx = self.nx;
        let mut sets = vec![true; g.slices() * nx * nu];
        sets.par_chunks_mut(nx * nu).enumerate().for_each(|(n, out)| {
            let src_n = (n + 1).min(g.nt);
            let src = Source {
                values: floor.slice(src_n),
                mask: floor.slice_mask(src_n),
                cut: None,
            };
            let mut scratch = Scratch::new(self.d);
            for ix in 0..nx {
                if let Some((best, _)) = self.eval_node(ix, 0, &src, Sense::Min, &mut scratch, None) {
                    let tol = S::lit(1e-9) * (S::one() + best.abs());
                    for u in 0..nu {
                        out[ix * nu + u] = scratch.values[u].map_or(false, |l| l <= best + tol);
                    }
                }
            }
        });
        FloorArgmin { nu, nx, sets }
    }
}

/// Linear-in-time interpolation of a spatial field between slices `n` and
/// `n + 1`, with weight `theta` on slice `n + 1`.
fn blend<S: Real>(f: &ValueField<S>, n: usize, theta: S, ix: usize) -> S {
    let lo = f.value(n, ix);
    if theta == S::zero() {
        return lo;
    }
    let hi = f.value(n + 1, ix);
    if theta == S::one() {
        return hi;
    }
    theta * hi + (S::one() - theta) * lo
}

impl<S: Real> Tables<S> {
    /// Backward sweep from the terminal slice. Returns all slices of values
    /// and mask, slice-major.
    pub fn sweep(&self, cfg: &Sweep<'_, S>) -> (Vec<S>, Vec<bool>) {
        let g = &self.grid;
        let ns = g.n_space();
        let nm = self.nm;
        let slices = g.slices();
        let mut values = vec![S::zero(); ns * slices];
        let mut mask = vec![false; ns * slices];
        values[g.nt * ns..].copy_from_slice(&cfg.terminal);
        mask[g.nt * ns..].copy_from_slice(&cfg.terminal_mask);

        let mut cur = cfg.terminal.clone();
        let mut cur_mask = cfg.terminal_mask.clone();
        let mut next = vec![S::zero(); ns];
        let mut next_mask = vec![false; ns];
        let sub = cfg.substeps.max(1);
        let dt = g.ht() / S::from_usize_lossy(sub);
        let m_nodes: Vec<S> = g.m.as_ref().map_or(vec![S::zero()], |a| a.nodes());
        let cut_geometry = g.m.as_ref().map(|a| (a.lo, a.step()));
        let outside = |ix: usize| cfg.dirichlet.map_or(false, |(o, _)| o[ix]);

        for n in (0..g.nt).rev() {
            for j in 1..=sub {
                let theta_src = S::one() - S::from_usize_lossy(j - 1) / S::from_usize_lossy(sub);
                let theta = S::one() - S::from_usize_lossy(j) / S::from_usize_lossy(sub);
                let cut = match (cfg.floor, cfg.boundary, cut_geometry) {
                    (Some(fl), Some(b), Some((m_lo, hm))) => Some(Cut {
                        thr: (0..self.nx)
                            .map(|ix| {
                                if outside(ix) {
                                    S::infinity()
                                } else {
                                    blend(fl, n, theta_src, ix) - cfg.margin
                                }
                            })
                            .collect(),
                        w: (0..self.nx).map(|ix| blend(b, n, theta_src, ix)).collect(),
                        m_lo,
                        hm,
                    }),
                    _ => None,
                };
                let src = Source {
                    values: &cur,
                    mask: &cur_mask,
                    cut: cut.as_ref(),
                };
                next.par_chunks_mut(nm)
                    .zip(next_mask.par_chunks_mut(nm))
                    .enumerate()
                    .for_each_init(
                        || Scratch::new(self.d),
                        |scratch, (ix, (vals, msk))| {
                            if let Some((nodes, field)) = cfg.dirichlet {
                                if nodes[ix] {
                                    for jm in 0..nm {
                                        let s = ix * nm + jm;
                                        vals[jm] = field.value(n, s);
                                        msk[jm] = field.masked(n, s);
                                    }
                                    return;
                                }
                            }
                            let thr = cfg.floor.map(|f| blend(f, n, theta, ix) - cfg.margin);
                            let restrict = cfg.restrict.map(|r| r.set(n, ix));
                            for jm in (0..nm).rev() {
                                let s = ix * nm + jm;
                                let masked = cfg.static_mask.map_or(false, |sm| sm[s]) || thr.map_or(false, |t| m_nodes[jm] < t);
                                if masked {
                                    vals[jm] = S::neg_infinity();
                                    msk[jm] = true;
                                    continue;
                                }
                                msk[jm] = false;
                                vals[jm] = match self.eval_node(ix, jm, &src, cfg.sense, scratch, restrict) {
                                    Some((l, _)) => {
                                        let v0 = cur[s];
                                        v0 + dt * (l - cfg.discount * v0)
                                    }
                                    None => {
                                        let fallback = match cfg.boundary {
                                            Some(b) => blend(b, n, theta, ix),
                                            None if !cur_mask[s] => cur[s],
                                            None => S::neg_infinity(),
                                        };
                                        if jm + 1 < nm && !msk[jm + 1] {
                                            fallback.min(vals[jm + 1])
                                        } else {
                                            fallback
                                        }
                                    }
                                };
                            }
                            if cfg.floor.is_some() {
                                // A larger budget admits every control of a smaller one.
                                for jm in 1..nm {
                                    if !msk[jm - 1] && vals[jm - 1] > vals[jm] {
                                        vals[jm] = vals[jm - 1];
                                    }
                                }
                            }
                        },
                    );
                std::mem::swap(&mut cur, &mut next);
                std::mem::swap(&mut cur_mask, &mut next_mask);
            }
            values[n * ns..(n + 1) * ns].copy_from_slice(&cur);
            mask[n * ns..(n + 1) * ns].copy_from_slice(&cur_mask);
        }
        (values, mask)
    }
}
