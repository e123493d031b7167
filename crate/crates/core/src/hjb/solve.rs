//! Backward solvers and policy extraction.
//!
//! The expectation-constrained solve needs, besides the floor `v`, the value
//! `w(t, x)` on the mask threshold `m = v(t, x) − margin`: there the relaxed
//! constraint binds, so only floor-optimal controls are admissible and `w`
//! solves the unconstrained equation with the controls restricted to the
//! discrete argmin of the floor. Reads between the threshold and the lowest
//! unmasked node of a column interpolate against `w`, and nodes with no
//! readable candidate take `w`.
//!
//! When the constraint depends on the running-minimum distance `y`, the
//! solvers work in two stages: the problem with `y = 0` (already exited) is
//! solved on the whole box, and its values are then imposed at the nodes
//! outside the open domain while the problem for paths that have not exited
//! is solved inside, with terminal data `g(x, min(1, d(x)))`.

use rayon::prelude::*;

use super::field::{FieldKind, FieldMeta, PolicyField, ValueField, TIE_BREAK};
use super::grid::Grid;
use super::scheme::{Cut, FloorArgmin, Scratch, Sense, Source, Sweep, Tables};
use super::{HamiltonianParams, HjbError};
use crate::model::{distance_to_complement, ModelError, ProblemSpec};
use crate::scalar::Real;

fn meta<S: Real>(kind: FieldKind, tables: &Tables<S>, params: &HamiltonianParams, substeps: usize, margin: S, discount: S) -> FieldMeta {
    FieldMeta {
        kind,
        truncation: tables.has_m.then_some(params.truncation),
        control_points: tables.nu(),
        substeps,
        mask_margin: margin.as_f64(),
        discount: discount.as_f64(),
    }
}

fn per_x<S: Real>(grid: &Grid<S>, f: impl Fn(&[S]) -> Result<S, HjbError> + Sync) -> Result<Vec<S>, HjbError> {
    (0..grid.nx_total())
        .into_par_iter()
        .map(|ix| f(&grid.x_coords(ix)))
        .collect()
}

/// Exit classification for exit-augmented constraints: (outside the open
/// domain, terminal `y` inside).
fn exit_split<S: Real>(spec: &ProblemSpec, grid: &Grid<S>) -> Result<(Vec<bool>, Vec<S>), HjbError> {
    if spec.domain.is_none() {
        return Err(ModelError::NoDomain.into());
    }
    let mut outside = Vec::with_capacity(grid.nx_total());
    let mut ys = Vec::with_capacity(grid.nx_total());
    for ix in 0..grid.nx_total() {
        let x = grid.x_coords(ix);
        let inside = spec.delta_at(&x)? > S::zero();
        outside.push(!inside);
        ys.push(if inside { distance_to_complement(spec, &x)?.min(S::one()) } else { S::zero() });
    }
    Ok((outside, ys))
}

/// Sweep over the (t, x) grid of `tables` without an m-axis mask.
#[allow(clippy::too_many_arguments)]
fn spatial_sweep<S: Real>(
    spec: &ProblemSpec,
    params: &HamiltonianParams,
    tables: &Tables<S>,
    sense: Sense,
    terminal: Vec<S>,
    static_mask: Option<&[bool]>,
    dirichlet: Option<(&[bool], &ValueField<S>)>,
    restrict: Option<&FloorArgmin>,
    kind: FieldKind,
) -> Result<ValueField<S>, HjbError> {
    let discount = S::lit(params.discount_for(spec));
    let substeps = tables.substeps(discount, params.substepping)?;
    let terminal_mask: Vec<bool> = static_mask.map_or_else(|| vec![false; tables.nx], <[bool]>::to_vec);
    let terminal = terminal
        .into_iter()
        .zip(&terminal_mask)
        .map(|(v, &m)| if m { S::neg_infinity() } else { v })
        .collect();
    let cfg = Sweep {
        sense,
        discount,
        terminal,
        terminal_mask,
        floor: None,
        margin: S::zero(),
        boundary: None,
        static_mask,
        dirichlet,
        restrict,
        substeps,
    };
    let (values, mask) = tables.sweep(&cfg);
    Ok(ValueField {
        grid: tables.grid.clone(),
        values,
        mask,
        meta: meta(kind, tables, params, substeps, S::zero(), discount),
    })
}

fn constraint_terminal<S: Real>(spec: &ProblemSpec, grid: &Grid<S>, y: Option<S>) -> Result<Vec<S>, HjbError> {
    per_x(grid, |x| Ok(spec.constraint_at(x, y.unwrap_or(S::one()))?))
}

fn reward_terminal<S: Real>(spec: &ProblemSpec, grid: &Grid<S>) -> Result<Vec<S>, HjbError> {
    per_x(grid, |x| Ok(spec.reward_at(x)?))
}

fn exited_floor<S: Real>(spec: &ProblemSpec, params: &HamiltonianParams, spatial: &Tables<S>) -> Result<ValueField<S>, HjbError> {
    let g0 = constraint_terminal(spec, &spatial.grid, Some(S::zero()))?;
    spatial_sweep(spec, params, spatial, Sense::Min, g0, None, None, None, FieldKind::Floor)
}

/// Constraint floor `v(t, x) = inf E[g(X_T)]` on the (t, x) part of `grid`.
pub fn solve_constraint_floor<S: Real>(spec: &ProblemSpec, grid: &Grid<S>, params: &HamiltonianParams) -> Result<ValueField<S>, HjbError> {
    let grid = grid.spatial();
    let tables = Tables::build(spec, params, &grid)?;
    if !spec.constraint_uses_y() {
        let g = constraint_terminal(spec, &grid, None)?;
        return spatial_sweep(spec, params, &tables, Sense::Min, g, None, None, None, FieldKind::Floor);
    }
    let stage1 = exited_floor(spec, params, &tables)?;
    let (outside, ys) = exit_split(spec, &grid)?;
    let terminal = (0..grid.nx_total())
        .map(|ix| {
            if outside[ix] {
                Ok(stage1.value(grid.nt, ix))
            } else {
                Ok(spec.constraint_at(&grid.x_coords(ix), ys[ix])?)
            }
        })
        .collect::<Result<Vec<S>, HjbError>>()?;
    spatial_sweep(
        spec,
        params,
        &tables,
        Sense::Min,
        terminal,
        None,
        Some((&outside, &stage1)),
        None,
        FieldKind::Floor,
    )
}

/// Unconstrained value `sup E[f(X_T)]` on the (t, x) part of `grid`.
pub fn solve_unconstrained<S: Real>(
    spec: &ProblemSpec,
    grid: &Grid<S>,
    params: &HamiltonianParams,
) -> Result<(ValueField<S>, PolicyField<S>), HjbError> {
    let grid = grid.spatial();
    let tables = Tables::build(spec, params, &grid)?;
    let f = reward_terminal(spec, &grid)?;
    let field = spatial_sweep(spec, params, &tables, Sense::Max, f, None, None, None, FieldKind::Unconstrained)?;
    let policy = policy_from_tables(&field, &tables, params, None)?;
    Ok((field, policy))
}

/// Floor data of one stage of the expectation-constrained solve.
struct Stage<S> {
    floor: ValueField<S>,
    argmin: FloorArgmin,
    boundary: ValueField<S>,
}

/// Floor-optimal sets and threshold values for a floor; the previous
/// (exited) stage supplies the Dirichlet data of `w` when present.
fn stage_for<S: Real>(
    spec: &ProblemSpec,
    params: &HamiltonianParams,
    spatial: &Tables<S>,
    floor: ValueField<S>,
    exited: Option<(&[bool], &Stage<S>)>,
) -> Result<Stage<S>, HjbError> {
    let argmin = spatial.floor_argmin(&floor);
    let f = reward_terminal(spec, &spatial.grid)?;
    let boundary = spatial_sweep(
        spec,
        params,
        spatial,
        Sense::Max,
        f,
        None,
        exited.map(|(o, st)| (o, &st.boundary)),
        Some(&argmin),
        FieldKind::Unconstrained,
    )?;
    Ok(Stage {
        floor,
        argmin,
        boundary,
    })
}

/// Expectation-constrained value `V(t, x, m)` and its policy. The floor is
/// solved first on the (t, x) part of the grid. An m axis lying entirely
/// below the floor gives a fully masked field (check
/// [`ValueField::fully_masked`]) whose policy is the first control with
/// `a = 0`.
pub fn solve_expectation_constrained<S: Real>(
    spec: &ProblemSpec,
    grid: &Grid<S>,
    params: &HamiltonianParams,
) -> Result<(ValueField<S>, PolicyField<S>), HjbError> {
    let floor = solve_constraint_floor(spec, grid, params)?;
    solve_expectation_constrained_with_floor(spec, grid, params, &floor)
}

fn margin_for<S: Real>(params: &HamiltonianParams, grid: &Grid<S>) -> Result<S, HjbError> {
    let m_axis = grid
        .m
        .as_ref()
        .ok_or_else(|| HjbError::Grid("expectation-constrained solve needs an m axis".into()))?;
    Ok(match params.mask_margin {
        Some(v) => S::lit(v),
        None => m_axis.step(),
    })
}

/// Stages for a constrained solve: `(exited stage and outside nodes, main
/// stage)`.
type Stages<S> = (Option<(Vec<bool>, Stage<S>)>, Stage<S>);

fn stages<S: Real>(spec: &ProblemSpec, params: &HamiltonianParams, spatial: &Tables<S>, floor: &ValueField<S>) -> Result<Stages<S>, HjbError> {
    if spec.constraint_uses_y() {
        let floor1 = exited_floor(spec, params, spatial)?;
        let st1 = stage_for(spec, params, spatial, floor1, None)?;
        let (outside, _) = exit_split(spec, &spatial.grid)?;
        let st2 = stage_for(spec, params, spatial, floor.clone(), Some((&outside, &st1)))?;
        Ok((Some((outside, st1)), st2))
    } else {
        Ok((None, stage_for(spec, params, spatial, floor.clone(), None)?))
    }
}

/// As [`solve_expectation_constrained`] with a precomputed floor.
pub fn solve_expectation_constrained_with_floor<S: Real>(
    spec: &ProblemSpec,
    grid: &Grid<S>,
    params: &HamiltonianParams,
    floor: &ValueField<S>,
) -> Result<(ValueField<S>, PolicyField<S>), HjbError> {
    let margin = margin_for(params, grid)?;
    if floor.grid != grid.spatial() || floor.meta.kind != FieldKind::Floor {
        return Err(HjbError::FloorMismatch);
    }
    let tables = Tables::build(spec, params, grid)?;
    let spatial = Tables::build(spec, params, &grid.spatial())?;
    let (exited, main) = stages(spec, params, &spatial, floor)?;
    let field = match &exited {
        Some((outside, st1)) => {
            let v1 = constrained_stage(spec, params, &tables, st1, margin, None)?;
            constrained_stage(spec, params, &tables, &main, margin, Some((outside, &v1)))?
        }
        None => constrained_stage(spec, params, &tables, &main, margin, None)?,
    };
    let ctx = PolicyCtx {
        spec,
        spatial: &spatial,
        stage: &main,
        margin,
    };
    let policy = policy_from_tables(&field, &tables, params, Some(&ctx))?;
    Ok((field, policy))
}

fn constrained_stage<S: Real>(
    spec: &ProblemSpec,
    params: &HamiltonianParams,
    tables: &Tables<S>,
    stage: &Stage<S>,
    margin: S,
    dirichlet: Option<(&[bool], &ValueField<S>)>,
) -> Result<ValueField<S>, HjbError> {
    let grid = &tables.grid;
    let floor = &stage.floor;
    let m_axis = grid.m.as_ref().expect("checked by caller");
    let discount = S::lit(params.discount_for(spec));
    let substeps = tables.substeps(discount, params.substepping)?;
    let f = reward_terminal(spec, grid)?;
    let nm = tables.nm;
    let nt = grid.nt;
    let mut terminal = vec![S::zero(); grid.n_space()];
    let mut terminal_mask = vec![false; grid.n_space()];
    for ix in 0..tables.nx {
        let outside = dirichlet.map_or(false, |(o, _)| o[ix]);
        for jm in 0..nm {
            let s = ix * nm + jm;
            if let (true, Some((_, d))) = (outside, dirichlet) {
                terminal[s] = d.value(nt, s);
                terminal_mask[s] = d.masked(nt, s);
            } else if m_axis.node(jm) < floor.value(nt, ix) - margin {
                terminal[s] = S::neg_infinity();
                terminal_mask[s] = true;
            } else {
                terminal[s] = f[ix];
            }
        }
    }
    let cfg = Sweep {
        sense: Sense::Max,
        discount,
        terminal,
        terminal_mask,
        floor: Some(floor),
        margin,
        boundary: Some(&stage.boundary),
        static_mask: None,
        dirichlet,
        restrict: None,
        substeps,
    };
    let (values, mask) = tables.sweep(&cfg);
    Ok(ValueField {
        grid: grid.clone(),
        values,
        mask,
        meta: meta(FieldKind::ExpectationConstrained, tables, params, substeps, margin, discount),
    })
}

/// State-constrained value on the closure of the domain. Nodes outside the
/// closure are masked, as are nodes none of whose discrete controls keep the
/// stencil inside the remaining nodes. Without a domain this is the
/// unconstrained solve.
pub fn solve_state_constrained<S: Real>(
    spec: &ProblemSpec,
    grid: &Grid<S>,
    params: &HamiltonianParams,
) -> Result<(ValueField<S>, PolicyField<S>), HjbError> {
    let grid = grid.spatial();
    let tables = Tables::build(spec, params, &grid)?;
    let f = reward_terminal(spec, &grid)?;
    let field = match &spec.domain {
        None => spatial_sweep(spec, params, &tables, Sense::Max, f, None, None, None, FieldKind::StateConstrained)?,
        Some(_) => {
            let mut active = (0..tables.nx)
                .map(|ix| Ok(spec.delta_at(&grid.x_coords(ix))? >= S::zero()))
                .collect::<Result<Vec<bool>, HjbError>>()?;
            loop {
                let drop: Vec<usize> = (0..tables.nx)
                    .filter(|&ix| active[ix] && !(0..tables.nu()).any(|u| tables.candidate_reads_active(ix, u, &active)))
                    .collect();
                if drop.is_empty() {
                    break;
                }
                for ix in drop {
                    active[ix] = false;
                }
            }
            if !active.iter().any(|&a| a) {
                return Err(HjbError::NoInteriorNodes);
            }
            let inactive: Vec<bool> = active.iter().map(|a| !a).collect();
            spatial_sweep(
                spec,
                params,
                &tables,
                Sense::Max,
                f,
                Some(&inactive),
                None,
                None,
                FieldKind::StateConstrained,
            )?
        }
    };
    let policy = policy_from_tables(&field, &tables, params, None)?;
    Ok((field, policy))
}

/// Maximizing (minimizing, for the floor) controls of the discrete scheme at
/// every node. Slice `n` is computed from the values of slice `n + 1`; the
/// last slice uses itself. Where no candidate of an expectation-constrained
/// field is readable (next to the mask threshold), the control is the
/// maximizer among floor-optimal controls and the martingale control tracks
/// the floor, `a = σᵀ Dv` clamped to `[−A, A]`. Masked nodes copy the policy
/// of the lowest unmasked node of their column.
pub fn extract_policy<S: Real>(field: &ValueField<S>, spec: &ProblemSpec, params: &HamiltonianParams) -> Result<PolicyField<S>, HjbError> {
    if field.fully_masked() {
        return Err(HjbError::MaskedOnly);
    }
    let tables = Tables::build(spec, params, &field.grid)?;
    if field.meta.kind == FieldKind::ExpectationConstrained {
        let spatial = Tables::build(spec, params, &field.grid.spatial())?;
        let floor = solve_constraint_floor(spec, &field.grid, params)?;
        let (_, main) = stages(spec, params, &spatial, &floor)?;
        let ctx = PolicyCtx {
            spec,
            spatial: &spatial,
            stage: &main,
            margin: S::lit(field.meta.mask_margin),
        };
        return policy_from_tables(field, &tables, params, Some(&ctx));
    }
    policy_from_tables(field, &tables, params, None)
}

struct PolicyCtx<'a, S> {
    spec: &'a ProblemSpec,
    spatial: &'a Tables<S>,
    stage: &'a Stage<S>,
    margin: S,
}

impl<S: Real> PolicyCtx<'_, S> {
    /// Boundary policy at (slice n, x-node ix): control index and `σᵀ Dv`.
    fn boundary_policy(&self, n: usize, ix: usize, scratch: &mut Scratch<S>, a_out: &mut [S], bound: S) -> usize {
        let g = &self.spatial.grid;
        let src_n = (n + 1).min(g.nt);
        let w = &self.stage.boundary;
        let src = Source {
            values: w.slice(src_n),
            mask: w.slice_mask(src_n),
            cut: None,
        };
        let restrict = self.stage.argmin.set(n, ix);
        let u = self
            .spatial
            .eval_node(ix, 0, &src, Sense::Max, scratch, Some(restrict))
            .map(|(_, u)| u)
            .or_else(|| restrict.iter().position(|&b| b))
            .unwrap_or(0);
        let d = g.dim();
        let multi = g.x_multi(ix);
        let strides = g.x_strides();
        let floor = &self.stage.floor;
        let grad: Vec<S> = (0..d)
            .map(|j| {
                let lo = if multi[j] == 0 { ix } else { ix - strides[j] };
                let hi = if multi[j] + 1 == g.x[j].n { ix } else { ix + strides[j] };
                if lo == hi {
                    return S::zero();
                }
                let span = S::from_usize_lossy((hi - lo) / strides[j]) * g.x[j].step();
                (floor.value(n, hi) - floor.value(n, lo)) / span
            })
            .collect();
        let x = g.x_coords(ix);
        let mut sig = vec![S::zero(); d * d];
        if self.spec.diffusion_at(&x, &self.spatial.controls[u], &mut sig).is_err() {
            sig.iter_mut().for_each(|v| *v = S::zero());
        }
        for k in 0..d {
            let mut a = S::zero();
            for j in 0..d {
                a = a + sig[j * d + k] * grad[j];
            }
            a_out[k] = a.max(-bound).min(bound);
        }
        u
    }
}

fn policy_from_tables<S: Real>(
    field: &ValueField<S>,
    tables: &Tables<S>,
    params: &HamiltonianParams,
    ctx: Option<&PolicyCtx<'_, S>>,
) -> Result<PolicyField<S>, HjbError> {
    let g = &tables.grid;
    let sense = if field.meta.kind == FieldKind::Floor { Sense::Min } else { Sense::Max };
    let k = tables.controls[0].len();
    let d = if tables.has_m { tables.d } else { 0 };
    let dw = d.max(1);
    let nm = tables.nm;
    let ns = g.n_space();
    let bound = S::lit(params.truncation);
    let mut u_idx = vec![0usize; ns * g.slices()];
    let mut a_val = vec![S::zero(); ns * g.slices() * dw];

    u_idx
        .par_chunks_mut(ns)
        .zip(a_val.par_chunks_mut(ns * dw))
        .enumerate()
        .for_each(|(n, (us, as_))| {
            let src_n = (n + 1).min(g.nt);
            let cut = match (ctx, &g.m) {
                (Some(c), Some(ax)) => Some(Cut {
                    thr: (0..tables.nx).map(|ix| c.stage.floor.value(src_n, ix) - c.margin).collect(),
                    w: (0..tables.nx).map(|ix| c.stage.boundary.value(src_n, ix)).collect(),
                    m_lo: ax.lo,
                    hm: ax.step(),
                }),
                _ => None,
            };
            let src = Source {
                values: field.slice(src_n),
                mask: field.slice_mask(src_n),
                cut: cut.as_ref(),
            };
            let own_mask = field.slice_mask(n);
            let mut scratch = Scratch::new(tables.d);
            let mut a_tmp = vec![S::zero(); dw];
            for ix in 0..tables.nx {
                let mut lowest: Option<usize> = None;
                for jm in 0..nm {
                    let s = ix * nm + jm;
                    if own_mask[s] {
                        continue;
                    }
                    if let Some((_, u)) = tables.eval_node(ix, jm, &src, sense, &mut scratch, None) {
                        us[s] = u;
                        for c in 0..d {
                            as_[s * d + c] = scratch.best_a[c];
                        }
                    } else if let Some(c) = ctx {
                        us[s] = c.boundary_policy(n, ix, &mut scratch, &mut a_tmp, bound);
                        as_[s * d..(s + 1) * d].copy_from_slice(&a_tmp[..d]);
                    }
                    lowest.get_or_insert(s);
                }
                if let Some(src) = lowest {
                    for jm in 0..nm {
                        let s = ix * nm + jm;
                        if own_mask[s] {
                            us[s] = us[src];
                            for c in 0..d {
                                as_[s * d + c] = as_[src * d + c];
                            }
                        }
                    }
                }
            }
        });

    let u = u_idx.iter().flat_map(|&i| tables.controls[i].iter().copied()).collect();
    let a = if d == 0 { Vec::new() } else { a_val };
    Ok(PolicyField {
        grid: g.clone(),
        k,
        d,
        u,
        a,
        truncation: tables.has_m.then_some(bound),
        tie_break: TIE_BREAK,
    })
}
