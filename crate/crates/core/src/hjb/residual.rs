//! Pointwise residual of a solved field in its own equation.

use super::field::{FieldKind, ValueField};
use super::hamiltonian::{hamiltonian, hamiltonian_state};
use super::{HamiltonianParams, HjbError};
use crate::model::ProblemSpec;
use crate::scalar::Real;

/// Residual at one node, or why it cannot be formed there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Residual<S> {
    Value(S),
    /// The central stencil leaves the box, crosses the mask, or the node is
    /// on the terminal slice.
    Inapplicable(&'static str),
}

impl<S: Copy> Residual<S> {
    pub fn value(&self) -> Option<S> {
        match self {
            Residual::Value(v) => Some(*v),
            Residual::Inapplicable(_) => None,
        }
    }
}

/// `ρV − D_t V + H(x, DV, D²V)` at node `(n, s)` (slice, space index), with
/// a forward time difference to slice `n + 1` and central differences in
/// (x, m). For the floor the Hamiltonian is the one of the minimization,
/// `sup_u (−L^u)`.
pub fn viscosity_residual<S: Real>(
    field: &ValueField<S>,
    spec: &ProblemSpec,
    params: &HamiltonianParams,
    node: (usize, usize),
) -> Result<Residual<S>, HjbError> {
    let g = &field.grid;
    let (n, s) = node;
    if n >= g.nt {
        return Ok(Residual::Inapplicable("terminal slice"));
    }
    if field.masked(n, s) || field.masked(n + 1, s) {
        return Ok(Residual::Inapplicable("masked node"));
    }
    let (ix, jm) = g.split(s);
    let mut pos = g.x_multi(ix);
    let has_m = g.m.is_some();
    if has_m {
        pos.push(jm);
    }
    let dims = pos.len();
    let mut sizes: Vec<usize> = g.x.iter().map(|a| a.n).collect();
    if let Some(a) = &g.m {
        sizes.push(a.n);
    }
    if pos.iter().zip(&sizes).any(|(&i, &n)| i == 0 || i + 1 == n) {
        return Ok(Residual::Inapplicable("stencil leaves the grid"));
    }
    let h = g.spacings();
    let d = g.dim();
    let read = |offsets: &[(usize, i64)]| -> Option<S> {
        let mut p = pos.clone();
        for &(axis, o) in offsets {
            p[axis] = (p[axis] as i64 + o) as usize;
        }
        let ixx = g.x_flat(&p[..d]);
        let jmm = if has_m { p[d] } else { 0 };
        let s = g.space_index(ixx, jmm);
        (!field.masked(n, s)).then(|| field.value(n, s))
    };
    let v0 = field.value(n, s);
    let mut grad = vec![S::zero(); dims];
    let mut hess = vec![S::zero(); dims * dims];
    let two = S::lit(2.0);
    for i in 0..dims {
        let (Some(up), Some(dn)) = (read(&[(i, 1)]), read(&[(i, -1)])) else {
            return Ok(Residual::Inapplicable("stencil crosses the mask"));
        };
        grad[i] = (up - dn) / (two * h[i]);
        hess[i * dims + i] = (up - two * v0 + dn) / (h[i] * h[i]);
        for j in 0..i {
            let corners = [
                read(&[(i, 1), (j, 1)]),
                read(&[(i, 1), (j, -1)]),
                read(&[(i, -1), (j, 1)]),
                read(&[(i, -1), (j, -1)]),
            ];
            let [Some(pp), Some(pm), Some(mp), Some(mm)] = corners else {
                return Ok(Residual::Inapplicable("stencil crosses the mask"));
            };
            let c = (pp - pm - mp + mm) / (S::lit(4.0) * h[i] * h[j]);
            hess[i * dims + j] = c;
            hess[j * dims + i] = c;
        }
    }
    let x = g.x_coords(ix);
    let dt = (field.value(n + 1, s) - v0) / g.ht();
    let rho = S::lit(params.discount_for(spec));
    let ham = match field.meta.kind {
        FieldKind::ExpectationConstrained => hamiltonian(spec, params, &x, &grad, &hess)?.value,
        FieldKind::Floor => {
            let neg_p: Vec<S> = grad.iter().map(|v| -*v).collect();
            let neg_q: Vec<S> = hess.iter().map(|v| -*v).collect();
            -hamiltonian_state(spec, params, &x, &neg_p, &neg_q)?.value
        }
        FieldKind::Unconstrained | FieldKind::StateConstrained => {
            if has_m {
                hamiltonian(spec, params, &x, &grad, &hess)?.value
            } else {
                hamiltonian_state(spec, params, &x, &grad, &hess)?.value
            }
        }
    };
    Ok(Residual::Value(rho * v0 - dt + ham))
}
