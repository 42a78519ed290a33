use serde::{Deserialize, Serialize};

use super::search::{StepMinimizer, VelocitySearch};
use super::{default_v_bound, SpaceTimeFn};
use crate::error::{Error, Result};
use crate::grid::GridFn;
use crate::hamiltonian::HamiltonianModel;
use crate::par::{map_indices, Execution};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionOptions {
    /// Velocity cap; `None` means `10 (1 + Lip(phi))`.
    pub v_bound: Option<f64>,
    pub search: VelocitySearch,
    pub execution: Execution,
}

impl Default for ActionOptions {
    fn default() -> Self {
        ActionOptions {
            v_bound: None,
            search: VelocitySearch::Exact,
            execution: Execution::default(),
        }
    }
}

/// One application of the action operator with `u` frozen in the Lagrangian:
///
/// ```text
/// A[u](x, t_j) = min_v { A[u](x - dt v, t_{j-1}) + dt L(x, u(x, t_j), v) },  A[u](., t_0) = phi
/// ```
pub fn apply_action_operator(
    phi: &GridFn,
    u: &SpaceTimeFn,
    h: &HamiltonianModel,
    opts: &ActionOptions,
) -> Result<SpaceTimeFn> {
    opts.search.validate()?;
    if u.times()[0] != 0.0 {
        return Err(Error::InvalidArgument("space-time window must start at t = 0".into()));
    }
    if u.grid() != phi.grid() {
        return Err(Error::GridMismatch("phi and u live on different grids".into()));
    }
    let dt = u.dt();
    let bound = opts.v_bound.unwrap_or_else(|| default_v_bound(phi));
    let grid = *phi.grid();

    let mut out = SpaceTimeFn::new(vec![0.0], vec![phi.clone()])?;
    for j in 1..=u.steps() {
        let frozen = u.slice(j).values();
        let next = {
            let prev = out.last();
            let m = StepMinimizer::new(prev, dt, h, bound, opts.search);
            let vals = map_indices(grid.n(), opts.execution, |i| {
                m.minimize(grid.node(i), frozen[i]).map(|r| r.value)
            });
            GridFn::new(grid, vals.into_iter().collect::<Result<Vec<_>>>()?)?
        };
        out.push(u.times()[j], next);
    }
    Ok(out)
}

/// Converged fixed point of the action operator.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPoint {
    pub trajectory: SpaceTimeFn,
    pub iterations: usize,
    /// Space-time sup distance between successive iterates.
    pub changes: Vec<f64>,
}

/// Picard iteration of the action operator from the seed `u(x, t) = phi(x)`
/// until successive iterates differ by at most `tol`.
pub fn fixed_point_of_action(
    phi: &GridFn,
    horizon: f64,
    dt: f64,
    h: &HamiltonianModel,
    tol: f64,
    opts: &ActionOptions,
) -> Result<FixedPoint> {
    if !(horizon > 0.0 && dt > 0.0 && tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "horizon, dt and tol must be positive (got {horizon}, {dt}, {tol})"
        )));
    }
    let steps = (horizon / dt).round().max(1.0) as usize;
    let dt = horizon / steps as f64;
    // (t lambda)^n / n! falls below any tolerance long before this
    let max_iter = (std::f64::consts::E * h.lambda() * horizon).ceil() as usize + 50;

    let mut current = SpaceTimeFn::constant_in_time(phi, dt, steps)?;
    let mut changes = Vec::new();
    for k in 1..=max_iter {
        let next = apply_action_operator(phi, &current, h, opts)?;
        let change = next.sup_dist(&current)?;
        changes.push(change);
        current = next;
        if change <= tol {
            return Ok(FixedPoint {
                trajectory: current,
                iterations: k,
                changes,
            });
        }
    }
    Err(Error::FixedPointDiverged {
        iters: max_iter,
        change: *changes.last().unwrap_or(&f64::NAN),
    })
}
