use serde::{Deserialize, Serialize};

use super::search::{StepMinimizer, VelocitySearch};
use super::{default_v_bound, SpaceTimeFn};
use crate::error::{Error, Result};
use crate::hamiltonian::HamiltonianModel;
use crate::legendre::LagrangianView;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BacktrackOptions {
    /// Largest tolerated `|u_along - action|`.
    pub calib_tol: f64,
    pub v_bound: Option<f64>,
    pub search: VelocitySearch,
}

impl Default for BacktrackOptions {
    fn default() -> Self {
        BacktrackOptions {
            calib_tol: 5e-3,
            v_bound: None,
            search: VelocitySearch::Exact,
        }
    }
}

/// Discrete minimizing curve ending at a queried point.
///
/// `gamma` is the continuous lift of the curve (not wrapped), so
/// `gamma[last]` is the query point and `gamma[0]` the foot. `v_along[j]` and
/// `p_along[j]` belong to the step ending at `times[j]`; index 0 repeats the
/// first step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibratedCurve {
    pub times: Vec<f64>,
    pub gamma: Vec<f64>,
    /// `T_{t_j} phi (gamma(t_j))` read from the slices.
    pub u_along: Vec<f64>,
    /// `phi(gamma(0)) + sum_{k <= j} dt L`.
    pub action: Vec<f64>,
    pub p_along: Vec<f64>,
    pub v_along: Vec<f64>,
    /// `|u_along - action|`.
    pub defect: Vec<f64>,
}

impl CalibratedCurve {
    pub fn max_defect(&self) -> f64 {
        self.defect.iter().copied().fold(0.0, f64::max)
    }

    /// `(x, p, u)` at the final time.
    pub fn terminal(&self) -> (f64, f64, f64) {
        let m = self.times.len() - 1;
        (self.gamma[m], self.p_along[m], self.u_along[m])
    }
}

/// Rebuilds the minimizing curve through `(x, t_m)` by re-minimizing each
/// step backward against the recorded slices.
pub fn backtrack_calibrated(
    history: &SpaceTimeFn,
    x: f64,
    h: &HamiltonianModel,
    opts: &BacktrackOptions,
) -> Result<CalibratedCurve> {
    let m = history.steps();
    if m == 0 {
        return Err(Error::InvalidArgument("history has no steps".into()));
    }
    opts.search.validate()?;
    let dt = history.dt();
    let grid = *history.grid();
    let mut bound = opts.v_bound.unwrap_or_else(|| default_v_bound(history.slice(0)));

    let mut gamma = vec![0.0; m + 1];
    let mut u_along = vec![0.0; m + 1];
    let mut v_along = vec![0.0; m + 1];
    let mut lag = vec![0.0; m + 1];
    gamma[m] = x;
    for j in (1..=m).rev() {
        let y = gamma[j];
        let w = history.slice(j).interp(y);
        let mut doublings = 0;
        let r = loop {
            let mz = StepMinimizer::new(history.slice(j - 1), dt, h, bound, opts.search);
            match mz.minimize(grid.wrap(y), w) {
                Err(Error::VelocityBound { .. }) if doublings < 20 => {
                    bound *= 2.0;
                    doublings += 1;
                }
                other => break other?,
            }
        };
        u_along[j] = w;
        v_along[j] = r.v;
        lag[j] = r.lagrangian;
        gamma[j - 1] = y - dt * r.v;
    }
    u_along[0] = history.slice(0).interp(gamma[0]);
    v_along[0] = v_along[1];

    let view = LagrangianView::new(h);
    let mut p_along = vec![0.0; m + 1];
    for j in 0..=m {
        p_along[j] = view.lagrangian(grid.wrap(gamma[j]), u_along[j], v_along[j])?.1;
    }

    let mut action = vec![u_along[0]; m + 1];
    for j in 1..=m {
        action[j] = action[j - 1] + dt * lag[j];
    }
    let defect: Vec<f64> = action.iter().zip(&u_along).map(|(a, u)| (a - u).abs()).collect();
    let curve = CalibratedCurve {
        times: history.times().to_vec(),
        gamma,
        u_along,
        action,
        p_along,
        v_along,
        defect,
    };
    let worst = curve.max_defect();
    if worst > opts.calib_tol {
        return Err(Error::CalibrationDefect {
            max_defect: worst,
            tol: opts.calib_tol,
            profile: curve.defect,
        });
    }
    Ok(curve)
}
