//! The implicitly defined solution semigroup `T_t` of
//! `u_t + H(x, u, u_x) = 0`.
//!
//! `T_t phi` is the unique fixed point of the action operator
//!
//! ```text
//! A[u](x, t) = inf_{gamma(t) = x} { phi(gamma(0)) + int_0^t L(gamma, u(gamma, s), gamma') ds }
//! ```
//!
//! in which `u` is frozen inside the Lagrangian. Two discrete routes are
//! provided and checked against each other:
//!
//! * [`apply_action_operator`] / [`fixed_point_of_action`]: Picard iteration
//!   of the operator over a whole space-time window;
//! * [`SemigroupState::step`] / [`evolve`]: a per-step semi-Lagrangian update
//!   that solves the implicit one-step relation by a node-local Picard loop.
//!
//! Both use the same quadrature (the frozen value is read at the endpoint of
//! each time step), so they share their discrete fixed point.

mod calibrated;
mod evolve;
mod operator;
pub mod search;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridFn, Torus1};

pub use calibrated::{backtrack_calibrated, BacktrackOptions, CalibratedCurve};
pub use evolve::{evolve, evolve_with, EvolveOptions, SemigroupState, StepDiagnostic, StepOptions};
pub use operator::{apply_action_operator, fixed_point_of_action, ActionOptions, FixedPoint};
pub use search::{StepMin, StepMinimizer, VelocitySearch};

/// Default velocity cap `10 (1 + Lip(phi))`.
pub fn default_v_bound(phi: &GridFn) -> f64 {
    10.0 * (1.0 + phi.lipschitz_estimate())
}

/// Time slices `u(., t_j)` on a uniform time grid starting at `t_0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimeFn {
    grid: Torus1,
    times: Vec<f64>,
    slices: Vec<GridFn>,
}

impl SpaceTimeFn {
    pub fn new(times: Vec<f64>, slices: Vec<GridFn>) -> Result<Self> {
        if times.is_empty() || times.len() != slices.len() {
            return Err(Error::InvalidArgument(format!(
                "{} times for {} slices",
                times.len(),
                slices.len()
            )));
        }
        let grid = *slices[0].grid();
        if slices.iter().any(|s| *s.grid() != grid) {
            return Err(Error::GridMismatch("slices on different grids".into()));
        }
        if times.len() > 1 {
            let dt = times[1] - times[0];
            if !(dt > 0.0) || times.windows(2).any(|w| ((w[1] - w[0]) - dt).abs() > 1e-12) {
                return Err(Error::InvalidArgument("time grid is not uniform".into()));
            }
        }
        Ok(SpaceTimeFn { grid, times, slices })
    }

    /// `phi` held constant over `steps` steps of size `dt` from `t = 0`.
    pub fn constant_in_time(phi: &GridFn, dt: f64, steps: usize) -> Result<Self> {
        let times = (0..=steps).map(|j| j as f64 * dt).collect();
        Self::new(times, vec![phi.clone(); steps + 1])
    }

    pub fn grid(&self) -> &Torus1 {
        &self.grid
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn slices(&self) -> &[GridFn] {
        &self.slices
    }

    pub fn slice(&self, j: usize) -> &GridFn {
        &self.slices[j]
    }

    pub fn last(&self) -> &GridFn {
        self.slices.last().expect("non-empty")
    }

    /// Number of time steps (one less than the number of slices).
    pub fn steps(&self) -> usize {
        self.slices.len() - 1
    }

    pub fn dt(&self) -> f64 {
        if self.times.len() > 1 {
            self.times[1] - self.times[0]
        } else {
            0.0
        }
    }

    /// Keeps slices `0..=j`.
    pub fn truncate(&self, j: usize) -> SpaceTimeFn {
        SpaceTimeFn {
            grid: self.grid,
            times: self.times[..=j].to_vec(),
            slices: self.slices[..=j].to_vec(),
        }
    }

    /// Largest slice-wise sup distance.
    pub fn sup_dist(&self, other: &SpaceTimeFn) -> Result<f64> {
        if self.slices.len() != other.slices.len() {
            return Err(Error::GridMismatch("different numbers of time slices".into()));
        }
        let mut d = 0.0_f64;
        for (a, b) in self.slices.iter().zip(&other.slices) {
            d = d.max(a.sup_dist(b)?);
        }
        Ok(d)
    }

    pub(crate) fn push(&mut self, t: f64, slice: GridFn) {
        self.times.push(t);
        self.slices.push(slice);
    }
}
