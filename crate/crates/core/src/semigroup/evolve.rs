use std::io::Write;

use serde::{Deserialize, Serialize};

use super::search::{StepMinimizer, VelocitySearch};
use super::{default_v_bound, SpaceTimeFn};
use crate::error::{Error, Result};
use crate::grid::GridFn;
use crate::hamiltonian::HamiltonianModel;
use crate::par::{map_indices, Execution};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepOptions {
    pub picard_tol: f64,
    pub max_picard: usize,
    /// Velocity cap; `None` means `10 (1 + Lip(phi))`.
    pub v_bound: Option<f64>,
    /// Double the velocity cap and retry when the argmin hits it.
    pub adaptive_v_bound: bool,
    pub search: VelocitySearch,
    pub execution: Execution,
}

impl Default for StepOptions {
    fn default() -> Self {
        StepOptions {
            picard_tol: 1e-12,
            max_picard: 100,
            v_bound: None,
            adaptive_v_bound: true,
            search: VelocitySearch::Exact,
            execution: Execution::default(),
        }
    }
}

/// Observables recorded after every step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostic {
    pub t: f64,
    pub sup_norm: f64,
    pub lip: f64,
    pub max_velocity: f64,
    pub picard_iters: usize,
}

/// Current slice `T_t phi` with its per-step history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemigroupState {
    pub t: f64,
    pub u: GridFn,
    pub phi: GridFn,
    pub v_bound: f64,
    pub diagnostics: Vec<StepDiagnostic>,
    /// Every slice since `t = 0`, when recording was requested.
    #[serde(skip)]
    pub history: Option<SpaceTimeFn>,
}

impl SemigroupState {
    pub fn new(phi: GridFn) -> Self {
        SemigroupState {
            t: 0.0,
            v_bound: default_v_bound(&phi),
            u: phi.clone(),
            phi,
            diagnostics: Vec::new(),
            history: None,
        }
    }

    /// Starts recording every slice from the current one on.
    pub fn with_history(mut self) -> Self {
        self.history = Some(SpaceTimeFn::new(vec![self.t], vec![self.u.clone()]).expect("single slice"));
        self
    }

    /// Advances by `dt`: at every node solves
    /// `w = min_v { u(x - dt v) + dt L(x, w, v) }` by Picard iteration.
    pub fn step(&mut self, h: &HamiltonianModel, dt: f64, opts: &StepOptions) -> Result<&StepDiagnostic> {
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
        }
        if dt * h.lambda() > 0.5 {
            return Err(Error::StepTooLarge(dt * h.lambda()));
        }
        opts.search.validate()?;
        if let Some(b) = opts.v_bound {
            self.v_bound = self.v_bound.max(b);
        }

        let mut doublings = 0;
        let (next, max_v, iters) = loop {
            match advance(&self.u, h, dt, self.v_bound, opts) {
                Ok(out) => break out,
                Err(Error::VelocityBound { x, bound }) if opts.adaptive_v_bound && doublings < 20 => {
                    log::warn!("velocity bound {bound} hit at x = {x}, t = {}; doubling", self.t);
                    self.v_bound *= 2.0;
                    doublings += 1;
                }
                Err(e) => return Err(e),
            }
        };

        self.t += dt;
        self.u = next;
        if let Some(hist) = self.history.as_mut() {
            hist.push(self.t, self.u.clone());
        }
        self.diagnostics.push(StepDiagnostic {
            t: self.t,
            sup_norm: self.u.sup_norm(),
            lip: self.u.lipschitz_estimate(),
            max_velocity: max_v,
            picard_iters: iters,
        });
        Ok(self.diagnostics.last().expect("just pushed"))
    }

    /// Writes `t,sup_norm,lip,max_v,picard_iters` rows.
    pub fn write_diagnostics_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["t", "sup_norm", "lip", "max_v", "picard_iters"])?;
        for d in &self.diagnostics {
            wtr.serialize((d.t, d.sup_norm, d.lip, d.max_velocity, d.picard_iters))?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

fn advance(
    u: &GridFn,
    h: &HamiltonianModel,
    dt: f64,
    v_bound: f64,
    opts: &StepOptions,
) -> Result<(GridFn, f64, usize)> {
    let grid = *u.grid();
    let m = StepMinimizer::new(u, dt, h, v_bound, opts.search);
    let nodes = map_indices(grid.n(), opts.execution, |i| {
        let x = grid.node(i);
        let mut w = u.values()[i];
        let mut change = f64::INFINITY;
        for k in 1..=opts.max_picard {
            let r = m.minimize(x, w)?;
            change = (r.value - w).abs();
            w = r.value;
            if change <= opts.picard_tol {
                return Ok((w, r.v.abs(), k));
            }
        }
        Err(Error::PicardDiverged {
            x,
            iters: opts.max_picard,
            change,
        })
    });
    let mut values = Vec::with_capacity(grid.n());
    let mut max_v = 0.0_f64;
    let mut iters = 0;
    for r in nodes {
        let (w, v, k) = r?;
        values.push(w);
        max_v = max_v.max(v);
        iters = iters.max(k);
    }
    Ok((GridFn::new(grid, values)?, max_v, iters))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EvolveOptions {
    pub step: StepOptions,
    /// Keep every slice (needed for calibrated-curve backtracking).
    pub record_history: bool,
}

/// `T_{t_end} phi` by repeated steps; `t_end` is rounded to a whole number
/// of steps.
pub fn evolve(phi: &GridFn, t_end: f64, dt: f64, h: &HamiltonianModel, opts: &EvolveOptions) -> Result<SemigroupState> {
    evolve_with(phi, t_end, dt, h, opts, |_| Ok(()))
}

/// [`evolve`] calling `observer` after every step.
pub fn evolve_with<F>(
    phi: &GridFn,
    t_end: f64,
    dt: f64,
    h: &HamiltonianModel,
    opts: &EvolveOptions,
    mut observer: F,
) -> Result<SemigroupState>
where
    F: FnMut(&SemigroupState) -> Result<()>,
{
    if !(t_end >= 0.0 && dt > 0.0) {
        return Err(Error::InvalidArgument(format!("need t_end >= 0 and dt > 0, got {t_end}, {dt}")));
    }
    let k = (t_end / dt).round();
    if (k * dt - t_end).abs() > 1e-9 * t_end.max(1.0) {
        log::warn!("t_end = {t_end} is not a multiple of dt = {dt}; running {k} steps to t = {}", k * dt);
    }
    let mut state = SemigroupState::new(phi.clone());
    if opts.record_history {
        state = state.with_history();
    }
    for _ in 0..k as usize {
        state.step(h, dt, &opts.step)?;
        observer(&state)?;
    }
    Ok(state)
}
