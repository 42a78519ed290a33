//! Long-time behaviour of `T_t phi`: the run to a stationary state, the
//! stationary residual, the limsup construction of a common fixed point and
//! the terminal energies along calibrated curves.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridFn;
use crate::hamiltonian::HamiltonianModel;
use crate::legendre::solve_momentum;
use crate::semigroup::{backtrack_calibrated, BacktrackOptions, SemigroupState, SpaceTimeFn, StepOptions};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceOptions {
    pub dt: f64,
    /// Steps between stationarity checks.
    pub check_every: usize,
    /// Stationary once the sup distance per unit time between checks is at
    /// most this.
    pub stat_tol: f64,
    pub t_max: f64,
    pub step: StepOptions,
}

impl Default for ConvergenceOptions {
    fn default() -> Self {
        ConvergenceOptions {
            dt: 1e-3,
            check_every: 100,
            stat_tol: 1e-3,
            t_max: 50.0,
            step: StepOptions::default(),
        }
    }
}

impl ConvergenceOptions {
    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.stat_tol > 0.0 && self.t_max > 0.0) || self.check_every == 0 {
            return Err(Error::InvalidArgument(
                "dt, stat_tol, t_max and check_every must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Sup distance between consecutive checks that counts as stationary.
    pub fn threshold(&self) -> f64 {
        self.stat_tol * self.check_every as f64 * self.dt
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailEntry {
    pub t: f64,
    pub sup_dist_to_final: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub u_infty: GridFn,
    /// First check time at which the rate criterion held.
    pub t_star: f64,
    pub residual_profile: GridFn,
    pub tail_history: Vec<TailEntry>,
    /// Distances between consecutive checks never increased.
    pub monotone_envelope_ok: bool,
    /// `(t, sup distance to the previous check)` at every check.
    pub check_distances: Vec<(f64, f64)>,
    /// Largest sup norm seen.
    pub sup_norm_ceiling: f64,
    /// Checked slices in `[t_star / 2, t_star]`.
    #[serde(skip)]
    pub tail_slices: Vec<(f64, GridFn)>,
}

impl ConvergenceReport {
    pub fn max_residual(&self) -> f64 {
        self.residual_profile.max()
    }

    pub fn median_residual(&self) -> f64 {
        median(self.residual_profile.values())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Writes `x,u_infty,residual` rows.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["x", "u_infty", "residual"])?;
        let grid = self.u_infty.grid();
        for i in 0..grid.n() {
            wtr.serialize((grid.node(i), self.u_infty.values()[i], self.residual_profile.values()[i]))?;
        }
        wtr.flush()?;
        Ok(())
    }
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Evolves until the rate criterion holds or `t_max` passes.
pub fn run_to_stationary(phi: &GridFn, h: &HamiltonianModel, opts: &ConvergenceOptions) -> Result<ConvergenceReport> {
    opts.validate()?;
    let mut state = SemigroupState::new(phi.clone());
    let mut checks: Vec<(f64, GridFn)> = vec![(0.0, phi.clone())];
    let mut distances: Vec<(f64, f64)> = Vec::new();
    let mut ceiling = phi.sup_norm();
    let max_steps = (opts.t_max / opts.dt).round() as usize;
    let mut steps = 0;
    let mut stationary = false;
    while steps < max_steps {
        for _ in 0..opts.check_every {
            state.step(h, opts.dt, &opts.step)?;
            ceiling = ceiling.max(state.u.sup_norm());
        }
        steps += opts.check_every;
        let d = state.u.sup_dist(&checks.last().expect("seeded").1)?;
        distances.push((state.t, d));
        checks.push((state.t, state.u.clone()));
        if d <= opts.threshold() {
            stationary = true;
            break;
        }
    }
    log::info!("stopped at t = {} ({} checks, stationary = {stationary})", state.t, distances.len());

    let report = build_report(state.u, checks, distances, ceiling, h)?;
    if stationary {
        Ok(report)
    } else {
        let last_rate = report.check_distances.last().map_or(f64::NAN, |&(_, d)| d) / (opts.check_every as f64 * opts.dt);
        Err(Error::NotStationary {
            t_max: opts.t_max,
            last_rate,
            partial: Box::new(report),
        })
    }
}

fn build_report(
    u: GridFn,
    checks: Vec<(f64, GridFn)>,
    distances: Vec<(f64, f64)>,
    ceiling: f64,
    h: &HamiltonianModel,
) -> Result<ConvergenceReport> {
    let t_star = checks.last().expect("seeded").0;
    let mut tail_history = Vec::with_capacity(checks.len());
    for (t, s) in &checks {
        tail_history.push(TailEntry {
            t: *t,
            sup_dist_to_final: s.sup_dist(&u)?,
        });
    }
    let monotone_envelope_ok = distances.windows(2).all(|w| w[1].1 <= w[0].1 + 1e-12);
    let tail_slices = checks.into_iter().filter(|(t, _)| *t >= 0.5 * t_star).collect();
    Ok(ConvergenceReport {
        residual_profile: stationary_residual(&u, h)?,
        u_infty: u,
        t_star,
        tail_history,
        monotone_envelope_ok,
        check_distances: distances,
        sup_norm_ceiling: ceiling,
        tail_slices,
    })
}

/// Per node, the smallest `|H(x_i, u_i, p)|` over the candidate slopes
/// `p-`, `p+`, their midpoint and the minimizer of `H` in `p`, keeping only
/// candidates inside `[p-, p+]`. At a concave kink (`p- > p+`) only the
/// midpoint is used.
pub fn stationary_residual(u: &GridFn, h: &HamiltonianModel) -> Result<GridFn> {
    let grid = *u.grid();
    let vals = (0..grid.n())
        .map(|i| {
            let x = grid.node(i);
            let ui = u.values()[i];
            let (pm, pp) = u.one_sided_slopes(i);
            let mid = 0.5 * (pm + pp);
            if pm > pp {
                return h.eval(x, ui, mid).abs();
            }
            let mut hs = vec![h.eval(x, ui, pm), h.eval(x, ui, pp), h.eval(x, ui, mid)];
            // the minimizer of a convex H is the root of H_p
            if let Ok(p0) = solve_momentum(h, x, ui, 0.0, None, 100) {
                if p0 >= pm && p0 <= pp {
                    hs.push(h.eval(x, ui, p0));
                }
            }
            hs.into_iter().map(f64::abs).fold(f64::INFINITY, f64::min)
        })
        .collect();
    GridFn::new(grid, vals)
}

/// Outcome of evolving the tail maximum `u_bar`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimsupReport {
    pub u_bar: GridFn,
    pub limit: GridFn,
    /// Largest `T_t u_bar - u_bar` over the checks.
    pub max_rise: f64,
    /// Largest increase of `T_t u_bar` between consecutive checks.
    pub max_ascent: f64,
    pub slack: f64,
    pub t_end: f64,
}

/// `u_bar` = node-wise max over the report's tail slices; evolves it,
/// checking `T_t u_bar <= u_bar` and that `T_t u_bar` only descends, both
/// within `10 dt`, until the rate criterion holds again.
pub fn limsup_from_report(
    report: &ConvergenceReport,
    h: &HamiltonianModel,
    opts: &ConvergenceOptions,
) -> Result<LimsupReport> {
    opts.validate()?;
    let first = &report.tail_slices.first().ok_or_else(|| Error::InvalidArgument("report has no tail slices".into()))?.1;
    let mut u_bar = first.clone();
    for (_, s) in &report.tail_slices[1..] {
        u_bar = u_bar.zip_with(s, f64::max)?;
    }
    let slack = 10.0 * opts.dt;
    let mut state = SemigroupState::new(u_bar.clone());
    let mut prev = u_bar.clone();
    let (mut max_rise, mut max_ascent) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    let max_steps = (opts.t_max / opts.dt).round() as usize;
    let mut steps = 0;
    loop {
        for _ in 0..opts.check_every {
            state.step(h, opts.dt, &opts.step)?;
            let rise = max_diff(&state.u, &u_bar);
            max_rise = max_rise.max(rise);
            if rise > slack {
                return Err(Error::DescentCheck {
                    t: state.t,
                    excess: rise,
                    slack,
                });
            }
        }
        steps += opts.check_every;
        let ascent = max_diff(&state.u, &prev);
        max_ascent = max_ascent.max(ascent);
        if ascent > slack {
            return Err(Error::DescentCheck {
                t: state.t,
                excess: ascent,
                slack,
            });
        }
        let d = state.u.sup_dist(&prev)?;
        prev = state.u.clone();
        if d <= opts.threshold() || steps >= max_steps {
            break;
        }
    }
    Ok(LimsupReport {
        u_bar,
        limit: state.u,
        max_rise,
        max_ascent,
        slack,
        t_end: state.t,
    })
}

/// [`run_to_stationary`] followed by [`limsup_from_report`].
pub fn limsup_fixed_point(phi: &GridFn, h: &HamiltonianModel, opts: &ConvergenceOptions) -> Result<LimsupReport> {
    let report = run_to_stationary(phi, h, opts)?;
    limsup_from_report(&report, h, opts)
}

fn max_diff(a: &GridFn, b: &GridFn) -> f64 {
    a.values().iter().zip(b.values()).map(|(x, y)| x - y).fold(f64::NEG_INFINITY, f64::max)
}

/// Largest `H(x, u(x, t), p(t))` over grid nodes at the end of a calibrated
/// curve, from the last two slices of `window`.
pub fn terminal_energy(window: &SpaceTimeFn, h: &HamiltonianModel) -> Result<f64> {
    let m = window.steps();
    if m == 0 {
        return Err(Error::InvalidArgument("need at least two slices".into()));
    }
    let last = window.truncate(m);
    let pair = SpaceTimeFn::new(last.times()[m - 1..].to_vec(), last.slices()[m - 1..].to_vec())?;
    let grid = *window.grid();
    let opts = BacktrackOptions {
        calib_tol: f64::INFINITY,
        ..Default::default()
    };
    let mut worst = f64::NEG_INFINITY;
    for x in grid.nodes() {
        let c = backtrack_calibrated(&pair, x, h, &opts)?;
        let (x, p, u) = c.terminal();
        worst = worst.max(h.eval(x, u, p));
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub times: Vec<f64>,
    pub energies: Vec<f64>,
    pub slack: f64,
    /// The last terminal energy is at most `slack`.
    pub ok: bool,
}

/// Terminal energies at each of `sample_times` (rounded to steps) along one
/// evolution of `phi`.
pub fn energy_at_terminal(
    phi: &GridFn,
    h: &HamiltonianModel,
    dt: f64,
    sample_times: &[f64],
    step: &StepOptions,
) -> Result<EnergyReport> {
    let mut targets: Vec<usize> = sample_times.iter().map(|t| (t / dt).round() as usize).collect();
    targets.sort_unstable();
    targets.dedup();
    if targets.first() == Some(&0) {
        return Err(Error::InvalidArgument("sample times must be positive".into()));
    }
    let mut state = SemigroupState::new(phi.clone());
    let mut prev = phi.clone();
    let mut times = Vec::new();
    let mut energies = Vec::new();
    let mut k = 0;
    for &target in &targets {
        while k < target {
            prev = state.u.clone();
            state.step(h, dt, step)?;
            k += 1;
        }
        let window = SpaceTimeFn::new(vec![state.t - dt, state.t], vec![prev.clone(), state.u.clone()])?;
        times.push(state.t);
        energies.push(terminal_energy(&window, h)?);
    }
    let slack = 5e-2;
    let ok = energies.last().is_some_and(|&e| e <= slack);
    Ok(EnergyReport {
        times,
        energies,
        slack,
        ok,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Torus1;
    use crate::hamiltonian::Potential;
    use std::f64::consts::PI;

    fn flat() -> HamiltonianModel {
        HamiltonianModel::discounted_mechanical(Potential::Zero)
    }

    #[test]
    fn zero_is_immediately_stationary() {
        let g = Torus1::unit(32).unwrap();
        let opts = ConvergenceOptions {
            dt: 1e-2,
            check_every: 10,
            ..Default::default()
        };
        let r = run_to_stationary(&GridFn::constant(g, 0.0).unwrap(), &flat(), &opts).unwrap();
        assert_eq!(r.u_infty.sup_norm(), 0.0);
        assert!((r.t_star - 0.1).abs() < 1e-12);
        assert_eq!(r.max_residual(), 0.0);
        let l = limsup_from_report(&r, &flat(), &opts).unwrap();
        assert_eq!(l.limit.sup_norm(), 0.0);
    }

    #[test]
    fn decays_to_zero() {
        let g = Torus1::unit(64).unwrap();
        let phi = GridFn::from_fn(g, |x| (2.0 * PI * x).sin()).unwrap();
        let opts = ConvergenceOptions {
            dt: 1e-2,
            check_every: 10,
            ..Default::default()
        };
        let r = run_to_stationary(&phi, &flat(), &opts).unwrap();
        assert!(r.u_infty.sup_norm() <= 1e-2, "{}", r.u_infty.sup_norm());
        assert!(r.monotone_envelope_ok);
        assert!(r.tail_history.last().unwrap().sup_dist_to_final == 0.0);
        let l = limsup_from_report(&r, &flat(), &opts).unwrap();
        assert!(l.limit.sup_norm() <= 1e-2);
        assert!(l.max_rise <= l.slack && l.max_ascent <= l.slack);
    }

    #[test]
    fn t_max_error_keeps_partial_report() {
        let g = Torus1::unit(32).unwrap();
        let opts = ConvergenceOptions {
            dt: 1e-2,
            check_every: 10,
            t_max: 0.3,
            stat_tol: 1e-9,
            ..Default::default()
        };
        match run_to_stationary(&GridFn::constant(g, 1.0).unwrap(), &flat(), &opts) {
            Err(Error::NotStationary { partial, .. }) => assert_eq!(partial.check_distances.len(), 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn residual_examples() {
        let g = Torus1::unit(128).unwrap();
        let r = stationary_residual(&GridFn::constant(g, 0.0).unwrap(), &flat()).unwrap();
        assert!(r.max() <= 1e-12);
        let s = GridFn::from_fn(g, |x| (2.0 * PI * x).sin()).unwrap();
        assert!(stationary_residual(&s, &flat()).unwrap().max() >= 0.5);

        // convex kink of |x - 1/2| - 1/10: |H| is 0.4 at p = +-1 and 0.1 at p = 0
        let v = GridFn::from_fn(g, |x| (x - 0.5).abs() - 0.1).unwrap();
        let r = stationary_residual(&v, &flat()).unwrap();
        assert!((r.values()[64] - 0.1).abs() < 1e-15);
        // concave kink of 1/2 - |x - 1/2|: only the midpoint counts
        let w = GridFn::from_fn(g, |x| 0.5 - (x - 0.5).abs()).unwrap();
        let r = stationary_residual(&w, &flat()).unwrap();
        assert_eq!(r.values()[64], 0.5);
    }

    #[test]
    fn terminal_energy_of_constant_data() {
        let g = Torus1::unit(16).unwrap();
        let dt = 1e-2;
        let rep = energy_at_terminal(&GridFn::constant(g, 1.0).unwrap(), &flat(), dt, &[0.5, 1.0, 2.0], &StepOptions::default())
            .unwrap();
        for (t, e) in rep.times.iter().zip(&rep.energies) {
            let expected = (1.0 + dt).powf(-t / dt);
            assert!((e - expected).abs() < 1e-10, "{e} vs {expected}");
        }
        assert!(rep.energies.windows(2).all(|w| w[1] < w[0]));
        assert!(!rep.ok);

        let zero = energy_at_terminal(&GridFn::constant(g, 0.0).unwrap(), &flat(), dt, &[0.5], &StepOptions::default()).unwrap();
        assert_eq!(zero.energies, vec![0.0]);
        assert!(zero.ok);
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
