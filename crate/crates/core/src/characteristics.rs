//! Characteristics of `u_t + H(x, u, u_x) = 0`:
//!
//! ```text
//! x' = H_p,    p' = -H_x - H_u p,    u' = H_p p - H
//! ```
//!
//! integrated with fixed-step RK4. Along any solution the energy obeys
//! `dH/ds = -H_u H`, so its sign is preserved and the zero level is invariant.
//!
//! Positions are stored as the continuous lift; [`CharTrajectory::wrapped`]
//! folds them back onto the circle.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridFn, Torus1};
use crate::hamiltonian::HamiltonianModel;
use crate::par::{map_indices, Execution};
use crate::semigroup::CalibratedCurve;

const BLOW_UP: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CharState {
    pub x: f64,
    pub p: f64,
    pub u: f64,
}

impl CharState {
    pub fn new(x: f64, p: f64, u: f64) -> Self {
        CharState { x, p, u }
    }

    fn axpy(&self, a: f64, d: (f64, f64, f64)) -> CharState {
        CharState {
            x: self.x + a * d.0,
            p: self.p + a * d.1,
            u: self.u + a * d.2,
        }
    }
}

/// `(x', p', u')`.
pub fn char_rhs(h: &HamiltonianModel, s: &CharState) -> (f64, f64, f64) {
    let hp = h.d_p(s.x, s.u, s.p);
    let dp = -h.d_x(s.x, s.u, s.p) - h.d_u(s.x, s.u, s.p) * s.p;
    (hp, dp, hp * s.p - h.eval(s.x, s.u, s.p))
}

fn rk4(h: &HamiltonianModel, s: &CharState, dt: f64) -> CharState {
    let k1 = char_rhs(h, s);
    let k2 = char_rhs(h, &s.axpy(0.5 * dt, k1));
    let k3 = char_rhs(h, &s.axpy(0.5 * dt, k2));
    let k4 = char_rhs(h, &s.axpy(dt, k3));
    CharState {
        x: s.x + dt / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
        p: s.p + dt / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
        u: s.u + dt / 6.0 * (k1.2 + 2.0 * k2.2 + 2.0 * k3.2 + k4.2),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<CharState>,
    /// `H` at each state.
    pub energies: Vec<f64>,
}

impl CharTrajectory {
    pub fn last(&self) -> &CharState {
        self.states.last().expect("non-empty")
    }

    /// Copy with positions folded into `[0, period)`.
    pub fn wrapped(&self, grid: &Torus1) -> CharTrajectory {
        let mut out = self.clone();
        for s in &mut out.states {
            s.x = grid.wrap(s.x);
        }
        out
    }

    /// Writes `t,x,p,u,H` rows.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["t", "x", "p", "u", "H"])?;
        for ((t, s), e) in self.times.iter().zip(&self.states).zip(&self.energies) {
            wtr.serialize((t, s.x, s.p, s.u, e))?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// RK4 from `s0` over `[0, t_end]`; a negative `t_end` integrates backward.
/// The step is shrunk so that a whole number of steps lands on `t_end`.
pub fn integrate(h: &HamiltonianModel, s0: CharState, t_end: f64, dt: f64) -> Result<CharTrajectory> {
    if !(dt > 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidArgument(format!("need dt > 0 and finite t_end, got {dt}, {t_end}")));
    }
    let steps = (t_end.abs() / dt - 1e-9).ceil().max(0.0) as usize;
    let step = if steps == 0 { 0.0 } else { t_end / steps as f64 };
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut energies = Vec::with_capacity(steps + 1);
    let mut s = s0;
    times.push(0.0);
    states.push(s);
    energies.push(h.eval(s.x, s.u, s.p));
    for k in 1..=steps {
        s = rk4(h, &s, step);
        let t = k as f64 * step;
        let bad = |z: f64| !z.is_finite() || z.abs() > BLOW_UP;
        if bad(s.p) || bad(s.u) || !s.x.is_finite() {
            return Err(Error::BlowUp { t, p: s.p, u: s.u });
        }
        times.push(t);
        states.push(s);
        energies.push(h.eval(s.x, s.u, s.p));
    }
    Ok(CharTrajectory { times, states, energies })
}

/// Largest `|dH/ds + H_u H| / (1 + |H|)` over interior samples, with `dH/ds`
/// from centered differences of the recorded energies.
pub fn energy_law_residual(h: &HamiltonianModel, traj: &CharTrajectory) -> Result<f64> {
    let n = traj.states.len();
    if n < 3 {
        return Err(Error::InvalidArgument(format!("need at least 3 samples, got {n}")));
    }
    let mut worst = 0.0_f64;
    for j in 1..n - 1 {
        let de = (traj.energies[j + 1] - traj.energies[j - 1]) / (traj.times[j + 1] - traj.times[j - 1]);
        let s = &traj.states[j];
        let e = traj.energies[j];
        worst = worst.max((de + h.d_u(s.x, s.u, s.p) * e).abs() / (1.0 + e.abs()));
    }
    Ok(worst)
}

/// Characteristics fanned out from a set of start states, with the
/// certificate that they have not crossed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassicalPatch {
    pub times: Vec<f64>,
    pub trajectories: Vec<CharTrajectory>,
}

impl ClassicalPatch {
    /// Scattered `(x, u)` samples at time index `j`, positions wrapped.
    pub fn samples_at(&self, j: usize, grid: &Torus1) -> Vec<(f64, f64)> {
        self.trajectories
            .iter()
            .map(|tr| (grid.wrap(tr.states[j].x), tr.states[j].u))
            .collect()
    }

    /// Largest `|u_patch - interp(u, x_patch)|` at the final time.
    pub fn max_gap(&self, u: &GridFn) -> f64 {
        let j = self.times.len() - 1;
        self.samples_at(j, u.grid())
            .into_iter()
            .map(|(x, v)| (v - u.interp(x)).abs())
            .fold(0.0, f64::max)
    }
}

/// Start states `(x0, p, u0)` for every `p` in `p_range`, sorted by `p`.
pub fn point_fan(x0: f64, u0: f64, p_range: &[f64]) -> Vec<CharState> {
    let mut ps = p_range.to_vec();
    ps.sort_by(f64::total_cmp);
    ps.into_iter().map(|p| CharState::new(x0, p, u0)).collect()
}

/// One start state per grid node carrying `(x_i, phi'(x_i), phi(x_i))`.
pub fn initial_fan(grid: &Torus1, phi: impl Fn(f64) -> f64, dphi: impl Fn(f64) -> f64) -> Vec<CharState> {
    grid.nodes().map(|x| CharState::new(x, dphi(x), phi(x))).collect()
}

/// Integrates every start over `[0, t_small]` and checks at each recorded
/// time that positions remain strictly increasing along the fan. With
/// `period` set the fan is closed: the last position must also stay below
/// the first plus one period.
///
/// Starts sharing a position (a point fan) are only checked for `t > 0`.
pub fn classical_patch(
    h: &HamiltonianModel,
    starts: &[CharState],
    t_small: f64,
    dt: f64,
    period: Option<f64>,
    exec: Execution,
) -> Result<ClassicalPatch> {
    if starts.is_empty() {
        return Err(Error::InvalidArgument("empty fan".into()));
    }
    let trajectories = map_indices(starts.len(), exec, |i| integrate(h, starts[i], t_small, dt))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let times = trajectories[0].times.clone();
    for (j, &t) in times.iter().enumerate() {
        let xs: Vec<f64> = trajectories.iter().map(|tr| tr.states[j].x).collect();
        let ordered = xs.windows(2).all(|w| w[1] > w[0]);
        let closed = match period {
            Some(per) if xs.len() > 1 => xs[xs.len() - 1] < xs[0] + per,
            _ => true,
        };
        if !(ordered && closed) && (j > 0 || period.is_some()) {
            return Err(Error::Caustic { t });
        }
    }
    Ok(ClassicalPatch { times, trajectories })
}

/// Largest position gap between a backtracked curve and the characteristic
/// integrated backward from its terminal state with the same step.
pub fn calibrated_curve_gap(h: &HamiltonianModel, curve: &CalibratedCurve) -> Result<f64> {
    let m = curve.times.len() - 1;
    let span = curve.times[m] - curve.times[0];
    let dt = span / m as f64;
    let (x, p, u) = curve.terminal();
    let back = integrate(h, CharState::new(x, p, u), -span, dt)?;
    Ok((0..=m)
        .map(|k| (back.states[k].x - curve.gamma[m - k]).abs())
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::Potential;
    use std::f64::consts::{E, PI};

    fn flat() -> HamiltonianModel {
        HamiltonianModel::discounted_mechanical(Potential::Zero)
    }

    #[test]
    fn rhs_examples() {
        assert_eq!(char_rhs(&flat(), &CharState::new(0.0, 1.0, 0.0)), (1.0, -1.0, 0.5));
        assert_eq!(char_rhs(&flat(), &CharState::new(0.4, 0.0, 0.0)), (0.0, 0.0, 0.0));
        let h = HamiltonianModel::discounted_mechanical(Potential::cos(1.0));
        let (dx, dp, du) = char_rhs(&h, &CharState::new(0.25, 0.0, 0.0));
        assert_eq!(dx, 0.0);
        assert!((dp - 2.0 * PI).abs() < 1e-12);
        assert!(du.abs() < 1e-15);
    }

    #[test]
    fn linear_system_closed_form() {
        let tr = integrate(&flat(), CharState::new(0.0, 1.0, 0.0), 1.0, 1e-3).unwrap();
        let s = tr.last();
        assert_eq!(tr.times.len(), 1001);
        assert!((s.p - 1.0 / E).abs() < 1e-9);
        assert!((s.x - (1.0 - 1.0 / E)).abs() < 1e-9);
        assert!((s.u - 0.5 * (1.0 / E - 1.0 / (E * E))).abs() < 1e-9);
        assert!((tr.energies[1000] - 0.5 / E).abs() < 1e-9);
        assert!(energy_law_residual(&flat(), &tr).unwrap() < 1e-5);
    }

    #[test]
    fn backward_then_forward() {
        let h = HamiltonianModel::discounted_mechanical(Potential::cos(1.0));
        let s0 = CharState::new(0.1, 0.7, -0.2);
        let fwd = integrate(&h, s0, 0.5, 1e-3).unwrap();
        let back = integrate(&h, *fwd.last(), -0.5, 1e-3).unwrap();
        let r = back.last();
        assert!((r.x - s0.x).abs() < 1e-10 && (r.p - s0.p).abs() < 1e-10 && (r.u - s0.u).abs() < 1e-10);
        assert!((back.times[500] + 0.5).abs() < 1e-12);
    }

    #[test]
    fn rest_point_is_constant() {
        let tr = integrate(&flat(), CharState::new(0.3, 0.0, 0.0), 1.0, 1e-2).unwrap();
        assert!(tr.states.iter().all(|s| *s == CharState::new(0.3, 0.0, 0.0)));
        assert!(energy_law_residual(&flat(), &tr).unwrap() < 1e-12);
        assert!(energy_law_residual(&flat(), &CharTrajectory { times: vec![0.0], states: vec![tr.states[0]], energies: vec![0.0] }).is_err());
    }

    #[test]
    fn zero_energy_level_is_invariant() {
        // cos(2 pi x) + 1/2 p^2 + u = 0 with u = -cos(0.2 pi) - 0.18
        let h = HamiltonianModel::discounted_mechanical(Potential::cos(1.0));
        let (x, p) = (0.1, 0.6);
        let u = -(2.0 * PI * x).cos() - 0.5 * p * p;
        let tr = integrate(&h, CharState::new(x, p, u), 2.0, 1e-3).unwrap();
        assert!(tr.energies.iter().all(|e| e.abs() < 1e-8));
        assert!(energy_law_residual(&h, &tr).unwrap() < 1e-5);
    }

    #[test]
    fn blow_up_is_reported() {
        use crate::hamiltonian::FnHamiltonian;
        // H = p^2/2 + u p gives p' = -p^2, which escapes at t = 1 from p = -1
        let h = FnHamiltonian::new(
            |_, u, p| 0.5 * p * p + u * p,
            |_, _, _| 0.0,
            |_, _, p| p,
            |_, u, p| p + u,
        );
        let model = HamiltonianModel::custom(h, Some(1.0));
        let err = integrate(&model, CharState::new(0.0, -1.0, 0.0), 3.0, 1e-3).unwrap_err();
        assert!(matches!(err, Error::BlowUp { .. }));
    }

    #[test]
    fn csv_layout() {
        let tr = integrate(&flat(), CharState::new(0.0, 1.0, 0.0), 0.2, 0.1).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,x,p,u,H\n"));
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn patches() {
        let g = Torus1::unit(64).unwrap();
        // constant data: characteristics rest in x with u' = -u
        let starts = initial_fan(&g, |_| 2.0, |_| 0.0);
        let patch = classical_patch(&flat(), &starts, 0.5, 1e-3, Some(1.0), Execution::Sequential).unwrap();
        for (_, u) in patch.samples_at(500, &g) {
            assert!((u - 2.0 * (-0.5_f64).exp()).abs() < 1e-12);
        }

        let single = point_fan(0.2, 0.0, &[0.0]);
        assert!(classical_patch(&flat(), &single, 0.5, 1e-2, None, Execution::Parallel).is_ok());

        let fan = point_fan(0.2, 0.0, &[1.0, -1.0, 0.0]);
        assert!(classical_patch(&flat(), &fan, 0.5, 1e-2, None, Execution::Parallel).is_ok());

        // sin data focuses at t = -ln(1 - 1/(4 pi^2)) ~ 0.0257
        let starts = initial_fan(&g, |x| (2.0 * PI * x).sin(), |x| 2.0 * PI * (2.0 * PI * x).cos());
        assert!(classical_patch(&flat(), &starts, 0.02, 1e-3, Some(1.0), Execution::Parallel).is_ok());
        match classical_patch(&flat(), &starts, 0.05, 1e-3, Some(1.0), Execution::Parallel) {
            Err(Error::Caustic { t }) => assert!(t > 0.02 && t < 0.035, "{t}"),
            other => panic!("{other:?}"),
        }
    }
}
