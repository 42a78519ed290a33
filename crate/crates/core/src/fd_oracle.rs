//! Lax-Friedrichs scheme for `u_t + H(x, u, u_x) = 0`, an explicit monotone
//! finite-difference solver that shares no code path with the semigroup:
//!
//! ```text
//! u_i <- u_i - dt [ H(x_i, u_i, (p- + p+)/2) - theta (p+ - p-)/2 ]
//! ```
//!
//! The update is nondecreasing in every nodal value provided
//! `dt (theta/dx + lambda) <= 1` and `theta >= |H_p|` on the slopes met.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridFn, Torus1};
use crate::hamiltonian::HamiltonianModel;
use crate::par::{map_indices, Execution};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LFConfig {
    theta: f64,
    dt: f64,
    grid: Torus1,
    lambda: f64,
    /// Re-sample `theta` from the current slopes before every step of
    /// [`lf_evolve`], never exceeding the configured value.
    pub observed_theta: bool,
    pub execution: Execution,
}

impl LFConfig {
    pub fn new(theta: f64, dt: f64, grid: Torus1, h: &HamiltonianModel) -> Result<Self> {
        if !(theta > 0.0 && dt > 0.0) {
            return Err(Error::InvalidArgument(format!("theta and dt must be positive, got {theta}, {dt}")));
        }
        let cfg = LFConfig {
            theta,
            dt,
            grid,
            lambda: h.lambda(),
            observed_theta: true,
            execution: Execution::default(),
        };
        let c = cfg.cfl_number();
        if c > 1.0 + 1e-12 {
            return Err(Error::Cfl(c));
        }
        Ok(cfg)
    }

    /// `theta = 1.2 max |H_p|` over the slopes the solution can reach, and
    /// the step at `cfl_fraction` of the stability limit.
    ///
    /// The slope range is `[-P, P]` with `P` the larger of `Lip(phi)` and the
    /// largest `|p|` whose energy does not exceed the initial energy bound.
    pub fn auto(phi: &GridFn, h: &HamiltonianModel, cfl_fraction: f64) -> Result<Self> {
        if !(cfl_fraction > 0.0 && cfl_fraction <= 1.0) {
            return Err(Error::InvalidArgument(format!("cfl_fraction must lie in (0, 1], got {cfl_fraction}")));
        }
        let grid = *phi.grid();
        let xs: Vec<f64> = grid.nodes().collect();
        let (lo, hi) = (phi.min() - 1.0, phi.max() + 1.0);
        let us: Vec<f64> = (0..9).map(|k| lo + (hi - lo) * k as f64 / 8.0).collect();

        let mut e0 = 0.0_f64;
        for (i, &x) in xs.iter().enumerate() {
            let (pm, pp) = phi.one_sided_slopes(i);
            e0 = e0.max(h.eval(x, phi.values()[i], 0.5 * (pm + pp)).abs());
        }
        // grow P until every sampled energy at |p| = P exceeds e0
        let min_energy = |p: f64| {
            let mut m = f64::INFINITY;
            for &x in &xs {
                for &u in &us {
                    m = m.min(h.eval(x, u, p)).min(h.eval(x, u, -p));
                }
            }
            m
        };
        let mut p_energy = 1.0;
        let mut k = 0;
        while min_energy(p_energy) <= e0 {
            p_energy *= 1.25;
            k += 1;
            if k > 200 {
                return Err(Error::InvalidArgument("could not bound the slopes; is H superlinear?".into()));
            }
        }
        let p_max = p_energy.max(phi.lipschitz_estimate());

        let mut hp = 0.0_f64;
        for &x in &xs {
            for &u in &us {
                for j in 0..=32 {
                    let p = -p_max + 2.0 * p_max * j as f64 / 32.0;
                    hp = hp.max(h.d_p(x, u, p).abs());
                }
            }
        }
        let theta = 1.2 * hp.max(1e-3);
        let dt = cfl_fraction / (theta / grid.dx() + h.lambda());
        Self::new(theta, dt, grid, h)
    }

    /// Same configuration with another step, rechecking the CFL bound.
    pub fn with_dt(&self, dt: f64) -> Result<Self> {
        let mut c = *self;
        c.dt = dt;
        let n = c.cfl_number();
        if !(dt > 0.0) || n > 1.0 + 1e-12 {
            return Err(Error::Cfl(n));
        }
        Ok(c)
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// `dt (theta/dx + lambda)`.
    pub fn cfl_number(&self) -> f64 {
        self.dt * (self.theta / self.grid.dx() + self.lambda)
    }
}

pub fn lf_step(u: &GridFn, h: &HamiltonianModel, cfg: &LFConfig) -> Result<GridFn> {
    if *u.grid() != cfg.grid {
        return Err(Error::GridMismatch("configuration was built for another grid".into()));
    }
    let grid = cfg.grid;
    let (dt, theta) = (cfg.dt, cfg.theta);
    let vals = map_indices(grid.n(), cfg.execution, |i| {
        let (pm, pp) = u.one_sided_slopes(i);
        let ui = u.values()[i];
        ui - dt * (h.eval(grid.node(i), ui, 0.5 * (pm + pp)) - 0.5 * theta * (pp - pm))
    });
    GridFn::new(grid, vals)
}

/// `1.2 max |H_p|` over the one-sided slopes of `u`; `H_p` is monotone in
/// `p`, so the endpoints of each slope interval suffice.
pub fn observed_theta(u: &GridFn, h: &HamiltonianModel) -> f64 {
    let grid = u.grid();
    let mut hp = 0.0_f64;
    for i in 0..grid.n() {
        let (pm, pp) = u.one_sided_slopes(i);
        let (x, ui) = (grid.node(i), u.values()[i]);
        hp = hp.max(h.d_p(x, ui, pm).abs()).max(h.d_p(x, ui, pp).abs());
    }
    1.2 * hp
}

/// Steps to `t_end`, shortening `dt` so a whole number of steps fits.
pub fn lf_evolve(phi: &GridFn, t_end: f64, h: &HamiltonianModel, cfg: &LFConfig) -> Result<GridFn> {
    if !(t_end >= 0.0) {
        return Err(Error::InvalidArgument(format!("t_end must be nonnegative, got {t_end}")));
    }
    let steps = (t_end / cfg.dt - 1e-9).ceil().max(0.0) as usize;
    if steps == 0 {
        return Ok(phi.clone());
    }
    let cfg = cfg.with_dt(t_end / steps as f64)?;
    let mut u = phi.clone();
    for _ in 0..steps {
        let mut step_cfg = cfg;
        if cfg.observed_theta {
            let theta = observed_theta(&u, h);
            if theta > cfg.theta {
                log::warn!("observed theta {theta} exceeds the configured {}", cfg.theta);
            }
            step_cfg.theta = theta.clamp(1e-3, cfg.theta);
        }
        u = lf_step(&u, h, &step_cfg)?;
    }
    Ok(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::Potential;
    use std::f64::consts::PI;

    fn flat() -> HamiltonianModel {
        HamiltonianModel::discounted_mechanical(Potential::Zero)
    }

    #[test]
    fn constant_step() {
        let g = Torus1::unit(64).unwrap();
        let cfg = LFConfig::new(1.0, 1e-3, g, &flat()).unwrap();
        let u = lf_step(&GridFn::constant(g, 1.0).unwrap(), &flat(), &cfg).unwrap();
        assert!(u.values().iter().all(|&v| (v - (1.0 - 1e-3)).abs() < 1e-15));
    }

    #[test]
    fn zero_data_moves_by_the_stationary_residual() {
        let g = Torus1::unit(64).unwrap();
        let h = HamiltonianModel::discounted_mechanical(Potential::cos(1.0));
        let cfg = LFConfig::new(1.0, 1e-3, g, &h).unwrap();
        let u = lf_step(&GridFn::constant(g, 0.0).unwrap(), &h, &cfg).unwrap();
        for (i, x) in g.nodes().enumerate() {
            assert!((u.values()[i] + 1e-3 * h.eval(x, 0.0, 0.0)).abs() < 1e-15);
        }
    }

    #[test]
    fn cfl_is_enforced() {
        let g = Torus1::unit(100).unwrap();
        assert!(matches!(LFConfig::new(1.0, 0.1, g, &flat()), Err(Error::Cfl(_))));
        let cfg = LFConfig::new(1.0, 1e-3, g, &flat()).unwrap();
        assert!((cfg.cfl_number() - 1e-3 * 101.0).abs() < 1e-15);
        assert!(cfg.with_dt(1.0).is_err());
        let other = Torus1::unit(50).unwrap();
        assert!(lf_step(&GridFn::constant(other, 0.0).unwrap(), &flat(), &cfg).is_err());
    }

    #[test]
    fn scalar_decay() {
        let g = Torus1::unit(32).unwrap();
        let cfg = LFConfig::new(1.0, 1e-3, g, &flat()).unwrap();
        let u = lf_evolve(&GridFn::constant(g, 1.0).unwrap(), 1.0, &flat(), &cfg).unwrap();
        assert!((u.values()[0] - (-1.0_f64).exp()).abs() < 2e-3);
        assert!((u.values()[0] - (1.0_f64 - 1e-3).powi(1000)).abs() < 1e-12);
        let z = lf_evolve(&GridFn::constant(g, 0.0).unwrap(), 1.0, &flat(), &cfg).unwrap();
        assert_eq!(z.sup_norm(), 0.0);
    }

    #[test]
    fn auto_configuration_is_stable() {
        let g = Torus1::unit(128).unwrap();
        let phi = GridFn::from_fn(g, |x| (2.0 * PI * x).sin()).unwrap();
        let cfg = LFConfig::auto(&phi, &flat(), 0.9).unwrap();
        assert!(cfg.theta() >= 1.2 * 2.0 * PI - 1e-9);
        assert!((cfg.cfl_number() - 0.9).abs() < 1e-12);
        assert!(LFConfig::auto(&phi, &flat(), 1.5).is_err());
    }

    #[test]
    fn scheme_is_monotone() {
        let g = Torus1::unit(64).unwrap();
        let h = HamiltonianModel::discounted_mechanical(Potential::cos(1.0));
        let phi = GridFn::from_fn(g, |x| (2.0 * PI * x).sin()).unwrap();
        let psi = GridFn::from_fn(g, |x| (2.0 * PI * x).sin() + 0.1 + 0.05 * (6.0 * PI * x).cos()).unwrap();
        let cfg = LFConfig::auto(&psi, &h, 1.0).unwrap();
        let a = lf_step(&phi, &h, &cfg).unwrap();
        let b = lf_step(&psi, &h, &cfg).unwrap();
        assert!(a.values().iter().zip(b.values()).all(|(x, y)| x <= y));
    }
}
