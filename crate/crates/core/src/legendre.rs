//! Fiberwise Legendre transform `L(x, u, v) = sup_p { p v - H(x, u, p) }`
//! with `u` a frozen parameter.
//!
//! The supremum is attained at the unique `p*` with `d_p H(x, u, p*) = v`.
//! Closed forms are used when the Hamiltonian provides one; otherwise `p*`
//! is found by Newton's method on the strictly increasing map `p -> d_p H`,
//! safeguarded by a bracket obtained by exponential search.

use crate::error::{Error, Result};
use crate::hamiltonian::HamiltonianModel;

const MAX_NEWTON: usize = 100;
const MAX_EXPANSIONS: usize = 64;

enum SolveFailure {
    NotBracketed,
    NoConvergence(f64),
}

/// Solves `g(z) = target` for a strictly increasing `g`.
fn solve_increasing(
    g: impl Fn(f64) -> f64,
    target: f64,
    guess: f64,
    max_iter: usize,
    accept: f64,
) -> std::result::Result<f64, SolveFailure> {
    let r = |z: f64| g(z) - target;
    let mut z = guess;
    let mut rz = r(z);
    if rz == 0.0 {
        return Ok(z);
    }

    // bracket [lo, hi] with r(lo) < 0 < r(hi)
    let (mut lo, mut hi);
    let mut step = 1.0_f64.max(guess.abs() * 1e-3);
    if rz < 0.0 {
        lo = z;
        hi = z + step;
        let mut k = 0;
        while r(hi) <= 0.0 {
            lo = hi;
            step *= 2.0;
            hi += step;
            k += 1;
            if k == MAX_EXPANSIONS || !hi.is_finite() {
                return Err(SolveFailure::NotBracketed);
            }
        }
    } else {
        hi = z;
        lo = z - step;
        let mut k = 0;
        while r(lo) >= 0.0 {
            hi = lo;
            step *= 2.0;
            lo -= step;
            k += 1;
            if k == MAX_EXPANSIONS || !lo.is_finite() {
                return Err(SolveFailure::NotBracketed);
            }
        }
    }

    let tight = 1e-3 * accept;
    z = z.clamp(lo, hi);
    rz = r(z);
    for _ in 0..max_iter {
        if rz.abs() <= tight {
            return Ok(z);
        }
        if rz < 0.0 {
            lo = z;
        } else {
            hi = z;
        }
        if hi - lo <= 4.0 * f64::EPSILON * z.abs().max(1.0) {
            break;
        }
        let h = 1e-7 * z.abs().max(1.0);
        let slope = (r(z + h) - r(z - h)) / (2.0 * h);
        let newton = z - rz / slope;
        z = if slope > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        rz = r(z);
    }
    if rz.abs() <= accept {
        Ok(z)
    } else {
        Err(SolveFailure::NoConvergence(rz))
    }
}

fn residual_tol(v: f64) -> f64 {
    1e-10 * (1.0 + v.abs())
}

/// The momentum `p*` with `d_p H(x, u, p*) = v`, by safeguarded Newton.
pub fn solve_momentum(
    h: &HamiltonianModel,
    x: f64,
    u: f64,
    v: f64,
    warm: Option<f64>,
    max_iter: usize,
) -> Result<f64> {
    solve_increasing(|p| h.d_p(x, u, p), v, warm.unwrap_or(0.0), max_iter, residual_tol(v)).map_err(|e| match e {
        SolveFailure::NotBracketed => Error::NotBracketed { x, u, v },
        SolveFailure::NoConvergence(r) => Error::NewtonFailure {
            x,
            reason: format!("residual {r:e} after {max_iter} iterations"),
        },
    })
}

/// On-demand view of the Lagrangian of a Hamiltonian model.
#[derive(Debug, Clone, Copy)]
pub struct LagrangianView<'a> {
    h: &'a HamiltonianModel,
    numeric: bool,
}

impl<'a> LagrangianView<'a> {
    pub fn new(h: &'a HamiltonianModel) -> Self {
        LagrangianView { h, numeric: false }
    }

    /// A view that ignores closed forms and always runs the Newton solve.
    pub fn numeric(h: &'a HamiltonianModel) -> Self {
        LagrangianView { h, numeric: true }
    }

    pub fn model(&self) -> &'a HamiltonianModel {
        self.h
    }

    /// `(L(x, u, v), p*)`.
    pub fn lagrangian(&self, x: f64, u: f64, v: f64) -> Result<(f64, f64)> {
        self.lagrangian_warm(x, u, v, None)
    }

    /// Same as [`Self::lagrangian`], seeding Newton with a nearby momentum.
    pub fn lagrangian_warm(&self, x: f64, u: f64, v: f64, warm: Option<f64>) -> Result<(f64, f64)> {
        if !self.numeric {
            if let Some(lp) = self.h.conjugate(x, u, v) {
                return Ok(lp);
            }
        }
        let p = solve_momentum(self.h, x, u, v, warm, MAX_NEWTON)?;
        Ok((p * v - self.h.eval(x, u, p), p))
    }

    pub fn velocity_of_momentum(&self, x: f64, u: f64, p: f64) -> f64 {
        self.h.d_p(x, u, p)
    }

    /// `sup_v { p v - L(x, u, v) }`, maximized by solving `p*(v) = p` with
    /// the same safeguarded Newton iteration.
    pub fn double_conjugate(&self, x: f64, u: f64, p: f64) -> Result<f64> {
        let momentum = |v: f64| self.lagrangian(x, u, v).map(|(_, ps)| ps).unwrap_or(f64::NAN);
        let v = solve_increasing(momentum, p, 0.0, MAX_NEWTON, 1e-10 * (1.0 + p.abs())).map_err(|_| {
            Error::NewtonFailure {
                x,
                reason: format!("inner supremum over v for p = {p}"),
            }
        })?;
        let (l, _) = self.lagrangian(x, u, v)?;
        Ok(p * v - l)
    }

    /// Largest `|L* - H|` over the given points.
    pub fn verify_involution(&self, pts: &[(f64, f64, f64)]) -> Result<f64> {
        if pts.is_empty() {
            return Err(Error::InvalidArgument("no sample points".into()));
        }
        let mut worst = 0.0_f64;
        for &(x, u, p) in pts {
            worst = worst.max((self.double_conjugate(x, u, p)? - self.h.eval(x, u, p)).abs());
        }
        Ok(worst)
    }
}
