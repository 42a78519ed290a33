//! One-step action minimization
//!
//! ```text
//! m(x; w) = min_v { prev(x - dt v) + dt L(x, w, v) }
//! ```
//!
//! where `prev` is the piecewise-linear interpolant of the previous slice and
//! `w` the frozen value entering the Lagrangian.
//!
//! On every grid cell the foot `x - dt v` crosses, `prev` is affine with slope
//! `s` and the objective is strictly convex in `v`; its unconstrained
//! minimizer is `v = d_p H(x, w, s)`. Since `|s|` never exceeds the Lipschitz
//! constant `K` of `prev`, the global minimizer lies in
//! `[d_p H(x, w, -K), d_p H(x, w, K)]`, so [`VelocitySearch::Exact`] only
//! visits the cells reachable from that interval.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridFn;
use crate::hamiltonian::HamiltonianModel;
use crate::legendre::LagrangianView;

/// Strategy for the minimization over velocities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VelocitySearch {
    /// Cell-by-cell exact minimization of the interpolated objective.
    Exact,
    /// `v_count` Chebyshev-spaced candidates on `[-v_bound, v_bound]`,
    /// followed by golden-section refinement around the best candidate.
    Sampled { v_count: usize, golden_iters: usize },
}

impl Default for VelocitySearch {
    fn default() -> Self {
        VelocitySearch::Exact
    }
}

impl VelocitySearch {
    pub fn sampled(v_count: usize) -> Self {
        VelocitySearch::Sampled {
            v_count,
            golden_iters: 12,
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if let VelocitySearch::Sampled { v_count, .. } = *self {
            if v_count < 9 || v_count % 2 == 0 {
                return Err(Error::InvalidArgument(format!("v_count must be odd and >= 9, got {v_count}")));
            }
        }
        Ok(())
    }
}

/// Minimizer of one action step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepMin {
    pub value: f64,
    pub v: f64,
    pub p: f64,
    pub lagrangian: f64,
}

/// Minimizes one step against a fixed previous slice.
#[derive(Debug, Clone, Copy)]
pub struct StepMinimizer<'a> {
    prev: &'a GridFn,
    lip: f64,
    dt: f64,
    view: LagrangianView<'a>,
    v_bound: f64,
    search: VelocitySearch,
}

impl<'a> StepMinimizer<'a> {
    pub fn new(prev: &'a GridFn, dt: f64, h: &'a HamiltonianModel, v_bound: f64, search: VelocitySearch) -> Self {
        StepMinimizer {
            prev,
            lip: prev.lipschitz_estimate(),
            dt,
            view: LagrangianView::new(h),
            v_bound,
            search,
        }
    }

    fn h(&self) -> &HamiltonianModel {
        self.view.model()
    }

    /// `prev(x - dt v) + dt L(x, w, v)`.
    pub fn objective(&self, x: f64, w: f64, v: f64) -> Result<(f64, f64, f64)> {
        let (l, p) = self.view.lagrangian(x, w, v)?;
        Ok((self.prev.interp(x - self.dt * v) + self.dt * l, l, p))
    }

    pub fn minimize(&self, x: f64, w: f64) -> Result<StepMin> {
        match self.search {
            VelocitySearch::Exact => self.minimize_exact(x, w),
            VelocitySearch::Sampled { v_count, golden_iters } => self.minimize_sampled(x, w, v_count, golden_iters),
        }
    }

    fn minimize_exact(&self, x: f64, w: f64) -> Result<StepMin> {
        let h = self.h();
        let grid = self.prev.grid();
        let dx = grid.dx();
        let dt = self.dt;
        let bound = self.v_bound;

        let slack = 1e-12 * (1.0 + self.lip);
        let reach_lo = h.d_p(x, w, -self.lip - slack);
        let reach_hi = h.d_p(x, w, self.lip + slack);
        let v_lo = reach_lo.max(-bound);
        let v_hi = reach_hi.min(bound);
        if v_lo > v_hi {
            // the whole reachable interval lies beyond the bound
            let edge = if reach_lo > bound { bound } else { -bound };
            return Err(Error::VelocityBound { x, bound: edge.abs() });
        }

        // feet y = x - dt v in unwrapped coordinates, cells [k dx, (k+1) dx]
        let y_lo = x - dt * v_hi;
        let y_hi = x - dt * v_lo;
        let k_first = (y_lo / dx).floor() as i64;
        let k_last = ((y_hi / dx).floor() as i64).max(k_first);

        let mut best: Option<StepMin> = None;
        for k in k_first..=k_last {
            let y_k = k as f64 * dx;
            let a = self.prev.at(k as isize);
            let b = self.prev.at(k as isize + 1);
            let s = (b - a) / dx;
            // fraction f in the cell: y = y_k + f dx, v = (x - y_k - f dx) / dt
            let f_lo = ((y_lo - y_k) / dx).clamp(0.0, 1.0);
            let f_hi = ((y_hi - y_k) / dx).clamp(0.0, 1.0);
            let v_free = h.d_p(x, w, s);
            let f_free = (x - y_k - dt * v_free) / dx;
            let interior = f_free >= f_lo && f_free <= f_hi;
            let f = f_free.clamp(f_lo, f_hi);
            let v = if interior { v_free } else { (x - y_k - f * dx) / dt };
            let (l, p) = if interior {
                (s * v - h.eval(x, w, s), s)
            } else {
                self.view.lagrangian(x, w, v)?
            };
            let foot = a + f * (b - a);
            let cand = StepMin {
                value: foot + dt * l,
                v,
                p,
                lagrangian: l,
            };
            best = Some(match best {
                None => cand,
                Some(cur) => pick(cur, cand),
            });
        }
        let best = best.expect("at least one cell is visited");
        let clipped = (reach_hi > bound && best.v >= bound * (1.0 - 1e-12))
            || (reach_lo < -bound && best.v <= -bound * (1.0 - 1e-12));
        if clipped {
            return Err(Error::VelocityBound { x, bound });
        }
        Ok(best)
    }

    fn minimize_sampled(&self, x: f64, w: f64, v_count: usize, golden_iters: usize) -> Result<StepMin> {
        let bound = self.v_bound;
        let nodes: Vec<f64> = (0..v_count)
            .map(|j| {
                if 2 * j + 1 == v_count {
                    0.0
                } else {
                    -bound * (std::f64::consts::PI * (2 * j + 1) as f64 / (2 * v_count) as f64).cos()
                }
            })
            .collect();
        let eval = |v: f64| -> Result<StepMin> {
            let (value, lagrangian, p) = self.objective(x, w, v)?;
            Ok(StepMin {
                value,
                v,
                p,
                lagrangian,
            })
        };
        let mut best_j = 0;
        let mut best = eval(nodes[0])?;
        for (j, &v) in nodes.iter().enumerate().skip(1) {
            let cand = eval(v)?;
            let keep = pick(best, cand);
            if keep.v != best.v {
                best_j = j;
            }
            best = keep;
        }
        if best_j == 0 || best_j == v_count - 1 {
            return Err(Error::VelocityBound { x, bound });
        }

        const INV_PHI: f64 = 0.618_033_988_749_894_9;
        let (mut a, mut b) = (nodes[best_j - 1], nodes[best_j + 1]);
        let mut c = b - INV_PHI * (b - a);
        let mut d = a + INV_PHI * (b - a);
        let mut fc = eval(c)?;
        let mut fd = eval(d)?;
        for _ in 0..golden_iters {
            if fc.value <= fd.value {
                b = d;
                d = c;
                fd = fc;
                c = b - INV_PHI * (b - a);
                fc = eval(c)?;
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + INV_PHI * (b - a);
                fd = eval(d)?;
            }
        }
        Ok(pick(pick(best, fc), fd))
    }
}

/// Lower value wins; exact ties go to the smaller speed.
fn pick(cur: StepMin, cand: StepMin) -> StepMin {
    if cand.value < cur.value || (cand.value == cur.value && cand.v.abs() < cur.v.abs()) {
        cand
    } else {
        cur
    }
}
