//! Hamiltonians `H(x, u, p)` that depend on the unknown `u`, together with
//! sampled checks of the structural hypotheses the semigroup needs:
//!
//! * strict convexity in `p` (H1) and superlinear growth in `|p|` (H2),
//! * uniform Lipschitz continuity in `u` with constant `lambda` (H4),
//! * monotonicity in `u` (H5, the "proper" condition),
//! * a level `alpha` at which the critical value vanishes (H6).
//!
//! Completeness of the characteristic flow (H3) is monitored at runtime by
//! [`crate::characteristics::integrate`].

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Torus1;
use crate::legendre;

/// A Hamiltonian with analytic partial derivatives.
///
/// Implementations must be pure: the semigroup evaluates them concurrently.
pub trait Hamiltonian: Send + Sync + fmt::Debug {
    fn eval(&self, x: f64, u: f64, p: f64) -> f64;
    fn d_x(&self, x: f64, u: f64, p: f64) -> f64;
    fn d_u(&self, x: f64, u: f64, p: f64) -> f64;
    fn d_p(&self, x: f64, u: f64, p: f64) -> f64;

    /// Closed-form Legendre conjugate `(L(x, u, v), p*)`, when one is known.
    fn conjugate(&self, _x: f64, _u: f64, _v: f64) -> Option<(f64, f64)> {
        None
    }
}

/// Spatial potential `V(x)` of the builtin families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Potential {
    Zero,
    /// `amplitude * cos(2 pi x / period)`
    Cos { amplitude: f64, period: f64 },
    /// `amplitude * sin(2 pi x / period)`
    Sin { amplitude: f64, period: f64 },
}

impl Potential {
    pub fn cos(amplitude: f64) -> Self {
        Potential::Cos { amplitude, period: 1.0 }
    }

    pub fn sin(amplitude: f64) -> Self {
        Potential::Sin { amplitude, period: 1.0 }
    }

    pub fn value(&self, x: f64) -> f64 {
        match *self {
            Potential::Zero => 0.0,
            Potential::Cos { amplitude, period } => amplitude * (2.0 * PI * x / period).cos(),
            Potential::Sin { amplitude, period } => amplitude * (2.0 * PI * x / period).sin(),
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match *self {
            Potential::Zero => 0.0,
            Potential::Cos { amplitude, period } => {
                let k = 2.0 * PI / period;
                -amplitude * k * (k * x).sin()
            }
            Potential::Sin { amplitude, period } => {
                let k = 2.0 * PI / period;
                amplitude * k * (k * x).cos()
            }
        }
    }

    /// Upper bound of `V`.
    pub fn max(&self) -> f64 {
        match *self {
            Potential::Zero => 0.0,
            Potential::Cos { amplitude, .. } | Potential::Sin { amplitude, .. } => amplitude.abs(),
        }
    }
}

/// Convex superlinear kinetic part `K(p)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kinetic {
    /// `p^2 / 2`
    Quadratic,
    /// `p^4 / 4`
    Quartic,
}

impl Kinetic {
    fn value(self, p: f64) -> f64 {
        match self {
            Kinetic::Quadratic => 0.5 * p * p,
            Kinetic::Quartic => 0.25 * p.powi(4),
        }
    }

    fn derivative(self, p: f64) -> f64 {
        match self {
            Kinetic::Quadratic => p,
            Kinetic::Quartic => p.powi(3),
        }
    }

    /// `(K*(v), p*)` with `K'(p*) = v`.
    fn conjugate(self, v: f64) -> (f64, f64) {
        match self {
            Kinetic::Quadratic => (0.5 * v * v, v),
            Kinetic::Quartic => {
                let p = v.cbrt();
                (0.75 * v.abs().powf(4.0 / 3.0), p)
            }
        }
    }
}

/// `H = lam * u + K(p) + V(x)`; with `lam = 1` and quadratic `K` this is the
/// discounted mechanical system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Discounted {
    pub lam: f64,
    pub kinetic: Kinetic,
    pub potential: Potential,
}

impl Hamiltonian for Discounted {
    fn eval(&self, x: f64, u: f64, p: f64) -> f64 {
        self.lam * u + self.kinetic.value(p) + self.potential.value(x)
    }

    fn d_x(&self, x: f64, _u: f64, _p: f64) -> f64 {
        self.potential.derivative(x)
    }

    fn d_u(&self, _x: f64, _u: f64, _p: f64) -> f64 {
        self.lam
    }

    fn d_p(&self, _x: f64, _u: f64, p: f64) -> f64 {
        self.kinetic.derivative(p)
    }

    fn conjugate(&self, x: f64, u: f64, v: f64) -> Option<(f64, f64)> {
        let (k, p) = self.kinetic.conjugate(v);
        Some((k - self.lam * u - self.potential.value(x), p))
    }
}

type Scalar3 = dyn Fn(f64, f64, f64) -> f64 + Send + Sync;

/// Hamiltonian assembled from closures; mostly useful for experiments and
/// for exercising the numeric Legendre path.
#[derive(Clone)]
pub struct FnHamiltonian {
    pub eval: Arc<Scalar3>,
    pub d_x: Arc<Scalar3>,
    pub d_u: Arc<Scalar3>,
    pub d_p: Arc<Scalar3>,
}

impl FnHamiltonian {
    pub fn new<E, X, U, P>(eval: E, d_x: X, d_u: U, d_p: P) -> Self
    where
        E: Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
        X: Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
        U: Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
        P: Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
    {
        FnHamiltonian {
            eval: Arc::new(eval),
            d_x: Arc::new(d_x),
            d_u: Arc::new(d_u),
            d_p: Arc::new(d_p),
        }
    }
}

impl fmt::Debug for FnHamiltonian {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("FnHamiltonian")
    }
}

impl Hamiltonian for FnHamiltonian {
    fn eval(&self, x: f64, u: f64, p: f64) -> f64 {
        (self.eval)(x, u, p)
    }
    fn d_x(&self, x: f64, u: f64, p: f64) -> f64 {
        (self.d_x)(x, u, p)
    }
    fn d_u(&self, x: f64, u: f64, p: f64) -> f64 {
        (self.d_u)(x, u, p)
    }
    fn d_p(&self, x: f64, u: f64, p: f64) -> f64 {
        (self.d_p)(x, u, p)
    }
}

/// A Hamiltonian together with its Lipschitz constant in `u` and the
/// calibration level `alpha`.
///
/// `u_shift` implements the calibrated model `H(x, u + alpha, p)`, whose
/// critical value vanishes at `u = 0`.
#[derive(Clone, Debug)]
pub struct HamiltonianModel {
    inner: Arc<dyn Hamiltonian>,
    lambda: f64,
    alpha: Option<f64>,
    u_shift: f64,
    label: String,
}

impl HamiltonianModel {
    /// Wraps a Hamiltonian. When `lambda` is `None` it is measured as the
    /// largest sampled `|d_u|` over [`SampleSpec::default`].
    pub fn new(h: Arc<dyn Hamiltonian>, lambda: Option<f64>, label: impl Into<String>) -> Self {
        let mut model = HamiltonianModel {
            inner: h,
            lambda: 0.0,
            alpha: None,
            u_shift: 0.0,
            label: label.into(),
        };
        model.lambda = match lambda {
            Some(l) => l,
            None => model.measure_lambda(&SampleSpec::default()),
        };
        model
    }

    /// `H = u + p^2/2 + V(x)`.
    pub fn discounted_mechanical(potential: Potential) -> Self {
        Self::discounted(1.0, Kinetic::Quadratic, potential)
    }

    /// `H = lam * u + K(p) + V(x)`.
    pub fn discounted(lam: f64, kinetic: Kinetic, potential: Potential) -> Self {
        let h = Discounted {
            lam,
            kinetic,
            potential,
        };
        HamiltonianModel::new(Arc::new(h), Some(lam.abs()), format!("{h:?}"))
    }

    pub fn custom<H: Hamiltonian + 'static>(h: H, lambda: Option<f64>) -> Self {
        Self::new(Arc::new(h), lambda, "custom")
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn alpha(&self) -> Option<f64> {
        self.alpha
    }

    pub fn set_alpha(&mut self, alpha: f64) {
        self.alpha = Some(alpha);
    }

    pub fn u_shift(&self) -> f64 {
        self.u_shift
    }

    /// The model `H(x, u + alpha, p)`; its own `alpha` is zero.
    ///
    /// Returns a clone unchanged when no `alpha` has been set.
    pub fn calibrated(&self) -> Self {
        let mut m = self.clone();
        if let Some(a) = self.alpha {
            m.u_shift += a;
            m.alpha = Some(0.0);
        }
        m
    }

    pub fn eval(&self, x: f64, u: f64, p: f64) -> f64 {
        self.inner.eval(x, u + self.u_shift, p)
    }

    pub fn d_x(&self, x: f64, u: f64, p: f64) -> f64 {
        self.inner.d_x(x, u + self.u_shift, p)
    }

    pub fn d_u(&self, x: f64, u: f64, p: f64) -> f64 {
        self.inner.d_u(x, u + self.u_shift, p)
    }

    pub fn d_p(&self, x: f64, u: f64, p: f64) -> f64 {
        self.inner.d_p(x, u + self.u_shift, p)
    }

    pub fn conjugate(&self, x: f64, u: f64, v: f64) -> Option<(f64, f64)> {
        self.inner.conjugate(x, u + self.u_shift, v)
    }

    fn measure_lambda(&self, spec: &SampleSpec) -> f64 {
        let mut worst = 0.0_f64;
        for (x, u, p) in spec.points() {
            worst = worst.max(self.d_u(x, u, p).abs());
        }
        worst
    }
}

/// Sampling box for the hypothesis validators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleSpec {
    pub x_count: usize,
    pub period: f64,
    pub u_range: (f64, f64),
    pub u_count: usize,
    pub p_range: (f64, f64),
    pub p_count: usize,
    /// Base momentum scale of the superlinearity probe `2^k * p_scale`.
    pub p_scale: f64,
    /// Absolute tolerance of the sign checks.
    pub tol: f64,
}

impl Default for SampleSpec {
    fn default() -> Self {
        SampleSpec {
            x_count: 16,
            period: 1.0,
            u_range: (-3.0, 3.0),
            u_count: 9,
            p_range: (-4.0, 4.0),
            p_count: 17,
            p_scale: 1.0,
            tol: 1e-8,
        }
    }
}

fn linspace(lo: f64, hi: f64, count: usize) -> impl Iterator<Item = f64> {
    let step = if count > 1 { (hi - lo) / (count - 1) as f64 } else { 0.0 };
    (0..count).map(move |k| lo + step * k as f64)
}

impl SampleSpec {
    fn validate(&self) -> Result<()> {
        let counts = [self.x_count, self.u_count, self.p_count];
        if counts.iter().any(|&c| c < 8) {
            return Err(Error::InvalidArgument(format!("sample counts must be >= 8, got {counts:?}")));
        }
        let finite = [
            self.period,
            self.u_range.0,
            self.u_range.1,
            self.p_range.0,
            self.p_range.1,
            self.p_scale,
            self.tol,
        ];
        if finite.iter().any(|v| !v.is_finite()) || self.period <= 0.0 || self.p_scale <= 0.0 {
            return Err(Error::InvalidArgument("sample ranges must be finite".into()));
        }
        Ok(())
    }

    fn xs(&self) -> impl Iterator<Item = f64> + '_ {
        let dx = self.period / self.x_count as f64;
        (0..self.x_count).map(move |i| i as f64 * dx)
    }

    fn us(&self) -> impl Iterator<Item = f64> {
        linspace(self.u_range.0, self.u_range.1, self.u_count)
    }

    fn ps(&self) -> impl Iterator<Item = f64> {
        linspace(self.p_range.0, self.p_range.1, self.p_count)
    }

    fn points(&self) -> Vec<(f64, f64, f64)> {
        let mut pts = Vec::with_capacity(self.x_count * self.u_count * self.p_count);
        for x in self.xs() {
            for u in self.us() {
                for p in self.ps() {
                    pts.push((x, u, p));
                }
            }
        }
        pts
    }
}

/// Outcome of one sampled hypothesis check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisCheck {
    pub name: String,
    pub passed: bool,
    /// The worst sampled value of the checked quantity.
    pub worst: f64,
    pub witness: Option<(f64, f64, f64)>,
}

impl HypothesisCheck {
    fn new(name: &str) -> Self {
        HypothesisCheck {
            name: name.to_string(),
            passed: true,
            worst: f64::NAN,
            witness: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub h1_convexity: HypothesisCheck,
    pub h2_superlinear: HypothesisCheck,
    pub h4_lipschitz_u: HypothesisCheck,
    pub h5_proper: HypothesisCheck,
}

impl ValidationReport {
    pub fn checks(&self) -> [&HypothesisCheck; 4] {
        [
            &self.h1_convexity,
            &self.h2_superlinear,
            &self.h4_lipschitz_u,
            &self.h5_proper,
        ]
    }

    pub fn all_passed(&self) -> bool {
        self.checks().iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&HypothesisCheck> {
        self.checks().into_iter().filter(|c| !c.passed).collect()
    }
}

/// Sampled check of (H1), (H2), (H4) and (H5). Failures are report entries.
pub fn validate_hypotheses(h: &HamiltonianModel, spec: &SampleSpec) -> Result<ValidationReport> {
    spec.validate()?;
    let tol = spec.tol;

    // H1: normalized centered second difference in p
    let mut h1 = HypothesisCheck::new("H1");
    h1.worst = f64::INFINITY;
    for (x, u, p) in spec.points() {
        let step = 1e-3 * (1.0 + p.abs());
        let d2 = (h.eval(x, u, p + step) - 2.0 * h.eval(x, u, p) + h.eval(x, u, p - step)) / (step * step);
        if d2 < h1.worst {
            h1.worst = d2;
            h1.witness = Some((x, u, p));
        }
    }
    h1.passed = h1.worst > tol;

    // H2: H/|p| must keep growing along |p| = 2^k p_scale, k = 0..=10
    let mut h2 = HypothesisCheck::new("H2");
    h2.worst = f64::INFINITY;
    for x in spec.xs() {
        for u in spec.us() {
            for sign in [-1.0, 1.0] {
                let ratios: Vec<f64> = (0..=10)
                    .map(|k| {
                        let p = sign * spec.p_scale * 2f64.powi(k);
                        h.eval(x, u, p) / p.abs()
                    })
                    .collect();
                let min_increment = ratios[5..].windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
                let growth = ratios[10] - ratios[5] - 0.5 * ratios[5].abs().max(1.0);
                let score = min_increment.min(growth);
                if score < h2.worst {
                    h2.worst = score;
                    h2.witness = Some((x, u, sign * spec.p_scale * 1024.0));
                }
            }
        }
    }
    h2.passed = h2.worst > 0.0;

    // H4: difference quotients in u against lambda
    let mut h4 = HypothesisCheck::new("H4");
    h4.worst = 0.0;
    let us: Vec<f64> = spec.us().collect();
    for x in spec.xs() {
        for p in spec.ps() {
            for (a, &u1) in us.iter().enumerate() {
                for &u2 in &us[a + 1..] {
                    let q = (h.eval(x, u1, p) - h.eval(x, u2, p)).abs() / (u1 - u2).abs();
                    if q > h4.worst {
                        h4.worst = q;
                        h4.witness = Some((x, u1, p));
                    }
                }
            }
        }
    }
    h4.passed = h4.worst <= h.lambda() + tol;

    // H5: d_u >= 0
    let mut h5 = HypothesisCheck::new("H5");
    h5.worst = f64::INFINITY;
    for (x, u, p) in spec.points() {
        let du = h.d_u(x, u, p);
        if du < h5.worst {
            h5.worst = du;
            h5.witness = Some((x, u, p));
        }
    }
    h5.passed = h5.worst >= -tol;

    Ok(ValidationReport {
        h1_convexity: h1,
        h2_superlinear: h2,
        h4_lipschitz_u: h4,
        h5_proper: h5,
    })
}

/// Largest deviation between the analytic partials and centered finite
/// differences with relative step `1e-6`.
pub fn finite_diff_check(h: &HamiltonianModel, pts: &[(f64, f64, f64)]) -> Result<f64> {
    if pts.is_empty() {
        return Err(Error::InvalidArgument("no sample points".into()));
    }
    let step = |z: f64| 1e-6 * z.abs().max(1.0);
    let mut worst = 0.0_f64;
    for &(x, u, p) in pts {
        let hx = step(x);
        let hu = step(u);
        let hp = step(p);
        let fx = (h.eval(x + hx, u, p) - h.eval(x - hx, u, p)) / (2.0 * hx);
        let fu = (h.eval(x, u + hu, p) - h.eval(x, u - hu, p)) / (2.0 * hu);
        let fp = (h.eval(x, u, p + hp) - h.eval(x, u, p - hp)) / (2.0 * hp);
        worst = worst
            .max((fx - h.d_x(x, u, p)).abs())
            .max((fu - h.d_u(x, u, p)).abs())
            .max((fp - h.d_p(x, u, p)).abs());
    }
    Ok(worst)
}

/// Critical value at level `alpha`: `max_x min_p H(x, alpha, p)` over the
/// grid nodes. In one dimension with zero cohomology this equals
/// `inf_u max_x H(x, alpha, u'(x))`.
pub fn critical_value(h: &HamiltonianModel, alpha: f64, grid: &Torus1) -> Result<f64> {
    let mut worst = f64::NEG_INFINITY;
    for x in grid.nodes() {
        let p = legendre::solve_momentum(h, x, alpha, 0.0, None, 100).map_err(|e| match e {
            Error::NewtonFailure { reason, .. } => Error::NewtonFailure { x, reason },
            Error::NotBracketed { .. } => Error::NewtonFailure {
                x,
                reason: "minimizer of H in p not bracketed".into(),
            },
            other => other,
        })?;
        worst = worst.max(h.eval(x, alpha, p));
    }
    Ok(worst)
}

const MAX_BRACKET_DOUBLINGS: usize = 60;

/// Finds `alpha` with `|critical_value(h, alpha)| <= tol` by bisection and
/// stores it into the model.
pub fn calibrate_alpha(h: &mut HamiltonianModel, grid: &Torus1, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    let c = |a: f64| critical_value(h, a, grid);
    let (mut lo, mut hi) = (-1.0_f64, 1.0_f64);
    let (mut c_lo, mut c_hi) = (c(lo)?, c(hi)?);
    let mut width = 1.0;
    let mut doublings = 0;
    while c_lo > 0.0 {
        if doublings == MAX_BRACKET_DOUBLINGS {
            return Err(Error::Unsatisfiable(doublings));
        }
        width *= 2.0;
        hi = lo;
        c_hi = c_lo;
        lo -= width;
        c_lo = c(lo)?;
        doublings += 1;
    }
    while c_hi < 0.0 {
        if doublings == MAX_BRACKET_DOUBLINGS {
            return Err(Error::Unsatisfiable(doublings));
        }
        width *= 2.0;
        lo = hi;
        c_lo = c_hi;
        hi += width;
        c_hi = c(hi)?;
        doublings += 1;
    }
    log::info!("calibrating alpha in bracket [{lo}, {hi}] after {doublings} doublings");

    let alpha = if c_lo.abs() <= tol {
        lo
    } else if c_hi.abs() <= tol {
        hi
    } else {
        let mut mid = 0.5 * (lo + hi);
        for _ in 0..200 {
            mid = 0.5 * (lo + hi);
            let cm = c(mid)?;
            if cm.abs() <= tol || hi - lo <= f64::EPSILON * mid.abs().max(1.0) {
                break;
            }
            if cm > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        mid
    };
    h.set_alpha(alpha);
    Ok(alpha)
}
