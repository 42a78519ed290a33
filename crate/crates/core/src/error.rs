use thiserror::Error;

#[derive(Debug, Error, Clone)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("non-finite value {value} at node {index}")]
    NonFinite { index: usize, value: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("newton solve did not converge at x = {x}: {reason}")]
    NewtonFailure { x: f64, reason: String },

    #[error("momentum root not bracketed at (x = {x}, u = {u}, v = {v}); H may not be superlinear")]
    NotBracketed { x: f64, u: f64, v: f64 },

    #[error("H6 appears unsatisfiable: no sign change of the critical value after {0} bracket doublings")]
    Unsatisfiable(usize),

    #[error("velocity bound too small: argmin hit |v| = {bound} at x = {x}")]
    VelocityBound { x: f64, bound: f64 },

    #[error("step too large: dt * lambda = {0} exceeds 0.5")]
    StepTooLarge(f64),

    #[error("picard iteration did not converge at x = {x} after {iters} iterations (last change {change:e})")]
    PicardDiverged { x: f64, iters: usize, change: f64 },

    #[error("fixed-point iteration of the action operator did not converge after {iters} iterations (last change {change:e})")]
    FixedPointDiverged { iters: usize, change: f64 },

    #[error("calibration defect {max_defect:e} exceeds tolerance {tol:e}")]
    CalibrationDefect {
        max_defect: f64,
        tol: f64,
        profile: Vec<f64>,
    },

    #[error("possible H3 violation: blow-up at t = {t} (|p| = {p:e}, |u| = {u:e})")]
    BlowUp { t: f64, p: f64, u: f64 },

    #[error("caustic reached at t = {t}, shrink t_small")]
    Caustic { t: f64 },

    #[error("CFL bound violated: dt * (theta / dx + lambda) = {0} > 1")]
    Cfl(f64),

    #[error("no stationarity before t_max = {t_max} (last rate {last_rate:e})")]
    NotStationary {
        t_max: f64,
        last_rate: f64,
        partial: Box<crate::convergence::ConvergenceReport>,
    },

    #[error("limsup descent check failed at t = {t}: excess {excess:e} over slack {slack:e}")]
    DescentCheck { t: f64, excess: f64, slack: f64 },

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
