//! Weak KAM toolkit for `u_t + H(x, u, u_x) = 0` on the circle, with `H`
//! nondecreasing in `u`.
//!
//! The solution semigroup `T_t` is the fixed point of an action functional
//! in which the unknown itself enters the Lagrangian. [`semigroup`] computes
//! it on a periodic grid, [`convergence`] follows it to the stationary
//! solution of `H(x, u, u_x) = 0`, and [`characteristics`] and [`fd_oracle`]
//! provide independent checks.

pub mod characteristics;
pub mod convergence;
pub mod error;
pub mod fd_oracle;
pub mod grid;
pub mod hamiltonian;
pub mod legendre;
pub mod par;
pub mod semigroup;

pub use error::{Error, Result};
pub use grid::{GridFn, Torus1};
pub use hamiltonian::{HamiltonianModel, Kinetic, Potential};
pub use par::Execution;

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
