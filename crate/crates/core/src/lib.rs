//! Stochastic solver for semi-linear nonlocal diffusion equations with volume
//! constraints on box domains.
//!
//! The solution of
//!
//! ```text
//! ∂ₜu − ½ Tr(σσᵀ Hess u) − ⟨μ, ∇u⟩ − ∫_{B_δ} [u(t, x + c(t,x,z)) − u(t,x)] φ(z) dz = f(t, x, u)
//! ```
//!
//! is represented as an expectation over jump-diffusion paths and advanced one
//! time step at a time: at every sparse-grid node, `M` one-step paths are
//! simulated, the previous interpolant is read off at the landing points (or
//! the volume-constraint data `g` when a path leaves the domain), and the
//! nodal averages are re-fit into a new sparse-grid interpolant.  Singular
//! kernels are handled by exact inverse-CDF sampling of the jump radius, so
//! hypersingular and smooth kernels cost the same per path.
//!
//! Module map:
//!
//! * [`rng`]: keyed, splittable random streams; results are bit-reproducible
//!   for a fixed master seed regardless of thread count.
//! * [`specfun`]: gamma-family special functions used by the jump samplers.
//! * [`kernels`]: kernel families, normalization constants, jump intensity,
//!   and exact radial/direction sampling.
//! * [`sparse_grid`]: Smolyak sparse grids on nested Chebyshev-Gauss-Lobatto
//!   nodes with barycentric evaluation.
//! * [`sde`]: one-step Euler-Maruyama jump-diffusion simulation with exit
//!   detection.
//! * [`problems`]: built-in benchmark problems with manufactured sources and
//!   a finite-difference residual check.
//! * [`solver`]: the implicit-explicit time stepper.
//! * [`harness`]: L² error measurement, convergence sweeps, reference
//!   solutions, CSV output.

pub mod domain;
pub mod harness;
pub mod kernels;
pub mod problems;
pub mod quadrature;
pub mod rng;
pub mod sde;
pub mod solver;
pub mod sparse_grid;
pub mod specfun;
pub(crate) mod util;

use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("iteration failed to converge: {0}")]
    Convergence(String),
    #[error("non-finite value encountered ({0})")]
    NonFinite(String),
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed data: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
