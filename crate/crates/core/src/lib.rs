//! Spectral space-time Green operators for parabolic equations `∂t + L`.
//!
//! `L = −div(A∇· + 𝐚·) + 𝐛·∇ + a0` acts on a periodic lattice in `(t, x)`.
//! The variational inverse of `∂t + L + κ` is computed with a Krylov solver on
//! the Hilbert-transformed form, and everything downstream (Green columns,
//! propagators, decay estimates) is built on top of that solve.

pub mod error;
mod fft;
pub mod lattice;
pub mod norms;
pub mod operator;
pub mod quadrature;
pub mod solver;
pub mod green;
pub mod io;
pub mod estimates;
pub mod fixtures;
pub mod rng;
pub mod suites;

pub use error::{Error, Result};
pub use lattice::{Field, MultiplierKind, MultiplierSymbol, SpaceTimeGrid, SpatialField, Spectrum};
pub use num_complex::Complex64 as C64;
