//! Resonance expansion of the Helmholtz Green function in high-contrast media,
//! together with the far-field inverse source solvers built on top of it.
//!
//! The crate is organised bottom-up:
//!
//! * [`grid`] discretises the source domain and the far-field measurement surface.
//! * [`kernels`] holds the closed-form free-space Green functions.
//! * [`volume`] assembles the volume operator and solves the Lippmann-Schwinger
//!   system directly.
//! * [`spectral`] computes the non-Hermitian spectral data (modes, orthonormal
//!   basis, change-of-basis matrices, Jordan-chain resolvent algebra).
//! * [`expansion`] expands the Green function in that spectral data.
//! * [`imaging`] synthesises far-field data and reconstructs sources by time
//!   reversal, minimum L2-norm and minimum L1-norm solutions.

pub mod error;
pub mod expansion;
pub mod export;
pub mod grid;
pub mod imaging;
pub mod kernels;
pub mod linalg;
pub mod spectral;
pub mod volume;

pub use error::{Error, Result};
pub use faer::{c64, Mat};
pub use grid::{Point, WaveContext};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
