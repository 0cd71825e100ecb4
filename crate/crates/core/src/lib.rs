//! Spectral periodic homogenization on the unit torus.
//!
//! Cell problems, homogenized coefficients, flux correctors, Steklov
//! smoothing and the zero/first/second order resolvent approximations,
//! together with an epsilon-sweep harness that measures convergence rates.

pub mod error;
pub mod field;
pub mod grid;
pub mod coefficient;
pub mod krylov;
pub mod operator;
pub mod cell;
pub mod steklov;
pub mod resolvent;
pub mod harness;
pub mod io;

pub use error::{HomogError, Result};
pub use field::TorusField;
pub use grid::{Grid, Transform};
