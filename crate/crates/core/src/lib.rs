//! Two-level overlapping Schwarz preconditioners for high-contrast elliptic
//! problems on the unit square, with spectral (baseline) and
//! energy-minimizing multiscale coarse spaces.
//!
//! Pipeline: [`mesh`] → [`fem`] → [`partition`] → [`spectral`] → [`coarse`]
//! → [`precond`] → [`krylov`].

pub mod coarse;
mod dense;
pub mod error;
pub mod fem;
pub mod krylov;
pub mod mesh;
pub mod partition;
pub mod precond;
pub mod sparse;
pub mod spectral;

pub use error::{Error, Result};
