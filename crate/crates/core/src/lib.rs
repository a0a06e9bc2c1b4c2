//! Conformal spectral geometry on triangulated surfaces.
//!
//! The crate computes Laplace, measure and Steklov eigenvalues under
//! conformal densities, maximizes the normalized first eigenvalue in a
//! conformal class, works with sphere-valued maps (energy, tension, index),
//! and evaluates Ginzburg-Landau energies over explicit Möbius and
//! cap-reflection families of maps into the sphere.

pub mod error;
pub mod glminmax;
pub mod harmonic;
pub mod index;
pub mod linalg;
pub mod mesh;
pub mod mobius;
pub mod spectra;

pub use error::{Error, Result};
