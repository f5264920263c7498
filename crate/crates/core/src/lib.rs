//! Numerical affine spheres and minimal Lagrangian surfaces.
//!
//! The pipeline starts from a domain, a conformal background metric, a
//! holomorphic cubic differential `Q` and a sign case `(ε, λ)`, solves the
//! Ţiţeica/Toda equation for the metric factor, assembles the flat
//! connection, integrates frames and reconstructs the surface. Every stage
//! comes with residual checks that scale like `h²` on the grid.

pub mod cli;
pub mod error;
pub mod frames;
pub mod geometry;
pub mod immersion;
pub mod lattice;
pub mod linalg;
pub mod pde;
pub mod projective;
pub mod weierstrass;

pub use error::{Error, Result};
pub use num_complex::Complex64;
