//! Reconstruction of the isotropization of an anisotropic planar
//! conductivity from its Dirichlet-to-Neumann map by the D-bar method.

pub mod beltrami_oracle;
pub mod boundary_ops;
pub mod cgo_bie;
pub mod dbar_solver;
pub mod error;
pub mod forward;
pub mod krylov;
pub mod phantoms;
pub mod pipeline;
pub mod scattering;

pub use error::{Error, Result};
