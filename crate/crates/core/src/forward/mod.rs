//! Forward problem: FEM on the unit disc and the resulting D-N matrix.

pub mod dn;
pub mod fem;
pub mod mesh;

pub use dn::{add_noise, DnFile, DnMatrix, DnMeta, VoltageTable};
pub use fem::{simulate_voltages, NeumannSolver};
pub use mesh::{build_mesh, DiscMesh};

use crate::error::Result;
use crate::phantoms::ConductivityField;

/// Default half-order of the trigonometric basis (33 functions).
pub const DEFAULT_N: usize = 16;

/// D-N matrix of `field` from noiseless FEM data.
pub fn assemble_dn(mesh: &DiscMesh, field: &ConductivityField, n_basis: usize) -> Result<DnMatrix> {
    DnMatrix::from_voltages(&simulate_voltages(mesh, field, n_basis)?)
}
