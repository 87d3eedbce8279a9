//! Piecewise-linear FEM for `∇·σ∇u = 0` in the disc with Neumann data.

use faer::prelude::*;
use faer::sparse::linalg::solvers::Llt;
use faer::sparse::{SparseColMat, Triplet};
use faer::Side;
use num_complex::Complex64;
use rayon::prelude::*;

use super::dn::VoltageTable;
use super::mesh::DiscMesh;
use crate::boundary_ops::basis_function;
use crate::error::{Error, Result};
use crate::phantoms::ConductivityField;

/// Stiffness matrix with the centre vertex removed, factored once.
///
/// The pure Neumann problem fixes `u` up to a constant. Removing one vertex
/// makes the stiffness SPD; the solution is then shifted to zero boundary
/// mean, which gives the same potential as the mean-constrained problem.
pub struct NeumannSolver<'m> {
    mesh: &'m DiscMesh,
    pinned: usize,
    factor: Llt<usize, f64>,
}

impl<'m> NeumannSolver<'m> {
    pub fn new(mesh: &'m DiscMesh, field: &ConductivityField) -> Result<Self> {
        let pinned = 0;
        let nv = mesh.vertices.len();
        let reduced = |v: usize| if v > pinned { Some(v - 1) } else if v < pinned { Some(v) } else { None };

        let local: Vec<[[f64; 3]; 3]> = (0..mesh.triangles.len())
            .into_par_iter()
            .map(|t| {
                let [b0, b1] = mesh.barycenter(t);
                let s = field.sigma(Complex64::new(b0, b1));
                element_stiffness(mesh, t, [[s.xx, s.xy], [s.xy, s.yy]])
            })
            .collect();

        let mut triplets = Vec::with_capacity(mesh.triangles.len() * 9);
        for (t, ke) in local.iter().enumerate() {
            let tri = mesh.triangles[t];
            for a in 0..3 {
                let Some(ra) = reduced(tri[a]) else { continue };
                for b in 0..3 {
                    let Some(rb) = reduced(tri[b]) else { continue };
                    triplets.push(Triplet::new(ra, rb, ke[a][b]));
                }
            }
        }
        let k = SparseColMat::<usize, f64>::try_new_from_triplets(nv - 1, nv - 1, &triplets)
            .map_err(|e| Error::SolverFailure(format!("stiffness assembly: {e:?}")))?;
        let factor = k
            .sp_cholesky(Side::Lower)
            .map_err(|e| Error::SolverFailure(format!("stiffness factorization: {e:?}")))?;
        Ok(Self { mesh, pinned, factor })
    }

    /// Lumped boundary load for current pattern `φ_j`.
    fn load(&self, j: usize) -> Vec<f64> {
        let dtheta = self.mesh.boundary_spacing();
        let mut f = vec![0.0; self.mesh.vertices.len()];
        for (i, &v) in self.mesh.boundary.iter().enumerate() {
            f[v] = dtheta * basis_function(j, dtheta * i as f64);
        }
        f
    }

    fn solve_many(&self, patterns: &[usize]) -> Result<Vec<Vec<f64>>> {
        let nv = self.mesh.vertices.len();
        let mut rhs = Mat::<f64>::zeros(nv - 1, patterns.len());
        for (c, &j) in patterns.iter().enumerate() {
            if j == 0 {
                return Err(Error::Config("current pattern index must be ≥ 1".into()));
            }
            let f = self.load(j);
            for v in 0..nv {
                if v != self.pinned {
                    let r = if v > self.pinned { v - 1 } else { v };
                    rhs[(r, c)] = f[v];
                }
            }
        }
        let sol = self.factor.solve(&rhs);
        let nb = self.mesh.boundary.len() as f64;
        let mut out = Vec::with_capacity(patterns.len());
        for c in 0..patterns.len() {
            let mut u = vec![0.0; nv];
            for v in 0..nv {
                if v != self.pinned {
                    let r = if v > self.pinned { v - 1 } else { v };
                    u[v] = sol[(r, c)];
                }
            }
            if u.iter().any(|x| !x.is_finite()) {
                return Err(Error::SolverFailure("non-finite FEM solution".into()));
            }
            let mean = self.mesh.boundary.iter().map(|&b| u[b]).sum::<f64>() / nb;
            u.iter_mut().for_each(|x| *x -= mean);
            out.push(u);
        }
        Ok(out)
    }

    /// Nodal potential for `σ ∂u/∂ν = φ_j`, normalized to zero boundary mean.
    pub fn solve_neumann(&self, j: usize) -> Result<Vec<f64>> {
        Ok(self.solve_many(&[j])?.pop().expect("one pattern"))
    }

    /// Boundary traces for patterns `1..=2N`.
    pub fn boundary_voltages(&self, n_basis: usize) -> Result<VoltageTable> {
        let patterns: Vec<usize> = (1..=2 * n_basis).collect();
        let sols = self.solve_many(&patterns)?;
        Ok(VoltageTable {
            n_basis,
            voltages: sols
                .iter()
                .map(|u| self.mesh.boundary.iter().map(|&b| u[b]).collect())
                .collect(),
        })
    }
}

fn element_stiffness(mesh: &DiscMesh, t: usize, sigma: [[f64; 2]; 2]) -> [[f64; 3]; 3] {
    let [p0, p1, p2] = mesh.triangles[t].map(|i| mesh.vertices[i]);
    let area = mesh.triangle_area(t);
    // gradients of the barycentric coordinates
    let grads = [
        [p1[1] - p2[1], p2[0] - p1[0]],
        [p2[1] - p0[1], p0[0] - p2[0]],
        [p0[1] - p1[1], p1[0] - p0[0]],
    ]
    .map(|[gx, gy]| [gx / (2.0 * area), gy / (2.0 * area)]);
    let mut ke = [[0.0; 3]; 3];
    for a in 0..3 {
        let sg = [
            sigma[0][0] * grads[a][0] + sigma[0][1] * grads[a][1],
            sigma[1][0] * grads[a][0] + sigma[1][1] * grads[a][1],
        ];
        for b in 0..3 {
            ke[a][b] = area * (sg[0] * grads[b][0] + sg[1] * grads[b][1]);
        }
    }
    ke
}

/// Simulated boundary voltages for all `2N` current patterns.
pub fn simulate_voltages(mesh: &DiscMesh, field: &ConductivityField, n_basis: usize) -> Result<VoltageTable> {
    NeumannSolver::new(mesh, field)?.boundary_voltages(n_basis)
}
