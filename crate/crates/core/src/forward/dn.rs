//! Discrete Neumann-to-Dirichlet and Dirichlet-to-Neumann matrices in the
//! real trigonometric basis, plus the boundary voltage table they are built
//! from.

use std::path::Path;

use faer::linalg::solvers::DenseSolveCore;
use faer::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::boundary_ops::basis_function;
use crate::error::{Error, Result};

/// Largest condition number accepted when inverting the N-D block.
pub const MAX_ND_CONDITION: f64 = 1e12;

/// Boundary voltages `V^j` for current patterns `φ_j`, `j = 1..=2N`,
/// sampled at equiangular boundary nodes `θ_i = 2π i / n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoltageTable {
    pub n_basis: usize,
    /// `voltages[j - 1][i]` is the potential at node `i` for pattern `j`.
    pub voltages: Vec<Vec<f64>>,
}

impl VoltageTable {
    pub fn boundary_nodes(&self) -> usize {
        self.voltages.first().map_or(0, Vec::len)
    }

    /// Projects every pattern onto `φ_1..φ_2N` with the trapezoid rule,
    /// giving the nonconstant block of the N-D matrix (column `j − 1` holds
    /// pattern `j`).
    pub fn nd_block(&self) -> Mat<f64> {
        let nb = self.boundary_nodes();
        let dtheta = 2.0 * std::f64::consts::PI / nb as f64;
        let dim = 2 * self.n_basis;
        let phi: Vec<Vec<f64>> = (1..=dim)
            .map(|m| {
                (0..nb)
                    .map(|i| basis_function(m, dtheta * i as f64))
                    .collect()
            })
            .collect();
        Mat::from_fn(dim, dim, |m, j| {
            dtheta
                * self.voltages[j]
                    .iter()
                    .zip(&phi[m])
                    .map(|(v, p)| v * p)
                    .sum::<f64>()
        })
    }
}

/// Adds relative Gaussian noise `η · N^j · max|V^j|` to every pattern.
///
/// Deterministic for a fixed seed; `η = 0` returns the input unchanged.
pub fn add_noise(table: &VoltageTable, eta: f64, seed: u64) -> VoltageTable {
    if eta == 0.0 {
        return table.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let voltages = table
        .voltages
        .iter()
        .map(|v| {
            let scale = eta * v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            v.iter()
                .map(|x| {
                    let n: f64 = StandardNormal.sample(&mut rng);
                    x + scale * n
                })
                .collect()
        })
        .collect();
    VoltageTable {
        n_basis: table.n_basis,
        voltages,
    }
}

/// `(2N+1)×(2N+1)` D-N matrix `L_{m,n} = ⟨Λ φ_n, φ_m⟩`; row and column 0
/// (the constant) are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct DnMatrix {
    n_basis: usize,
    entries: Vec<f64>,
}

impl DnMatrix {
    pub fn from_entries(n_basis: usize, entries: Vec<f64>) -> Result<Self> {
        let dim = 2 * n_basis + 1;
        if entries.len() != dim * dim {
            return Err(Error::Format(format!(
                "expected {} matrix entries for N = {n_basis}, got {}",
                dim * dim,
                entries.len()
            )));
        }
        Ok(Self { n_basis, entries })
    }

    /// The exact map for unit conductivity: `Λ cos nθ = n cos nθ`.
    pub fn identity_conductivity(n_basis: usize) -> Self {
        let dim = 2 * n_basis + 1;
        let mut entries = vec![0.0; dim * dim];
        for i in 1..dim {
            entries[i * dim + i] = ((i + 1) / 2) as f64;
        }
        Self { n_basis, entries }
    }

    /// Embeds a `2N×2N` nonconstant block.
    pub fn from_block(block: MatRef<'_, f64>) -> Self {
        let n2 = block.nrows();
        let dim = n2 + 1;
        let mut entries = vec![0.0; dim * dim];
        for i in 0..n2 {
            for j in 0..n2 {
                entries[(i + 1) * dim + j + 1] = block[(i, j)];
            }
        }
        Self {
            n_basis: n2 / 2,
            entries,
        }
    }

    /// Inverts the N-D block of a voltage table.
    pub fn from_voltages(table: &VoltageTable) -> Result<Self> {
        let r = table.nd_block();
        let cond = condition_number(r.as_ref())?;
        if !(cond < MAX_ND_CONDITION) {
            return Err(Error::IllConditioned {
                context: "Neumann-to-Dirichlet block".into(),
                condition: cond,
            });
        }
        let inv = r.partial_piv_lu().inverse();
        Ok(Self::from_block(inv.as_ref()))
    }

    pub fn n_basis(&self) -> usize {
        self.n_basis
    }

    pub fn dim(&self) -> usize {
        2 * self.n_basis + 1
    }

    pub fn get(&self, m: usize, n: usize) -> f64 {
        self.entries[m * self.dim() + n]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn to_mat(&self) -> Mat<f64> {
        Mat::from_fn(self.dim(), self.dim(), |i, j| self.get(i, j))
    }

    pub fn nonconstant_block(&self) -> Mat<f64> {
        let n2 = 2 * self.n_basis;
        Mat::from_fn(n2, n2, |i, j| self.get(i + 1, j + 1))
    }

    /// `‖L − Lᵀ‖_F / ‖L‖_F`.
    pub fn symmetry_defect(&self) -> f64 {
        let dim = self.dim();
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..dim {
            for j in 0..dim {
                num += (self.get(i, j) - self.get(j, i)).powi(2);
                den += self.get(i, j).powi(2);
            }
        }
        (num / den.max(f64::MIN_POSITIVE)).sqrt()
    }

    /// Smallest eigenvalue of the symmetric part of the nonconstant block.
    pub fn min_quadratic_form(&self) -> Result<f64> {
        let b = self.nonconstant_block();
        let n = b.nrows();
        let sym = Mat::from_fn(n, n, |i, j| 0.5 * (b[(i, j)] + b[(j, i)]));
        let eig = sym
            .self_adjoint_eigenvalues(faer::Side::Lower)
            .map_err(|e| Error::SolverFailure(format!("eigenvalue solve failed: {e:?}")))?;
        Ok(eig.into_iter().fold(f64::INFINITY, f64::min))
    }

    pub fn max_abs_diff(&self, other: &DnMatrix) -> f64 {
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

pub fn condition_number(m: MatRef<'_, f64>) -> Result<f64> {
    let s = m
        .singular_values()
        .map_err(|e| Error::SolverFailure(format!("SVD failed: {e:?}")))?;
    let max = s.iter().cloned().fold(0.0, f64::max);
    let min = s.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(if min > 0.0 { max / min } else { f64::INFINITY })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DnMeta {
    pub phantom: String,
    pub mesh_level: u32,
    pub noise_eta: f64,
    pub seed: u64,
}

/// On-disk D-N matrix: `{basis: "trig", N, matrix, meta}` with the matrix
/// stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DnFile {
    pub basis: String,
    #[serde(rename = "N")]
    pub n: usize,
    pub matrix: Vec<f64>,
    pub meta: DnMeta,
}

impl DnFile {
    pub fn new(l: &DnMatrix, meta: DnMeta) -> Self {
        Self {
            basis: "trig".into(),
            n: l.n_basis(),
            matrix: l.entries().to_vec(),
            meta,
        }
    }

    pub fn matrix(&self) -> Result<DnMatrix> {
        if self.basis != "trig" {
            return Err(Error::Format(format!("unsupported basis '{}'", self.basis)));
        }
        DnMatrix::from_entries(self.n, self.matrix.clone())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn harmonic_table(n_basis: usize, nodes: usize) -> VoltageTable {
        // u = φ_j / n on the boundary for unit conductivity
        let dtheta = 2.0 * std::f64::consts::PI / nodes as f64;
        VoltageTable {
            n_basis,
            voltages: (1..=2 * n_basis)
                .map(|j| {
                    let order = ((j + 1) / 2) as f64;
                    (0..nodes).map(|i| basis_function(j, dtheta * i as f64) / order).collect()
                })
                .collect(),
        }
    }

    #[test]
    fn exact_voltages_give_identity_map() {
        let t = harmonic_table(4, 64);
        let l = DnMatrix::from_voltages(&t).unwrap();
        assert!(l.max_abs_diff(&DnMatrix::identity_conductivity(4)) < 1e-12);
        for i in 0..l.dim() {
            assert_eq!(l.get(0, i), 0.0);
            assert_eq!(l.get(i, 0), 0.0);
        }
    }

    #[test]
    fn zero_noise_is_bitwise_identity() {
        let t = harmonic_table(3, 32);
        assert_eq!(add_noise(&t, 0.0, 7), t);
    }

    #[test]
    fn noise_is_deterministic_per_seed() {
        let t = harmonic_table(3, 32);
        assert_eq!(add_noise(&t, 0.01, 3), add_noise(&t, 0.01, 3));
        assert_ne!(add_noise(&t, 0.01, 3), add_noise(&t, 0.01, 4));
    }

    #[test]
    fn noise_standard_deviation_matches_level() {
        // Monte-Carlo estimate of the per-node perturbation spread.
        let t = harmonic_table(2, 256);
        let eta = 0.01;
        let mut sum2 = 0.0;
        let mut count = 0usize;
        for seed in 0..40 {
            let noisy = add_noise(&t, eta, seed);
            for (v, w) in t.voltages.iter().zip(&noisy.voltages) {
                let vmax = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
                for (a, b) in v.iter().zip(w) {
                    sum2 += ((b - a) / vmax).powi(2);
                    count += 1;
                }
            }
        }
        let std = (sum2 / count as f64).sqrt();
        assert!((std / eta - 1.0).abs() < 0.03, "std = {std}");
    }

    #[test]
    fn singular_voltages_are_rejected() {
        let mut t = harmonic_table(2, 32);
        t.voltages[1] = t.voltages[0].clone();
        assert!(matches!(DnMatrix::from_voltages(&t), Err(Error::IllConditioned { .. })));
    }

    #[test]
    fn file_round_trip() {
        let l = DnMatrix::identity_conductivity(2);
        let f = DnFile::new(&l, DnMeta { phantom: "identity".into(), ..Default::default() });
        let text = serde_json::to_string(&f).unwrap();
        assert!(text.contains("\"N\":2") && text.contains("\"basis\":\"trig\""));
        let back: DnFile = serde_json::from_str(&text).unwrap();
        assert_eq!(back.matrix().unwrap(), l);
    }
}
