//! Operators on the unit circle in the real trigonometric basis
//!
//! `φ_0 = (2π)^{-1/2}`, and for `m ≥ 1` the pair `(φ_{2m−1}, φ_{2m})` is
//! `(cos mθ, sin mθ)/√π`. Complex boundary functions are stored as stacked
//! coefficient vectors `[Re g; Im g]` of length `4N + 2`.

use std::f64::consts::PI;

use faer::linalg::solvers::DenseSolveCore;
use faer::prelude::*;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::forward::dn::{condition_number, DnMatrix};

/// Equiangular samples used for pointwise multiplication by `e^{±ikz}`.
pub const DEFAULT_SAMPLES: usize = 256;

/// Largest accepted condition number of `D_T⁻¹ L`.
pub const MAX_HILBERT_CONDITION: f64 = 1e12;

pub fn basis_function(n: usize, theta: f64) -> f64 {
    if n == 0 {
        (2.0 * PI).sqrt().recip()
    } else if n % 2 == 1 {
        (((n + 1) / 2) as f64 * theta).cos() / PI.sqrt()
    } else {
        ((n / 2) as f64 * theta).sin() / PI.sqrt()
    }
}

/// Frequency of basis function `n`.
pub fn basis_order(n: usize) -> usize {
    (n + 1) / 2
}

/// Coefficients of a complex boundary function.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigCoefficients {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl TrigCoefficients {
    pub fn zeros(n_basis: usize) -> Self {
        Self {
            re: vec![0.0; 2 * n_basis + 1],
            im: vec![0.0; 2 * n_basis + 1],
        }
    }

    pub fn n_basis(&self) -> usize {
        (self.re.len() - 1) / 2
    }

    pub fn from_stacked(v: &[f64]) -> Self {
        let h = v.len() / 2;
        Self {
            re: v[..h].to_vec(),
            im: v[h..].to_vec(),
        }
    }

    pub fn stacked(&self) -> Vec<f64> {
        let mut v = self.re.clone();
        v.extend_from_slice(&self.im);
        v
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.stacked()
            .iter()
            .zip(other.stacked())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Sampled basis on `θ_j = 2πj/M`, used for the transforms between
/// coefficients and boundary samples.
#[derive(Debug, Clone)]
pub struct TrigBasis {
    n_basis: usize,
    samples: usize,
    /// `phi[n * M + j] = φ_n(θ_j)`
    phi: Vec<f64>,
}

impl TrigBasis {
    pub fn new(n_basis: usize, samples: usize) -> Self {
        let dim = 2 * n_basis + 1;
        let mut phi = Vec::with_capacity(dim * samples);
        for n in 0..dim {
            for j in 0..samples {
                phi.push(basis_function(n, 2.0 * PI * j as f64 / samples as f64));
            }
        }
        Self {
            n_basis,
            samples,
            phi,
        }
    }

    pub fn n_basis(&self) -> usize {
        self.n_basis
    }

    pub fn dim(&self) -> usize {
        2 * self.n_basis + 1
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn angles(&self) -> Vec<f64> {
        (0..self.samples)
            .map(|j| 2.0 * PI * j as f64 / self.samples as f64)
            .collect()
    }

    /// Trapezoid projection of samples onto the basis, into a stacked vector.
    pub fn analyze_into(&self, g: &[Complex64], out: &mut [f64]) {
        let dim = self.dim();
        let w = 2.0 * PI / self.samples as f64;
        for n in 0..dim {
            let row = &self.phi[n * self.samples..(n + 1) * self.samples];
            let (mut re, mut im) = (0.0, 0.0);
            for (p, z) in row.iter().zip(g) {
                re += p * z.re;
                im += p * z.im;
            }
            out[n] = w * re;
            out[dim + n] = w * im;
        }
    }

    pub fn synthesize_into(&self, coef: &[f64], out: &mut [Complex64]) {
        let dim = self.dim();
        out.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
        for n in 0..dim {
            let (a, b) = (coef[n], coef[dim + n]);
            if a == 0.0 && b == 0.0 {
                continue;
            }
            let row = &self.phi[n * self.samples..(n + 1) * self.samples];
            for (z, p) in out.iter_mut().zip(row) {
                z.re += a * p;
                z.im += b * p;
            }
        }
    }

    pub fn analyze(&self, g: &[Complex64]) -> TrigCoefficients {
        let mut v = vec![0.0; 2 * self.dim()];
        self.analyze_into(g, &mut v);
        TrigCoefficients::from_stacked(&v)
    }

    pub fn synthesize(&self, c: &TrigCoefficients) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.samples];
        self.synthesize_into(&c.stacked(), &mut out);
        out
    }

    /// Coefficients of a function given pointwise in `θ`.
    pub fn project(&self, f: impl Fn(f64) -> Complex64) -> TrigCoefficients {
        let g: Vec<Complex64> = self.angles().into_iter().map(f).collect();
        self.analyze(&g)
    }
}

/// Tangential derivative in the nonconstant basis: blocks `[[0, m], [−m, 0]]`.
pub fn build_dt(n_basis: usize) -> Mat<f64> {
    let mut d = Mat::zeros(2 * n_basis, 2 * n_basis);
    for m in 1..=n_basis {
        let i = 2 * (m - 1);
        d[(i, i + 1)] = m as f64;
        d[(i + 1, i)] = -(m as f64);
    }
    d
}

fn build_dt_inverse(n_basis: usize) -> Mat<f64> {
    let mut d = Mat::zeros(2 * n_basis, 2 * n_basis);
    for m in 1..=n_basis {
        let i = 2 * (m - 1);
        d[(i, i + 1)] = -1.0 / m as f64;
        d[(i + 1, i)] = 1.0 / m as f64;
    }
    d
}

/// `H_σ` and `H_σ̂` as `(2N+1)×(2N+1)` matrices with zero first row/column.
#[derive(Debug, Clone)]
pub struct HilbertMatrices {
    pub h_sigma: Mat<f64>,
    pub h_sigma_hat: Mat<f64>,
}

fn embed(block: MatRef<'_, f64>) -> Mat<f64> {
    let n = block.nrows();
    Mat::from_fn(n + 1, n + 1, |i, j| {
        if i == 0 || j == 0 {
            0.0
        } else {
            block[(i - 1, j - 1)]
        }
    })
}

impl HilbertMatrices {
    /// The standard Hilbert transform `H₀` (`cos mθ ↦ sin mθ`) for both.
    pub fn isotropic(n_basis: usize) -> Self {
        let mut block = Mat::zeros(2 * n_basis, 2 * n_basis);
        for m in 0..n_basis {
            block[(2 * m + 1, 2 * m)] = 1.0;
            block[(2 * m, 2 * m + 1)] = -1.0;
        }
        let h = embed(block.as_ref());
        Self {
            h_sigma: h.clone(),
            h_sigma_hat: h,
        }
    }

    pub fn n_basis(&self) -> usize {
        (self.h_sigma.nrows() - 1) / 2
    }

    /// Max-abs entry of `H_σ̂ H_σ + I` on the zero-mean block.
    pub fn composition_defect(&self) -> f64 {
        let p = &self.h_sigma_hat * &self.h_sigma;
        let mut worst = 0.0f64;
        for i in 1..p.nrows() {
            for j in 1..p.ncols() {
                let target = if i == j { -1.0 } else { 0.0 };
                worst = worst.max((p[(i, j)] - target).abs());
            }
        }
        worst
    }
}

pub fn build_hilbert(l: &DnMatrix) -> Result<HilbertMatrices> {
    let n = l.n_basis();
    if n == 0 {
        return Err(Error::Config("N must be at least 1".into()));
    }
    let h = build_dt_inverse(n) * l.nonconstant_block();
    let cond = condition_number(h.as_ref())?;
    if !(cond < MAX_HILBERT_CONDITION) {
        return Err(Error::IllConditioned {
            context: "D_T⁻¹ L (degenerate D-N data)".into(),
            condition: cond,
        });
    }
    let inv = h.partial_piv_lu().inverse();
    let neg_inv = Mat::from_fn(2 * n, 2 * n, |i, j| -inv[(i, j)]);
    Ok(HilbertMatrices {
        h_sigma: embed(h.as_ref()),
        h_sigma_hat: embed(neg_inv.as_ref()),
    })
}

/// Which Hilbert transform acts on the real part: `σ` for `M⁺`, `σ̂` for `M⁻`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    Sigma,
    SigmaHat,
}

/// `e^{±ikz}` sampled on the boundary grid.
#[derive(Debug, Clone)]
pub struct KPhase {
    pub k: Complex64,
    forward: Vec<Complex64>,
    backward: Vec<Complex64>,
}

impl KPhase {
    pub fn new(k: Complex64, samples: usize) -> Self {
        let (forward, backward) = (0..samples)
            .map(|j| {
                let z = Complex64::from_polar(1.0, 2.0 * PI * j as f64 / samples as f64);
                let e = (Complex64::i() * k * z).exp();
                (e, e.inv())
            })
            .unzip();
        Self {
            k,
            forward,
            backward,
        }
    }
}

/// Scratch buffers for `apply_pk`.
pub struct PkScratch {
    samples: Vec<Complex64>,
    coef: Vec<f64>,
    projected: Vec<f64>,
}

/// `P₀`, `P_σ`, `P_σ̂` and their `k`-conjugates acting on stacked coefficients.
#[derive(Debug, Clone)]
pub struct BoundaryOperators {
    basis: TrigBasis,
    hilbert: HilbertMatrices,
    h0: Vec<f64>,
    hs: Vec<f64>,
    hh: Vec<f64>,
}

fn row_major(m: &Mat<f64>) -> Vec<f64> {
    let mut v = Vec::with_capacity(m.nrows() * m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            v.push(m[(i, j)]);
        }
    }
    v
}

fn matvec(a: &[f64], x: &[f64], y: &mut [f64]) {
    let n = x.len();
    for (i, yi) in y.iter_mut().enumerate() {
        *yi = a[i * n..(i + 1) * n].iter().zip(x).map(|(p, q)| p * q).sum();
    }
}

impl BoundaryOperators {
    pub fn new(hilbert: HilbertMatrices, samples: usize) -> Result<Self> {
        let n = hilbert.n_basis();
        if samples < 4 * n {
            return Err(Error::Config(format!(
                "boundary grid of {samples} points is too coarse for N = {n} (need ≥ 4N)"
            )));
        }
        let h0 = row_major(&HilbertMatrices::isotropic(n).h_sigma);
        let hs = row_major(&hilbert.h_sigma);
        let hh = row_major(&hilbert.h_sigma_hat);
        Ok(Self {
            basis: TrigBasis::new(n, samples),
            hilbert,
            h0,
            hs,
            hh,
        })
    }

    pub fn basis(&self) -> &TrigBasis {
        &self.basis
    }

    pub fn hilbert(&self) -> &HilbertMatrices {
        &self.hilbert
    }

    /// Length of a stacked coefficient vector.
    pub fn len(&self) -> usize {
        2 * self.basis.dim()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn scratch(&self) -> PkScratch {
        PkScratch {
            samples: vec![Complex64::new(0.0, 0.0); self.basis.samples()],
            coef: vec![0.0; self.len()],
            projected: vec![0.0; self.len()],
        }
    }

    pub fn phase(&self, k: Complex64) -> KPhase {
        KPhase::new(k, self.basis.samples())
    }

    /// `½(g + iHg) + ½ℒg`, where `H` acts as `h_re` on `Re g` and `h_im` on
    /// `Im g`.
    fn project(h_re: &[f64], h_im: &[f64], g: &[f64], out: &mut [f64]) {
        let dim = g.len() / 2;
        let (gr, gi) = g.split_at(dim);
        let (or, oi) = out.split_at_mut(dim);
        // Re(iHg) = −h_im·Im g,  Im(iHg) = h_re·Re g
        matvec(h_im, gi, or);
        matvec(h_re, gr, oi);
        for n in 0..dim {
            or[n] = 0.5 * (gr[n] - or[n]);
            oi[n] = 0.5 * (gi[n] + oi[n]);
        }
        or[0] += 0.5 * gr[0];
        oi[0] += 0.5 * gi[0];
    }

    pub fn apply_p0(&self, g: &[f64], out: &mut [f64]) {
        Self::project(&self.h0, &self.h0, g, out);
    }

    pub fn apply_p(&self, branch: Branch, g: &[f64], out: &mut [f64]) {
        match branch {
            Branch::Sigma => Self::project(&self.hs, &self.hh, g, out),
            Branch::SigmaHat => Self::project(&self.hh, &self.hs, g, out),
        }
    }

    /// `P^k g = e^{−ikz} P(e^{ikz} g)`, with the multiplications done on the
    /// boundary samples.
    pub fn apply_pk(&self, branch: Branch, phase: &KPhase, g: &[f64], out: &mut [f64], s: &mut PkScratch) {
        self.basis.synthesize_into(g, &mut s.samples);
        s.samples.iter_mut().zip(&phase.forward).for_each(|(z, e)| *z *= e);
        self.basis.analyze_into(&s.samples, &mut s.coef);
        self.apply_p(branch, &s.coef, &mut s.projected);
        self.basis.synthesize_into(&s.projected, &mut s.samples);
        s.samples.iter_mut().zip(&phase.backward).for_each(|(z, e)| *z *= e);
        self.basis.analyze_into(&s.samples, out);
    }
}
