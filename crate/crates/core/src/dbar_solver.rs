//! Truncated D-bar equation in `k`, solved per `ζ` by FFT convolution.
//!
//! `M(ζ,k) = 1 + (1/πk) ∗ (T(k) e(ζ,−k) conj M(ζ,k))` with
//! `T = t^R/(4π k̄)` and `e(ζ,−k) = exp(−2i Re(kζ))`. The physical k-grid is
//! embedded in a grid twice as large per axis so that the cyclic convolution
//! computed by FFT has no wrap-around on the physical points.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::krylov::{gmres, GmresOptions};
use crate::scattering::{KGrid, ScatteringData};

pub const DEFAULT_TOL: f64 = 1e-7;

fn zero() -> Complex64 {
    Complex64::new(0.0, 0.0)
}

/// Shared, read-only data for all `ζ` solves.
pub struct DbarWorkspace {
    grid: KGrid,
    /// Physical samples of `t/(4π k̄)`, zero at `k = 0`.
    tk_over_kbar: Vec<Complex64>,
    /// Transform of `h² / (πk)` on the padded grid, divided by the FFT
    /// normalization and stored column-major.
    green_hat: Vec<Complex64>,
    points: Vec<Complex64>,
    /// Rows of the padded grid holding physical points, in physical order.
    rows: Vec<usize>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    pub opts: GmresOptions,
    /// Physical indices where `T ≠ 0`.
    support: Vec<usize>,
}

/// Per-thread buffers.
pub struct DbarScratch {
    padded: Vec<Complex64>,
    transposed: Vec<Complex64>,
    line: Vec<Complex64>,
    fft: Vec<Complex64>,
    weights: Vec<Complex64>,
}

impl DbarWorkspace {
    pub fn new(data: &ScatteringData) -> Self {
        let grid = data.grid;
        let n = grid.side();
        let np = 2 * n;
        let h = grid.step();
        let points = grid.points();
        let tk_over_kbar: Vec<Complex64> = points
            .iter()
            .zip(&data.t)
            .map(|(k, t)| {
                if *k == zero() || *t == zero() {
                    zero()
                } else {
                    t / (4.0 * PI * k.conj())
                }
            })
            .collect();
        let support = (0..grid.len()).filter(|&i| tk_over_kbar[i] != zero()).collect();

        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(np);
        let inv = planner.plan_fft_inverse(np);

        // Green's function, padded-grid row-major, then 2-D FFT.
        let signed = |p: usize| if p < n { p as f64 } else { p as f64 - np as f64 };
        let mut g = vec![zero(); np * np];
        for r in 0..np {
            for c in 0..np {
                let k = Complex64::new(signed(c) * h, signed(r) * h);
                if k != zero() {
                    g[r * np + c] = (PI * k).inv();
                }
            }
        }
        fft2(&mut g, np, &*fwd);
        let scale = h * h / (np * np) as f64;
        let mut green_hat = vec![zero(); np * np];
        for r in 0..np {
            for c in 0..np {
                green_hat[c * np + r] = g[r * np + c] * scale;
            }
        }
        let rows = (0..n)
            .map(|i| {
                let j = i as i64 - (n / 2) as i64;
                j.rem_euclid(np as i64) as usize
            })
            .collect();

        Self {
            grid,
            tk_over_kbar,
            green_hat,
            points,
            rows,
            fwd,
            inv,
            opts: GmresOptions {
                tol: DEFAULT_TOL,
                restart: 40,
                max_iter: 400,
            },
            support,
        }
    }

    pub fn grid(&self) -> KGrid {
        self.grid
    }

    pub fn scratch(&self) -> DbarScratch {
        let np = 2 * self.grid.side();
        DbarScratch {
            padded: vec![zero(); np * np],
            transposed: vec![zero(); np * np],
            line: vec![zero(); np],
            fft: vec![zero(); self.fwd.get_inplace_scratch_len().max(self.inv.get_inplace_scratch_len())],
            weights: vec![zero(); self.grid.len()],
        }
    }

    /// `(1/πk) ∗ f` on the physical grid for `f` given on the physical grid.
    pub fn convolve(&self, f: &[Complex64], out: &mut [Complex64], s: &mut DbarScratch) {
        let n = self.grid.side();
        let np = 2 * n;
        s.padded.iter_mut().for_each(|z| *z = zero());
        for (i, &r) in self.rows.iter().enumerate() {
            let row = &mut s.padded[r * np..(r + 1) * np];
            for (jc, &c) in self.rows.iter().enumerate() {
                row[c] = f[i * n + jc];
            }
            self.fwd.process_with_scratch(row, &mut s.fft);
        }
        // columns: only physical rows are nonzero before the column pass
        for c in 0..np {
            let col = &mut s.transposed[c * np..(c + 1) * np];
            col.iter_mut().for_each(|z| *z = zero());
            for &r in &self.rows {
                col[r] = s.padded[r * np + c];
            }
            self.fwd.process_with_scratch(col, &mut s.fft);
            for (z, g) in col.iter_mut().zip(&self.green_hat[c * np..(c + 1) * np]) {
                *z *= g;
            }
            self.inv.process_with_scratch(col, &mut s.fft);
        }
        for (i, &r) in self.rows.iter().enumerate() {
            for c in 0..np {
                s.line[c] = s.transposed[c * np + r];
            }
            self.inv.process_with_scratch(&mut s.line, &mut s.fft);
            for (jc, &c) in self.rows.iter().enumerate() {
                out[i * n + jc] = s.line[c];
            }
        }
    }

    fn prepare_weights(&self, zeta: Complex64, s: &mut DbarScratch) {
        s.weights.iter_mut().for_each(|w| *w = zero());
        for &i in &self.support {
            let e = Complex64::from_polar(1.0, -2.0 * (self.points[i] * zeta).re);
            s.weights[i] = self.tk_over_kbar[i] * e;
        }
    }

    /// `M − (1/πk) ∗ (T e conj M)` on interleaved `(Re, Im)` vectors.
    fn apply(&self, v: &[f64], out: &mut [f64], s: &mut DbarScratch, f: &mut [Complex64], conv: &mut [Complex64]) {
        for (i, fi) in f.iter_mut().enumerate() {
            *fi = s.weights[i] * Complex64::new(v[2 * i], -v[2 * i + 1]);
        }
        self.convolve(f, conv, s);
        for (i, c) in conv.iter().enumerate() {
            out[2 * i] = v[2 * i] - c.re;
            out[2 * i + 1] = v[2 * i + 1] - c.im;
        }
    }

    /// Solves for `M(ζ, ·)` on the physical k-grid.
    pub fn solve_dbar_at(&self, zeta: Complex64, s: &mut DbarScratch) -> Result<DbarSolution> {
        let len = self.grid.len();
        self.prepare_weights(zeta, s);
        let mut rhs = vec![0.0; 2 * len];
        for i in 0..len {
            rhs[2 * i] = 1.0;
        }
        let mut f = vec![zero(); len];
        let mut conv = vec![zero(); len];
        let out = gmres(|v, o| self.apply(v, o, s, &mut f, &mut conv), &rhs, rhs.clone(), self.opts);
        if !out.converged {
            return Err(Error::NotConverged {
                context: format!("D-bar solve at ζ = {zeta}"),
                iterations: out.iterations,
                residual: out.residual,
            });
        }
        let m: Vec<Complex64> = (0..len).map(|i| Complex64::new(out.x[2 * i], out.x[2 * i + 1])).collect();
        let m0 = m[self.grid.origin()];
        Ok(DbarSolution {
            m,
            m0,
            iterations: out.iterations,
            residual: out.residual,
        })
    }

    /// `(M(ζ,0)², iterations)` without keeping the full solution.
    pub fn gamma_at(&self, zeta: Complex64, s: &mut DbarScratch) -> Result<(Complex64, usize)> {
        let sol = self.solve_dbar_at(zeta, s)?;
        Ok((sol.m0 * sol.m0, sol.iterations))
    }
}

fn fft2(a: &mut [Complex64], np: usize, fft: &dyn Fft<f64>) {
    let mut scratch = vec![zero(); fft.get_inplace_scratch_len()];
    for row in a.chunks_mut(np) {
        fft.process_with_scratch(row, &mut scratch);
    }
    let mut col = vec![zero(); np];
    for c in 0..np {
        for r in 0..np {
            col[r] = a[r * np + c];
        }
        fft.process_with_scratch(&mut col, &mut scratch);
        for r in 0..np {
            a[r * np + c] = col[r];
        }
    }
}

#[derive(Debug, Clone)]
pub struct DbarSolution {
    pub m: Vec<Complex64>,
    pub m0: Complex64,
    pub iterations: usize,
    pub residual: f64,
}

/// `γ_R` sampled on `ζ_{ij} = (−ζmax + i h, −ζmax + j h)`, `h = 2ζmax/(n−1)`;
/// points with `|ζ| > ζmax` are masked (`NaN`).
#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionGrid {
    pub zeta_max: f64,
    pub n_side: usize,
    /// Row-major, row index along `ζ2`.
    pub values: Vec<f64>,
    pub mask: Vec<bool>,
    pub max_imag_ratio: f64,
    pub flagged: usize,
}

impl ReconstructionGrid {
    pub fn new(zeta_max: f64, n_side: usize) -> Result<Self> {
        if !(zeta_max > 0.0 && zeta_max.is_finite()) || n_side < 2 {
            return Err(Error::Config(format!(
                "reconstruction grid needs ζmax > 0 and at least 2 points per side (got {zeta_max}, {n_side})"
            )));
        }
        let mut g = Self {
            zeta_max,
            n_side,
            values: vec![f64::NAN; n_side * n_side],
            mask: vec![false; n_side * n_side],
            max_imag_ratio: 0.0,
            flagged: 0,
        };
        for i in 0..g.values.len() {
            g.mask[i] = g.point(i).norm() <= zeta_max * (1.0 + 1e-12);
        }
        Ok(g)
    }

    /// Grid with spacing closest to `h` that ends exactly at `±ζmax`.
    pub fn with_spacing(zeta_max: f64, h: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::Config(format!("ζ spacing must be positive, got {h}")));
        }
        Self::new(zeta_max, (2.0 * zeta_max / h).round() as usize + 1)
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.zeta_max / (self.n_side - 1) as f64
    }

    pub fn point(&self, idx: usize) -> Complex64 {
        let h = self.spacing();
        let (i, j) = (idx % self.n_side, idx / self.n_side);
        Complex64::new(-self.zeta_max + i as f64 * h, -self.zeta_max + j as f64 * h)
    }

    pub fn masked_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().zip(&self.mask).filter(|(_, m)| **m).map(|(v, _)| *v)
    }

    pub fn max(&self) -> f64 {
        self.masked_values().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.masked_values().fold(f64::INFINITY, f64::min)
    }

    /// Nearest grid index to `z`.
    pub fn nearest(&self, z: Complex64) -> usize {
        let h = self.spacing();
        let f = |x: f64| (((x + self.zeta_max) / h).round().max(0.0) as usize).min(self.n_side - 1);
        f(z.im) * self.n_side + f(z.re)
    }

    /// Largest masked value within `radius` of `center`.
    pub fn max_near(&self, center: Complex64, radius: f64) -> f64 {
        self.fold_near(center, radius, f64::NEG_INFINITY, f64::max)
    }

    pub fn min_near(&self, center: Complex64, radius: f64) -> f64 {
        self.fold_near(center, radius, f64::INFINITY, f64::min)
    }

    fn fold_near(&self, center: Complex64, radius: f64, init: f64, f: impl Fn(f64, f64) -> f64) -> f64 {
        (0..self.values.len())
            .filter(|&i| self.mask[i] && (self.point(i) - center).norm() <= radius)
            .fold(init, |acc, i| f(acc, self.values[i]))
    }

    /// Sum of absolute differences between masked neighbours.
    pub fn total_variation(&self) -> f64 {
        let n = self.n_side;
        let mut tv = 0.0;
        for j in 0..n {
            for i in 0..n {
                let a = j * n + i;
                if !self.mask[a] {
                    continue;
                }
                for b in [(i + 1 < n).then(|| a + 1), (j + 1 < n).then(|| a + n)].into_iter().flatten() {
                    if self.mask[b] {
                        tv += (self.values[a] - self.values[b]).abs();
                    }
                }
            }
        }
        tv * self.spacing()
    }

    /// Replaces `NaN` at masked points by the mean of valid 4-neighbours,
    /// sweeping until every masked point has a value.
    fn fill_flagged(&mut self) {
        let n = self.n_side;
        loop {
            let missing: Vec<usize> = (0..self.values.len())
                .filter(|&i| self.mask[i] && self.values[i].is_nan())
                .collect();
            if missing.is_empty() {
                return;
            }
            let mut progress = false;
            let snapshot = self.values.clone();
            for &i in &missing {
                let (x, y) = (i % n, i / n);
                let nb = [
                    (x > 0).then(|| i - 1),
                    (x + 1 < n).then(|| i + 1),
                    (y > 0).then(|| i - n),
                    (y + 1 < n).then(|| i + n),
                ];
                let vals: Vec<f64> = nb
                    .into_iter()
                    .flatten()
                    .filter(|&b| self.mask[b] && !snapshot[b].is_nan())
                    .map(|b| snapshot[b])
                    .collect();
                if !vals.is_empty() {
                    self.values[i] = vals.iter().sum::<f64>() / vals.len() as f64;
                    progress = true;
                }
            }
            if !progress {
                // nothing valid anywhere: fall back to the background value
                missing.iter().for_each(|&i| self.values[i] = 1.0);
                return;
            }
        }
    }

    /// `reconstruction.csv`, `reconstruction.pgm`, `reconstruction.json`.
    pub fn save(&self, dir: impl AsRef<Path>, meta: &ReconstructionMeta) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let mut w = std::io::BufWriter::new(std::fs::File::create(dir.join("reconstruction.csv"))?);
        writeln!(w, "zeta1,zeta2,gamma")?;
        for i in 0..self.values.len() {
            if self.mask[i] {
                let z = self.point(i);
                writeln!(w, "{},{},{}", z.re, z.im, self.values[i])?;
            }
        }
        w.flush()?;
        let (lo, hi) = (self.min(), self.max());
        std::fs::write(dir.join("reconstruction.pgm"), self.to_pgm(lo, hi))?;
        let manifest = ReconstructionManifest {
            min: lo,
            max: hi,
            zeta_max: self.zeta_max,
            h_zeta: self.spacing(),
            n_side: self.n_side,
            r: meta.r,
            c: meta.c,
            flagged_points: self.flagged,
            max_imag_ratio: self.max_imag_ratio,
        };
        std::fs::write(dir.join("reconstruction.json"), serde_json::to_string_pretty(&manifest)?)?;
        Ok(())
    }

    /// Binary PGM, top row at `ζ2 = +ζmax`; masked-out pixels are black.
    pub fn to_pgm(&self, lo: f64, hi: f64) -> Vec<u8> {
        let n = self.n_side;
        let mut out = format!("P5\n{n} {n}\n255\n").into_bytes();
        let span = if hi > lo { hi - lo } else { 1.0 };
        for j in (0..n).rev() {
            for i in 0..n {
                let idx = j * n + i;
                let v = if self.mask[idx] && self.values[idx].is_finite() {
                    (((self.values[idx] - lo) / span) * 255.0).round().clamp(0.0, 255.0) as u8
                } else {
                    0
                };
                out.push(v);
            }
        }
        out
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let m: ReconstructionManifest =
            serde_json::from_str(&std::fs::read_to_string(dir.join("reconstruction.json"))?)?;
        let mut g = Self::new(m.zeta_max, m.n_side)?;
        g.flagged = m.flagged_points;
        g.max_imag_ratio = m.max_imag_ratio;
        let text = std::fs::read_to_string(dir.join("reconstruction.csv"))?;
        let h = g.spacing();
        for (no, line) in text.lines().enumerate().skip(1) {
            let v: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Format(format!("reconstruction.csv line {}: {e}", no + 1)))?;
            if v.len() != 3 {
                return Err(Error::Format(format!("reconstruction.csv line {}: expected 3 columns", no + 1)));
            }
            let i = ((v[0] + g.zeta_max) / h).round() as usize;
            let j = ((v[1] + g.zeta_max) / h).round() as usize;
            if i >= g.n_side || j >= g.n_side {
                return Err(Error::GridMismatch(format!("point ({}, {}) is off the grid", v[0], v[1])));
            }
            g.values[j * g.n_side + i] = v[2];
        }
        Ok(g)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionMeta {
    #[serde(rename = "R")]
    pub r: Option<f64>,
    pub c: Option<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReconstructionManifest {
    pub min: f64,
    pub max: f64,
    pub zeta_max: f64,
    pub h_zeta: f64,
    pub n_side: usize,
    #[serde(rename = "R")]
    pub r: Option<f64>,
    pub c: Option<u32>,
    pub flagged_points: usize,
    pub max_imag_ratio: f64,
}

/// `γ_R = Re M(ζ,0)²` at every masked point of `grid`.
pub fn reconstruct(ws: &DbarWorkspace, grid: &ReconstructionGrid) -> ReconstructionGrid {
    let idx: Vec<usize> = (0..grid.values.len()).filter(|&i| grid.mask[i]).collect();
    let results: Vec<Option<Complex64>> = idx
        .par_iter()
        .map_init(
            || ws.scratch(),
            |s, &i| match ws.gamma_at(grid.point(i), s) {
                Ok((g, _)) => Some(g),
                Err(e) => {
                    log::warn!("{e}");
                    None
                }
            },
        )
        .collect();
    let mut out = grid.clone();
    out.flagged = 0;
    out.max_imag_ratio = 0.0;
    for (&i, r) in idx.iter().zip(&results) {
        match r {
            Some(g) if g.re > 0.0 && g.re.is_finite() => {
                out.values[i] = g.re;
                out.max_imag_ratio = out.max_imag_ratio.max(g.im.abs() / g.re.abs());
            }
            _ => {
                out.values[i] = f64::NAN;
                out.flagged += 1;
            }
        }
    }
    if out.flagged > 0 {
        log::warn!("{} reconstruction points failed and were interpolated", out.flagged);
        out.fill_flagged();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scattering::KGrid;
    use faer::linalg::solvers::Solve;
    use faer::Mat;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Smooth synthetic scattering data supported in `|k| ≤ R`.
    fn synthetic(grid: KGrid, amp: f64) -> ScatteringData {
        let mut d = ScatteringData::zeros(grid);
        for i in 0..grid.len() {
            let k = grid.point(i);
            if k.norm() <= grid.radius && k != c(0.0, 0.0) {
                d.t[i] = amp * c(1.0, 0.3) * k.norm_sqr() * (-k.norm_sqr() / 2.0).exp();
            }
        }
        d
    }

    #[test]
    fn fft_convolution_matches_direct_sum() {
        let grid = KGrid::new(2.0, 3).unwrap();
        let ws = DbarWorkspace::new(&synthetic(grid, 1.0));
        let mut s = ws.scratch();
        let pts = grid.points();
        let f: Vec<Complex64> = pts.iter().map(|k| c(k.re.sin(), (k.im * 0.7).cos())).collect();
        let mut out = vec![c(0.0, 0.0); grid.len()];
        ws.convolve(&f, &mut out, &mut s);
        let h2 = grid.step().powi(2);
        for (i, ki) in pts.iter().enumerate() {
            let mut direct = c(0.0, 0.0);
            for (j, kj) in pts.iter().enumerate() {
                if i != j {
                    direct += h2 * f[j] / (PI * (ki - kj));
                }
            }
            assert!((direct - out[i]).norm() < 1e-12, "{i}: {direct} vs {}", out[i]);
        }
    }

    /// Same discrete equation, assembled densely and solved by LU.
    #[test]
    fn matches_dense_real_linear_solve() {
        let grid = KGrid::new(2.0, 3).unwrap();
        let data = synthetic(grid, 2.0);
        let ws = DbarWorkspace::new(&data);
        let zeta = c(0.3, -0.2);
        let sol = ws.solve_dbar_at(zeta, &mut ws.scratch()).unwrap();

        let pts = grid.points();
        let n = pts.len();
        let h2 = grid.step().powi(2);
        let w: Vec<Complex64> = pts
            .iter()
            .zip(&data.t)
            .map(|(k, t)| {
                if *k == c(0.0, 0.0) {
                    c(0.0, 0.0)
                } else {
                    t / (4.0 * PI * k.conj()) * Complex64::from_polar(1.0, -2.0 * (k * zeta).re)
                }
            })
            .collect();
        // M_i − Σ_j g_ij w_j conj(M_j) = 1, split into real and imaginary parts
        let mut a = Mat::<f64>::zeros(2 * n, 2 * n);
        for i in 0..n {
            a[(i, i)] = 1.0;
            a[(n + i, n + i)] = 1.0;
            for j in 0..n {
                if i == j {
                    continue;
                }
                let q = h2 * w[j] / (PI * (pts[i] - pts[j]));
                // q·conj(x + iy) = (q.re x + q.im y) + i(q.im x − q.re y)
                a[(i, j)] -= q.re;
                a[(i, n + j)] -= q.im;
                a[(n + i, j)] -= q.im;
                a[(n + i, n + j)] += q.re;
            }
        }
        let mut b = Mat::<f64>::zeros(2 * n, 1);
        for i in 0..n {
            b[(i, 0)] = 1.0;
        }
        let x = a.partial_piv_lu().solve(&b);
        for i in 0..n {
            assert!((sol.m[i] - c(x[(i, 0)], x[(n + i, 0)])).norm() < 1e-6);
        }
    }

    #[test]
    fn zero_scattering_gives_one() {
        let grid = KGrid::new(4.0, 4).unwrap();
        let ws = DbarWorkspace::new(&ScatteringData::zeros(grid));
        let sol = ws.solve_dbar_at(c(0.5, 0.1), &mut ws.scratch()).unwrap();
        assert!(sol.m.iter().all(|m| *m == c(1.0, 0.0)));
        assert!(sol.iterations <= 1);
        let rec = reconstruct(&ws, &ReconstructionGrid::new(1.2, 9).unwrap());
        assert!(rec.masked_values().all(|g| g == 1.0));
    }

    #[test]
    fn born_linearity() {
        let grid = KGrid::new(3.0, 4).unwrap();
        let zeta = c(0.2, 0.1);
        let m0 = |alpha: f64| {
            let ws = DbarWorkspace::new(&synthetic(grid, alpha));
            let mut ws = ws;
            ws.opts.tol = 1e-12;
            ws.solve_dbar_at(zeta, &mut ws.scratch()).unwrap().m
        };
        let (a, b) = (m0(1e-3), m0(2e-3));
        let num: f64 = b.iter().map(|m| (m - 1.0).norm()).sum();
        let den: f64 = a.iter().map(|m| (m - 1.0).norm()).sum();
        let ratio = num / den;
        assert!((ratio - 2.0).abs() < 0.02, "ratio {ratio}");
    }

    #[test]
    fn grid_geometry() {
        let g = ReconstructionGrid::with_spacing(1.2, 0.0094).unwrap();
        assert_eq!(g.n_side, 256);
        assert!((g.spacing() - 0.0094).abs() < 1e-4);
        assert_eq!(g.point(0), c(-1.2, -1.2));
        assert!((g.point(g.values.len() - 1) - c(1.2, 1.2)).norm() < 1e-12);
        assert!(!g.mask[0]);
        assert!(g.mask[g.nearest(c(0.0, 0.0))]);
    }

    #[test]
    fn flagged_points_are_interpolated() {
        let mut g = ReconstructionGrid::new(1.0, 5).unwrap();
        for i in 0..25 {
            if g.mask[i] {
                g.values[i] = 2.0;
            }
        }
        let centre = g.nearest(c(0.0, 0.0));
        g.values[centre] = f64::NAN;
        g.fill_flagged();
        assert_eq!(g.values[centre], 2.0);
    }

    #[test]
    fn save_load_round_trip() {
        let mut g = ReconstructionGrid::new(1.2, 11).unwrap();
        for i in 0..g.values.len() {
            if g.mask[i] {
                g.values[i] = 1.0 + g.point(i).re;
            }
        }
        let dir = tempfile::tempdir().unwrap();
        g.save(dir.path(), &ReconstructionMeta { r: Some(6.0), c: Some(7) }).unwrap();
        let back = ReconstructionGrid::load(dir.path()).unwrap();
        for i in 0..g.values.len() {
            if g.mask[i] {
                assert_eq!(back.values[i], g.values[i]);
            }
        }
        let pgm = std::fs::read(dir.path().join("reconstruction.pgm")).unwrap();
        assert!(pgm.starts_with(b"P5\n11 11\n255\n"));
        assert_eq!(pgm.len(), b"P5\n11 11\n255\n".len() + 121);
        let m: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("reconstruction.json")).unwrap()).unwrap();
        assert_eq!(m["R"], 6.0);
        assert_eq!(m["c"], 7);
        assert!((m["max"].as_f64().unwrap() - 2.2).abs() < 1e-12);
    }
}
