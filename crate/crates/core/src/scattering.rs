//! Scattering data: `b̃₁±(k)` from the CGO traces, then
//! `τ = (conj b̃₁⁺ − conj b̃₁⁻)/2` and `t(k) = −4πi k̄ τ(k)` on the k-grid.

use std::io::{BufRead, Write};
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boundary_ops::BoundaryOperators;
use crate::cgo_bie::{solve_cgo_trace, Sign};
use crate::error::{Error, Result};
use crate::krylov::GmresOptions;

/// Square grid `{j h : −2^{c−1} ≤ j_i < 2^{c−1}}` with `h = 2R/2^c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KGrid {
    pub radius: f64,
    pub c: u32,
}

impl KGrid {
    pub fn new(radius: f64, c: u32) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::Config(format!("k-grid radius must be positive, got {radius}")));
        }
        if !(1..=12).contains(&c) {
            return Err(Error::Config(format!("k-grid exponent c must be in 1..=12, got {c}")));
        }
        Ok(Self { radius, c })
    }

    pub fn side(&self) -> usize {
        1 << self.c
    }

    pub fn len(&self) -> usize {
        self.side() * self.side()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step(&self) -> f64 {
        2.0 * self.radius / self.side() as f64
    }

    /// Integer coordinates of flat index `idx = i2·n + i1`.
    pub fn lattice(&self, idx: usize) -> (i64, i64) {
        let n = self.side();
        let half = (n / 2) as i64;
        ((idx % n) as i64 - half, (idx / n) as i64 - half)
    }

    pub fn index_of(&self, j1: i64, j2: i64) -> Option<usize> {
        let n = self.side() as i64;
        let (i1, i2) = (j1 + n / 2, j2 + n / 2);
        ((0..n).contains(&i1) && (0..n).contains(&i2)).then(|| (i2 * n + i1) as usize)
    }

    pub fn point(&self, idx: usize) -> Complex64 {
        let (j1, j2) = self.lattice(idx);
        let h = self.step();
        Complex64::new(j1 as f64 * h, j2 as f64 * h)
    }

    pub fn points(&self) -> Vec<Complex64> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }

    pub fn origin(&self) -> usize {
        self.index_of(0, 0).expect("grid contains 0")
    }
}

/// `b̃₁ ≈ (Δθ/2π) Σ (M(e^{iθ_n}) − 1) e^{iθ_n}` on equiangular samples.
pub fn integrate_b1(values: &[Complex64]) -> Complex64 {
    let m = values.len();
    let mut s = Complex64::new(0.0, 0.0);
    for (j, v) in values.iter().enumerate() {
        let e = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * j as f64 / m as f64);
        s += (v - 1.0) * e;
    }
    s / m as f64
}

pub fn tau_from_b1(b_plus: Complex64, b_minus: Complex64) -> Complex64 {
    (b_plus.conj() - b_minus.conj()) / 2.0
}

pub fn t_from_tau(k: Complex64, tau: Complex64) -> Complex64 {
    -4.0 * std::f64::consts::PI * Complex64::i() * k.conj() * tau
}

fn inside(k: Complex64, truncation: f64) -> bool {
    k.norm() <= truncation
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScatteringData {
    pub grid: KGrid,
    /// Radius beyond which `t` is zero; at most `grid.radius`.
    pub truncation: f64,
    pub t: Vec<Complex64>,
    pub tau: Vec<Complex64>,
    pub b1_plus: Vec<Complex64>,
    pub b1_minus: Vec<Complex64>,
    /// Flat indices inside the disc where a trace solve failed.
    pub zeroed: Vec<usize>,
    pub max_residual: f64,
}

impl ScatteringData {
    pub fn zeros(grid: KGrid) -> Self {
        let z = vec![Complex64::new(0.0, 0.0); grid.len()];
        Self {
            grid,
            truncation: grid.radius,
            t: z.clone(),
            tau: z.clone(),
            b1_plus: z.clone(),
            b1_minus: z,
            zeroed: Vec::new(),
            max_residual: 0.0,
        }
    }

    /// Same data with `t` set to zero for `|k| > r`.
    pub fn truncated(&self, r: f64) -> Self {
        let mut out = self.clone();
        out.truncation = r.min(self.truncation);
        for (i, t) in out.t.iter_mut().enumerate() {
            if !inside(self.grid.point(i), out.truncation) {
                *t = Complex64::new(0.0, 0.0);
            }
        }
        out.zeroed.retain(|&i| inside(self.grid.point(i), out.truncation));
        out
    }

    pub fn max_abs_t(&self) -> f64 {
        self.t.iter().map(|t| t.norm()).fold(0.0, f64::max)
    }

    /// Writes `scattering.csv` (`k1,k2,re_t,im_t`) and `scattering.json`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let mut w = std::io::BufWriter::new(std::fs::File::create(dir.join(CSV_NAME))?);
        writeln!(w, "k1,k2,re_t,im_t")?;
        for (i, t) in self.t.iter().enumerate() {
            let k = self.grid.point(i);
            writeln!(w, "{},{},{},{}", k.re, k.im, t.re, t.im)?;
        }
        w.flush()?;
        let side = ScatteringSidecar {
            r: self.grid.radius,
            c: self.grid.c,
            truncation: self.truncation,
            zeroed_points: self.zeroed.len(),
            zeroed_indices: self.zeroed.clone(),
            max_residual: self.max_residual,
        };
        std::fs::write(dir.join(SIDECAR_NAME), serde_json::to_string_pretty(&side)?)?;
        Ok(())
    }

    /// Reads `t` back; `τ` and `b̃₁±` are not persisted and come back as zero.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let side: ScatteringSidecar = serde_json::from_str(&std::fs::read_to_string(dir.join(SIDECAR_NAME))?)?;
        let grid = KGrid::new(side.r, side.c)?;
        let mut data = Self::zeros(grid);
        data.truncation = side.truncation;
        data.zeroed = side.zeroed_indices;
        data.max_residual = side.max_residual;
        let f = std::io::BufReader::new(std::fs::File::open(dir.join(CSV_NAME))?);
        let mut rows = 0;
        for (line_no, line) in f.lines().enumerate().skip(1) {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let v: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Format(format!("scattering.csv line {}: {e}", line_no + 1)))?;
            if v.len() != 4 {
                return Err(Error::Format(format!("scattering.csv line {}: expected 4 columns", line_no + 1)));
            }
            let h = grid.step();
            let idx = grid
                .index_of((v[0] / h).round() as i64, (v[1] / h).round() as i64)
                .ok_or_else(|| Error::GridMismatch(format!("k = ({}, {}) is off the grid", v[0], v[1])))?;
            data.t[idx] = Complex64::new(v[2], v[3]);
            rows += 1;
        }
        if rows != grid.len() {
            return Err(Error::GridMismatch(format!("expected {} rows, found {rows}", grid.len())));
        }
        Ok(data)
    }
}

pub const CSV_NAME: &str = "scattering.csv";
pub const SIDECAR_NAME: &str = "scattering.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ScatteringSidecar {
    #[serde(rename = "R")]
    r: f64,
    c: u32,
    truncation: f64,
    zeroed_points: usize,
    #[serde(default)]
    zeroed_indices: Vec<usize>,
    #[serde(default)]
    max_residual: f64,
}

struct PointResult {
    b_plus: Complex64,
    b_minus: Complex64,
    residual: f64,
    failed: bool,
}

fn scatter_point(ops: &BoundaryOperators, k: Complex64, opts: GmresOptions) -> PointResult {
    let solve = |sign| solve_cgo_trace(ops, k, sign, opts);
    match (solve(Sign::Plus), solve(Sign::Minus)) {
        (Ok(p), Ok(m)) => PointResult {
            b_plus: integrate_b1(&p.values),
            b_minus: integrate_b1(&m.values),
            residual: p.residual.max(m.residual),
            failed: false,
        },
        (p, m) => {
            for e in [p.err(), m.err()].into_iter().flatten() {
                log::warn!("zeroing scattering point: {e}");
            }
            PointResult {
                b_plus: Complex64::new(0.0, 0.0),
                b_minus: Complex64::new(0.0, 0.0),
                residual: f64::NAN,
                failed: true,
            }
        }
    }
}

/// Scattering data on `grid`, truncated at the grid radius.
pub fn compute_scattering(ops: &BoundaryOperators, grid: KGrid, opts: GmresOptions) -> ScatteringData {
    compute_scattering_truncated(ops, grid, grid.radius, opts)
}

/// Scattering data on `grid` with `t = 0` for `|k| > truncation`.
pub fn compute_scattering_truncated(
    ops: &BoundaryOperators,
    grid: KGrid,
    truncation: f64,
    opts: GmresOptions,
) -> ScatteringData {
    let truncation = truncation.min(grid.radius);
    let active: Vec<usize> = (0..grid.len())
        .filter(|&i| {
            let k = grid.point(i);
            k != Complex64::new(0.0, 0.0) && inside(k, truncation)
        })
        .collect();
    let results: Vec<PointResult> = active
        .par_iter()
        .map(|&i| scatter_point(ops, grid.point(i), opts))
        .collect();

    let mut data = ScatteringData::zeros(grid);
    data.truncation = truncation;
    for (&i, r) in active.iter().zip(&results) {
        if r.failed {
            data.zeroed.push(i);
            continue;
        }
        let k = grid.point(i);
        data.b1_plus[i] = r.b_plus;
        data.b1_minus[i] = r.b_minus;
        data.tau[i] = tau_from_b1(r.b_plus, r.b_minus);
        data.t[i] = t_from_tau(k, data.tau[i]);
        data.max_residual = data.max_residual.max(r.residual);
    }
    if !data.zeroed.is_empty() {
        log::warn!("{} of {} k-points failed and were zeroed", data.zeroed.len(), active.len());
    }
    data
}
