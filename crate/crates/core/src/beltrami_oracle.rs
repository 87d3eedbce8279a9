//! Ground truth for tests and figures: the quasiconformal map `F` that
//! makes `σ` isotropic, and `γ = √det σ ∘ F⁻¹` in the deformed coordinates.
//!
//! `F = z + Cω` where `ω = ν(1 + Sω)`, `C` is the Cauchy transform and `S`
//! the Beurling transform. Both act through the Fourier multipliers of
//! their kernels truncated to `|z| ≤ ρ`, so the periodic convolution on
//! `[−S₀, S₀)²` is exact for `|z| ≤ ρ − r_supp`. The dilatation is
//! `ν = (σ22 − σ11 − 2iσ12)/(σ11 + σ22 + 2√det σ)`, which is `−μ̃`; with
//! this sign `F_*σ = √det σ ∘ F⁻¹ I`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::dbar_solver::ReconstructionGrid;
use crate::error::{Error, Result};
use crate::phantoms::{ConductivityField, SymTensor};

pub const DEFAULT_HALF_WIDTH: f64 = 2.0;
pub const DEFAULT_GRID: usize = 1024;
pub const FIXED_POINT_TOL: f64 = 1e-8;
const MAX_ITERATIONS: usize = 500;

fn zero() -> Complex64 {
    Complex64::new(0.0, 0.0)
}

/// Complex dilatation of the map that isotropizes `s`.
pub fn dilatation(s: &SymTensor) -> Complex64 {
    let denom = s.xx + s.yy + 2.0 * s.det().sqrt();
    Complex64::new(s.yy - s.xx, -2.0 * s.xy) / denom
}

#[derive(Debug, Clone)]
pub struct QcMap {
    pub half_width: f64,
    pub n: usize,
    /// `F` at `(−S + i h, −S + j h)`, row-major with row index `j`.
    pub f_values: Vec<Complex64>,
    pub omega: Vec<Complex64>,
    /// Coefficient of `1/z` in `F(z) = z + A/z + …`.
    pub a: Complex64,
    /// `F` is exact for `|z|` below this radius.
    pub valid_radius: f64,
    pub iterations: usize,
}

fn frequencies(n: usize, half_width: f64) -> Vec<f64> {
    (0..n)
        .map(|m| {
            let s = if m < n / 2 { m as f64 } else { m as f64 - n as f64 };
            2.0 * PI * s / (2.0 * half_width)
        })
        .collect()
}

struct Fft2 {
    n: usize,
    fwd: std::sync::Arc<dyn rustfft::Fft<f64>>,
    inv: std::sync::Arc<dyn rustfft::Fft<f64>>,
    col: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl Fft2 {
    fn new(n: usize) -> Self {
        let mut p = FftPlanner::new();
        let fwd = p.plan_fft_forward(n);
        let inv = p.plan_fft_inverse(n);
        let len = fwd.get_inplace_scratch_len().max(inv.get_inplace_scratch_len());
        Self {
            n,
            fwd,
            inv,
            col: vec![zero(); n],
            scratch: vec![zero(); len],
        }
    }

    fn run(&mut self, a: &mut [Complex64], forward: bool) {
        let n = self.n;
        let plan = if forward { &self.fwd } else { &self.inv };
        for row in a.chunks_mut(n) {
            plan.process_with_scratch(row, &mut self.scratch);
        }
        for c in 0..n {
            for r in 0..n {
                self.col[r] = a[r * n + c];
            }
            plan.process_with_scratch(&mut self.col, &mut self.scratch);
            for r in 0..n {
                a[r * n + c] = self.col[r];
            }
        }
        if !forward {
            let s = 1.0 / (n * n) as f64;
            a.iter_mut().for_each(|z| *z *= s);
        }
    }
}

impl QcMap {
    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.n as f64
    }

    pub fn node(&self, i: usize, j: usize) -> Complex64 {
        let h = self.spacing();
        Complex64::new(-self.half_width + i as f64 * h, -self.half_width + j as f64 * h)
    }

    pub fn at(&self, i: usize, j: usize) -> Complex64 {
        self.f_values[j * self.n + i]
    }

    /// `F(z)` for `|z|` outside the support of `ω`, by direct quadrature of
    /// the Cauchy integral.
    pub fn eval_exterior(&self, z: Complex64) -> Complex64 {
        let h2 = self.spacing().powi(2);
        let mut s = zero();
        for j in 0..self.n {
            for i in 0..self.n {
                let w = self.omega[j * self.n + i];
                if w != zero() {
                    s += w / (z - self.node(i, j));
                }
            }
        }
        z + s * h2 / PI
    }

    /// Bilinear interpolation of `F − z` between grid nodes.
    pub fn eval(&self, z: Complex64) -> Complex64 {
        let h = self.spacing();
        let x = ((z.re + self.half_width) / h).clamp(0.0, (self.n - 2) as f64);
        let y = ((z.im + self.half_width) / h).clamp(0.0, (self.n - 2) as f64);
        let (i, j) = (x.floor() as usize, y.floor() as usize);
        let (fx, fy) = (x - i as f64, y - j as f64);
        let d = |i: usize, j: usize| self.at(i, j) - self.node(i, j);
        let v = d(i, j) * (1.0 - fx) * (1.0 - fy)
            + d(i + 1, j) * fx * (1.0 - fy)
            + d(i, j + 1) * (1.0 - fx) * fy
            + d(i + 1, j + 1) * fx * fy;
        z + v
    }

    /// `(∂F, ∂̄F)` by central differences at an interior node.
    pub fn derivatives(&self, i: usize, j: usize) -> (Complex64, Complex64) {
        let h = self.spacing();
        let fx = (self.at(i + 1, j) - self.at(i - 1, j)) / (2.0 * h);
        let fy = (self.at(i, j + 1) - self.at(i, j - 1)) / (2.0 * h);
        let i1 = Complex64::i();
        ((fx - i1 * fy) / 2.0, (fx + i1 * fy) / 2.0)
    }

    /// Real Jacobian matrix `[[∂x u, ∂y u], [∂x v, ∂y v]]`.
    pub fn jacobian_matrix(&self, i: usize, j: usize) -> [[f64; 2]; 2] {
        let h = self.spacing();
        let fx = (self.at(i + 1, j) - self.at(i - 1, j)) / (2.0 * h);
        let fy = (self.at(i, j + 1) - self.at(i, j - 1)) / (2.0 * h);
        [[fx.re, fy.re], [fx.im, fy.im]]
    }

    fn valid_node(&self, i: usize, j: usize) -> bool {
        i > 0 && j > 0 && i + 1 < self.n && j + 1 < self.n && self.node(i, j).norm() <= self.valid_radius
    }

    /// Smallest discrete Jacobian over valid interior nodes.
    pub fn min_jacobian(&self) -> f64 {
        let mut m = f64::INFINITY;
        for j in 1..self.n - 1 {
            for i in 1..self.n - 1 {
                if self.valid_node(i, j) {
                    let d = self.jacobian_matrix(i, j);
                    m = m.min(d[0][0] * d[1][1] - d[0][1] * d[1][0]);
                }
            }
        }
        m
    }

    /// Number of grid triangles in the valid region whose image is not
    /// positively oriented.
    pub fn folded_cells(&self) -> usize {
        self.valid_triangles()
            .filter(|t| orient(t[0].1, t[1].1, t[2].1) <= 0.0)
            .count()
    }

    /// Triangles `(z, F(z))` from splitting every valid cell.
    fn valid_triangles(&self) -> impl Iterator<Item = [(Complex64, Complex64); 3]> + '_ {
        let n = self.n;
        (0..n - 1).flat_map(move |j| {
            (0..n - 1).flat_map(move |i| {
                let corners = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)];
                let ok = corners.iter().all(|&(a, b)| self.node(a, b).norm() <= self.valid_radius);
                let p = corners.map(|(a, b)| (self.node(a, b), self.at(a, b)));
                let tris = if ok {
                    vec![[p[0], p[1], p[2]], [p[0], p[2], p[3]]]
                } else {
                    Vec::new()
                };
                tris.into_iter()
            })
        })
    }

    /// Samples `F` on `|z| = 1`, counterclockwise from `θ = 0`.
    pub fn deformed_boundary(&self, samples: usize) -> Vec<Complex64> {
        (0..samples)
            .map(|k| {
                let z = Complex64::from_polar(1.0, 2.0 * PI * k as f64 / samples as f64);
                if z.norm() <= self.valid_radius {
                    self.eval(z)
                } else {
                    self.eval_exterior(z)
                }
            })
            .collect()
    }

    /// `A` from the `1/z` Fourier coefficient of `F − z` on `|z| = r`.
    pub fn fit_a(&self, r: f64, samples: usize) -> Complex64 {
        let mut s = zero();
        for k in 0..samples {
            let z = Complex64::from_polar(r, 2.0 * PI * k as f64 / samples as f64);
            s += (self.eval(z) - z) * z;
        }
        s / samples as f64
    }

    pub fn inverse(&self) -> InverseMap {
        InverseMap::new(self)
    }
}

fn orient(a: Complex64, b: Complex64, c: Complex64) -> f64 {
    ((b - a).conj() * (c - a)).im
}

/// Cellwise-linear inverse of `F` on the valid region.
pub struct InverseMap {
    triangles: Vec<[(Complex64, Complex64); 3]>,
    buckets: HashMap<(i64, i64), Vec<usize>>,
    bucket: f64,
    boundary_image: Vec<Complex64>,
}

impl InverseMap {
    fn new(map: &QcMap) -> Self {
        let triangles: Vec<_> = map.valid_triangles().collect();
        let bucket = 4.0 * map.spacing();
        let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        let key = |x: f64| (x / bucket).floor() as i64;
        for (t, tri) in triangles.iter().enumerate() {
            let xs = tri.map(|p| p.1.re);
            let ys = tri.map(|p| p.1.im);
            let (x0, x1) = (key(xs.iter().cloned().fold(f64::INFINITY, f64::min)), key(xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max)));
            let (y0, y1) = (key(ys.iter().cloned().fold(f64::INFINITY, f64::min)), key(ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max)));
            for bx in x0..=x1 {
                for by in y0..=y1 {
                    buckets.entry((bx, by)).or_default().push(t);
                }
            }
        }
        // image of the edge of the valid region, for the outside test
        let r = map.valid_radius - 2.0 * map.spacing();
        let boundary_image = (0..2048)
            .map(|k| map.eval(Complex64::from_polar(r, 2.0 * PI * k as f64 / 2048.0)))
            .collect();
        Self {
            triangles,
            buckets,
            bucket,
            boundary_image,
        }
    }

    /// Preimage of `zeta` if it lies in the image of the valid region.
    pub fn preimage(&self, zeta: Complex64) -> Option<Complex64> {
        let k = ((zeta.re / self.bucket).floor() as i64, (zeta.im / self.bucket).floor() as i64);
        let list = self.buckets.get(&k)?;
        for &t in list {
            let [(z0, w0), (z1, w1), (z2, w2)] = self.triangles[t];
            let d = orient(w0, w1, w2);
            if d == 0.0 {
                continue;
            }
            let l1 = orient(w0, zeta, w2) / d;
            let l2 = orient(w0, w1, zeta) / d;
            let l0 = 1.0 - l1 - l2;
            let eps = -1e-12;
            if l0 >= eps && l1 >= eps && l2 >= eps {
                return Some(z0 * l0 + z1 * l1 + z2 * l2);
            }
        }
        None
    }

    /// True when `zeta` lies outside the image of the valid region.
    pub fn is_exterior(&self, zeta: Complex64) -> bool {
        let mut wind = 0.0;
        let n = self.boundary_image.len();
        for k in 0..n {
            let a = self.boundary_image[k] - zeta;
            let b = self.boundary_image[(k + 1) % n] - zeta;
            wind += (b / a).arg();
        }
        (wind / (2.0 * PI)).abs() < 0.5
    }
}

/// Solves the Beltrami equation for `field` on `[−S, S)²` with `n²` nodes.
pub fn solve_beltrami(field: &ConductivityField, half_width: f64, n: usize) -> Result<QcMap> {
    let r_supp = field.support_radius();
    if !(half_width > r_supp + 0.1) || n < 8 || n % 2 != 0 {
        return Err(Error::Config(format!(
            "Beltrami grid needs S > support radius + 0.1 ({:.3}) and an even n ≥ 8",
            r_supp + 0.1
        )));
    }
    let h = 2.0 * half_width / n as f64;
    let node = |i: usize, j: usize| Complex64::new(-half_width + i as f64 * h, -half_width + j as f64 * h);
    let mut nu = vec![zero(); n * n];
    let mut kappa = 0.0f64;
    for j in 0..n {
        for i in 0..n {
            let z = node(i, j);
            if z.norm() < 1.0 {
                let s = field.sigma(z);
                let v = dilatation(&s);
                kappa = kappa.max(v.norm());
                nu[j * n + i] = v;
            }
        }
    }

    let rho = half_width;
    let xi = frequencies(n, half_width);
    let mut beurling = vec![zero(); n * n];
    let mut cauchy = vec![zero(); n * n];
    for r in 0..n {
        for c in 0..n {
            let x = Complex64::new(xi[c], xi[r]);
            if x == zero() {
                continue;
            }
            let damp = 1.0 - libm::j0(x.norm() * rho);
            beurling[r * n + c] = x.conj() / x * damp;
            cauchy[r * n + c] = Complex64::new(0.0, -2.0) / x * damp;
        }
    }

    let mut fft = Fft2::new(n);
    let mut omega = nu.clone();
    let mut work = vec![zero(); n * n];
    let mut iterations = 0;
    loop {
        work.copy_from_slice(&omega);
        fft.run(&mut work, true);
        work.iter_mut().zip(&beurling).for_each(|(w, m)| *w *= m);
        fft.run(&mut work, false);
        let mut change = 0.0f64;
        let mut size = 0.0f64;
        for ((o, w), v) in omega.iter_mut().zip(&work).zip(&nu) {
            if *v == zero() {
                continue;
            }
            let next = v * (1.0 + w);
            change = change.max((next - *o).norm());
            size = size.max(next.norm());
            *o = next;
        }
        iterations += 1;
        if change <= FIXED_POINT_TOL * size.max(1.0) {
            break;
        }
        if iterations >= MAX_ITERATIONS || !change.is_finite() {
            return Err(Error::NotConverged {
                context: format!("Beltrami fixed point (κ = {kappa:.3})"),
                iterations,
                residual: change,
            });
        }
    }

    work.copy_from_slice(&omega);
    fft.run(&mut work, true);
    work.iter_mut().zip(&cauchy).for_each(|(w, m)| *w *= m);
    fft.run(&mut work, false);
    let mut f_values = vec![zero(); n * n];
    for j in 0..n {
        for i in 0..n {
            f_values[j * n + i] = node(i, j) + work[j * n + i];
        }
    }
    let a = omega.iter().sum::<Complex64>() * h * h / PI;
    Ok(QcMap {
        half_width,
        n,
        f_values,
        omega,
        a,
        valid_radius: rho - r_supp,
        iterations,
    })
}

/// `√det σ(F⁻¹(ζ))` on the masked points of `grid`. Points whose preimage
/// lies beyond the valid region carry the background value 1 (the field
/// is the identity there); points that cannot be resolved are masked out.
pub fn true_isotropization(map: &QcMap, field: &ConductivityField, grid: &ReconstructionGrid) -> ReconstructionGrid {
    let inv = map.inverse();
    let mut out = grid.clone();
    for i in 0..out.values.len() {
        if !out.mask[i] {
            continue;
        }
        let zeta = out.point(i);
        match inv.preimage(zeta) {
            Some(z) => out.values[i] = field.sqrt_det(z),
            None if inv.is_exterior(zeta) && map.valid_radius >= field.support_radius() => out.values[i] = 1.0,
            None => {
                out.mask[i] = false;
                out.values[i] = f64::NAN;
            }
        }
    }
    out
}

/// Largest relative deviation of `(1/J) DF σ DFᵀ` from `√det σ I` over grid
/// nodes at least `clearance` away from every transition zone.
pub fn pushforward_defect(map: &QcMap, field: &ConductivityField, clearance: f64) -> f64 {
    let mut worst = 0.0f64;
    for j in 1..map.n - 1 {
        for i in 1..map.n - 1 {
            let z = map.node(i, j);
            if !map.valid_node(i, j) || z.norm() >= 1.0 || field.distance_to_transition(z) < clearance {
                continue;
            }
            let d = map.jacobian_matrix(i, j);
            let s = field.sigma(z).as_array();
            let jac = d[0][0] * d[1][1] - d[0][1] * d[1][0];
            let mut p = [[0.0; 2]; 2];
            for a in 0..2 {
                for b in 0..2 {
                    let mut acc = 0.0;
                    for c in 0..2 {
                        for e in 0..2 {
                            acc += d[a][c] * s[c][e] * d[b][e];
                        }
                    }
                    p[a][b] = acc / jac;
                }
            }
            let g = field.sigma(z).det().sqrt();
            let dev = [(p[0][0] - g).abs(), (p[1][1] - g).abs(), p[0][1].abs(), p[1][0].abs()]
                .into_iter()
                .fold(0.0, f64::max);
            worst = worst.max(dev / g);
        }
    }
    worst
}

/// Winding number of a closed polyline about `p`.
pub fn winding_number(curve: &[Complex64], p: Complex64) -> i64 {
    let n = curve.len();
    let total: f64 = (0..n).map(|k| ((curve[(k + 1) % n] - p) / (curve[k] - p)).arg()).sum();
    (total / (2.0 * PI)).round() as i64
}

pub fn write_polyline_csv(path: impl AsRef<Path>, curve: &[Complex64]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "x,y")?;
    for p in curve {
        writeln!(w, "{},{}", p.re, p.im)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantoms::BeltramiCoefficients;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn dilatation_is_minus_mu_tilde() {
        for s in [SymTensor::diag(1.0, 4.0), SymTensor::new(2.0, 0.3, 1.0), SymTensor::diag(0.4, 0.8)] {
            let mu = BeltramiCoefficients::of(&s).mu_tilde;
            assert!((dilatation(&s) + mu).norm() < 1e-15);
        }
    }

    #[test]
    fn identity_gives_identity_map() {
        let m = solve_beltrami(&ConductivityField::identity(), 2.0, 64).unwrap();
        assert_eq!(m.a, c(0.0, 0.0));
        for j in 0..64 {
            for i in 0..64 {
                assert!((m.at(i, j) - m.node(i, j)).norm() < 1e-14);
            }
        }
    }

    /// For constant `ν` on a disc of radius `r` the exact map is
    /// `z + ν z̄` inside and `z + ν r²/z` outside.
    fn constant_disc_check(tensor: SymTensor) -> (QcMap, Complex64) {
        let r = 0.3;
        let field = ConductivityField::centered_disc("disc", r, tensor).unwrap();
        let m = solve_beltrami(&field, 2.0, 256).unwrap();
        let nu = dilatation(&tensor);
        assert!((m.a - nu * r * r).norm() < 0.02 * (nu * r * r).norm(), "A = {}", m.a);
        for z in [c(0.1, 0.05), c(-0.12, 0.1), c(0.0, -0.15)] {
            let exact = z + nu * z.conj();
            assert!((m.eval(z) - exact).norm() < 3e-3, "{z}: {} vs {exact}", m.eval(z));
        }
        for z in [c(0.6, 0.2), c(-0.5, -0.7)] {
            let exact = z + nu * r * r / z;
            assert!((m.eval(z) - exact).norm() < 2e-3);
            assert!((m.eval_exterior(z) - exact).norm() < 2e-3);
        }
        (m, nu)
    }

    #[test]
    fn vertical_squeeze_for_diag_1_4() {
        let (m, _) = constant_disc_check(SymTensor::diag(1.0, 4.0));
        // ∂x F ∝ (1, 0), ∂y F ∝ (0, 1/2) inside the disc
        let i = m.n / 2;
        let d = m.jacobian_matrix(i, i);
        assert!((d[1][1] / d[0][0] - 0.5).abs() < 0.01, "{d:?}");
    }

    #[test]
    fn horizontal_squeeze_for_diag_2_1() {
        let (m, _) = constant_disc_check(SymTensor::diag(2.0, 1.0));
        let i = m.n / 2;
        let d = m.jacobian_matrix(i, i);
        assert!((d[0][0] / d[1][1] - 0.5f64.sqrt()).abs() < 0.01, "{d:?}");
    }

    #[test]
    fn map_is_orientation_preserving_and_injective() {
        let m = solve_beltrami(&ConductivityField::test2(true), 2.0, 256).unwrap();
        assert!(m.min_jacobian() > 0.0);
        assert_eq!(m.folded_cells(), 0);
    }

    #[test]
    fn inverse_round_trip() {
        let m = solve_beltrami(&ConductivityField::test1(), 2.0, 256).unwrap();
        let inv = m.inverse();
        for z in [c(-0.5, 0.1), c(0.45, -0.2), c(0.0, 0.8)] {
            let back = inv.preimage(m.eval(z)).unwrap();
            assert!((back - z).norm() < 1e-3, "{z} -> {back}");
        }
        assert!(inv.is_exterior(c(1.15, 0.6)));
        assert!(!inv.is_exterior(c(0.2, 0.0)));
    }

    #[test]
    fn identity_isotropization_is_one() {
        let m = solve_beltrami(&ConductivityField::identity(), 2.0, 64).unwrap();
        let g = true_isotropization(&m, &ConductivityField::identity(), &ReconstructionGrid::new(1.2, 21).unwrap());
        assert!(g.masked_values().all(|v| v == 1.0));
    }

    #[test]
    fn identity_boundary_is_unit_circle() {
        let m = solve_beltrami(&ConductivityField::identity(), 2.0, 64).unwrap();
        let b = m.deformed_boundary(128);
        assert!(b.iter().all(|p| (p.norm() - 1.0).abs() < 1e-12));
        assert_eq!(winding_number(&b, c(0.0, 0.0)), 1);
    }

    #[test]
    fn a_is_stable_under_grid_doubling() {
        let f = ConductivityField::test1();
        let a1 = solve_beltrami(&f, 2.0, 128).unwrap();
        let a2 = solve_beltrami(&f, 2.0, 256).unwrap();
        let (x, y) = (a1.fit_a(1.0, 512), a2.fit_a(1.0, 512));
        assert!((x - y).norm() <= 0.05 * y.norm(), "{x} vs {y}");
        assert!((a2.a - y).norm() <= 0.05 * y.norm(), "{} vs {y}", a2.a);
    }
}
