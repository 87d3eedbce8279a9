//! Structured triangulation of the unit disc.
//!
//! The base mesh has four triangles: the centre plus four boundary points at
//! angles 0, π/2, π, 3π/2. Level `ℓ` splits every base edge into `2^ℓ`
//! segments on the lattice of the diamond `|x| + |y| ≤ 1`, then maps the
//! diamond onto the disc by keeping the ℓ¹ radius and distributing the ℓ¹
//! perimeter parameter uniformly in angle. Boundary vertices therefore sit
//! exactly on the circle at equiangular positions.

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, PI};

pub const BASE_TRIANGLES: usize = 4;

#[derive(Debug, Clone)]
pub struct DiscMesh {
    pub level: u32,
    pub vertices: Vec<[f64; 2]>,
    /// Counterclockwise vertex triples.
    pub triangles: Vec<[usize; 3]>,
    /// Boundary vertices ordered counterclockwise, starting at angle 0.
    pub boundary: Vec<usize>,
}

fn diamond_to_disc(x: f64, y: f64) -> [f64; 2] {
    let r = x.abs() + y.abs();
    if r == 0.0 {
        return [0.0, 0.0];
    }
    let a = FRAC_PI_2 * y.abs() / r;
    [r * x.signum() * a.cos(), r * y.signum() * a.sin()]
}

pub fn build_mesh(level: u32) -> DiscMesh {
    let n = 1i64 << level;
    let mut ids: HashMap<(i64, i64), usize> = HashMap::new();
    let mut lattice: Vec<(i64, i64)> = Vec::new();
    let mut id_of = |p: (i64, i64), lattice: &mut Vec<(i64, i64)>| -> usize {
        *ids.entry(p).or_insert_with(|| {
            lattice.push(p);
            lattice.len() - 1
        })
    };
    id_of((0, 0), &mut lattice);

    let mut triangles = Vec::with_capacity(BASE_TRIANGLES << (2 * level));
    for (sx, sy) in [(1i64, 1i64), (-1, 1), (-1, -1), (1, -1)] {
        let g = |i: i64, j: i64| (sx * i, sy * j);
        for j in 0..n {
            for i in 0..(n - j) {
                let a = id_of(g(i, j), &mut lattice);
                let b = id_of(g(i + 1, j), &mut lattice);
                let c = id_of(g(i, j + 1), &mut lattice);
                triangles.push([a, b, c]);
                if i + j + 1 < n {
                    let d = id_of(g(i + 1, j + 1), &mut lattice);
                    triangles.push([b, d, c]);
                }
            }
        }
    }

    let scale = 1.0 / n as f64;
    let vertices: Vec<[f64; 2]> = lattice
        .iter()
        .map(|&(i, j)| diamond_to_disc(i as f64 * scale, j as f64 * scale))
        .collect();

    for t in &mut triangles {
        if signed_area(&vertices, *t) < 0.0 {
            t.swap(1, 2);
        }
    }

    let mut boundary: Vec<usize> = lattice
        .iter()
        .enumerate()
        .filter(|(_, &(i, j))| i.abs() + j.abs() == n)
        .map(|(v, _)| v)
        .collect();
    let angle = |v: usize| {
        let [x, y] = vertices[v];
        let a = y.atan2(x);
        if a < -1e-12 {
            a + 2.0 * PI
        } else {
            a.max(0.0)
        }
    };
    boundary.sort_by(|&a, &b| angle(a).total_cmp(&angle(b)));

    DiscMesh {
        level,
        vertices,
        triangles,
        boundary,
    }
}

pub(crate) fn signed_area(vertices: &[[f64; 2]], t: [usize; 3]) -> f64 {
    let [a, b, c] = t.map(|i| vertices[i]);
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

impl DiscMesh {
    pub fn triangle_area(&self, t: usize) -> f64 {
        signed_area(&self.vertices, self.triangles[t])
    }

    pub fn barycenter(&self, t: usize) -> [f64; 2] {
        let [a, b, c] = self.triangles[t].map(|i| self.vertices[i]);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    /// Angles of the boundary vertices, `2π i / n_boundary`.
    pub fn boundary_angles(&self) -> Vec<f64> {
        let nb = self.boundary.len();
        (0..nb).map(|i| 2.0 * PI * i as f64 / nb as f64).collect()
    }

    pub fn boundary_spacing(&self) -> f64 {
        2.0 * PI / self.boundary.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn base_mesh() {
        let m = build_mesh(0);
        assert_eq!(m.triangles.len(), 4);
        assert_eq!(m.vertices.len(), 5);
        assert_eq!(m.boundary.len(), 4);
        for v in &m.vertices {
            assert!(v[0].hypot(v[1]) <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn refinement_counts() {
        for level in 0..6 {
            let m = build_mesh(level);
            assert_eq!(m.triangles.len(), BASE_TRIANGLES * 4usize.pow(level));
            let nb = m.boundary.len();
            assert_eq!(nb, 4 << level);
            // Euler characteristic of a disc
            assert_eq!(m.vertices.len(), 1 + (m.triangles.len() + nb) / 2);
        }
        assert_eq!(build_mesh(1).triangles.len(), 4 * build_mesh(0).triangles.len());
    }

    #[test]
    fn boundary_is_equiangular_on_circle() {
        let m = build_mesh(4);
        let angles = m.boundary_angles();
        for (k, &v) in m.boundary.iter().enumerate() {
            let [x, y] = m.vertices[v];
            assert!((x.hypot(y) - 1.0).abs() < 1e-12);
            assert!((x - angles[k].cos()).abs() < 1e-12 && (y - angles[k].sin()).abs() < 1e-12);
        }
    }

    #[test]
    fn triangles_oriented_and_cover_polygon() {
        let m = build_mesh(3);
        let mut area = 0.0;
        for t in 0..m.triangles.len() {
            let a = m.triangle_area(t);
            assert!(a > 0.0);
            area += a;
        }
        let nb = m.boundary.len() as f64;
        let polygon = 0.5 * nb * (2.0 * PI / nb).sin();
        assert!((area - polygon).abs() < 1e-12);
    }

    #[test]
    fn level_eight_mesh_size() {
        let m = build_mesh(8);
        assert_eq!(m.triangles.len(), 262_144);
        assert_eq!(m.vertices.len(), 131_585);
    }
}
