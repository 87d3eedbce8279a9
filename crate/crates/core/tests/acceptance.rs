//! Acceptance criteria 1-8. Runs as a plain binary (`harness = false`) so
//! every criterion prints one PASS/FAIL line even when all pass.
//!
//! FEM data is computed once per phantom at mesh level 8 and shared.

use std::collections::HashMap;
use std::time::Instant;

use dbar_core::beltrami_oracle::{self, pushforward_defect, solve_beltrami, true_isotropization, winding_number};
use dbar_core::boundary_ops::{build_dt, build_hilbert, BoundaryOperators, DEFAULT_SAMPLES};
use dbar_core::dbar_solver::{reconstruct, DbarWorkspace, ReconstructionGrid};
use dbar_core::forward::{add_noise, build_mesh, simulate_voltages, DiscMesh, DnMatrix, VoltageTable};
use dbar_core::krylov::GmresOptions;
use dbar_core::phantoms::ConductivityField;
use dbar_core::pipeline::region_radius;
use dbar_core::scattering::{compute_scattering, compute_scattering_truncated, tau_from_b1, KGrid};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MESH_LEVEL: u32 = 8;
const N_BASIS: usize = 16;
const ZETA_MAX: f64 = 1.2;

struct Fem {
    mesh: DiscMesh,
    clean: HashMap<String, VoltageTable>,
}

impl Fem {
    fn voltages(&mut self, phantom: &str) -> VoltageTable {
        if !self.clean.contains_key(phantom) {
            let field = ConductivityField::resolve(phantom).expect("builtin phantom");
            let table = simulate_voltages(&self.mesh, &field, N_BASIS).expect("FEM solve");
            self.clean.insert(phantom.to_string(), table);
        }
        self.clean[phantom].clone()
    }

    fn dn(&mut self, phantom: &str, eta: f64, seed: u64) -> DnMatrix {
        DnMatrix::from_voltages(&add_noise(&self.voltages(phantom), eta, seed)).expect("D-N matrix")
    }
}

fn reconstruct_dn(l: &DnMatrix, radius: f64, c: u32, n_side: usize) -> ReconstructionGrid {
    let ops = BoundaryOperators::new(build_hilbert(l).expect("Hilbert matrices"), DEFAULT_SAMPLES).unwrap();
    let data = compute_scattering(&ops, KGrid::new(radius, c).unwrap(), GmresOptions::default());
    reconstruct(&DbarWorkspace::new(&data), &ReconstructionGrid::new(ZETA_MAX, n_side).unwrap())
}

fn inclusion_extrema(field: &ConductivityField, g: &ReconstructionGrid) -> Vec<(f64, f64)> {
    field
        .inclusions
        .iter()
        .map(|inc| {
            let c = Complex64::new(inc.center[0], inc.center[1]);
            let r = region_radius(&inc.shape);
            (g.max_near(c, r), g.min_near(c, r))
        })
        .collect()
}

fn within(value: f64, target: f64, rel: f64) -> bool {
    ((value - target) / target).abs() <= rel
}

struct Report {
    failed: usize,
}

impl Report {
    fn line(&mut self, id: u32, name: &str, pass: bool, detail: String) {
        if !pass {
            self.failed += 1;
        }
        println!("{} [C{id}] {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    }
}

fn criterion_1(report: &mut Report) {
    let t = Instant::now();
    let mesh = build_mesh(MESH_LEVEL);
    let table = simulate_voltages(&mesh, &ConductivityField::identity(), N_BASIS).unwrap();
    let l = DnMatrix::from_voltages(&table).unwrap();
    let g = reconstruct_dn(&l, 4.0, 6, 64);
    let secs = t.elapsed().as_secs_f64();
    let sup = g.masked_values().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
    report.line(
        1,
        "homogeneous sanity",
        sup < 0.01 && secs < 60.0,
        format!("sup|γ−1| = {sup:.2e} (< 1e-2), {secs:.1} s end-to-end (< 60 s)"),
    );
}

fn criterion_2(fem: &mut Fem, report: &mut Report) {
    let t = Instant::now();
    let l = fem.dn("test1", 0.0, 0);
    let g = reconstruct_dn(&l, 6.0, 7, 256);
    let secs = t.elapsed().as_secs_f64();
    let ext = inclusion_extrema(&ConductivityField::test1(), &g);
    let (left, right) = (ext[0].0, ext[1].0);
    report.line(
        2,
        "two-inclusion reproduction",
        within(left, 2.34, 0.15) && within(right, 1.61, 0.15) && left > right && secs <= 3600.0,
        format!("left max {left:.3} (2.34 ± 15%), right max {right:.3} (1.61 ± 15%), {secs:.0} s (≤ 3600 s)"),
    );
}

fn criterion_3(fem: &mut Fem, report: &mut Report) {
    let mut detail = Vec::new();
    let mut pass = true;
    for (name, heart_ref, lung_ref) in [("test2", 4.42, 0.50), ("test2-discontinuous", 4.03, 0.47)] {
        let field = ConductivityField::resolve(name).unwrap();
        let g = reconstruct_dn(&fem.dn(name, 0.0, 0), 7.0, 7, 128);
        let ext = inclusion_extrema(&field, &g);
        // inclusions: left lung, right lung, heart
        let heart = ext[2].0;
        let lung = ext[0].1.min(ext[1].1);
        pass &= within(heart, heart_ref, 0.2) && within(lung, lung_ref, 0.2);
        detail.push(format!("{name}: heart max {heart:.3} ({heart_ref} ± 20%), lung min {lung:.3} ({lung_ref} ± 20%)"));
    }
    report.line(3, "heart-and-lungs reproduction", pass, detail.join("; "));
}

fn criterion_4(fem: &mut Fem, report: &mut Report) {
    const SEEDS: u64 = 5;
    let rows = [
        (1e-4, 5.9, 2.31, 1.60),
        (1e-3, 5.0, 2.32, 1.61),
        (2.5e-3, 4.8, 2.54, 1.55),
        (1e-2, 3.8, 2.05, 1.45),
    ];
    let field = ConductivityField::test1();
    let mut pass = true;
    let mut detail = Vec::new();
    for (eta, radius, left_ref, right_ref) in rows {
        let (mut left, mut right) = (0.0, 0.0);
        for seed in 0..SEEDS {
            let g = reconstruct_dn(&fem.dn("test1", eta, seed), radius, 6, 64);
            let ext = inclusion_extrema(&field, &g);
            left += ext[0].0 / SEEDS as f64;
            right += ext[1].0 / SEEDS as f64;
        }
        let ok = within(left, left_ref, 0.2) && within(right, right_ref, 0.2);
        pass &= ok;
        detail.push(format!("η={eta:e} R={radius}: {left:.3}/{right:.3} vs {left_ref}/{right_ref}"));
    }
    report.line(4, "noise table (5 seeds, ±20%)", pass, detail.join("; "));
}

fn criterion_5(fem: &mut Fem, report: &mut Report) {
    let l = fem.dn("test1", 0.0, 0);
    let h = build_hilbert(&l).unwrap();
    let comp = h.composition_defect();
    let sym = l.symmetry_defect();

    let ops = BoundaryOperators::new(h, DEFAULT_SAMPLES).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut idem = 0.0f64;
    for _ in 0..20 {
        let g: Vec<f64> = (0..ops.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        let (mut p, mut pp) = (vec![0.0; ops.len()], vec![0.0; ops.len()]);
        ops.apply_p0(&g, &mut p);
        ops.apply_p0(&p, &mut pp);
        let d = p.iter().zip(&pp).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        idem = idem.max(d / norm);
    }

    let dt = build_dt(N_BASIS);
    let mut dt_exact = true;
    for i in 0..2 * N_BASIS {
        for j in 0..2 * N_BASIS {
            let (m, mi) = ((i / 2 + 1) as f64, i / 2);
            let expected = match (i % 2, j) {
                (0, j) if j == 2 * mi + 1 => m,
                (1, j) if j == 2 * mi => -m,
                _ => 0.0,
            };
            dt_exact &= dt[(i, j)] == expected;
        }
    }
    report.line(
        5,
        "operator identities",
        comp <= 1e-6 && sym <= 1e-8 && idem <= 1e-10 && dt_exact,
        format!(
            "|H_σ̂H_σ + I| = {comp:.1e} (≤ 1e-6), L symmetry {sym:.1e} (≤ 1e-8), P₀ idempotence {idem:.1e} (≤ 1e-10), D_T exact: {dt_exact}"
        ),
    );
}

fn criterion_6(fem: &mut Fem, report: &mut Report) {
    let opts = GmresOptions::default();
    let grid = KGrid::new(6.0, 5).unwrap();

    let iso = BoundaryOperators::new(build_hilbert(&DnMatrix::identity_conductivity(N_BASIS)).unwrap(), DEFAULT_SAMPLES).unwrap();
    let t_iso = compute_scattering(&iso, grid, opts).max_abs_t();

    let ops = BoundaryOperators::new(build_hilbert(&fem.dn("test1", 0.0, 0)).unwrap(), DEFAULT_SAMPLES).unwrap();
    let full = compute_scattering(&ops, grid, opts);
    let t0 = full.t[grid.origin()];

    let mut shift = 0.0f64;
    for (i, &shift_by) in [Complex64::new(0.3, -0.7), Complex64::new(-2.0, 1.5)].iter().enumerate() {
        for j in (i..grid.len()).step_by(7) {
            let tau = tau_from_b1(full.b1_plus[j] + shift_by, full.b1_minus[j] + shift_by);
            shift = shift.max((tau - full.tau[j]).norm());
        }
    }

    let direct = compute_scattering_truncated(&ops, grid, 4.0, opts);
    let masked = full.truncated(4.0);
    let bitwise = direct.t.iter().zip(&masked.t).all(|(a, b)| a.re.to_bits() == b.re.to_bits() && a.im.to_bits() == b.im.to_bits());
    report.line(
        6,
        "scattering properties",
        t_iso <= 1e-8 && t0 == Complex64::new(0.0, 0.0) && shift <= 1e-12 && bitwise && full.max_abs_t() > 0.0,
        format!(
            "max|t| for σ = I: {t_iso:.1e} (≤ 1e-8), t(0) = {t0}, τ shift defect {shift:.1e} (≤ 1e-12), truncation bitwise consistent: {bitwise}"
        ),
    );
}

fn criterion_7(report: &mut Report) {
    let n = beltrami_oracle::DEFAULT_GRID;
    let zgrid = ReconstructionGrid::new(ZETA_MAX, 128).unwrap();
    let mut pass = true;
    let mut detail = Vec::new();

    let test1 = ConductivityField::test1();
    let map = solve_beltrami(&test1, beltrami_oracle::DEFAULT_HALF_WIDTH, n).unwrap();
    let defect = pushforward_defect(&map, &test1, 0.02);
    pass &= defect <= 0.02;
    detail.push(format!("push-forward defect {defect:.1e} (≤ 2e-2)"));

    let g = true_isotropization(&map, &test1, &zgrid);
    let ext = inclusion_extrema(&test1, &g);
    pass &= within(ext[0].0, 2.0, 0.02) && within(ext[1].0, 1.41, 0.02);
    detail.push(format!("test1 extrema {:.3}/{:.3} (2.00/1.41 ± 2%)", ext[0].0, ext[1].0));

    for name in ["test1", "test2", "test2-discontinuous"] {
        let field = ConductivityField::resolve(name).unwrap();
        let map = solve_beltrami(&field, beltrami_oracle::DEFAULT_HALF_WIDTH, n).unwrap();
        let boundary = map.deformed_boundary(512);
        let rmax = boundary.iter().map(|p| p.norm()).fold(0.0, f64::max);
        let wind = winding_number(&boundary, Complex64::new(0.0, 0.0));
        pass &= rmax < ZETA_MAX && wind == 1;
        detail.push(format!("{name} boundary max|F| {rmax:.3} (< 1.2)"));
        if name == "test2" {
            let g = true_isotropization(&map, &field, &zgrid);
            let (hi, lo) = (g.max(), g.min());
            pass &= within(hi, 3.46, 0.02) && within(lo, 0.57, 0.02);
            detail.push(format!("test2 extrema {hi:.3}/{lo:.3} (3.46/0.57 ± 2%)"));
        }
    }
    report.line(7, "oracle validation", pass, detail.join("; "));
}

fn criterion_8(fem: &mut Fem, report: &mut Report) {
    let l = fem.dn("test1", 0.0, 0);
    let coarse = reconstruct_dn(&l, 6.0, 6, 64);
    let fine = reconstruct_dn(&l, 6.0, 7, 127);
    let mut diff = 0.0f64;
    for j in 0..coarse.n_side {
        for i in 0..coarse.n_side {
            let (a, b) = (j * coarse.n_side + i, 2 * j * fine.n_side + 2 * i);
            assert!((coarse.point(a) - fine.point(b)).norm() < 1e-12);
            if coarse.mask[a] {
                diff = diff.max((coarse.values[a] - fine.values[b]).abs());
            }
        }
    }
    let rel = diff / fine.max();
    report.line(
        8,
        "discretization convergence",
        rel <= 0.02,
        format!("sup|γ(c=6, 64²) − γ(c=7, 127²)| / max γ = {rel:.2e} (≤ 2e-2)"),
    );
}

fn main() {
    // `cargo test -- --list` and filters are not meaningful for this target.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let mut report = Report { failed: 0 };
    criterion_1(&mut report);
    let mut fem = Fem {
        mesh: build_mesh(MESH_LEVEL),
        clean: HashMap::new(),
    };
    criterion_5(&mut fem, &mut report);
    criterion_6(&mut fem, &mut report);
    criterion_7(&mut report);
    criterion_2(&mut fem, &mut report);
    criterion_3(&mut fem, &mut report);
    criterion_4(&mut fem, &mut report);
    criterion_8(&mut fem, &mut report);
    println!("acceptance: {} of 8 criteria failed", report.failed);
    if report.failed > 0 {
        std::process::exit(1);
    }
}
