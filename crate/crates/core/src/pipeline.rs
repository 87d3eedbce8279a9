//! End-to-end runs: simulate → scatter → reconstruct, with every
//! intermediate written to disk and reused when its inputs are unchanged.

use std::path::{Path, PathBuf};
use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::beltrami_oracle::{self, QcMap};
use crate::boundary_ops::{build_hilbert, BoundaryOperators, DEFAULT_SAMPLES};
use crate::dbar_solver::{reconstruct, DbarWorkspace, ReconstructionGrid, ReconstructionMeta};
use crate::error::{Error, Result};
use crate::forward::{add_noise, build_mesh, simulate_voltages, DnFile, DnMatrix, DnMeta, VoltageTable};
use crate::krylov::GmresOptions;
use crate::phantoms::{ConductivityField, Shape};
use crate::scattering::{compute_scattering, KGrid, ScatteringData};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScatterConfig {
    #[serde(rename = "R")]
    pub radius: f64,
    pub c: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconConfig {
    pub zeta_max: f64,
    pub h_zeta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Builtin phantom name or path to a phantom JSON file.
    pub phantom: String,
    pub mesh_level: u32,
    #[serde(rename = "N")]
    pub n_basis: usize,
    pub noise_eta: f64,
    pub seed: u64,
    pub scattering: ScatterConfig,
    pub reconstruction: ReconConfig,
    pub output_dir: PathBuf,
    /// Threads for the k- and ζ-loops; all cores when absent.
    pub workers: Option<usize>,
    pub boundary_samples: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            phantom: "test1".into(),
            mesh_level: 8,
            n_basis: 16,
            noise_eta: 0.0,
            seed: 0,
            scattering: ScatterConfig { radius: 6.0, c: 7 },
            reconstruction: ReconConfig {
                zeta_max: 1.2,
                h_zeta: 0.0094,
            },
            output_dir: PathBuf::from("out"),
            workers: None,
            boundary_samples: DEFAULT_SAMPLES,
        }
    }
}

impl RunConfig {
    /// Reads TOML or JSON, chosen by extension (`.json` means JSON).
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let cfg: Self = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive and finite, got {v}")))
            }
        };
        positive("scattering.R", self.scattering.radius)?;
        positive("reconstruction.zeta_max", self.reconstruction.zeta_max)?;
        positive("reconstruction.h_zeta", self.reconstruction.h_zeta)?;
        if !(self.noise_eta >= 0.0 && self.noise_eta.is_finite()) {
            return Err(Error::Config(format!("noise_eta must be ≥ 0, got {}", self.noise_eta)));
        }
        if self.n_basis == 0 {
            return Err(Error::Config("N must be at least 1".into()));
        }
        if self.mesh_level > 10 {
            return Err(Error::Config(format!("mesh_level {} is too large (max 10)", self.mesh_level)));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        if (4usize << self.mesh_level) < 2 * self.n_basis + 2 {
            return Err(Error::Config(format!(
                "mesh_level {} has too few boundary nodes for N = {}",
                self.mesh_level, self.n_basis
            )));
        }
        if self.reconstruction.h_zeta > self.reconstruction.zeta_max {
            return Err(Error::Config("h_zeta must not exceed zeta_max".into()));
        }
        KGrid::new(self.scattering.radius, self.scattering.c)?;
        BoundaryOperators::new(crate::boundary_ops::HilbertMatrices::isotropic(self.n_basis), self.boundary_samples)?;
        Ok(())
    }

    pub fn field(&self) -> Result<ConductivityField> {
        ConductivityField::resolve(&self.phantom)
    }

    pub fn k_grid(&self) -> Result<KGrid> {
        KGrid::new(self.scattering.radius, self.scattering.c)
    }

    pub fn zeta_grid(&self) -> Result<ReconstructionGrid> {
        ReconstructionGrid::with_spacing(self.reconstruction.zeta_max, self.reconstruction.h_zeta)
    }
}

/// Error from a named pipeline stage.
#[derive(Debug)]
pub struct StageError {
    pub stage: &'static str,
    pub error: Error,
}

impl std::fmt::Display for StageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "stage '{}' failed: {}", self.stage, self.error)
    }
}

impl std::error::Error for StageError {}

fn stage<T>(name: &'static str, r: Result<T>) -> std::result::Result<T, StageError> {
    r.map_err(|error| StageError { stage: name, error })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub key: String,
    pub cached: bool,
    pub seconds: f64,
    pub stats: serde_json::Value,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub config: RunConfig,
    pub stages: Vec<StageRecord>,
    pub zeroed_k_points: usize,
    pub gamma_min: f64,
    pub gamma_max: f64,
}

fn hash_hex(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn read_stamp(dir: &Path) -> Option<String> {
    std::fs::read_to_string(dir.join("stamp")).ok().map(|s| s.trim().to_string())
}

fn write_stamp(dir: &Path, key: &str) -> Result<()> {
    std::fs::write(dir.join("stamp"), key)?;
    Ok(())
}

/// Clean boundary voltages, cached by phantom, mesh level and `N`.
pub fn clean_voltages(field: &ConductivityField, mesh_level: u32, n_basis: usize, cache: &Path) -> Result<(VoltageTable, bool)> {
    let desc = serde_json::to_vec(&field.to_description())?;
    let key = hash_hex(&[&desc, &mesh_level.to_le_bytes(), &(n_basis as u64).to_le_bytes()]);
    let path = cache.join(format!("voltages-{}.json", &key[..16]));
    if let Ok(text) = std::fs::read_to_string(&path) {
        if let Ok(table) = serde_json::from_str::<VoltageTable>(&text) {
            return Ok((table, true));
        }
    }
    let mesh = build_mesh(mesh_level);
    let table = simulate_voltages(&mesh, field, n_basis)?;
    std::fs::create_dir_all(cache)?;
    std::fs::write(&path, serde_json::to_vec(&table)?)?;
    Ok((table, false))
}

/// D-N matrix from FEM data with optional noise.
pub fn simulate(field: &ConductivityField, mesh_level: u32, n_basis: usize, eta: f64, seed: u64, cache: &Path) -> Result<(DnFile, bool)> {
    let (clean, cached) = clean_voltages(field, mesh_level, n_basis, cache)?;
    let table = add_noise(&clean, eta, seed);
    let l = DnMatrix::from_voltages(&table)?;
    let meta = DnMeta {
        phantom: field.name.clone(),
        mesh_level,
        noise_eta: eta,
        seed,
    };
    Ok((DnFile::new(&l, meta), cached))
}

/// Scattering data for a D-N matrix.
pub fn scatter(l: &DnMatrix, grid: KGrid, samples: usize) -> Result<ScatteringData> {
    let ops = BoundaryOperators::new(build_hilbert(l)?, samples)?;
    Ok(compute_scattering(&ops, grid, GmresOptions::default()))
}

pub fn reconstruct_from(data: &ScatteringData, grid: &ReconstructionGrid) -> ReconstructionGrid {
    reconstruct(&DbarWorkspace::new(data), grid)
}

fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

pub fn run_pipeline(cfg: &RunConfig) -> std::result::Result<Manifest, StageError> {
    stage("config", cfg.validate())?;
    stage("run", with_workers(cfg.workers, || run_stages(cfg)))?
}

fn run_stages(cfg: &RunConfig) -> std::result::Result<Manifest, StageError> {
    let out = &cfg.output_dir;
    stage("config", std::fs::create_dir_all(out).map_err(Error::from))?;
    let field = stage("config", cfg.field())?;
    let mut stages = Vec::new();

    // Step 0: forward simulation
    let t = Instant::now();
    let (dn, cached) = stage(
        "simulate",
        simulate(&field, cfg.mesh_level, cfg.n_basis, cfg.noise_eta, cfg.seed, &out.join("cache")),
    )?;
    let dn_path = out.join("dn.json");
    stage("simulate", dn.save(&dn_path))?;
    let l = stage("simulate", dn.matrix())?;
    let dn_key = hash_hex(&[&stage("simulate", std::fs::read(&dn_path).map_err(Error::from))?]);
    stages.push(StageRecord {
        name: "simulate".into(),
        key: dn_key.clone(),
        cached,
        seconds: t.elapsed().as_secs_f64(),
        stats: serde_json::json!({
            "symmetry_defect": l.symmetry_defect(),
            "clean_voltages_cached": cached,
        }),
    });

    // Steps 1-3: traces, b̃₁±, t(k)
    let t = Instant::now();
    let grid = stage("scatter", cfg.k_grid())?;
    let scat_dir = out.join("scatter");
    let scat_key = hash_hex(&[
        dn_key.as_bytes(),
        &cfg.scattering.radius.to_le_bytes(),
        &cfg.scattering.c.to_le_bytes(),
        &(cfg.boundary_samples as u64).to_le_bytes(),
    ]);
    let cached = read_stamp(&scat_dir).as_deref() == Some(scat_key.as_str());
    let data = if cached {
        stage("scatter", ScatteringData::load(&scat_dir))?
    } else {
        let d = stage("scatter", scatter(&l, grid, cfg.boundary_samples))?;
        stage("scatter", d.save(&scat_dir))?;
        stage("scatter", write_stamp(&scat_dir, &scat_key))?;
        d
    };
    stages.push(StageRecord {
        name: "scatter".into(),
        key: scat_key.clone(),
        cached,
        seconds: t.elapsed().as_secs_f64(),
        stats: serde_json::json!({
            "zeroed_points": data.zeroed.len(),
            "max_gmres_residual": data.max_residual,
            "max_abs_t": data.max_abs_t(),
        }),
    });

    // Step 4: D-bar solve
    let t = Instant::now();
    let zgrid = stage("reconstruct", cfg.zeta_grid())?;
    let rec_dir = out.join("reconstruct");
    let rec_key = hash_hex(&[
        scat_key.as_bytes(),
        &cfg.reconstruction.zeta_max.to_le_bytes(),
        &(zgrid.n_side as u64).to_le_bytes(),
    ]);
    let cached = read_stamp(&rec_dir).as_deref() == Some(rec_key.as_str());
    let rec = if cached {
        stage("reconstruct", ReconstructionGrid::load(&rec_dir))?
    } else {
        let r = reconstruct_from(&data, &zgrid);
        let meta = ReconstructionMeta {
            r: Some(cfg.scattering.radius),
            c: Some(cfg.scattering.c),
        };
        stage("reconstruct", r.save(&rec_dir, &meta))?;
        stage("reconstruct", write_stamp(&rec_dir, &rec_key))?;
        r
    };
    if rec.masked_values().any(|v| !(v > 0.0 && v.is_finite())) {
        return Err(StageError {
            stage: "reconstruct",
            error: Error::SolverFailure("reconstruction contains non-positive values".into()),
        });
    }
    stages.push(StageRecord {
        name: "reconstruct".into(),
        key: rec_key,
        cached,
        seconds: t.elapsed().as_secs_f64(),
        stats: serde_json::json!({
            "flagged_points": rec.flagged,
            "max_imag_ratio": rec.max_imag_ratio,
        }),
    });

    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").into(),
        config: cfg.clone(),
        stages,
        zeroed_k_points: data.zeroed.len(),
        gamma_min: rec.min(),
        gamma_max: rec.max(),
    };
    let text = stage("manifest", serde_json::to_string_pretty(&manifest).map_err(Error::from))?;
    stage("manifest", std::fs::write(out.join("manifest.json"), text).map_err(Error::from))?;
    Ok(manifest)
}

/// Output of the oracle stage.
pub struct OracleOutput {
    pub map: QcMap,
    pub gamma: ReconstructionGrid,
    pub boundary: Vec<Complex64>,
}

pub fn run_oracle(field: &ConductivityField, zgrid: &ReconstructionGrid, n: usize) -> Result<OracleOutput> {
    let map = beltrami_oracle::solve_beltrami(field, beltrami_oracle::DEFAULT_HALF_WIDTH, n)?;
    let gamma = beltrami_oracle::true_isotropization(&map, field, zgrid);
    let boundary = map.deformed_boundary(512);
    Ok(OracleOutput { map, gamma, boundary })
}

pub fn save_oracle(out: &OracleOutput, dir: &Path) -> Result<()> {
    out.gamma.save(dir, &ReconstructionMeta::default())?;
    beltrami_oracle::write_polyline_csv(dir.join("boundary.csv"), &out.boundary)?;
    let info = serde_json::json!({
        "A": [out.map.a.re, out.map.a.im],
        "iterations": out.map.iterations,
        "grid": out.map.n,
        "half_width": out.map.half_width,
        "valid_radius": out.map.valid_radius,
        "max_boundary_radius": out.boundary.iter().map(|p| p.norm()).fold(0.0, f64::max),
    });
    std::fs::write(dir.join("oracle.json"), serde_json::to_string_pretty(&info)?)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionExtrema {
    pub name: String,
    pub center: [f64; 2],
    pub radius: f64,
    pub recon_max: f64,
    pub recon_min: f64,
    pub oracle_max: f64,
    pub oracle_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareMetrics {
    pub points: usize,
    pub sup_abs: f64,
    pub sup_rel: f64,
    pub l2_rel: f64,
    pub regions: Vec<RegionExtrema>,
}

/// Search radius around an inclusion, allowing for the deformation.
pub fn region_radius(shape: &Shape) -> f64 {
    let size = match shape {
        Shape::Disc { radius } => *radius,
        Shape::Ellipse { semi_axes, .. } => semi_axes[0].max(semi_axes[1]),
    };
    size + 0.1
}

pub fn compare(recon: &ReconstructionGrid, oracle: &ReconstructionGrid, field: Option<&ConductivityField>) -> Result<CompareMetrics> {
    if recon.n_side != oracle.n_side || (recon.zeta_max - oracle.zeta_max).abs() > 1e-12 {
        return Err(Error::GridMismatch(format!(
            "{}² points on |ζ| ≤ {} vs {}² on |ζ| ≤ {}",
            recon.n_side, recon.zeta_max, oracle.n_side, oracle.zeta_max
        )));
    }
    let (mut sup_abs, mut sup_ref, mut num, mut den, mut points) = (0.0f64, 0.0f64, 0.0, 0.0, 0);
    for i in 0..recon.values.len() {
        if recon.mask[i] && oracle.mask[i] {
            let (a, b) = (recon.values[i], oracle.values[i]);
            sup_abs = sup_abs.max((a - b).abs());
            sup_ref = sup_ref.max(b.abs());
            num += (a - b).powi(2);
            den += b * b;
            points += 1;
        }
    }
    let regions = field
        .map(|f| {
            f.inclusions
                .iter()
                .enumerate()
                .map(|(k, inc)| {
                    let c = Complex64::new(inc.center[0], inc.center[1]);
                    let r = region_radius(&inc.shape);
                    RegionExtrema {
                        name: format!("inclusion{k}"),
                        center: inc.center,
                        radius: r,
                        recon_max: recon.max_near(c, r),
                        recon_min: recon.min_near(c, r),
                        oracle_max: oracle.max_near(c, r),
                        oracle_min: oracle.min_near(c, r),
                    }
                })
                .collect()
        })
        .unwrap_or_default();
    Ok(CompareMetrics {
        points,
        sup_abs,
        sup_rel: if sup_ref > 0.0 { sup_abs / sup_ref } else { 0.0 },
        l2_rel: if den > 0.0 { (num / den).sqrt() } else { 0.0 },
        regions,
    })
}
