use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dbar_core::dbar_solver::{ReconstructionGrid, ReconstructionMeta};
use dbar_core::forward::DnFile;
use dbar_core::phantoms::ConductivityField;
use dbar_core::pipeline::{self, RunConfig};
use dbar_core::scattering::{KGrid, ScatteringData};
use dbar_core::{beltrami_oracle, Error};

#[derive(Parser)]
#[command(name = "dbar", version, about = "D-bar reconstruction of the isotropization of anisotropic conductivities")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// FEM simulation of the Neumann-to-Dirichlet data, written as a D-N matrix.
    Simulate {
        #[arg(long)]
        phantom: String,
        #[arg(long, default_value_t = 8)]
        mesh_level: u32,
        #[arg(long = "n-basis", short = 'N', default_value_t = 16)]
        n_basis: usize,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Directory for cached clean voltages.
        #[arg(long, default_value = ".dbar-cache")]
        cache: PathBuf,
    },
    /// CGO traces and scattering transform on the k-grid.
    Scatter {
        #[arg(long)]
        dn: PathBuf,
        #[arg(long)]
        radius: f64,
        #[arg(long, default_value_t = 7)]
        kexp: u32,
        #[arg(long, default_value_t = 256)]
        samples: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// D-bar solve on the ζ-grid.
    Reconstruct {
        #[arg(long)]
        scat: PathBuf,
        #[command(flatten)]
        zeta: ZetaArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// True isotropization from the Beltrami equation (test reference).
    Oracle {
        #[arg(long)]
        phantom: String,
        #[command(flatten)]
        zeta: ZetaArgs,
        /// Nodes per side of the Beltrami grid.
        #[arg(long, default_value_t = beltrami_oracle::DEFAULT_GRID)]
        grid: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Error metrics between a reconstruction and a reference grid.
    Compare {
        #[arg(long)]
        recon: PathBuf,
        #[arg(long)]
        oracle: PathBuf,
        /// Phantom used to locate inclusions for per-inclusion extrema.
        #[arg(long)]
        phantom: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// simulate → scatter → reconstruct with cached intermediates.
    Run(RunArgs),
}

#[derive(Args)]
struct ZetaArgs {
    #[arg(long, default_value_t = 1.2)]
    zeta_max: f64,
    #[arg(long, default_value_t = 0.0094)]
    h_zeta: f64,
}

#[derive(Args)]
struct RunArgs {
    /// TOML or JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    phantom: Option<String>,
    #[arg(long)]
    mesh_level: Option<u32>,
    #[arg(long = "n-basis", short = 'N')]
    n_basis: Option<usize>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long)]
    kexp: Option<u32>,
    #[arg(long)]
    zeta_max: Option<f64>,
    #[arg(long)]
    h_zeta: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn config(&self, workers: Option<usize>) -> dbar_core::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p).map_err(|e| match e {
                Error::Io(io) => Error::Config(format!("{}: {io}", p.display())),
                e => e,
            })?,
            None => RunConfig::default(),
        };
        if let Some(v) = &self.phantom {
            cfg.phantom = v.clone();
        }
        if let Some(v) = self.mesh_level {
            cfg.mesh_level = v;
        }
        if let Some(v) = self.n_basis {
            cfg.n_basis = v;
        }
        if let Some(v) = self.noise {
            cfg.noise_eta = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.radius {
            cfg.scattering.radius = v;
        }
        if let Some(v) = self.kexp {
            cfg.scattering.c = v;
        }
        if let Some(v) = self.zeta_max {
            cfg.reconstruction.zeta_max = v;
        }
        if let Some(v) = self.h_zeta {
            cfg.reconstruction.h_zeta = v;
        }
        if let Some(v) = &self.out {
            cfg.output_dir = v.clone();
        }
        if workers.is_some() {
            cfg.workers = workers;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::SolverFailure(_) | Error::IllConditioned { .. } | Error::CgoNotConverged { .. } | Error::NotConverged { .. } => 3,
        _ => 2,
    }
}

fn print_json(v: &impl serde::Serialize) -> dbar_core::Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn execute(command: Command, workers: Option<usize>) -> dbar_core::Result<()> {
    match command {
        Command::Simulate {
            phantom,
            mesh_level,
            n_basis,
            noise,
            seed,
            out,
            cache,
        } => {
            let cfg = RunConfig {
                phantom,
                mesh_level,
                n_basis,
                noise_eta: noise,
                seed,
                ..Default::default()
            };
            cfg.validate()?;
            let (dn, cached) = pipeline::simulate(&cfg.field()?, mesh_level, n_basis, noise, seed, &cache)?;
            dn.save(&out)?;
            log::info!("wrote {} (clean voltages cached: {cached})", out.display());
        }
        Command::Scatter {
            dn,
            radius,
            kexp,
            samples,
            out,
        } => {
            let grid = KGrid::new(radius, kexp)?;
            let l = DnFile::load(&dn)?.matrix()?;
            let data = pipeline::scatter(&l, grid, samples)?;
            data.save(&out)?;
            print_json(&serde_json::json!({
                "points": grid.len(),
                "zeroed_points": data.zeroed.len(),
                "max_gmres_residual": data.max_residual,
                "max_abs_t": data.max_abs_t(),
            }))?;
        }
        Command::Reconstruct { scat, zeta, out } => {
            let zgrid = ReconstructionGrid::with_spacing(zeta.zeta_max, zeta.h_zeta)?;
            let data = ScatteringData::load(&scat)?;
            let rec = pipeline::reconstruct_from(&data, &zgrid);
            let meta = ReconstructionMeta {
                r: Some(data.grid.radius),
                c: Some(data.grid.c),
            };
            rec.save(&out, &meta)?;
            print_json(&serde_json::json!({
                "min": rec.min(),
                "max": rec.max(),
                "flagged_points": rec.flagged,
            }))?;
        }
        Command::Oracle {
            phantom,
            zeta,
            grid,
            out,
        } => {
            let field = ConductivityField::resolve(&phantom)?;
            let zgrid = ReconstructionGrid::with_spacing(zeta.zeta_max, zeta.h_zeta)?;
            let o = pipeline::run_oracle(&field, &zgrid, grid)?;
            pipeline::save_oracle(&o, &out)?;
            print_json(&serde_json::json!({
                "min": o.gamma.min(),
                "max": o.gamma.max(),
                "A": [o.map.a.re, o.map.a.im],
            }))?;
        }
        Command::Compare {
            recon,
            oracle,
            phantom,
            out,
        } => {
            let field = phantom.as_deref().map(ConductivityField::resolve).transpose()?;
            let m = pipeline::compare(
                &ReconstructionGrid::load(&recon)?,
                &ReconstructionGrid::load(&oracle)?,
                field.as_ref(),
            )?;
            if let Some(p) = out {
                std::fs::write(p, serde_json::to_string_pretty(&m)?)?;
            }
            print_json(&m)?;
        }
        Command::Run(args) => {
            let cfg = args.config(workers)?;
            let manifest = pipeline::run_pipeline(&cfg).map_err(|e| {
                eprintln!("error in stage '{}'", e.stage);
                e.error
            })?;
            for s in &manifest.stages {
                log::info!("{}: {:.2} s{}", s.name, s.seconds, if s.cached { " (cached)" } else { "" });
            }
            print_json(&serde_json::json!({
                "output_dir": cfg.output_dir,
                "gamma_min": manifest.gamma_min,
                "gamma_max": manifest.gamma_max,
                "zeroed_k_points": manifest.zeroed_k_points,
            }))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let workers = cli.workers;
    let result = match workers {
        Some(0) => Err(Error::Config("--workers must be at least 1".into())),
        Some(n) => rayon_pool(n).and_then(|pool| pool.install(|| execute(cli.command, workers))),
        None => execute(cli.command, workers),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn rayon_pool(n: usize) -> dbar_core::Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}
