//! Boundary integral equations for the traces of the CGO solutions `M±`.
//!
//! For each `k` the trace coefficients solve
//! `(I − P^k − P₀) M̂ = −F̃(1)`, with `P^k` built from `H_σ` for `M⁺` and
//! from `H_σ̂` for `M⁻`.

use std::io::Write;
use std::path::Path;

use num_complex::Complex64;

use crate::boundary_ops::{BoundaryOperators, Branch, KPhase, PkScratch};
use crate::error::{Error, Result};
use crate::krylov::{gmres, GmresOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn branch(self) -> Branch {
        match self {
            Sign::Plus => Branch::Sigma,
            Sign::Minus => Branch::SigmaHat,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TraceHalf {
    pub coefficients: Vec<f64>,
    pub values: Vec<Complex64>,
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub struct CgoTrace {
    pub k: Complex64,
    pub plus_values: Vec<Complex64>,
    pub minus_values: Vec<Complex64>,
    pub gmres_residual: f64,
}

/// Stacked coefficients of the constant function 1.
pub fn constant_one(ops: &BoundaryOperators) -> Vec<f64> {
    let mut v = vec![0.0; ops.len()];
    v[0] = (2.0 * std::f64::consts::PI).sqrt();
    v
}

/// `v − P^k v − P₀ v`.
pub fn apply_bie(
    ops: &BoundaryOperators,
    branch: Branch,
    phase: &KPhase,
    v: &[f64],
    out: &mut [f64],
    scratch: &mut PkScratch,
    tmp: &mut [f64],
) {
    ops.apply_pk(branch, phase, v, out, scratch);
    ops.apply_p0(v, tmp);
    for ((o, vi), t) in out.iter_mut().zip(v).zip(tmp.iter()) {
        *o = vi - *o - t;
    }
}

pub fn solve_cgo_trace(ops: &BoundaryOperators, k: Complex64, sign: Sign, opts: GmresOptions) -> Result<TraceHalf> {
    let phase = ops.phase(k);
    let mut scratch = ops.scratch();
    let mut tmp = vec![0.0; ops.len()];
    let one = constant_one(ops);
    let rhs: Vec<f64> = one.iter().map(|v| -v).collect();
    let branch = sign.branch();
    let out = gmres(
        |v, o| apply_bie(ops, branch, &phase, v, o, &mut scratch, &mut tmp),
        &rhs,
        one,
        opts,
    );
    if !out.converged {
        return Err(Error::CgoNotConverged {
            k,
            residual: out.residual,
        });
    }
    let mut values = vec![Complex64::new(0.0, 0.0); ops.basis().samples()];
    ops.basis().synthesize_into(&out.x, &mut values);
    Ok(TraceHalf {
        coefficients: out.x,
        values,
        residual: out.residual,
        iterations: out.iterations,
    })
}

pub fn solve_cgo_pair(ops: &BoundaryOperators, k: Complex64, opts: GmresOptions) -> Result<CgoTrace> {
    let plus = solve_cgo_trace(ops, k, Sign::Plus, opts)?;
    let minus = solve_cgo_trace(ops, k, Sign::Minus, opts)?;
    Ok(CgoTrace {
        k,
        gmres_residual: plus.residual.max(minus.residual),
        plus_values: plus.values,
        minus_values: minus.values,
    })
}

/// Debug dump: rows `k1,k2,branch,theta_index,re,im`.
pub fn write_traces_csv(path: impl AsRef<Path>, traces: &[CgoTrace]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "k1,k2,branch,theta_index,re,im")?;
    for t in traces {
        for (name, vals) in [("plus", &t.plus_values), ("minus", &t.minus_values)] {
            for (j, m) in vals.iter().enumerate() {
                writeln!(w, "{},{},{name},{j},{:e},{:e}", t.k.re, t.k.im, m.re, m.im)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
