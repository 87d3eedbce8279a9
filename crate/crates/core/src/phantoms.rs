//! Anisotropic conductivity phantoms.
//!
//! A phantom is a list of disc or ellipse inclusions, each carrying a
//! constant symmetric positive-definite tensor, embedded in an identity
//! background. Optional smoothing blends each inclusion tensor into the
//! background across a band of width `rho` centred on the interface, using a
//! C² quintic step, so the smoothed tensor is always a convex combination of
//! SPD matrices.
//!
//! Fields are evaluated lazily at arbitrary points; nothing is rasterized.

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inclusions must stay this far inside the unit circle (including the
/// smoothing band) so that the field is the identity near the boundary.
pub const BOUNDARY_CLEARANCE: f64 = 0.05;

/// Default smoothing band used by the shipped C² phantoms.
pub const DEFAULT_MOLLIFIER_WIDTH: f64 = 0.05;

/// Symmetric 2×2 tensor `[[xx, xy], [xy, yy]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymTensor {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl SymTensor {
    pub const IDENTITY: SymTensor = SymTensor { xx: 1.0, xy: 0.0, yy: 1.0 };

    pub const fn new(xx: f64, xy: f64, yy: f64) -> Self {
        Self { xx, xy, yy }
    }

    pub const fn diag(xx: f64, yy: f64) -> Self {
        Self { xx, xy: 0.0, yy }
    }

    pub fn scaled(s: f64) -> Self {
        Self::diag(s, s)
    }

    pub fn det(&self) -> f64 {
        self.xx * self.yy - self.xy * self.xy
    }

    pub fn trace(&self) -> f64 {
        self.xx + self.yy
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> (f64, f64) {
        let mean = 0.5 * self.trace();
        let half_gap = (0.25 * (self.xx - self.yy).powi(2) + self.xy * self.xy).sqrt();
        (mean - half_gap, mean + half_gap)
    }

    pub fn is_spd(&self) -> bool {
        self.xx > 0.0 && self.det() > 0.0
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::new(s * self.xx, s * self.xy, s * self.yy)
    }

    pub fn lerp(&self, other: &SymTensor, w: f64) -> Self {
        Self::new(
            self.xx + w * (other.xx - self.xx),
            self.xy + w * (other.xy - self.xy),
            self.yy + w * (other.yy - self.yy),
        )
    }

    pub fn as_array(&self) -> [[f64; 2]; 2] {
        [[self.xx, self.xy], [self.xy, self.yy]]
    }

    pub fn max_abs_diff(&self, other: &SymTensor) -> f64 {
        (self.xx - other.xx)
            .abs()
            .max((self.xy - other.xy).abs())
            .max((self.yy - other.yy).abs())
    }
}

impl Serialize for SymTensor {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.as_array().serialize(s)
    }
}

impl<'de> Deserialize<'de> for SymTensor {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let m = <[[f64; 2]; 2]>::deserialize(d)?;
        if (m[0][1] - m[1][0]).abs() > 1e-12 * (1.0 + m[0][1].abs()) {
            return Err(serde::de::Error::custom("tensor must be symmetric"));
        }
        Ok(SymTensor::new(m[0][0], m[0][1], m[1][1]))
    }
}

/// Beltrami-type coefficients of a conductivity tensor at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeltramiCoefficients {
    /// `(σ11 − σ22 + 2iσ12) / (σ11 + σ22 + 2√det σ)`
    pub mu_tilde: Complex64,
    /// `(σ22 − σ11 − 2iσ12) / (1 + tr σ + det σ)`
    pub mu1: Complex64,
    /// `(1 − det σ) / (1 + tr σ + det σ)`
    pub mu2: f64,
}

impl BeltramiCoefficients {
    pub fn of(s: &SymTensor) -> Self {
        let det = s.det();
        let mu_tilde = Complex64::new(s.xx - s.yy, 2.0 * s.xy) / (s.trace() + 2.0 * det.sqrt());
        let denom = 1.0 + s.trace() + det;
        let mu1 = Complex64::new(s.yy - s.xx, -2.0 * s.xy) / denom;
        let mu2 = (1.0 - det) / denom;
        Self { mu_tilde, mu1, mu2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Disc { radius: f64 },
    Ellipse { semi_axes: [f64; 2], rotation: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Inclusion {
    pub center: [f64; 2],
    pub shape: Shape,
    pub tensor: SymTensor,
}

impl Inclusion {
    pub fn disc(center: [f64; 2], radius: f64, tensor: SymTensor) -> Self {
        Self { center, shape: Shape::Disc { radius }, tensor }
    }

    pub fn ellipse(center: [f64; 2], semi_axes: [f64; 2], rotation: f64, tensor: SymTensor) -> Self {
        Self {
            center,
            shape: Shape::Ellipse { semi_axes, rotation },
            tensor,
        }
    }

    /// Approximate signed distance to the interface, negative inside.
    ///
    /// Exact for discs; for ellipses this is the first-order distance
    /// `(q − 1)/|∇q|` of the normalized radius `q`, exact on the interface.
    pub fn signed_distance(&self, z: Complex64) -> f64 {
        let dx = z.re - self.center[0];
        let dy = z.im - self.center[1];
        match self.shape {
            Shape::Disc { radius } => dx.hypot(dy) - radius,
            Shape::Ellipse { semi_axes: [a, b], rotation } => {
                let (s, c) = rotation.sin_cos();
                let px = c * dx + s * dy;
                let py = -s * dx + c * dy;
                let q = ((px / a).powi(2) + (py / b).powi(2)).sqrt();
                if q < 1e-12 {
                    return -a.min(b);
                }
                let grad = ((px / (a * a)).powi(2) + (py / (b * b)).powi(2)).sqrt() / q;
                (q - 1.0) / grad
            }
        }
    }

    /// Largest distance from the origin reached by the inclusion.
    pub fn outer_extent(&self) -> f64 {
        let r = match self.shape {
            Shape::Disc { radius } => radius,
            Shape::Ellipse { semi_axes: [a, b], .. } => a.max(b),
        };
        self.center[0].hypot(self.center[1]) + r
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Smoothing {
    None,
    /// Width of the C² blending band centred on each interface.
    Mollifier(f64),
}

/// Quintic C² step: 0 at `t ≤ 0`, 1 at `t ≥ 1`.
fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * t * (t * (6.0 * t - 15.0) + 10.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConductivityField {
    pub name: String,
    pub inclusions: Vec<Inclusion>,
    pub smoothing: Smoothing,
}

impl ConductivityField {
    pub fn identity() -> Self {
        Self {
            name: "identity".into(),
            inclusions: Vec::new(),
            smoothing: Smoothing::None,
        }
    }

    pub fn new(name: impl Into<String>, inclusions: Vec<Inclusion>, smoothing: Smoothing) -> Result<Self> {
        let field = Self {
            name: name.into(),
            inclusions,
            smoothing,
        };
        field.validate()?;
        Ok(field)
    }

    /// Constant tensor `tensor` on `|z| < radius` with a sharp interface.
    pub fn centered_disc(name: impl Into<String>, radius: f64, tensor: SymTensor) -> Result<Self> {
        Self::new(name, vec![Inclusion::disc([0.0, 0.0], radius, tensor)], Smoothing::None)
    }

    /// Two discs of radius 0.35 centred at (∓0.5, 0): `diag(1,4)` on the left
    /// and `diag(2,1)` on the right, C² smoothed.
    pub fn test1() -> Self {
        Self {
            name: "test1".into(),
            inclusions: vec![
                Inclusion::disc([-0.5, 0.0], 0.35, SymTensor::diag(1.0, 4.0)),
                Inclusion::disc([0.5, 0.0], 0.35, SymTensor::diag(2.0, 1.0)),
            ],
            smoothing: Smoothing::Mollifier(DEFAULT_MOLLIFIER_WIDTH),
        }
    }

    /// Heart and lungs: two vertical ellipses with `diag(0.4, 0.8)` and a disc
    /// below the midline with `diag(6, 2)`. Positions and sizes are
    /// approximate; load a phantom file to vary them.
    pub fn test2(smooth: bool) -> Self {
        let lung = SymTensor::diag(0.4, 0.8);
        let heart = SymTensor::diag(6.0, 2.0);
        Self {
            name: if smooth { "test2" } else { "test2-discontinuous" }.into(),
            inclusions: vec![
                Inclusion::ellipse([-0.5, 0.1], [0.2, 0.4], 0.0, lung),
                Inclusion::ellipse([0.5, 0.1], [0.2, 0.4], 0.0, lung),
                Inclusion::disc([0.0, -0.35], 0.2, heart),
            ],
            smoothing: if smooth {
                Smoothing::Mollifier(DEFAULT_MOLLIFIER_WIDTH)
            } else {
                Smoothing::None
            },
        }
    }

    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "identity" | "homogeneous" => Some(Self::identity()),
            "test1" => Some(Self::test1()),
            "test2" => Some(Self::test2(true)),
            "test2-discontinuous" => Some(Self::test2(false)),
            _ => None,
        }
    }

    /// Builtin name or path to a phantom JSON file.
    pub fn resolve(name_or_path: &str) -> Result<Self> {
        match Self::builtin(name_or_path) {
            Some(f) => Ok(f),
            None => Self::load(name_or_path),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let band = match self.smoothing {
            Smoothing::None => 0.0,
            Smoothing::Mollifier(rho) if rho > 0.0 && rho.is_finite() => 0.5 * rho,
            Smoothing::Mollifier(rho) => {
                return Err(Error::InvalidField(format!("mollifier width must be positive, got {rho}")))
            }
        };
        for (i, inc) in self.inclusions.iter().enumerate() {
            if !inc.tensor.is_spd() {
                return Err(Error::InvalidField(format!("inclusion {i}: tensor is not positive definite")));
            }
            let sizes_ok = match inc.shape {
                Shape::Disc { radius } => radius > 0.0,
                Shape::Ellipse { semi_axes: [a, b], .. } => a > 0.0 && b > 0.0,
            };
            if !sizes_ok {
                return Err(Error::InvalidField(format!("inclusion {i}: non-positive size")));
            }
            if inc.outer_extent() + band > 1.0 - BOUNDARY_CLEARANCE {
                return Err(Error::InvalidField(format!(
                    "inclusion {i} reaches |z| = {:.3}; the field must be the identity for |z| ≥ {}",
                    inc.outer_extent() + band,
                    1.0 - BOUNDARY_CLEARANCE
                )));
            }
        }
        Ok(())
    }

    fn weight(&self, d: f64) -> f64 {
        match self.smoothing {
            Smoothing::None => {
                if d <= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Smoothing::Mollifier(rho) => 1.0 - smoothstep(d / rho + 0.5),
        }
    }

    /// Conductivity tensor at `z`; the identity for `|z| ≥ 1`.
    pub fn sigma(&self, z: Complex64) -> SymTensor {
        if z.norm_sqr() >= 1.0 || self.inclusions.is_empty() {
            return SymTensor::IDENTITY;
        }
        let mut total = 0.0;
        let mut acc = SymTensor::new(0.0, 0.0, 0.0);
        for inc in &self.inclusions {
            let w = self.weight(inc.signed_distance(z));
            if w > 0.0 {
                total += w;
                acc.xx += w * inc.tensor.xx;
                acc.xy += w * inc.tensor.xy;
                acc.yy += w * inc.tensor.yy;
            }
        }
        if total == 0.0 {
            SymTensor::IDENTITY
        } else if total <= 1.0 {
            let bg = 1.0 - total;
            SymTensor::new(acc.xx + bg, acc.xy, acc.yy + bg)
        } else {
            // overlapping bands: renormalize to stay a convex combination
            acc.scale(1.0 / total)
        }
    }

    /// `σ / det σ`.
    pub fn sigma_hat(&self, z: Complex64) -> Result<SymTensor> {
        sigma_hat_of(&self.sigma(z))
    }

    pub fn mu_coefficients(&self, z: Complex64) -> Result<BeltramiCoefficients> {
        let s = self.sigma(z);
        if !s.is_spd() {
            return Err(Error::InvalidField(format!("tensor at {z} is not positive definite")));
        }
        Ok(BeltramiCoefficients::of(&s))
    }

    pub fn sqrt_det(&self, z: Complex64) -> f64 {
        self.sigma(z).det().sqrt()
    }

    /// Distance from `z` to the nearest region where the field varies
    /// (smoothing band or sharp interface). Zero inside a band.
    pub fn distance_to_transition(&self, z: Complex64) -> f64 {
        let half_band = match self.smoothing {
            Smoothing::None => 0.0,
            Smoothing::Mollifier(rho) => 0.5 * rho,
        };
        self.inclusions
            .iter()
            .map(|inc| (inc.signed_distance(z).abs() - half_band).max(0.0))
            .fold(f64::INFINITY, f64::min)
    }

    /// Radius of the smallest origin-centred disc containing the support of
    /// `σ − I`.
    pub fn support_radius(&self) -> f64 {
        let band = match self.smoothing {
            Smoothing::None => 0.0,
            Smoothing::Mollifier(rho) => 0.5 * rho,
        };
        self.inclusions
            .iter()
            .map(|inc| inc.outer_extent() + band)
            .fold(0.0, f64::max)
    }

    /// Bounds `C0` with `C0⁻¹ I ≤ σ ≤ C0 I` over all inclusion tensors.
    pub fn ellipticity_bound(&self) -> f64 {
        self.inclusions.iter().fold(1.0, |c0, inc| {
            let (lo, hi) = inc.tensor.eigenvalues();
            c0.max(hi).max(1.0 / lo)
        })
    }

    /// The same geometry with every tensor replaced by `σ / det σ`.
    ///
    /// Inside mollifier bands this blends the hatted tensors, which is not
    /// the pointwise `σ / det σ` of the blended field; the two agree exactly
    /// only without smoothing.
    pub fn hat_field(&self) -> Self {
        Self {
            name: format!("{}-hat", self.name),
            inclusions: self
                .inclusions
                .iter()
                .map(|inc| Inclusion {
                    tensor: inc.tensor.scale(1.0 / inc.tensor.det()),
                    ..inc.clone()
                })
                .collect(),
            smoothing: self.smoothing,
        }
    }

    pub fn to_description(&self) -> PhantomDescription {
        PhantomDescription {
            name: self.name.clone(),
            smoothing_rho: match self.smoothing {
                Smoothing::None => None,
                Smoothing::Mollifier(rho) => Some(rho),
            },
            inclusions: self
                .inclusions
                .iter()
                .map(|inc| {
                    let (shape, semi_axes, rotation_rad) = match inc.shape {
                        Shape::Disc { radius } => ("disc".to_string(), [radius, radius], 0.0),
                        Shape::Ellipse { semi_axes, rotation } => ("ellipse".to_string(), semi_axes, rotation),
                    };
                    InclusionDescription {
                        shape,
                        center: inc.center,
                        semi_axes,
                        rotation_rad,
                        tensor: inc.tensor,
                    }
                })
                .collect(),
        }
    }

    pub fn from_description(desc: &PhantomDescription) -> Result<Self> {
        let smoothing = match desc.smoothing_rho {
            None => Smoothing::None,
            Some(rho) if rho == 0.0 => Smoothing::None,
            Some(rho) => Smoothing::Mollifier(rho),
        };
        let inclusions = desc
            .inclusions
            .iter()
            .map(|d| {
                let shape = match d.shape.as_str() {
                    "disc" | "circle" => {
                        if (d.semi_axes[0] - d.semi_axes[1]).abs() > 1e-12 {
                            return Err(Error::InvalidField("disc needs equal semi-axes".into()));
                        }
                        Shape::Disc { radius: d.semi_axes[0] }
                    }
                    "ellipse" => Shape::Ellipse {
                        semi_axes: d.semi_axes,
                        rotation: d.rotation_rad,
                    },
                    other => return Err(Error::InvalidField(format!("unknown shape '{other}'"))),
                };
                Ok(Inclusion {
                    center: d.center,
                    shape,
                    tensor: d.tensor,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(desc.name.clone(), inclusions, smoothing)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let desc: PhantomDescription = serde_json::from_str(&text)?;
        Self::from_description(&desc)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(&self.to_description())?)?;
        Ok(())
    }
}

pub fn sigma_hat_of(s: &SymTensor) -> Result<SymTensor> {
    let det = s.det();
    if !(det > 0.0) {
        return Err(Error::InvalidField(format!("non-positive determinant {det}")));
    }
    Ok(s.scale(1.0 / det))
}

/// On-disk phantom description.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PhantomDescription {
    pub name: String,
    #[serde(default)]
    pub smoothing_rho: Option<f64>,
    pub inclusions: Vec<InclusionDescription>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct InclusionDescription {
    pub shape: String,
    pub center: [f64; 2],
    pub semi_axes: [f64; 2],
    #[serde(default)]
    pub rotation_rad: f64,
    pub tensor: SymTensor,
}
