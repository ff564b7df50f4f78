//! Analytic kernels and Gram-matrix assembly.

mod recursion;
mod relu;

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arch::{embed_circle, ArchKind, ArchitectureSpec};
use crate::error::{Error, Result};
use crate::linalg;

pub use recursion::{gp_layers, gp_layers_mlp, gp_layers_resnet, ntk, ntk_mlp, ntk_resnet};
pub use relu::{t_mc, t_relu, tdot_relu, Cov2, Expectation, McEstimate, MIN_MC_SAMPLES};

/// Default Gaussian-kernel exponent: `exp(-||x - y||^2 / 2)`.
pub const DEFAULT_GAMMA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelKind {
    GpMlp,
    NtkMlp,
    GpResnet,
    NtkResnet,
    Gaussian { gamma: f64 },
}

impl KernelKind {
    pub fn label(&self) -> &'static str {
        match self {
            KernelKind::GpMlp => "gp_mlp",
            KernelKind::NtkMlp => "ntk_mlp",
            KernelKind::GpResnet => "gp_resnet",
            KernelKind::NtkResnet => "ntk_resnet",
            KernelKind::Gaussian { .. } => "gaussian",
        }
    }

    fn arch_kind(&self) -> Option<ArchKind> {
        match self {
            KernelKind::GpMlp | KernelKind::NtkMlp => Some(ArchKind::Mlp),
            KernelKind::GpResnet | KernelKind::NtkResnet => Some(ArchKind::ResNet),
            KernelKind::Gaussian { .. } => None,
        }
    }
}

/// `exp(-gamma ||x - y||^2)`.
pub fn gaussian_kernel(x: &[f64], y: &[f64], gamma: f64) -> f64 {
    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    (-gamma * d2).exp()
}

/// A fully specified kernel function with an optional positive scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    kind: KernelKind,
    arch: Option<ArchitectureSpec>,
    scale: f64,
}

impl Kernel {
    pub fn new(kind: KernelKind, arch: Option<ArchitectureSpec>) -> Result<Self> {
        match (kind.arch_kind(), &arch) {
            (Some(expected), Some(spec)) => {
                spec.validate()?;
                if spec.kind != expected {
                    return Err(Error::ArchitectureMismatch(format!(
                        "{} kernel needs a {expected} architecture, got {}",
                        kind.label(),
                        spec.kind
                    )));
                }
            }
            (Some(_), None) => {
                return Err(Error::invalid(format!("{} kernel needs an architecture", kind.label())))
            }
            (None, _) => {
                let KernelKind::Gaussian { gamma } = kind else { unreachable!() };
                if !(gamma > 0.0 && gamma.is_finite()) {
                    return Err(Error::invalid(format!("gamma must be positive, got {gamma}")));
                }
            }
        }
        let arch = if kind.arch_kind().is_some() { arch } else { None };
        Ok(Kernel { kind, arch, scale: 1.0 })
    }

    /// NTK of the given architecture.
    pub fn ntk(spec: ArchitectureSpec) -> Result<Self> {
        let kind = match spec.kind {
            ArchKind::Mlp => KernelKind::NtkMlp,
            ArchKind::ResNet => KernelKind::NtkResnet,
        };
        Kernel::new(kind, Some(spec))
    }

    /// GP kernel of the given architecture.
    pub fn gp(spec: ArchitectureSpec) -> Result<Self> {
        let kind = match spec.kind {
            ArchKind::Mlp => KernelKind::GpMlp,
            ArchKind::ResNet => KernelKind::GpResnet,
        };
        Kernel::new(kind, Some(spec))
    }

    pub fn gaussian(gamma: f64) -> Result<Self> {
        Kernel::new(KernelKind::Gaussian { gamma }, None)
    }

    /// Multiply every kernel value by `scale > 0`.
    pub fn scaled(mut self, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::invalid(format!("kernel scale must be positive, got {scale}")));
        }
        self.scale = scale;
        Ok(self)
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn arch(&self) -> Option<&ArchitectureSpec> {
        self.arch.as_ref()
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let value = match (self.kind, &self.arch) {
            (KernelKind::Gaussian { gamma }, _) => gaussian_kernel(x, y, gamma),
            (KernelKind::GpMlp | KernelKind::GpResnet, Some(spec)) => {
                gp_layers(x, y, spec)?[spec.depth].xy
            }
            (KernelKind::NtkMlp | KernelKind::NtkResnet, Some(spec)) => ntk(x, y, spec)?,
            _ => unreachable!("constructor guarantees an architecture"),
        };
        Ok(self.scale * value)
    }
}

/// Symmetric kernel matrix over a point set.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    pub points: Vec<Vec<f64>>,
    pub entries: DMatrix<f64>,
    pub kernel: Option<Kernel>,
}

impl GramMatrix {
    /// Wrap a precomputed matrix (e.g. an empirical NTK).
    pub fn from_entries(points: Vec<Vec<f64>>, entries: DMatrix<f64>, kernel: Option<Kernel>) -> Self {
        GramMatrix { points, entries, kernel }
    }

    pub fn size(&self) -> usize {
        self.entries.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.entries.trace()
    }

    /// First `(row, col)` where the matrix differs from its transpose.
    pub fn asymmetry(&self) -> Option<(usize, usize)> {
        let n = self.size();
        (0..n)
            .flat_map(|i| (0..i).map(move |j| (i, j)))
            .find(|&(i, j)| self.entries[(i, j)] != self.entries[(j, i)])
    }

    pub fn min_eigenvalue(&self) -> f64 {
        linalg::min_eigenvalue(&self.entries)
    }

    /// Smallest eigenvalue is at least `-1e-8 trace / N`.
    pub fn is_psd(&self) -> bool {
        self.check().psd
    }

    pub fn check(&self) -> GramCheck {
        let min_eigenvalue = self.min_eigenvalue();
        let trace = self.trace();
        GramCheck {
            size: self.size(),
            symmetric: self.asymmetry().is_none(),
            min_eigenvalue,
            trace,
            psd: min_eigenvalue >= -1e-8 * trace.abs() / self.size() as f64,
        }
    }

    /// Frobenius distance to another Gram matrix of the same size.
    pub fn frobenius_distance(&self, other: &GramMatrix) -> f64 {
        (&self.entries - &other.entries).norm()
    }
}

/// Structural summary of a Gram matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GramCheck {
    pub size: usize,
    /// Exactly equal to its transpose.
    pub symmetric: bool,
    pub min_eigenvalue: f64,
    pub trace: f64,
    /// Smallest eigenvalue is at least `-1e-8 trace / N`.
    pub psd: bool,
}

impl GramCheck {
    pub fn ok(&self) -> bool {
        self.symmetric && self.psd
    }
}

/// Assemble the Gram matrix of `kernel` over `points`.
///
/// Each unordered pair is evaluated exactly once and mirrored. Pairs are
/// evaluated in parallel; every value lands in a fixed slot, so the result
/// does not depend on the thread count.
pub fn gram<P: AsRef<[f64]> + Sync>(points: &[P], kernel: &Kernel) -> Result<GramMatrix> {
    if points.is_empty() {
        return Err(Error::invalid("gram matrix needs at least one point"));
    }
    let n = points.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
    let values = pairs
        .par_iter()
        .map(|&(i, j)| kernel.eval(points[i].as_ref(), points[j].as_ref()))
        .collect::<Result<Vec<f64>>>()?;
    let mut entries = DMatrix::zeros(n, n);
    for (&(i, j), v) in pairs.iter().zip(values) {
        entries[(i, j)] = v;
        entries[(j, i)] = v;
    }
    Ok(GramMatrix {
        points: points.iter().map(|p| p.as_ref().to_vec()).collect(),
        entries,
        kernel: Some(*kernel),
    })
}

/// Angle gaps `-pi + 2 pi k / n`, `k = 0..n`.
pub fn gap_grid(grid_size: usize) -> Vec<f64> {
    (0..grid_size).map(|k| -PI + 2.0 * PI * k as f64 / grid_size as f64).collect()
}

/// Kernel between `(1, 0)` and the point at angle gap `delta`, over [`gap_grid`].
///
/// With `normalize_peak` every value is divided by the value at `delta = 0`,
/// which is evaluated directly whether or not it lies on the grid.
pub fn kernel_profile(kernel: &Kernel, grid_size: usize, normalize_peak: bool) -> Result<Vec<(f64, f64)>> {
    if grid_size < 2 {
        return Err(Error::invalid("profile grid needs at least 2 points"));
    }
    let origin = embed_circle(0.0);
    let peak = if normalize_peak {
        let p = kernel.eval(&origin, &origin)?;
        if p == 0.0 {
            return Err(Error::invalid("kernel vanishes at zero gap; cannot normalize"));
        }
        p
    } else {
        1.0
    };
    gap_grid(grid_size)
        .into_iter()
        .map(|delta| {
            let v = if delta == 0.0 {
                kernel.eval(&origin, &origin)?
            } else {
                kernel.eval(&origin, &embed_circle(delta))?
            };
            Ok((delta, v / peak))
        })
        .collect()
}

/// Sum of absolute differences between consecutive profile values.
pub fn total_variation(profile: &[(f64, f64)]) -> f64 {
    profile.windows(2).map(|w| (w[1].1 - w[0].1).abs()).sum()
}

/// Total variation of the slope of the profile rescaled to `[0, 1]`.
///
/// Plain total variation mostly measures the range of the profile; this
/// measures how sharply it bends, so a kink at the peak dominates.
pub fn profile_roughness(profile: &[(f64, f64)]) -> f64 {
    let lo = profile.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let hi = profile.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return 0.0;
    }
    let slopes: Vec<f64> = profile.windows(2).map(|w| (w[1].1 - w[0].1) / (hi - lo)).collect();
    slopes.windows(2).map(|s| (s[1] - s[0]).abs()).sum()
}
