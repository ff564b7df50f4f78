//! Closed-form bounds on the input-output Jacobian and a Monte Carlo check of
//! the Gaussian singular-value concentration they rest on.
//!
//! With `s = 1 + 2 sqrt(n/d)`:
//!
//! * ResNet: `B = 2 sigma_w s (1 + 9 alpha C sigma_v sigma_w)^L`
//! * MLP: `B = 2 C sigma_w^2 s (3 C sigma_w)^(L-1)`
//!
//! so the ratio is `(1 + 9 alpha C sigma_v sigma_w)^L / (3^(L-1) (C sigma_w)^L)`,
//! independent of the width.

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arch::{embed_circle, ArchKind, ArchitectureSpec};
use crate::error::{Error, Result};
use crate::net::{backward_factors, forward_batch, InitScheme, ParamVector};
use crate::rng;
use crate::smooth::grid_angles;

/// Growth constant of the activation, `|phi(z)| <= c_phi |z|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActivationBounds {
    pub c_phi: f64,
}

impl ActivationBounds {
    pub fn new(c_phi: f64) -> Result<Self> {
        if !(c_phi > 0.0 && c_phi.is_finite()) {
            return Err(Error::invalid(format!("c_phi must be positive, got {c_phi}")));
        }
        Ok(ActivationBounds { c_phi })
    }

    pub fn relu() -> Self {
        ActivationBounds { c_phi: 1.0 }
    }
}

impl Default for ActivationBounds {
    fn default() -> Self {
        Self::relu()
    }
}

fn width_factor(spec: &ArchitectureSpec, n: usize) -> Result<f64> {
    spec.validate()?;
    if n < 1 {
        return Err(Error::invalid("width must be at least 1"));
    }
    Ok(1.0 + 2.0 * (n as f64 / spec.input_dim as f64).sqrt())
}

fn residual_growth(spec: &ArchitectureSpec, act: ActivationBounds) -> f64 {
    (1.0 + 9.0 * spec.alpha * act.c_phi * spec.sigma_v * spec.sigma_w).powi(spec.depth as i32)
}

fn mlp_growth(spec: &ArchitectureSpec, act: ActivationBounds) -> f64 {
    (3.0 * act.c_phi * spec.sigma_w).powi(spec.depth as i32 - 1)
}

/// Jacobian-norm bound for a ResNet of width `n`.
pub fn bound_resnet(spec: &ArchitectureSpec, n: usize, act: ActivationBounds) -> Result<f64> {
    if spec.kind != ArchKind::ResNet {
        return Err(Error::ArchitectureMismatch("bound_resnet needs a ResNet spec".into()));
    }
    Ok(2.0 * spec.sigma_w * width_factor(spec, n)? * residual_growth(spec, act))
}

/// Jacobian-norm bound for an MLP of width `n`.
pub fn bound_mlp(spec: &ArchitectureSpec, n: usize, act: ActivationBounds) -> Result<f64> {
    if spec.kind != ArchKind::Mlp {
        return Err(Error::ArchitectureMismatch("bound_mlp needs an MLP spec".into()));
    }
    Ok(2.0 * act.c_phi * spec.sigma_w.powi(2) * width_factor(spec, n)? * mlp_growth(spec, act))
}

/// `B_ResNet / B_MLP` at depth `depth`, residual scale `alpha` and the given
/// sigmas (shared by both models).
pub fn ratio(alpha: f64, depth: usize, sigma_w: f64, sigma_v: f64, act: ActivationBounds) -> f64 {
    let l = depth as i32;
    (1.0 + 9.0 * alpha * act.c_phi * sigma_v * sigma_w).powi(l)
        / (3f64.powi(l - 1) * (act.c_phi * sigma_w).powi(l))
}

/// Largest alpha with ratio <= 1 at unit sigmas and `c_phi = 1`:
/// `(3^(1 - 1/L) - 1) / 9`.
pub fn alpha_threshold(depth: usize) -> Result<f64> {
    if depth < 1 {
        return Err(Error::invalid("depth must be at least 1"));
    }
    Ok((3f64.powf(1.0 - 1.0 / depth as f64) - 1.0) / 9.0)
}

/// Alpha solving ratio = 1 for general sigmas and `c_phi`. Can be negative
/// when the MLP bound is already the smaller one at alpha = 0.
pub fn alpha_threshold_general(depth: usize, sigma_w: f64, sigma_v: f64, act: ActivationBounds) -> Result<f64> {
    if depth < 1 {
        return Err(Error::invalid("depth must be at least 1"));
    }
    let l = depth as f64;
    let c = act.c_phi;
    Ok((3f64.powf((l - 1.0) / l) * c * sigma_w - 1.0) / (9.0 * c * sigma_v * sigma_w))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub depth: usize,
    pub alpha: f64,
    pub sigma_w: f64,
    pub sigma_v: f64,
    pub width: usize,
    pub input_dim: usize,
    pub c_phi: f64,
    pub b_resnet: f64,
    pub b_mlp: f64,
    pub ratio: f64,
    pub alpha_threshold: f64,
}

/// Both bounds for the hyperparameters of `spec` (kind is ignored).
pub fn bound_report(spec: &ArchitectureSpec, n: usize, act: ActivationBounds) -> Result<BoundReport> {
    let res = ArchitectureSpec { kind: ArchKind::ResNet, ..*spec };
    let mlp = ArchitectureSpec { kind: ArchKind::Mlp, ..*spec };
    let b_resnet = bound_resnet(&res, n, act)?;
    let b_mlp = bound_mlp(&mlp, n, act)?;
    Ok(BoundReport {
        depth: spec.depth,
        alpha: spec.alpha,
        sigma_w: spec.sigma_w,
        sigma_v: spec.sigma_v,
        width: n,
        input_dim: spec.input_dim,
        c_phi: act.c_phi,
        b_resnet,
        b_mlp,
        ratio: b_resnet / b_mlp,
        alpha_threshold: alpha_threshold_general(spec.depth, spec.sigma_w, spec.sigma_v, act)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingularValueMc {
    pub violation_rate: f64,
    /// `2 exp(-t^2 / 2)`, the failure probability allowed by the lemma.
    pub bound: f64,
    pub trials: usize,
}

impl SingularValueMc {
    /// `bound + k * sqrt(bound (1 - bound) / trials)`, with `bound` clipped to 1.
    pub fn tolerance(&self, k: f64) -> f64 {
        let b = self.bound.min(1.0);
        b + k * (b * (1.0 - b) / self.trials as f64).sqrt()
    }
}

/// Fraction of `trials` standard-normal `m x n` matrices whose extreme singular
/// values leave `[sqrt(m) - sqrt(n) - t, sqrt(m) + sqrt(n) + t]`.
pub fn gaussian_singular_mc(m: usize, n: usize, t: f64, trials: usize, seed: u64) -> Result<SingularValueMc> {
    if n < 1 || m < n {
        return Err(Error::invalid(format!("need m >= n >= 1, got m={m}, n={n}")));
    }
    if m > 2000 {
        return Err(Error::invalid("matrices are capped at 2000 rows"));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::invalid(format!("t must be a nonnegative real, got {t}")));
    }
    if trials < 100 {
        return Err(Error::invalid("at least 100 trials are required"));
    }
    let lo = (m as f64).sqrt() - (n as f64).sqrt() - t;
    let hi = (m as f64).sqrt() + (n as f64).sqrt() + t;
    let violations: usize = (0..trials)
        .into_par_iter()
        .map(|k| {
            let mut r = rng::stream(seed, k as u64);
            let a = DMatrix::<f64>::from_fn(m, n, |_, _| StandardNormal.sample(&mut r));
            let sv = a.singular_values();
            usize::from(sv.min() < lo || sv.max() > hi)
        })
        .sum();
    Ok(SingularValueMc {
        violation_rate: violations as f64 / trials as f64,
        bound: 2.0 * (-t * t / 2.0).exp(),
        trials,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeReport {
    /// Largest `|df/dx|` over the angle grid.
    pub max_slope: f64,
    pub bound: f64,
    /// `max_slope / bound`.
    pub slack: f64,
}

/// Compare the largest input-output Jacobian norm on a `grid_size` angle grid
/// with the closed-form bound for the network's architecture and width.
pub fn empirical_vs_bound(params: &ParamVector, grid_size: usize, act: ActivationBounds) -> Result<SlopeReport> {
    if params.scheme != InitScheme::NtkGaussian {
        return Err(Error::invalid("the bounds hold for the NTK parameterization only"));
    }
    if grid_size < 1 {
        return Err(Error::invalid("grid_size must be at least 1"));
    }
    let bound = match params.spec.kind {
        ArchKind::ResNet => bound_resnet(&params.spec, params.width, act)?,
        ArchKind::Mlp => bound_mlp(&params.spec, params.width, act)?,
    };
    let points: Vec<[f64; 2]> = grid_angles(grid_size).into_iter().map(embed_circle).collect();
    let mut max_slope = 0.0f64;
    // batches keep the forward cache small at large widths
    for chunk in points.chunks(64) {
        let cache = forward_batch(params, chunk)?;
        let grad = backward_factors(params, &cache).input_grad;
        for col in grad.column_iter() {
            max_slope = max_slope.max(col.norm());
        }
    }
    Ok(SlopeReport { max_slope, bound, slack: max_slope / bound })
}
