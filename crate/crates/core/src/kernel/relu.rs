//! Bivariate Gaussian expectations of the ReLU and its derivative.

use std::f64::consts::PI;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Entries of the symmetric covariance `[[xx, xy], [xy, yy]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cov2 {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl Cov2 {
    pub const fn new(xx: f64, xy: f64, yy: f64) -> Self {
        Cov2 { xx, xy, yy }
    }

    /// Covariance of a unit-variance pair with correlation `rho`.
    pub fn from_correlation(rho: f64) -> Self {
        Cov2 { xx: 1.0, xy: rho, yy: 1.0 }
    }

    fn check(&self) -> Result<()> {
        if !(self.xx >= 0.0 && self.yy >= 0.0) || !self.xy.is_finite() {
            return Err(Error::CorruptedCovariance(format!("{self:?}")));
        }
        Ok(())
    }

    /// Correlation clamped to `[-1, 1]`; zero when either variance vanishes.
    pub fn rho(&self) -> f64 {
        let s = (self.xx * self.yy).sqrt();
        if s == 0.0 {
            0.0
        } else {
            (self.xy / s).clamp(-1.0, 1.0)
        }
    }
}

/// `E[relu(u) relu(v)]` for `(u, v) ~ N(0, cov)`.
pub fn t_relu(cov: &Cov2) -> Result<f64> {
    cov.check()?;
    let s = (cov.xx * cov.yy).sqrt();
    if s == 0.0 {
        return Ok(0.0);
    }
    let rho = cov.rho();
    let value = s / (2.0 * PI) * (rho * (PI - rho.acos()) + (1.0 - rho * rho).sqrt());
    Ok(value.max(0.0))
}

/// `E[relu'(u) relu'(v)]` for `(u, v) ~ N(0, cov)`, with `relu'(0) = 0`.
pub fn tdot_relu(cov: &Cov2) -> Result<f64> {
    cov.check()?;
    if cov.xx * cov.yy == 0.0 {
        // a degenerate coordinate is identically 0, where relu' is 0
        return Ok(0.0);
    }
    Ok((PI - cov.rho().acos()) / (2.0 * PI))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Expectation {
    T,
    Tdot,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
}

impl McEstimate {
    /// Standardised distance of `target` from the estimate.
    ///
    /// A zero standard error (degenerate integrand) gives 0 for an exact hit
    /// and infinity otherwise.
    pub fn z_score(&self, target: f64) -> f64 {
        let diff = self.mean - target;
        if self.stderr > 0.0 {
            diff / self.stderr
        } else if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

pub const MIN_MC_SAMPLES: usize = 10_000;

/// Monte-Carlo estimate of `T` or `Tdot` for the ReLU.
///
/// Draws `u = a z1`, `v = b (rho z1 + sqrt(1 - rho^2) z2)` with `a`, `b` the
/// standard deviations. Mean and variance are accumulated with Welford's
/// update.
pub fn t_mc(cov: &Cov2, mode: Expectation, samples: usize, seed: u64) -> Result<McEstimate> {
    if samples < MIN_MC_SAMPLES {
        return Err(Error::invalid(format!(
            "Monte Carlo needs at least {MIN_MC_SAMPLES} samples, got {samples}"
        )));
    }
    cov.check()?;
    let a = cov.xx.sqrt();
    let b = cov.yy.sqrt();
    let rho = cov.rho();
    let c = (1.0 - rho * rho).max(0.0).sqrt();
    if !(a.is_finite() && b.is_finite() && c.is_finite()) {
        return Err(Error::CorruptedCovariance(format!("cannot factor {cov:?}")));
    }

    let mut rng = rng::from_seed(seed);
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for i in 0..samples {
        let z1: f64 = StandardNormal.sample(&mut rng);
        let z2: f64 = StandardNormal.sample(&mut rng);
        let u = a * z1;
        let v = b * (rho * z1 + c * z2);
        let h = match mode {
            Expectation::T => u.max(0.0) * v.max(0.0),
            Expectation::Tdot => {
                if u > 0.0 && v > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        };
        let delta = h - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (h - mean);
    }
    let n = samples as f64;
    let var = m2 / (n - 1.0);
    Ok(McEstimate { mean, stderr: (var / n).sqrt() })
}
