//! Gaussian-RKHS norms of periodic functions and the relative smoothness μ.
//!
//! Functions live on the uniform angle grid `-pi + 2 pi k / N`. With
//! `F[f]_k = (1/N) sum_j f_j e^{-2 pi i jk/N}` and `S_k` the same transform of
//! the kernel slice `delta -> exp(gamma (2 cos delta - 2))`, the squared norm is
//! `sum_k |F[f]_k|^2 / S_k` over the frequencies whose `S_k` clears the floor.
//! Under this normalization a kernel section `K(., x0)` has norm `K(x0, x0)`.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::arch::{wrap_angle, Dataset};
use crate::error::{Error, Result};
use crate::kernel::{gram, Kernel};
use crate::regress;

pub const DEFAULT_GRID: usize = 4096;

/// Required agreement between a function and the labels it is claimed to interpolate.
pub const INTERPOLATION_TOL: f64 = 1e-4;

/// Both norms below this make μ undefined.
const ZERO_NORM: f64 = 1e-14;

/// Angles `-pi + 2 pi k / n`, `k = 0..n`.
pub fn grid_angles(n: usize) -> Vec<f64> {
    (0..n).map(|k| -PI + 2.0 * PI * k as f64 / n as f64).collect()
}

/// Values on the uniform angle grid plus exact values at off-grid anchor angles.
///
/// Anchors let a producer record the function at points that matter (the
/// training inputs) without relying on grid interpolation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    values: Vec<f64>,
    anchors: Vec<(f64, f64)>,
}

impl GridFunction {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::invalid("grid function needs at least 2 values"));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite grid value at index {k}")));
        }
        Ok(GridFunction { values, anchors: Vec::new() })
    }

    /// Sample `f` on an `n`-point grid.
    pub fn from_fn(n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        GridFunction::new(grid_angles(n).into_iter().map(f).collect())
    }

    pub fn with_anchors(mut self, anchors: Vec<(f64, f64)>) -> Result<Self> {
        if anchors.iter().any(|(a, v)| !a.is_finite() || !v.is_finite()) {
            return Err(Error::invalid("non-finite anchor"));
        }
        self.anchors = anchors.into_iter().map(|(a, v)| (wrap_angle(a), v)).collect();
        Ok(self)
    }

    pub fn grid_size(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn anchors(&self) -> &[(f64, f64)] {
        &self.anchors
    }

    pub fn angles(&self) -> Vec<f64> {
        grid_angles(self.values.len())
    }

    pub fn scaled(&self, c: f64) -> Self {
        GridFunction {
            values: self.values.iter().map(|v| c * v).collect(),
            anchors: self.anchors.iter().map(|&(a, v)| (a, c * v)).collect(),
        }
    }

    /// The known value at `angle`: an anchor, or a grid node, within 1e-12.
    pub fn value_at(&self, angle: f64) -> Option<f64> {
        let a = wrap_angle(angle);
        let close = |b: f64| {
            let d = (a - b).abs();
            d.min(2.0 * PI - d) <= 1e-12
        };
        if let Some(&(_, v)) = self.anchors.iter().find(|(b, _)| close(*b)) {
            return Some(v);
        }
        let n = self.values.len();
        let pos = (a + PI) / (2.0 * PI) * n as f64;
        let k = pos.round() as usize % n;
        close(grid_angles(n)[k]).then(|| self.values[k])
    }

    /// Largest label mismatch over the dataset, failing if an angle has no known value.
    pub fn interpolation_error(&self, data: &Dataset) -> Result<f64> {
        let mut worst = 0.0f64;
        for (&b, &y) in data.angles.iter().zip(&data.labels) {
            let v = self.value_at(b).ok_or(Error::NotInterpolating {
                angle: b,
                deviation: f64::INFINITY,
            })?;
            worst = worst.max((v - y).abs());
        }
        Ok(worst)
    }
}

/// Retention rule for the kernel spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumPolicy {
    pub floor_ratio: f64,
}

impl Default for SpectrumPolicy {
    fn default() -> Self {
        SpectrumPolicy { floor_ratio: 1e-13 }
    }
}

impl SpectrumPolicy {
    pub fn new(floor_ratio: f64) -> Result<Self> {
        if !(floor_ratio > 0.0 && floor_ratio < 1.0) {
            return Err(Error::invalid(format!("floor ratio must lie in (0, 1), got {floor_ratio}")));
        }
        Ok(SpectrumPolicy { floor_ratio })
    }
}

fn fft_scaled(values: &[f64]) -> Vec<Complex<f64>> {
    let n = values.len();
    let mut buf: Vec<Complex<f64>> = values.iter().map(|&v| Complex::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let inv = 1.0 / n as f64;
    buf.iter_mut().for_each(|c| *c *= inv);
    buf
}

/// Inverse of the scaled forward transform used throughout this module.
pub fn inverse_fft(coeffs: &[Complex<f64>]) -> Vec<f64> {
    let mut buf = coeffs.to_vec();
    FftPlanner::new().plan_fft_inverse(buf.len()).process(&mut buf);
    buf.iter().map(|c| c.re).collect()
}

/// Normalized discrete Fourier coefficients of `f`.
pub fn spectrum(f: &GridFunction) -> Vec<Complex<f64>> {
    fft_scaled(&f.values)
}

/// Discrete Fourier coefficients of the Gaussian kernel slice on an `n`-point grid.
pub fn kernel_spectrum_gauss(gamma: f64, n: usize) -> Result<Vec<f64>> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::invalid(format!("gamma must be positive, got {gamma}")));
    }
    if n < 2 {
        return Err(Error::invalid("spectrum grid needs at least 2 points"));
    }
    let slice: Vec<f64> = (0..n)
        .map(|j| {
            let delta = 2.0 * PI * j as f64 / n as f64;
            (gamma * (2.0 * delta.cos() - 2.0)).exp()
        })
        .collect();
    Ok(fft_scaled(&slice).into_iter().map(|c| c.re).collect())
}

/// Indices whose kernel coefficient is at least `floor_ratio * max`.
pub fn retained_frequencies(spec: &[f64], policy: &SpectrumPolicy) -> Vec<usize> {
    let max = spec.iter().copied().fold(f64::MIN, f64::max);
    let floor = policy.floor_ratio * max;
    (0..spec.len()).filter(|&k| spec[k] >= floor).collect()
}

/// Squared Gaussian-RKHS norm of `f` over the retained frequencies.
pub fn rkhs_norm_gauss(f: &GridFunction, gamma: f64, policy: &SpectrumPolicy) -> Result<f64> {
    let s = kernel_spectrum_gauss(gamma, f.grid_size())?;
    let fk = spectrum(f);
    Ok(retained_frequencies(&s, policy)
        .into_iter()
        .map(|k| fk[k].norm_sqr() / s[k])
        .sum())
}

/// Components of a μ evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MuReport {
    pub mu: f64,
    pub norm_f: f64,
    pub norm_gauss: f64,
    pub interpolation_error: f64,
    pub gauss_jitter: f64,
}

/// Relative Gaussian-RKHS norm `||f_Gauss||^2 / ||f||^2`, where `f_Gauss` is
/// the Gaussian-kernel interpolant of `data` on the same grid.
pub fn mu(f: &GridFunction, data: &Dataset, gamma: f64, policy: &SpectrumPolicy) -> Result<f64> {
    mu_report(f, data, gamma, policy).map(|r| r.mu)
}

pub fn mu_report(f: &GridFunction, data: &Dataset, gamma: f64, policy: &SpectrumPolicy) -> Result<MuReport> {
    if data.is_empty() {
        return Err(Error::invalid("μ needs a nonempty dataset"));
    }
    let err = f.interpolation_error(data)?;
    if err > INTERPOLATION_TOL {
        let (angle, deviation) = data
            .angles
            .iter()
            .zip(&data.labels)
            .map(|(&b, &y)| (b, (f.value_at(b).unwrap_or(f64::INFINITY) - y).abs()))
            .fold((0.0, 0.0), |acc, c| if c.1 > acc.1 { c } else { acc });
        return Err(Error::NotInterpolating { angle, deviation });
    }
    let kernel = Kernel::gaussian(gamma)?;
    let model = regress::fit(&gram(&data.points, &kernel)?, &data.labels)?;
    let f_gauss = model.interpolate_grid(f.grid_size())?;
    let norm_gauss = rkhs_norm_gauss(&f_gauss, gamma, policy)?;
    let norm_f = rkhs_norm_gauss(f, gamma, policy)?;
    if norm_f < ZERO_NORM {
        return Err(Error::UndefinedRatio(format!(
            "RKHS norms {norm_gauss:e} / {norm_f:e} are numerically zero"
        )));
    }
    Ok(MuReport {
        mu: norm_gauss / norm_f,
        norm_f,
        norm_gauss,
        interpolation_error: err,
        gauss_jitter: model.jitter_used,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::{embed_circle, sample_dataset, SamplingScheme};
    use crate::kernel::gaussian_kernel;
    use proptest::prelude::*;

    fn gauss_interpolant(data: &Dataset) -> GridFunction {
        let k = Kernel::gaussian(0.5).unwrap();
        regress::fit(&gram(&data.points, &k).unwrap(), &data.labels)
            .unwrap()
            .interpolate_grid(DEFAULT_GRID)
            .unwrap()
    }

    #[test]
    fn spectrum_is_even_positive_decaying() {
        let s = kernel_spectrum_gauss(0.5, DEFAULT_GRID).unwrap();
        let mean = (0..DEFAULT_GRID)
            .map(|j| (0.5 * (2.0 * (2.0 * PI * j as f64 / 4096.0).cos() - 2.0)).exp())
            .sum::<f64>()
            / 4096.0;
        assert!((s[0] - mean).abs() < 1e-15 && s[0] > 0.0);
        for k in 1..DEFAULT_GRID {
            assert!((s[k] - s[DEFAULT_GRID - k]).abs() < 1e-12);
        }
        for k in 0..12 {
            assert!(s[k + 1] < s[k] && s[k + 1] > 0.0);
        }
        for k in 12..127 {
            assert!(s[k + 1] <= s[k] + 1e-17);
        }
    }

    #[test]
    fn zero_function_has_zero_norm() {
        let f = GridFunction::new(vec![0.0; 64]).unwrap();
        assert_eq!(rkhs_norm_gauss(&f, 0.5, &SpectrumPolicy::default()).unwrap(), 0.0);
    }

    #[test]
    fn reproducing_property() {
        let x0 = embed_circle(0.7);
        let f = GridFunction::from_fn(DEFAULT_GRID, |b| gaussian_kernel(&embed_circle(b), &x0, 0.5)).unwrap();
        let norm = rkhs_norm_gauss(&f, 0.5, &SpectrumPolicy::default()).unwrap();
        assert!((norm - 1.0).abs() < 1e-2, "{norm}");
    }

    #[test]
    fn single_cosine_identity() {
        let amp = 0.3;
        let k = 3;
        let f = GridFunction::from_fn(DEFAULT_GRID, |b| amp * (k as f64 * b).cos()).unwrap();
        let s = kernel_spectrum_gauss(0.5, DEFAULT_GRID).unwrap();
        // energy amp/2 in bins k and N-k
        let expected = 2.0 * (amp / 2.0).powi(2) / s[k];
        let got = rkhs_norm_gauss(&f, 0.5, &SpectrumPolicy::default()).unwrap();
        assert!((got - expected).abs() < 1e-9 * expected);
    }

    #[test]
    fn fft_round_trip() {
        let f = GridFunction::from_fn(1024, |b| (3.0 * b).sin() + 0.2 * b).unwrap();
        let back = inverse_fft(&spectrum(&f));
        for (a, b) in f.values().iter().zip(back) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn retained_band_width() {
        let s = kernel_spectrum_gauss(0.5, DEFAULT_GRID).unwrap();
        let kept = retained_frequencies(&s, &SpectrumPolicy::default());
        assert!(kept.len() >= 20 && kept.len() < 40, "{}", kept.len());
        assert!(kept.contains(&4) && kept.contains(&(DEFAULT_GRID - 4)));
    }

    #[test]
    fn mu_of_gaussian_interpolant_is_one() {
        let d = sample_dataset(&SamplingScheme::equispaced(6)).unwrap();
        assert_eq!(mu(&gauss_interpolant(&d), &d, 0.5, &SpectrumPolicy::default()).unwrap(), 1.0);
    }

    #[test]
    fn mu_undefined_for_zero_labels() {
        let d = sample_dataset(&SamplingScheme::equispaced(6)).unwrap().relabel(vec![0.0; 6]).unwrap();
        let f = gauss_interpolant(&d);
        assert!(matches!(
            mu(&f, &d, 0.5, &SpectrumPolicy::default()),
            Err(Error::UndefinedRatio(_))
        ));
    }

    #[test]
    fn mu_rejects_non_interpolants() {
        let d = sample_dataset(&SamplingScheme::equispaced(6)).unwrap();
        let f = gauss_interpolant(&d).scaled(1.1);
        assert!(matches!(
            mu(&f, &d, 0.5, &SpectrumPolicy::default()),
            Err(Error::NotInterpolating { .. })
        ));
        let bare = GridFunction::new(vec![0.0; 100]).unwrap();
        assert!(mu(&bare, &d, 0.5, &SpectrumPolicy::default()).is_err());
    }

    #[test]
    fn mu_is_label_scale_invariant() {
        let d = sample_dataset(&SamplingScheme::uniform(8, 4)).unwrap();
        let k = Kernel::ntk(crate::ArchitectureSpec::resnet(5, 0.1)).unwrap();
        let f = regress::fit(&gram(&d.points, &k).unwrap(), &d.labels).unwrap().interpolate_grid(4096).unwrap();
        let m1 = mu(&f, &d, 0.5, &SpectrumPolicy::default()).unwrap();
        let c = 3.7;
        let dc = d.relabel(d.labels.iter().map(|y| c * y).collect()).unwrap();
        let m2 = mu(&f.scaled(c), &dc, 0.5, &SpectrumPolicy::default()).unwrap();
        assert!((m1 - m2).abs() < 1e-8);
        assert!(m1 > 0.0 && m1 <= 1.0 + 1e-6);
    }

    #[test]
    fn on_grid_values_satisfy_precondition_without_anchors() {
        let d = Dataset::from_angles(grid_angles(8));
        let f = GridFunction::from_fn(64, crate::arch::ground_truth).unwrap();
        assert!(f.interpolation_error(&d).unwrap() < 1e-12);
    }

    proptest! {
        #[test]
        fn adding_retained_energy_increases_norm(k in 0usize..10, amp in 0.01f64..1.0, phase in 0.0f64..6.28) {
            // the base occupies frequency 2 only, so other bins add orthogonal energy
            prop_assume!(k != 2);
            let base = GridFunction::from_fn(256, |b| (2.0 * b).sin()).unwrap();
            let bumped = GridFunction::from_fn(256, |b| (2.0 * b).sin() + amp * (k as f64 * b + phase).cos()).unwrap();
            let p = SpectrumPolicy::default();
            let n0 = rkhs_norm_gauss(&base, 0.5, &p).unwrap();
            let n1 = rkhs_norm_gauss(&bumped, 0.5, &p).unwrap();
            prop_assert!(n1 > n0);
        }
    }
}
