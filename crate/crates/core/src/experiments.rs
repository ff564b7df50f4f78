//! Multi-seed pipelines shared by the command line and the acceptance checks.
//!
//! Seed sweeps use seeds `base, base + 1, ...`; every run owns its generator.

use serde::Serialize;

use crate::arch::{embed_circle, ArchKind, ArchitectureSpec, Dataset};
use crate::error::{Error, Result};
use crate::kernel::{gap_grid, gram, kernel_profile, GramCheck, Kernel};
use crate::net::{backward_factors, forward_batch, init_params, train, InitScheme, ParamVector, TrainConfig};
use crate::regress;
use crate::smooth::{self, grid_angles, GridFunction, SpectrumPolicy};

/// Largest batch pushed through one forward pass when evaluating on a grid.
const GRID_CHUNK: usize = 256;

pub fn seed_range(base: u64, count: usize) -> Vec<u64> {
    (0..count as u64).map(|k| base + k).collect()
}

/// Network output on the uniform angle grid, minus the output of `baseline`
/// when given.
pub fn network_on_grid(p: &ParamVector, grid_size: usize, baseline: Option<&ParamVector>) -> Result<Vec<f64>> {
    let points: Vec<[f64; 2]> = grid_angles(grid_size).into_iter().map(embed_circle).collect();
    network_at(p, &points, baseline)
}

fn network_at(p: &ParamVector, points: &[[f64; 2]], baseline: Option<&ParamVector>) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(points.len());
    for chunk in points.chunks(GRID_CHUNK) {
        let f = forward_batch(p, chunk)?.outputs;
        match baseline {
            Some(b) => {
                let f0 = forward_batch(b, chunk)?.outputs;
                out.extend(f.iter().zip(&f0).map(|(a, b)| a - b));
            }
            None => out.extend(f),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalProfiles {
    pub spec: ArchitectureSpec,
    pub width: usize,
    pub seeds: Vec<u64>,
    pub gaps: Vec<f64>,
    pub analytic: Vec<f64>,
    /// One empirical profile per seed.
    pub empirical: Vec<Vec<f64>>,
    /// Structure of each seed's empirical Gram over the reference point and the grid.
    pub gram_checks: Vec<GramCheck>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileDeviation {
    pub peak: f64,
    /// Per gap, mean over seeds of `|empirical - analytic|`.
    pub mean_abs: Vec<f64>,
    /// Per gap, max over seeds.
    pub max_abs: Vec<f64>,
    /// Per seed, max over gaps.
    pub per_seed_max: Vec<f64>,
}

impl EmpiricalProfiles {
    pub fn deviation(&self) -> ProfileDeviation {
        let peak = self.analytic.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
        let dev: Vec<Vec<f64>> = self
            .empirical
            .iter()
            .map(|e| e.iter().zip(&self.analytic).map(|(a, b)| (a - b).abs()).collect())
            .collect();
        let seeds = dev.len() as f64;
        let mean_abs = (0..self.gaps.len()).map(|k| dev.iter().map(|d| d[k]).sum::<f64>() / seeds).collect();
        let max_abs = (0..self.gaps.len()).map(|k| dev.iter().map(|d| d[k]).fold(0.0, f64::max)).collect();
        let per_seed_max = dev.iter().map(|d| d.iter().copied().fold(0.0, f64::max)).collect();
        ProfileDeviation { peak, mean_abs, max_abs, per_seed_max }
    }
}

/// Empirical NTK at initialization between `(1, 0)` and the points of the
/// angle-gap grid, for each seed, next to the analytic profile.
pub fn empirical_profiles(
    spec: &ArchitectureSpec,
    width: usize,
    seeds: &[u64],
    grid_size: usize,
) -> Result<EmpiricalProfiles> {
    let analytic: Vec<f64> = kernel_profile(&Kernel::ntk(*spec)?, grid_size, false)?.into_iter().map(|p| p.1).collect();
    let gaps = gap_grid(grid_size);
    let mut points = vec![embed_circle(0.0)];
    points.extend(gaps.iter().map(|&d| embed_circle(d)));
    let mut empirical = Vec::with_capacity(seeds.len());
    let mut gram_checks = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let p = init_params(spec, width, InitScheme::NtkGaussian, seed)?;
        let g = backward_factors(&p, &forward_batch(&p, &points)?).gram();
        let gm = crate::GramMatrix::from_entries(points.iter().map(|x| x.to_vec()).collect(), g, None);
        empirical.push((1..points.len()).map(|k| gm.entries[(0, k)]).collect());
        gram_checks.push(gm.check());
        log::info!("empirical profile seed {seed} done");
    }
    Ok(EmpiricalProfiles { spec: *spec, width, seeds: seeds.to_vec(), gaps, analytic, empirical, gram_checks })
}

/// `scale / lambda_max` of the analytic NTK Gram on `data`.
///
/// Drift runs stay well inside the stable range: near `2 / lambda_max` the
/// top eigenvalue of the empirical NTK climbs until it meets the edge, and
/// that movement does not shrink with width.
pub fn drift_lr(spec: &ArchitectureSpec, data: &Dataset, scale: f64) -> Result<f64> {
    let g = gram(&data.points, &Kernel::ntk(*spec)?)?;
    Ok(scale / *crate::linalg::eigenvalues_sorted(&g.entries).last().expect("nonempty Gram"))
}

/// Closed-form NTK regression of `data` on the grid, with the Gram's structure.
pub fn ntk_regression(spec: &ArchitectureSpec, data: &Dataset, grid_size: usize) -> Result<(GridFunction, f64, GramCheck)> {
    let g = gram(&data.points, &Kernel::ntk(*spec)?)?;
    let model = regress::fit(&g, &data.labels)?;
    Ok((model.interpolate_grid(grid_size)?, model.jitter_used, g.check()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainedRun {
    pub seed: u64,
    /// Centered network output on the grid after training.
    pub values: Vec<f64>,
    pub final_loss: f64,
    /// `max |f_net - f_ntk|` over the grid.
    pub max_deviation: f64,
    pub gram_checks: Vec<GramCheck>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainedVsNtk {
    pub grid: Vec<f64>,
    pub ntk: Vec<f64>,
    pub ntk_range: f64,
    pub ntk_gram: GramCheck,
    pub runs: Vec<TrainedRun>,
    /// Seeds whose training diverged, with the message.
    pub failures: Vec<(u64, String)>,
}

/// Train one network per seed with `config` (forced to centered mode) and
/// compare the learned function with the closed-form NTK interpolant.
pub fn trained_vs_ntk(
    spec: &ArchitectureSpec,
    data: &Dataset,
    width: usize,
    seeds: &[u64],
    config: &TrainConfig,
    grid_size: usize,
) -> Result<TrainedVsNtk> {
    let (f_ntk, _, ntk_gram) = ntk_regression(spec, data, grid_size)?;
    let ntk = f_ntk.values().to_vec();
    let lo = ntk.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ntk.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let config = TrainConfig { center: true, ..config.clone() };
    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for &seed in seeds {
        let p0 = init_params(spec, width, InitScheme::NtkGaussian, seed)?;
        let trace = match train(&p0, data, &config) {
            Ok(t) => t,
            Err(e @ Error::Diverged { .. }) => {
                log::warn!("seed {seed}: {e}");
                failures.push((seed, e.to_string()));
                continue;
            }
            Err(e) => return Err(e),
        };
        let values = network_on_grid(&trace.params, grid_size, Some(&p0))?;
        let max_deviation = values.iter().zip(&ntk).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        log::info!("trained seed {seed}: loss {:.3e}, max deviation {max_deviation:.4}", trace.final_loss());
        runs.push(TrainedRun {
            seed,
            values,
            final_loss: trace.final_loss(),
            max_deviation,
            gram_checks: trace.checkpoints.iter().map(|c| c.gram.check()).collect(),
        });
    }
    Ok(TrainedVsNtk { grid: grid_angles(grid_size), ntk, ntk_range: hi - lo, ntk_gram, runs, failures })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OffNtkRun {
    pub seed: u64,
    pub kind: ArchKind,
    pub alpha: f64,
    pub values: Vec<f64>,
    /// Network outputs at the training inputs.
    pub fitted: Vec<f64>,
    pub final_loss: f64,
    pub mu: Option<f64>,
    pub error: Option<String>,
}

/// Train a Xavier-initialized network and measure the smoothness of the
/// learned function.
///
/// A network stopped after a fixed budget need not interpolate the labels,
/// so μ compares it with the Gaussian interpolant of its own values at the
/// training inputs.
pub fn offntk_run(
    spec: &ArchitectureSpec,
    data: &Dataset,
    width: usize,
    seed: u64,
    config: &TrainConfig,
    grid_size: usize,
    gamma: f64,
) -> Result<OffNtkRun> {
    let p0 = init_params(spec, width, InitScheme::XavierGaussian, seed)?;
    let config = TrainConfig { seed, ..config.clone() };
    let base = OffNtkRun {
        seed,
        kind: spec.kind,
        alpha: spec.alpha,
        values: Vec::new(),
        fitted: Vec::new(),
        final_loss: f64::NAN,
        mu: None,
        error: None,
    };
    let trace = match train(&p0, data, &config) {
        Ok(t) => t,
        Err(e @ Error::Diverged { .. }) => return Ok(OffNtkRun { error: Some(e.to_string()), ..base }),
        Err(e) => return Err(e),
    };
    let values = network_on_grid(&trace.params, grid_size, None)?;
    let fitted = network_at(&trace.params, &data.points, None)?;
    let own = data.relabel(fitted.clone())?;
    let anchors: Vec<(f64, f64)> = data.angles.iter().copied().zip(fitted.iter().copied()).collect();
    let f = GridFunction::new(values.clone())?.with_anchors(anchors)?;
    let (mu, error) = match smooth::mu(&f, &own, gamma, &SpectrumPolicy::default()) {
        Ok(m) => (Some(m), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(OffNtkRun { values, fitted, final_loss: trace.final_loss(), mu, error, ..base })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::{sample_dataset, SamplingScheme};
    use crate::net::{default_gd_lr, Optimizer};

    #[test]
    fn grid_evaluation_matches_forward() {
        let p = init_params(&ArchitectureSpec::resnet(2, 0.1), 8, InitScheme::NtkGaussian, 1).unwrap();
        let v = network_on_grid(&p, 300, None).unwrap();
        let b = grid_angles(300)[123];
        assert!((v[123] - crate::net::forward(&p, &embed_circle(b)).unwrap().0).abs() < 1e-12);
        assert!(network_on_grid(&p, 300, Some(&p)).unwrap().iter().all(|x| *x == 0.0));
    }

    #[test]
    fn profiles_have_the_grid_shape() {
        let spec = ArchitectureSpec::resnet(2, 0.1);
        let e = empirical_profiles(&spec, 32, &seed_range(0, 2), 8).unwrap();
        assert_eq!(e.empirical.len(), 2);
        assert_eq!(e.empirical[0].len(), 8);
        assert!(e.gram_checks.iter().all(GramCheck::ok));
        let d = e.deviation();
        assert_eq!(d.per_seed_max.len(), 2);
        assert!(d.mean_abs.iter().zip(&d.max_abs).all(|(m, x)| m <= x));
    }

    #[test]
    fn small_trained_run_tracks_ntk_roughly() {
        let spec = ArchitectureSpec::resnet(2, 0.1);
        let data = sample_dataset(&SamplingScheme::equispaced(4)).unwrap();
        let lr = default_gd_lr(&spec, &data).unwrap();
        let cfg = TrainConfig::new(Optimizer::Gd { lr }, 300);
        let r = trained_vs_ntk(&spec, &data, 256, &[3], &cfg, 64).unwrap();
        assert_eq!(r.runs.len(), 1);
        assert!(r.runs[0].max_deviation < 0.5 * r.ntk_range, "{}", r.runs[0].max_deviation);
    }

    #[test]
    fn offntk_reports_mu() {
        let spec = ArchitectureSpec::mlp(2);
        let data = sample_dataset(&SamplingScheme::equispaced(6)).unwrap();
        let cfg = TrainConfig::new(Optimizer::adam(1e-3), 50).with_checkpoints(vec![]);
        let r = offntk_run(&spec, &data, 16, 2, &cfg, 512, 0.5).unwrap();
        assert_eq!(r.values.len(), 512);
        assert!(r.mu.is_some(), "{:?}", r.error);
    }
}
