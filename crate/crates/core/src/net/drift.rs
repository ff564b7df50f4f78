//! Width scaling of the empirical-NTK drift during training.

use rayon::prelude::*;
use serde::Serialize;

use super::{init_params, train, InitScheme, TrainConfig};
use crate::arch::{ArchitectureSpec, Dataset};
use crate::error::{Error, Result};
use crate::kernel::GramCheck;
use crate::linalg::{median, ols_slope};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckpointRow {
    pub iteration: usize,
    pub drift: f64,
    pub param_distance: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftRecord {
    pub width: usize,
    pub seed: u64,
    /// Largest drift over the checkpoints.
    pub drift: f64,
    pub final_param_distance: f64,
    pub final_loss: f64,
    pub checkpoints: Vec<CheckpointRow>,
    /// Structure of the empirical NTK at every checkpoint.
    pub gram_checks: Vec<GramCheck>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftStudy {
    pub records: Vec<DriftRecord>,
    pub widths: Vec<usize>,
    pub median_drift: Vec<f64>,
    /// Least-squares slope of log(median drift) against log(width).
    pub slope: f64,
    /// The same slope for each seed on its own.
    pub seed_slopes: Vec<f64>,
}

fn log_slope(widths: &[usize], drifts: &[f64]) -> f64 {
    let x: Vec<f64> = widths.iter().map(|&w| (w as f64).ln()).collect();
    let y: Vec<f64> = drifts.iter().map(|d| d.ln()).collect();
    ols_slope(&x, &y)
}

/// Train a fresh network for every (width, seed) pair with a shared config.
///
/// Runs execute concurrently; each owns its generator, so results do not
/// depend on scheduling.
pub fn drift_study(
    spec: &ArchitectureSpec,
    data: &Dataset,
    widths: &[usize],
    seeds: &[u64],
    config: &TrainConfig,
) -> Result<DriftStudy> {
    if widths.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::invalid("widths must be sorted ascending"));
    }
    let mut distinct = widths.to_vec();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::invalid("drift slope needs at least 2 distinct widths"));
    }
    if seeds.is_empty() {
        return Err(Error::invalid("drift study needs at least one seed"));
    }
    let jobs: Vec<(usize, u64)> = distinct.iter().flat_map(|&w| seeds.iter().map(move |&s| (w, s))).collect();
    let records = jobs
        .par_iter()
        .map(|&(width, seed)| {
            let p = init_params(spec, width, InitScheme::NtkGaussian, seed)?;
            let trace = train(&p, data, config)?;
            let checkpoints: Vec<CheckpointRow> = trace
                .checkpoints
                .iter()
                .map(|c| CheckpointRow {
                    iteration: c.iteration,
                    drift: c.drift,
                    param_distance: c.param_distance,
                    loss: c.loss,
                })
                .collect();
            log::info!("drift width {width} seed {seed}: {:.4e}", trace.max_drift());
            Ok(DriftRecord {
                width,
                seed,
                drift: trace.max_drift(),
                final_param_distance: checkpoints.last().map_or(0.0, |c| c.param_distance),
                final_loss: trace.final_loss(),
                checkpoints,
                gram_checks: trace.checkpoints.iter().map(|c| c.gram.check()).collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let per_width = |w: usize| -> Vec<f64> { records.iter().filter(|r| r.width == w).map(|r| r.drift).collect() };
    let median_drift: Vec<f64> = distinct.iter().map(|&w| median(&per_width(w))).collect();
    let slope = log_slope(&distinct, &median_drift);
    let seed_slopes = seeds
        .iter()
        .map(|&s| {
            let d: Vec<f64> = distinct
                .iter()
                .map(|&w| records.iter().find(|r| r.width == w && r.seed == s).expect("record").drift)
                .collect();
            log_slope(&distinct, &d)
        })
        .collect();
    Ok(DriftStudy { records, widths: distinct, median_drift, slope, seed_slopes })
}
