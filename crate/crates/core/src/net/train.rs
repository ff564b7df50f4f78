//! Gradient descent, SGD and Adam on the squared loss `1/2 ||f(X) - y||^2`.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::forward::{forward_batch, relu, BatchCache};
use super::grad::{backward_factors, relu_mask};
use super::{kernels, BlockId, InitScheme, ParamVector};
use crate::arch::{ArchKind, Dataset};
use crate::error::{Error, Result};
use crate::kernel::{gram, GramMatrix, Kernel};
use crate::{linalg, rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    /// Full-batch gradient descent.
    Gd { lr: f64 },
    /// One sample per step, reshuffled every epoch.
    Sgd { lr: f64 },
    /// Adam on one sample per step unless `full_batch`.
    Adam {
        lr: f64,
        #[serde(default = "beta1")]
        beta1: f64,
        #[serde(default = "beta2")]
        beta2: f64,
        #[serde(default = "eps")]
        eps: f64,
        #[serde(default)]
        full_batch: bool,
    },
}

fn beta1() -> f64 {
    0.9
}
fn beta2() -> f64 {
    0.999
}
fn eps() -> f64 {
    1e-8
}

impl Optimizer {
    pub fn adam(lr: f64) -> Self {
        Optimizer::Adam { lr, beta1: beta1(), beta2: beta2(), eps: eps(), full_batch: false }
    }

    pub fn lr(&self) -> f64 {
        match *self {
            Optimizer::Gd { lr } | Optimizer::Sgd { lr } | Optimizer::Adam { lr, .. } => lr,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub optimizer: Optimizer,
    pub iterations: usize,
    /// Iterations at which the empirical NTK and parameter distance are
    /// recorded. `None` selects [`default_checkpoints`]; an empty list
    /// disables them.
    #[serde(default)]
    pub checkpoints: Option<Vec<usize>>,
    /// Seeds the sample order of SGD and batch-one Adam.
    #[serde(default)]
    pub seed: u64,
    /// Return the parameters with the lowest full-batch loss seen.
    #[serde(default)]
    pub keep_best: bool,
    /// Fit `f(x, theta) - f(x, theta_0)` instead of `f(x, theta)`, so the
    /// random function at initialization does not enter the fit. Gradients
    /// and the empirical NTK are unchanged.
    #[serde(default)]
    pub center: bool,
}

impl TrainConfig {
    pub fn new(optimizer: Optimizer, iterations: usize) -> Self {
        TrainConfig { optimizer, iterations, checkpoints: None, seed: 0, keep_best: false, center: false }
    }

    pub fn with_checkpoints(mut self, c: Vec<usize>) -> Self {
        self.checkpoints = Some(c);
        self
    }

    pub fn centered(mut self) -> Self {
        self.center = true;
        self
    }

    pub fn checkpoint_list(&self) -> Vec<usize> {
        self.checkpoints.clone().unwrap_or_else(|| default_checkpoints(self.iterations))
    }

    pub fn validate(&self) -> Result<()> {
        let lr = self.optimizer.lr();
        if !(lr >= 0.0 && lr.is_finite()) {
            return Err(Error::invalid(format!("learning rate must be nonnegative, got {lr}")));
        }
        if let Optimizer::Adam { beta1, beta2, eps, .. } = self.optimizer {
            if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || eps <= 0.0 {
                return Err(Error::invalid("Adam needs beta1, beta2 in [0, 1) and eps > 0"));
            }
        }
        let c = self.checkpoint_list();
        if !c.is_empty() {
            if c[0] != 0 {
                return Err(Error::invalid("checkpoints must include iteration 0"));
            }
            if c.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::invalid("checkpoints must be strictly increasing"));
            }
            if *c.last().unwrap() > self.iterations {
                return Err(Error::invalid("checkpoint beyond the last iteration"));
            }
        }
        Ok(())
    }
}

/// `{0, T/4, T/2, 3T/4, T}` without duplicates.
pub fn default_checkpoints(iterations: usize) -> Vec<usize> {
    let mut c: Vec<usize> = (0..=4).map(|k| k * iterations / 4).collect();
    c.dedup();
    c
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub iteration: usize,
    pub loss: f64,
    pub param_distance: f64,
    pub gram: GramMatrix,
    pub drift: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainTrace {
    /// Full-batch loss at iterations `0..=T`.
    pub losses: Vec<f64>,
    pub checkpoints: Vec<Checkpoint>,
    pub params: ParamVector,
    /// Iteration whose parameters were returned when `keep_best` is set.
    pub best_iteration: Option<usize>,
}

impl TrainTrace {
    pub fn max_drift(&self) -> f64 {
        self.checkpoints.iter().map(|c| c.drift).fold(0.0, f64::max)
    }

    pub fn final_loss(&self) -> f64 {
        *self.losses.last().expect("at least the initial loss")
    }
}

/// `0.9 * 2 / (lambda_min + lambda_max)` of the analytic NTK Gram on the dataset.
pub fn default_gd_lr(spec: &crate::ArchitectureSpec, data: &Dataset) -> Result<f64> {
    let g = gram(&data.points, &Kernel::ntk(*spec)?)?;
    let ev = linalg::eigenvalues_sorted(&g.entries);
    Ok(0.9 * 2.0 / (ev[0] + ev[ev.len() - 1]))
}

/// Stream one block: optional `back = back_scale * block^T left`, then
/// `block += left * step^T`.
fn column_pass(
    a: &mut [f64],
    rows: usize,
    left: &DMatrix<f64>,
    step: &DMatrix<f64>,
    back: Option<(&mut DMatrix<f64>, f64)>,
) {
    let batch = left.ncols();
    // the kernel takes the step and the dots row-major, one row per column of `a`
    let step_rows: Vec<f64> = step.transpose().as_slice().to_vec();
    match back {
        Some((b, scale)) => {
            let mut dots = vec![0.0; b.nrows() * batch];
            kernels::fused_columns(a, rows, left.as_slice(), batch, &step_rows, Some((&mut dots, scale)));
            *b = DMatrix::from_row_slice(b.nrows(), batch, &dots);
        }
        None => kernels::fused_columns(a, rows, left.as_slice(), batch, &step_rows, None),
    }
}

/// `-lr * coef * e_p * right[j, p]`
fn step_matrix(right: &DMatrix<f64>, e: &[f64], lr: f64, coef: f64) -> DMatrix<f64> {
    DMatrix::from_fn(right.nrows(), right.ncols(), |j, p| -lr * coef * e[p] * right[(j, p)])
}

/// In-place `theta -= lr * J^T e`, reading and writing every weight once.
pub(crate) fn fused_gd_step(p: &mut ParamVector, cache: &BatchCache, e: &[f64], lr: f64) {
    let s = p.scales();
    let depth = p.spec.depth;
    let batch = e.len();
    let layout = p.layout();
    let range = |id: BlockId| layout.iter().find(|b| b.id == id).expect("block in layout").range();
    let n = p.width;

    let out = range(BlockId::Out);
    let mut delta = DMatrix::from_fn(n, batch, |i, _| s.output * p.data[out.start + i]);
    let ones = DMatrix::from_element(1, batch, 1.0);
    column_pass(&mut p.data[out], n, &cache.xs[depth], &step_matrix(&ones, e, lr, s.output), None);

    match p.spec.kind {
        ArchKind::ResNet => {
            for l in (1..=depth).rev() {
                let g = &cache.gs[l - 1];
                let mut vt = DMatrix::zeros(n, batch);
                let step_v = step_matrix(&relu(g), e, lr, s.residual);
                column_pass(&mut p.data[range(BlockId::V(l))], n, &delta, &step_v, Some((&mut vt, s.residual)));
                let h = vt.component_mul(&relu_mask(g));
                let mut back = DMatrix::zeros(n, batch);
                let step_w = step_matrix(&cache.xs[l - 1], e, lr, s.hidden);
                column_pass(&mut p.data[range(BlockId::W(l))], n, &h, &step_w, Some((&mut back, s.hidden)));
                delta += back;
            }
            let step_u = step_matrix(&cache.inputs, e, lr, s.input);
            column_pass(&mut p.data[range(BlockId::U)], n, &delta, &step_u, None);
        }
        ArchKind::Mlp => {
            for l in (1..=depth).rev() {
                let scale = if l == 1 { s.input } else { s.hidden };
                let h = delta.component_mul(&relu_mask(&cache.gs[l - 1]));
                let step_w = step_matrix(&cache.xs[l - 1], e, lr, scale);
                let mut back = DMatrix::zeros(cache.xs[l - 1].nrows(), batch);
                let need_back = l > 1;
                column_pass(
                    &mut p.data[range(BlockId::W(l))],
                    n,
                    &h,
                    &step_w,
                    need_back.then_some((&mut back, scale)),
                );
                delta = back;
            }
        }
    }
}

fn select(cache: &BatchCache, k: usize) -> BatchCache {
    let col = |m: &DMatrix<f64>| m.columns(k, 1).into_owned();
    BatchCache {
        inputs: col(&cache.inputs),
        xs: cache.xs.iter().map(col).collect(),
        gs: cache.gs.iter().map(col).collect(),
        outputs: vec![cache.outputs[k]],
    }
}

struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl AdamState {
    fn step(&mut self, p: &mut ParamVector, grad: &[f64], lr: f64, b1: f64, b2: f64, eps: f64) {
        self.t += 1;
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        for i in 0..grad.len() {
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * grad[i];
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * grad[i] * grad[i];
            let mhat = self.m[i] / c1;
            let vhat = self.v[i] / c2;
            p.data[i] -= lr * mhat / (vhat.sqrt() + eps);
        }
    }
}

fn warn_if_inadmissible(p: &ParamVector, data: &Dataset, lr: f64) {
    if p.scheme != InitScheme::NtkGaussian {
        return;
    }
    if let Ok(g) = gram(&data.points, &Kernel::ntk(p.spec).expect("validated spec")) {
        let ev = linalg::eigenvalues_sorted(&g.entries);
        let limit = 2.0 / (ev[0] + ev[ev.len() - 1]);
        if lr >= limit {
            log::warn!("GD learning rate {lr} is not below 2/(lambda_min + lambda_max) = {limit}");
        }
    }
}

/// Train `params` on `data`, recording the loss every iteration and the
/// empirical NTK at the checkpoints.
pub fn train(params: &ParamVector, data: &Dataset, config: &TrainConfig) -> Result<TrainTrace> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::invalid("training needs a nonempty dataset"));
    }
    let checkpoints = config.checkpoint_list();
    let mut p = params.clone();
    let init = (!checkpoints.is_empty()).then(|| params.clone());
    let mut losses = Vec::with_capacity(config.iterations + 1);
    let mut records: Vec<Checkpoint> = Vec::new();
    let mut best: Option<(f64, usize, ParamVector)> = None;
    let mut order_rng = rng::from_seed(config.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut cursor = order.len();
    let mut adam = AdamState { m: Vec::new(), v: Vec::new(), t: 0 };
    if let Optimizer::Adam { .. } = config.optimizer {
        adam.m = vec![0.0; p.len()];
        adam.v = vec![0.0; p.len()];
    }
    if let Optimizer::Gd { lr } = config.optimizer {
        warn_if_inadmissible(&p, data, lr);
    }

    let offsets = if config.center {
        forward_batch(&p, &data.points)?.outputs
    } else {
        vec![0.0; data.len()]
    };

    let mut t = 0;
    loop {
        let cache = forward_batch(&p, &data.points)?;
        let e: Vec<f64> = (0..data.len()).map(|k| cache.outputs[k] - offsets[k] - data.labels[k]).collect();
        let loss = 0.5 * e.iter().map(|v| v * v).sum::<f64>();
        if !loss.is_finite() {
            return Err(Error::Diverged { iteration: t, loss });
        }
        losses.push(loss);
        if config.keep_best && best.as_ref().is_none_or(|b| loss < b.0) {
            best = Some((loss, t, p.clone()));
        }
        if checkpoints.binary_search(&t).is_ok() {
            let gram = GramMatrix::from_entries(
                data.points.iter().map(|x| x.to_vec()).collect(),
                backward_factors(&p, &cache).gram(),
                None,
            );
            let drift = records.first().map_or(0.0, |c0| gram.frobenius_distance(&c0.gram));
            let param_distance = init.as_ref().map_or(0.0, |i| p.distance(i));
            records.push(Checkpoint { iteration: t, loss, param_distance, gram, drift });
        }
        if t == config.iterations {
            break;
        }

        let mut next_sample = || {
            if cursor == order.len() {
                order.shuffle(&mut order_rng);
                cursor = 0;
            }
            cursor += 1;
            order[cursor - 1]
        };
        match config.optimizer {
            Optimizer::Gd { lr } => fused_gd_step(&mut p, &cache, &e, lr),
            Optimizer::Sgd { lr } => {
                let k = next_sample();
                fused_gd_step(&mut p, &select(&cache, k), &[e[k]], lr);
            }
            Optimizer::Adam { lr, beta1, beta2, eps, full_batch } => {
                let grad = if full_batch {
                    backward_factors(&p, &cache).weighted_gradient(&e, p.len())
                } else {
                    let k = next_sample();
                    backward_factors(&p, &select(&cache, k)).weighted_gradient(&[e[k]], p.len())
                };
                adam.step(&mut p, &grad, lr, beta1, beta2, eps);
            }
        }
        t += 1;
    }

    let (params, best_iteration) = match best {
        Some((_, it, bp)) => (bp, Some(it)),
        None => (p, None),
    };
    Ok(TrainTrace { losses, checkpoints: records, params, best_iteration })
}
