//! Finite-width MLP and ResNet networks.
//!
//! Parameters are stored flat, block after block, each matrix column-major:
//!
//! * ResNet: `U` (n x d), `W1..WL` (n x n), `V1..VL` (n x n), `w` (n)
//! * MLP: `W1` (n x d), `W2..WL` (n x n), `w` (n)
//!
//! Under [`InitScheme::NtkGaussian`] every entry is standard normal and the
//! forward pass applies the explicit `1/sqrt(n)`, `1/sqrt(d)` and sigma
//! factors. Under [`InitScheme::XavierGaussian`] the variances live in the
//! entries and the forward pass applies no normalization (the residual scale
//! alpha is kept).

mod check;
mod drift;
mod forward;
mod grad;
mod kernels;
mod train;

use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::arch::{ArchKind, ArchitectureSpec};
use crate::error::{Error, Result};
use crate::rng;

pub use check::{gradient_check, GradCheck};
pub use drift::{drift_study, DriftRecord, DriftStudy};
pub use forward::{forward, forward_batch, BatchCache, ForwardCache};
pub use grad::{
    backward_factors, empirical_ntk, empirical_ntk_dense, grad_params, input_output_jacobian,
    jacobian, BlockFactor, Factors,
};
pub use train::{
    default_gd_lr, default_checkpoints, train, Checkpoint, Optimizer, TrainConfig, TrainTrace,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    NtkGaussian,
    XavierGaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockId {
    /// ResNet input projection.
    U,
    /// Hidden weight of layer `l` (1-based). For an MLP, `W(1)` is the n x d input layer.
    W(usize),
    /// ResNet residual weight of layer `l` (1-based).
    V(usize),
    /// Output vector.
    Out,
}

impl std::fmt::Display for BlockId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BlockId::U => f.write_str("U"),
            BlockId::W(l) => write!(f, "W{l}"),
            BlockId::V(l) => write!(f, "V{l}"),
            BlockId::Out => f.write_str("w"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Block {
    pub id: BlockId,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Block {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Block shapes in storage order.
pub fn layout(spec: &ArchitectureSpec, n: usize) -> Vec<Block> {
    let d = spec.input_dim;
    let l = spec.depth;
    let mut shapes = Vec::new();
    match spec.kind {
        ArchKind::ResNet => {
            shapes.push((BlockId::U, n, d));
            shapes.extend((1..=l).map(|i| (BlockId::W(i), n, n)));
            shapes.extend((1..=l).map(|i| (BlockId::V(i), n, n)));
        }
        ArchKind::Mlp => {
            shapes.push((BlockId::W(1), n, d));
            shapes.extend((2..=l).map(|i| (BlockId::W(i), n, n)));
        }
    }
    shapes.push((BlockId::Out, n, 1));
    let mut offset = 0;
    shapes
        .into_iter()
        .map(|(id, rows, cols)| {
            let b = Block { id, offset, rows, cols };
            offset += rows * cols;
            b
        })
        .collect()
}

/// Total parameter count for the layout.
pub fn param_count(spec: &ArchitectureSpec, n: usize) -> usize {
    let (d, l) = (spec.input_dim, spec.depth);
    match spec.kind {
        ArchKind::ResNet => n * d + 2 * l * n * n + n,
        ArchKind::Mlp => n * d + (l - 1) * n * n + n,
    }
}

/// Scalar multipliers applied by the forward pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scales {
    /// First layer (`U` or MLP `W1`).
    pub input: f64,
    /// Hidden `W` layers beyond the first.
    pub hidden: f64,
    /// Residual branch `V` (ResNet only).
    pub residual: f64,
    /// Output vector.
    pub output: f64,
}

/// A network's parameters together with its architecture and width.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    pub spec: ArchitectureSpec,
    pub width: usize,
    pub scheme: InitScheme,
    pub data: Vec<f64>,
}

impl ParamVector {
    /// All-zero parameters.
    pub fn zeros(spec: ArchitectureSpec, width: usize, scheme: InitScheme) -> Result<Self> {
        spec.validate()?;
        if width < 1 {
            return Err(Error::invalid("width must be at least 1"));
        }
        Ok(ParamVector { spec, width, scheme, data: vec![0.0; param_count(&spec, width)] })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn layout(&self) -> Vec<Block> {
        layout(&self.spec, self.width)
    }

    pub fn block(&self, id: BlockId) -> Option<Block> {
        self.layout().into_iter().find(|b| b.id == id)
    }

    pub fn block_data(&self, id: BlockId) -> &[f64] {
        let b = self.block(id).expect("block exists for this architecture");
        &self.data[b.range()]
    }

    pub fn scales(&self) -> Scales {
        let s = &self.spec;
        let n = self.width as f64;
        let d = s.input_dim as f64;
        match (self.scheme, s.kind) {
            (InitScheme::XavierGaussian, _) => Scales {
                input: 1.0,
                hidden: 1.0,
                residual: s.alpha,
                output: 1.0,
            },
            (InitScheme::NtkGaussian, ArchKind::ResNet) => Scales {
                input: 1.0 / d.sqrt(),
                hidden: s.sigma_w / n.sqrt(),
                residual: s.alpha * s.sigma_v / n.sqrt(),
                output: s.sigma_w / n.sqrt(),
            },
            (InitScheme::NtkGaussian, ArchKind::Mlp) => Scales {
                input: s.sigma_w / d.sqrt(),
                hidden: s.sigma_w / n.sqrt(),
                residual: 0.0,
                output: s.sigma_w / n.sqrt(),
            },
        }
    }

    /// Euclidean distance to another parameter vector of the same layout.
    pub fn distance(&self, other: &ParamVector) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// Draw initial parameters in layout order from the seeded generator.
pub fn init_params(spec: &ArchitectureSpec, width: usize, scheme: InitScheme, seed: u64) -> Result<ParamVector> {
    let mut p = ParamVector::zeros(*spec, width, scheme)?;
    let mut rng = rng::from_seed(seed);
    for b in p.layout() {
        let slot = &mut p.data[b.range()];
        match scheme {
            InitScheme::NtkGaussian => {
                for v in slot.iter_mut() {
                    *v = StandardNormal.sample(&mut rng);
                }
            }
            InitScheme::XavierGaussian => {
                // fan_in is the column count, fan_out the row count; the
                // output vector maps n -> 1
                let (fan_in, fan_out) = match b.id {
                    BlockId::Out => (b.rows, 1),
                    _ => (b.cols, b.rows),
                };
                let std = (2.0 / (fan_in + fan_out) as f64).sqrt();
                let normal = Normal::new(0.0, std).expect("positive standard deviation");
                for v in slot.iter_mut() {
                    *v = normal.sample(&mut rng);
                }
            }
        }
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn variance(v: &[f64]) -> f64 {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64
    }

    #[test]
    fn layout_counts() {
        let r = ArchitectureSpec::resnet(3, 0.1);
        assert_eq!(param_count(&r, 10), 10 * 2 + 6 * 100 + 10);
        let m = ArchitectureSpec::mlp(3);
        assert_eq!(param_count(&m, 10), 10 * 2 + 2 * 100 + 10);
        for spec in [r, m] {
            let blocks = layout(&spec, 10);
            let last = blocks.last().unwrap();
            assert_eq!(last.offset + last.len(), param_count(&spec, 10));
            assert_eq!(last.id, BlockId::Out);
        }
    }

    #[test]
    fn init_is_reproducible() {
        let spec = ArchitectureSpec::resnet(2, 0.1);
        let a = init_params(&spec, 16, InitScheme::NtkGaussian, 5).unwrap();
        let b = init_params(&spec, 16, InitScheme::NtkGaussian, 5).unwrap();
        let c = init_params(&spec, 16, InitScheme::NtkGaussian, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn ntk_entries_have_unit_variance() {
        let p = init_params(&ArchitectureSpec::mlp(2), 100, InitScheme::NtkGaussian, 1).unwrap();
        assert!(p.len() >= 10_000);
        assert!((variance(&p.data) - 1.0).abs() < 0.03);
    }

    #[test]
    fn xavier_first_layer_variance() {
        let n = 2000;
        let p = init_params(&ArchitectureSpec::resnet(1, 0.1), n, InitScheme::XavierGaussian, 2).unwrap();
        let u = p.block_data(BlockId::U);
        assert!((variance(u) / (2.0 / (n + 2) as f64) - 1.0).abs() < 0.05);
        let w = p.block_data(BlockId::W(1));
        assert!((variance(w) * n as f64 - 1.0).abs() < 0.05);
    }

    #[test]
    fn zero_width_is_rejected() {
        assert!(init_params(&ArchitectureSpec::mlp(2), 0, InitScheme::NtkGaussian, 0).is_err());
    }
}
