use nalgebra::{DMatrix, DMatrixView, DVector};

use super::{kernels, BlockId, ParamVector};
use crate::arch::ArchKind;
use crate::error::{Error, Result};

/// Intermediate values of a batched forward pass; one column per input.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchCache {
    /// Inputs, d x N.
    pub inputs: DMatrix<f64>,
    /// `x^(0..L)`, each n x N. For an MLP `x^(0)` is the input itself.
    pub xs: Vec<DMatrix<f64>>,
    /// Pre-activations `g^(1..L)`, each n x N.
    pub gs: Vec<DMatrix<f64>>,
    pub outputs: Vec<f64>,
}

/// Single-input forward cache.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCache {
    pub x_layers: Vec<DVector<f64>>,
    pub g_layers: Vec<DVector<f64>>,
    pub output: f64,
}

pub(crate) fn relu(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.map(|v| v.max(0.0))
}

/// Largest batch that goes through the streaming kernel; wider batches use
/// the blocked matrix product.
const THIN_BATCH: usize = 10;

/// `block * x`.
pub(crate) fn mul(p: &ParamVector, id: BlockId, x: &DMatrix<f64>) -> DMatrix<f64> {
    if x.ncols() > THIN_BATCH {
        return view(p, id) * x;
    }
    let b = p.block(id).expect("block exists for this architecture");
    let mut y = DMatrix::zeros(b.rows, x.ncols());
    kernels::gemm_thin(&p.data[b.range()], b.rows, x.as_slice(), x.ncols(), y.as_mut_slice());
    y
}

pub(crate) fn view(p: &ParamVector, id: BlockId) -> DMatrixView<'_, f64> {
    let b = p.block(id).expect("block exists for this architecture");
    DMatrixView::from_slice(&p.data[b.range()], b.rows, b.cols)
}

fn inputs_matrix<P: AsRef<[f64]>>(p: &ParamVector, points: &[P]) -> Result<DMatrix<f64>> {
    let d = p.spec.input_dim;
    if points.is_empty() {
        return Err(Error::invalid("forward pass needs at least one input"));
    }
    if let Some(bad) = points.iter().find(|x| x.as_ref().len() != d) {
        return Err(Error::invalid(format!(
            "input has dimension {}, network expects {d}",
            bad.as_ref().len()
        )));
    }
    Ok(DMatrix::from_fn(d, points.len(), |i, j| points[j].as_ref()[i]))
}

/// Forward pass over a batch of inputs.
pub fn forward_batch<P: AsRef<[f64]>>(p: &ParamVector, points: &[P]) -> Result<BatchCache> {
    let inputs = inputs_matrix(p, points)?;
    let s = p.scales();
    let depth = p.spec.depth;
    let mut xs = Vec::with_capacity(depth + 1);
    let mut gs = Vec::with_capacity(depth);
    match p.spec.kind {
        ArchKind::ResNet => {
            xs.push(mul(p, BlockId::U, &inputs) * s.input);
            for l in 1..=depth {
                let g = mul(p, BlockId::W(l), &xs[l - 1]) * s.hidden;
                let branch = mul(p, BlockId::V(l), &relu(&g));
                let x = &xs[l - 1] + branch * s.residual;
                gs.push(g);
                xs.push(x);
            }
        }
        ArchKind::Mlp => {
            xs.push(inputs.clone());
            for l in 1..=depth {
                let scale = if l == 1 { s.input } else { s.hidden };
                let g = mul(p, BlockId::W(l), &xs[l - 1]) * scale;
                xs.push(relu(&g));
                gs.push(g);
            }
        }
    }
    let w = view(p, BlockId::Out);
    let outputs = (w.tr_mul(&xs[depth]) * s.output).iter().copied().collect();
    Ok(BatchCache { inputs, xs, gs, outputs })
}

/// Forward pass for one input.
pub fn forward(p: &ParamVector, x: &[f64]) -> Result<(f64, ForwardCache)> {
    let c = forward_batch(p, &[x])?;
    let col = |m: &DMatrix<f64>| m.column(0).into_owned();
    let cache = ForwardCache {
        x_layers: c.xs.iter().map(col).collect(),
        g_layers: c.gs.iter().map(col).collect(),
        output: c.outputs[0],
    };
    Ok((c.outputs[0], cache))
}
