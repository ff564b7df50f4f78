//! Explicit parameter and input gradients.
//!
//! For every block the gradient of the output at one input is rank one,
//! `coef * left[:, p] right[:, p]^T`. Keeping it factored makes the empirical
//! NTK cheap: `<df_p, df_q> = sum_blocks coef^2 (left_p . left_q)(right_p . right_q)`.

use nalgebra::DMatrix;

use super::forward::{forward_batch, relu, view, BatchCache};
use super::{Block, BlockId, ParamVector};
use crate::arch::ArchKind;
use crate::error::Result;
use crate::kernel::GramMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct BlockFactor {
    pub block: Block,
    pub coef: f64,
    /// rows x N
    pub left: DMatrix<f64>,
    /// cols x N
    pub right: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Factors {
    /// In storage order.
    pub blocks: Vec<BlockFactor>,
    /// `df/dx`, d x N.
    pub input_grad: DMatrix<f64>,
}

pub(crate) fn relu_mask(g: &DMatrix<f64>) -> DMatrix<f64> {
    g.map(|v| if v > 0.0 { 1.0 } else { 0.0 })
}

/// Backward pass producing the rank-one gradient factors of every block.
pub fn backward_factors(p: &ParamVector, cache: &BatchCache) -> Factors {
    let s = p.scales();
    let depth = p.spec.depth;
    let batch = cache.outputs.len();
    let layout = p.layout();
    let find = |id: BlockId| *layout.iter().find(|b| b.id == id).expect("block in layout");
    let w = view(p, BlockId::Out);
    let mut delta = DMatrix::from_fn(p.width, batch, |i, _| s.output * w[(i, 0)]);
    let mut blocks = vec![BlockFactor {
        block: find(BlockId::Out),
        coef: s.output,
        left: cache.xs[depth].clone(),
        right: DMatrix::from_element(1, batch, 1.0),
    }];

    let input_grad = match p.spec.kind {
        ArchKind::ResNet => {
            for l in (1..=depth).rev() {
                let g = &cache.gs[l - 1];
                let h = (view(p, BlockId::V(l)).tr_mul(&delta) * s.residual).component_mul(&relu_mask(g));
                let back = view(p, BlockId::W(l)).tr_mul(&h) * s.hidden;
                blocks.push(BlockFactor {
                    block: find(BlockId::V(l)),
                    coef: s.residual,
                    left: delta.clone(),
                    right: relu(g),
                });
                blocks.push(BlockFactor {
                    block: find(BlockId::W(l)),
                    coef: s.hidden,
                    left: h,
                    right: cache.xs[l - 1].clone(),
                });
                delta += back;
            }
            let grad = view(p, BlockId::U).tr_mul(&delta) * s.input;
            blocks.push(BlockFactor {
                block: find(BlockId::U),
                coef: s.input,
                left: delta,
                right: cache.inputs.clone(),
            });
            grad
        }
        ArchKind::Mlp => {
            for l in (1..=depth).rev() {
                let scale = if l == 1 { s.input } else { s.hidden };
                let h = delta.component_mul(&relu_mask(&cache.gs[l - 1]));
                delta = view(p, BlockId::W(l)).tr_mul(&h) * scale;
                blocks.push(BlockFactor {
                    block: find(BlockId::W(l)),
                    coef: scale,
                    left: h,
                    right: cache.xs[l - 1].clone(),
                });
            }
            delta
        }
    };
    blocks.sort_by_key(|b| b.block.offset);
    Factors { blocks, input_grad }
}

impl Factors {
    pub fn batch(&self) -> usize {
        self.input_grad.ncols()
    }

    /// Flat gradient of the output at input `k`, in storage order.
    pub fn flat_gradient(&self, k: usize, len: usize) -> Vec<f64> {
        let mut out = vec![0.0; len];
        for f in &self.blocks {
            let b = &f.block;
            let slot = &mut out[b.range()];
            for j in 0..b.cols {
                let r = f.coef * f.right[(j, k)];
                for i in 0..b.rows {
                    slot[j * b.rows + i] = r * f.left[(i, k)];
                }
            }
        }
        out
    }

    /// `sum_k weights[k] * grad_k`, in storage order.
    pub fn weighted_gradient(&self, weights: &[f64], len: usize) -> Vec<f64> {
        let mut out = vec![0.0; len];
        let wdiag = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(weights));
        for f in &self.blocks {
            let block = (&f.left * &wdiag) * f.right.transpose() * f.coef;
            out[f.block.range()].copy_from_slice(block.as_slice());
        }
        out
    }

    /// `J J^T` from the factors, mirrored from the upper triangle.
    pub fn gram(&self) -> DMatrix<f64> {
        let n = self.batch();
        let mut g = DMatrix::zeros(n, n);
        for f in &self.blocks {
            let ll = f.left.tr_mul(&f.left);
            let rr = f.right.tr_mul(&f.right);
            g += ll.component_mul(&rr) * (f.coef * f.coef);
        }
        mirror_upper(&mut g);
        g
    }
}

fn mirror_upper(g: &mut DMatrix<f64>) {
    for i in 0..g.nrows() {
        for j in 0..i {
            g[(i, j)] = g[(j, i)];
        }
    }
}

/// Gradient of the output with respect to all parameters at `x`.
pub fn grad_params(p: &ParamVector, x: &[f64]) -> Result<Vec<f64>> {
    let cache = forward_batch(p, &[x])?;
    Ok(backward_factors(p, &cache).flat_gradient(0, p.len()))
}

/// Dense Jacobian, one row per input.
pub fn jacobian<P: AsRef<[f64]>>(p: &ParamVector, points: &[P]) -> Result<DMatrix<f64>> {
    let cache = forward_batch(p, points)?;
    let f = backward_factors(p, &cache);
    let rows: Vec<Vec<f64>> = (0..points.len()).map(|k| f.flat_gradient(k, p.len())).collect();
    Ok(DMatrix::from_fn(points.len(), p.len(), |i, j| rows[i][j]))
}

fn owned_points<P: AsRef<[f64]>>(points: &[P]) -> Vec<Vec<f64>> {
    points.iter().map(|x| x.as_ref().to_vec()).collect()
}

/// Empirical NTK Gram `J J^T` computed from the factored gradients.
pub fn empirical_ntk<P: AsRef<[f64]>>(p: &ParamVector, points: &[P]) -> Result<GramMatrix> {
    let cache = forward_batch(p, points)?;
    let g = backward_factors(p, &cache).gram();
    Ok(GramMatrix::from_entries(owned_points(points), g, None))
}

/// Empirical NTK Gram through the dense Jacobian; for cross-checks at small width.
pub fn empirical_ntk_dense<P: AsRef<[f64]>>(p: &ParamVector, points: &[P]) -> Result<GramMatrix> {
    let j = jacobian(p, points)?;
    let mut g = &j * j.transpose();
    mirror_upper(&mut g);
    Ok(GramMatrix::from_entries(owned_points(points), g, None))
}

/// `df/dx` at `x`.
pub fn input_output_jacobian(p: &ParamVector, x: &[f64]) -> Result<Vec<f64>> {
    let cache = forward_batch(p, &[x])?;
    Ok(backward_factors(p, &cache).input_grad.column(0).iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::{embed_circle, ArchitectureSpec};
    use crate::net::{forward, init_params, InitScheme};

    fn specs() -> Vec<ArchitectureSpec> {
        vec![
            ArchitectureSpec::mlp(3).with_sigmas(1.1, 1.0),
            ArchitectureSpec::resnet(3, 0.4).with_sigmas(0.9, 1.2),
        ]
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for spec in specs() {
            for scheme in [InitScheme::NtkGaussian, InitScheme::XavierGaussian] {
                let mut p = init_params(&spec, 12, scheme, 21).unwrap();
                let x = embed_circle(0.4);
                let g = grad_params(&p, &x).unwrap();
                for i in (0..p.len()).step_by(7) {
                    let h = 1e-5 * p.data[i].abs().max(1.0);
                    let orig = p.data[i];
                    p.data[i] = orig + h;
                    let fp = forward(&p, &x).unwrap().0;
                    p.data[i] = orig - h;
                    let fm = forward(&p, &x).unwrap().0;
                    p.data[i] = orig;
                    let fd = (fp - fm) / (2.0 * h);
                    assert!((fd - g[i]).abs() <= 1e-6 * (1.0 + g[i].abs()), "{spec:?} {i}: {fd} vs {}", g[i]);
                }
            }
        }
    }

    #[test]
    fn zero_params_have_zero_gradient() {
        for spec in specs() {
            let p = ParamVector::zeros(spec, 6, InitScheme::NtkGaussian).unwrap();
            assert!(grad_params(&p, &[1.0, 0.0]).unwrap().iter().all(|v| *v == 0.0));
            assert_eq!(input_output_jacobian(&p, &[1.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        }
    }

    #[test]
    fn factored_gram_matches_dense() {
        for spec in specs() {
            let p = init_params(&spec, 10, InitScheme::NtkGaussian, 2).unwrap();
            let pts: Vec<[f64; 2]> = (0..5).map(|k| embed_circle(1.3 * k as f64)).collect();
            let a = empirical_ntk(&p, &pts).unwrap();
            let b = empirical_ntk_dense(&p, &pts).unwrap();
            assert!((&a.entries - &b.entries).amax() < 1e-12 * b.entries.amax());
            assert!(a.asymmetry().is_none() && a.is_psd());
        }
    }

    #[test]
    fn one_point_gram_is_squared_gradient_norm() {
        let p = init_params(&specs()[1], 9, InitScheme::NtkGaussian, 3).unwrap();
        let x = embed_circle(2.0);
        let g = grad_params(&p, &x).unwrap();
        let norm2: f64 = g.iter().map(|v| v * v).sum();
        let k = empirical_ntk(&p, &[x]).unwrap();
        assert!((k.entries[(0, 0)] - norm2).abs() < 1e-12 * norm2);
    }

    #[test]
    fn input_jacobian_matches_finite_differences() {
        for spec in specs() {
            let p = init_params(&spec, 16, InitScheme::NtkGaussian, 4).unwrap();
            let x = [0.7, -0.2];
            let j = input_output_jacobian(&p, &x).unwrap();
            for i in 0..2 {
                let mut xp = x;
                let mut xm = x;
                xp[i] += 1e-6;
                xm[i] -= 1e-6;
                let fd = (forward(&p, &xp).unwrap().0 - forward(&p, &xm).unwrap().0) / 2e-6;
                assert!((fd - j[i]).abs() < 1e-6 * (1.0 + j[i].abs()));
            }
        }
    }

    #[test]
    fn resnet_alpha_zero_input_jacobian() {
        let spec = ArchitectureSpec::resnet(3, 0.0).with_sigmas(1.5, 1.0);
        let n = 20;
        let p = init_params(&spec, n, InitScheme::NtkGaussian, 5).unwrap();
        let j = input_output_jacobian(&p, &[0.0, 1.0]).unwrap();
        let u = view(&p, BlockId::U);
        let w = view(&p, BlockId::Out);
        let expected = u.tr_mul(&w) * (1.5 / ((n as f64).sqrt() * 2f64.sqrt()));
        assert!((j[0] - expected[0]).abs() < 1e-12 && (j[1] - expected[1]).abs() < 1e-12);
    }

    #[test]
    fn weighted_gradient_is_sum_of_flat_gradients() {
        let p = init_params(&specs()[0], 6, InitScheme::NtkGaussian, 9).unwrap();
        let pts: Vec<[f64; 2]> = (0..3).map(|k| embed_circle(k as f64)).collect();
        let f = backward_factors(&p, &forward_batch(&p, &pts).unwrap());
        let w = [0.5, -1.0, 2.0];
        let total = f.weighted_gradient(&w, p.len());
        for i in 0..p.len() {
            let s: f64 = (0..3).map(|k| w[k] * f.flat_gradient(k, p.len())[i]).sum();
            assert!((total[i] - s).abs() < 1e-12);
        }
    }
}
