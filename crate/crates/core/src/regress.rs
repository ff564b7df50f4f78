//! Exact kernel interpolation `f(x) = k(x)^T (Theta + jitter I)^{-1} y`.

use nalgebra::DVector;
use serde::Serialize;

use crate::arch::embed_circle;
use crate::error::{Error, Result};
use crate::kernel::{GramMatrix, Kernel};
use crate::linalg;
use crate::smooth::{grid_angles, GridFunction};

/// Jitter multipliers tried in order, in units of `trace / N`.
pub const JITTER_LADDER: [f64; 5] = [0.0, 1e-12, 1e-10, 1e-8, 1e-6];

/// A rung is accepted only if the solve reproduces the labels to this
/// relative accuracy; otherwise the factorization is treated as failed.
const RESIDUAL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressionModel {
    pub train_points: Vec<Vec<f64>>,
    pub coefficients: Vec<f64>,
    #[serde(skip)]
    pub kernel: Kernel,
    pub jitter_used: f64,
}

/// Solve for the interpolation coefficients, escalating the jitter as needed.
pub fn fit(gram: &GramMatrix, labels: &[f64]) -> Result<RegressionModel> {
    let n = gram.size();
    if n == 0 || labels.len() != n {
        return Err(Error::invalid(format!(
            "gram of size {n} does not match {} labels",
            labels.len()
        )));
    }
    let kernel = gram
        .kernel
        .ok_or_else(|| Error::invalid("regression needs a gram matrix built from a kernel"))?;
    if let Some((row, col)) = gram.asymmetry() {
        return Err(Error::NotSymmetric { row, col });
    }
    let y = DVector::from_column_slice(labels);
    let unit = gram.trace() / n as f64;
    let y_max = labels.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut last = 0.0;
    for mult in JITTER_LADDER {
        let jitter = mult * unit;
        last = jitter;
        let Some(c) = linalg::cholesky_solve(&gram.entries, jitter, &y) else {
            continue;
        };
        let residual = (&gram.entries * &c - &y).amax();
        if residual <= RESIDUAL_TOL * (1.0 + y_max) {
            log::debug!("kernel fit accepted jitter {jitter:e} (residual {residual:e})");
            return Ok(RegressionModel {
                train_points: gram.points.clone(),
                coefficients: c.iter().copied().collect(),
                kernel,
                jitter_used: jitter,
            });
        }
    }
    Err(Error::JitterExhausted { last_jitter: last })
}

impl RegressionModel {
    pub fn predict(&self, query: &[f64]) -> Result<f64> {
        let mut acc = 0.0;
        for (p, c) in self.train_points.iter().zip(&self.coefficients) {
            acc += self.kernel.eval(query, p)? * c;
        }
        Ok(acc)
    }

    /// Predict on the uniform angle grid, anchoring the exact predictions at
    /// the training inputs.
    pub fn interpolate_grid(&self, grid_size: usize) -> Result<GridFunction> {
        if grid_size < 2 {
            return Err(Error::invalid("grid needs at least 2 points"));
        }
        let values = grid_angles(grid_size)
            .into_iter()
            .map(|b| self.predict(&embed_circle(b)))
            .collect::<Result<Vec<_>>>()?;
        let anchors = self
            .train_points
            .iter()
            .map(|p| Ok((p[1].atan2(p[0]), self.predict(p)?)))
            .collect::<Result<Vec<_>>>()?;
        GridFunction::new(values)?.with_anchors(anchors)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::{sample_dataset, ArchitectureSpec, SamplingScheme};
    use crate::kernel::gram;
    use nalgebra::DMatrix;

    fn identity_gram() -> GramMatrix {
        GramMatrix::from_entries(
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            DMatrix::identity(2, 2),
            Some(Kernel::gaussian(0.5).unwrap()),
        )
    }

    #[test]
    fn identity_system() {
        let m = fit(&identity_gram(), &[1.0, 2.0]).unwrap();
        assert_eq!(m.coefficients, vec![1.0, 2.0]);
        assert_eq!(m.jitter_used, 0.0);
    }

    #[test]
    fn single_point() {
        let k = Kernel::ntk(ArchitectureSpec::resnet(3, 0.1)).unwrap();
        let x = embed_circle(0.3);
        let g = gram(&[x], &k).unwrap();
        let m = fit(&g, &[3.0]).unwrap();
        let expected = 3.0 / k.eval(&x, &x).unwrap();
        assert!((m.coefficients[0] - expected).abs() < 1e-14);
    }

    #[test]
    fn duplicate_points_with_distinct_labels_fail() {
        let k = Kernel::ntk(ArchitectureSpec::mlp(3)).unwrap();
        let x = embed_circle(1.0);
        let g = gram(&[x, x], &k).unwrap();
        assert!(matches!(fit(&g, &[0.0, 1.0]), Err(Error::JitterExhausted { .. })));
    }

    #[test]
    fn asymmetric_and_mismatched_inputs() {
        let mut g = identity_gram();
        g.entries[(0, 1)] = 1e-3;
        assert!(matches!(fit(&g, &[1.0, 2.0]), Err(Error::NotSymmetric { .. })));
        assert!(fit(&identity_gram(), &[1.0]).is_err());
    }

    fn kernels() -> Vec<Kernel> {
        vec![
            Kernel::ntk(ArchitectureSpec::mlp(5)).unwrap(),
            Kernel::ntk(ArchitectureSpec::resnet(5, 0.1)).unwrap(),
            Kernel::gp(ArchitectureSpec::resnet(5, 1.0)).unwrap(),
            Kernel::gaussian(0.5).unwrap(),
        ]
    }

    #[test]
    fn interpolates_training_labels() {
        let d = sample_dataset(&SamplingScheme::uniform(10, 3)).unwrap();
        for k in kernels() {
            let m = fit(&gram(&d.points, &k).unwrap(), &d.labels).unwrap();
            assert_eq!(m.jitter_used, 0.0);
            let y_max = d.labels.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            for (p, y) in d.points.iter().zip(&d.labels) {
                assert!((m.predict(p).unwrap() - y).abs() <= 1e-6 * (1.0 + y_max));
            }
        }
    }

    #[test]
    fn zero_labels_predict_zero() {
        let d = sample_dataset(&SamplingScheme::equispaced(6)).unwrap();
        let m = fit(&gram(&d.points, &kernels()[1]).unwrap(), &[0.0; 6]).unwrap();
        let grid = m.interpolate_grid(64).unwrap();
        assert!(grid.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn scale_invariance() {
        let d = sample_dataset(&SamplingScheme::equispaced(6)).unwrap();
        for k in kernels() {
            let a = fit(&gram(&d.points, &k).unwrap(), &d.labels).unwrap();
            let scaled = k.scaled(100.0).unwrap();
            let b = fit(&gram(&d.points, &scaled).unwrap(), &d.labels).unwrap();
            for t in 0..50 {
                let q = embed_circle(0.13 * t as f64);
                assert!((a.predict(&q).unwrap() - b.predict(&q).unwrap()).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn linearity_in_labels() {
        let d = sample_dataset(&SamplingScheme::uniform(8, 1)).unwrap();
        let k = &kernels()[0];
        let g = gram(&d.points, k).unwrap();
        let y2: Vec<f64> = (0..8).map(|i| (i as f64).sin()).collect();
        let sum: Vec<f64> = d.labels.iter().zip(&y2).map(|(a, b)| a + b).collect();
        let (m1, m2, m12) = (fit(&g, &d.labels).unwrap(), fit(&g, &y2).unwrap(), fit(&g, &sum).unwrap());
        for t in 0..20 {
            let q = embed_circle(0.31 * t as f64);
            let lhs = m12.predict(&q).unwrap();
            let rhs = m1.predict(&q).unwrap() + m2.predict(&q).unwrap();
            assert!((lhs - rhs).abs() < 1e-9);
        }
    }

    #[test]
    fn grid_reproduces_equispaced_labels() {
        let d = sample_dataset(&SamplingScheme::equispaced(6)).unwrap();
        let m = fit(&gram(&d.points, &kernels()[1]).unwrap(), &d.labels).unwrap();
        // a grid size divisible by 6 puts every sample on a grid node
        let grid = m.interpolate_grid(6 * 683).unwrap();
        for (k, y) in d.labels.iter().enumerate() {
            assert!((grid.values()[k * 683] - y).abs() < 1e-5);
        }
        for ((_, v), y) in grid.anchors().iter().zip(&d.labels) {
            assert!((v - y).abs() < 1e-5);
        }
    }

    #[test]
    fn fit_is_deterministic() {
        let d = sample_dataset(&SamplingScheme::uniform(10, 9)).unwrap();
        let g = gram(&d.points, &kernels()[1]).unwrap();
        assert_eq!(fit(&g, &d.labels).unwrap().coefficients, fit(&g, &d.labels).unwrap().coefficients);
    }
}
