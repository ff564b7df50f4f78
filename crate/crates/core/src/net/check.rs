//! Finite-difference oracle for the explicit gradients.

use rand::Rng;
use serde::Serialize;

use super::forward::{forward_batch, BatchCache};
use super::{grad_params, ParamVector};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheck {
    pub coordinates: usize,
    pub max_rel_error: f64,
    pub worst_index: usize,
    /// Coordinates whose step had to shrink to keep every ReLU on its side.
    pub refined: usize,
}

fn pattern(c: &BatchCache) -> Vec<bool> {
    c.gs.iter().flat_map(|g| g.iter().map(|v| *v > 0.0)).collect()
}

/// Compare [`grad_params`] with central differences on `coords` sampled
/// coordinates: one per block, the rest uniform over the whole vector.
///
/// The step is `1e-4 max(1, |theta_i|)`. If either side flips a ReLU the
/// difference quotient no longer measures the local derivative, so the step
/// shrinks tenfold (up to four times). The relative error of a coordinate is
/// `|g - fd| / max(|g|, |fd|, 1e-6 max_i |g_i|)`.
pub fn gradient_check(p: &ParamVector, x: &[f64], coords: usize, seed: u64) -> Result<GradCheck> {
    compare(p, x, &grad_params(p, x)?, coords, seed)
}

fn compare(p: &ParamVector, x: &[f64], grad: &[f64], coords: usize, seed: u64) -> Result<GradCheck> {
    if coords == 0 {
        return Err(Error::invalid("gradient check needs at least one coordinate"));
    }
    let base = pattern(&forward_batch(p, &[x])?);
    let scale = grad.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = 1e-6 * scale;

    let mut r = rng::from_seed(seed);
    let mut idx: Vec<usize> = p.layout().iter().map(|b| b.offset + r.random_range(0..b.len())).collect();
    idx.truncate(coords);
    while idx.len() < coords {
        idx.push(r.random_range(0..p.len()));
    }

    let mut q = p.clone();
    let mut eval = |i: usize, v: f64| -> Result<(f64, bool)> {
        q.data[i] = v;
        let c = forward_batch(&q, &[x])?;
        q.data[i] = p.data[i];
        Ok((c.outputs[0], pattern(&c) == base))
    };

    let (mut max_rel, mut worst, mut refined) = (0.0f64, idx[0], 0);
    for &i in &idx {
        let theta = p.data[i];
        let mut h = 1e-4 * theta.abs().max(1.0);
        let mut fd = 0.0;
        for attempt in 0..5 {
            let (plus, same_p) = eval(i, theta + h)?;
            let (minus, same_m) = eval(i, theta - h)?;
            fd = (plus - minus) / (2.0 * h);
            if same_p && same_m {
                break;
            }
            if attempt == 0 {
                refined += 1;
            }
            h /= 10.0;
        }
        let g = grad[i];
        let denom = g.abs().max(fd.abs()).max(floor);
        let rel = if denom == 0.0 { 0.0 } else { (g - fd).abs() / denom };
        if rel > max_rel {
            max_rel = rel;
            worst = i;
        }
    }
    Ok(GradCheck { coordinates: idx.len(), max_rel_error: max_rel, worst_index: worst, refined })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::{embed_circle, ArchitectureSpec};
    use crate::net::{init_params, InitScheme};

    #[test]
    fn explicit_gradients_pass() {
        for spec in [ArchitectureSpec::mlp(3), ArchitectureSpec::resnet(3, 0.5)] {
            let p = init_params(&spec, 24, InitScheme::NtkGaussian, 2).unwrap();
            let c = gradient_check(&p, &embed_circle(1.1), 60, 3).unwrap();
            assert_eq!(c.coordinates, 60);
            assert!(c.max_rel_error < 1e-4, "{c:?}");
        }
    }

    #[test]
    fn a_wrong_gradient_is_caught() {
        let p = init_params(&ArchitectureSpec::resnet(2, 0.5), 8, InitScheme::NtkGaussian, 1).unwrap();
        let x = embed_circle(2.0);
        let mut g = grad_params(&p, &x).unwrap();
        let c = compare(&p, &x, &g, 30, 0).unwrap();
        assert!(c.max_rel_error < 1e-4);
        // a 0.1% scale error
        for v in &mut g {
            *v *= 1.001;
        }
        let c = compare(&p, &x, &g, 30, 0).unwrap();
        assert!(c.max_rel_error > 5e-4, "{c:?}");
    }

    #[test]
    fn zero_coordinates_is_an_error() {
        let p = init_params(&ArchitectureSpec::mlp(1), 4, InitScheme::NtkGaussian, 0).unwrap();
        assert!(gradient_check(&p, &[1.0, 0.0], 0, 0).is_err());
    }
}
