//! Layer-wise GP and NTK recursions for the infinite-width limits.
//!
//! Each recursion carries the covariance triple `(K(x,x), K(x,y), K(y,y))`
//! jointly, so both diagonals are available at every layer. Index `l - 1` of
//! the returned layer sequence holds `K^(l)` for `l = 1..=L+1`.

use crate::arch::{ArchKind, ArchitectureSpec};
use crate::error::{Error, Result};

use super::relu::{t_relu, tdot_relu, Cov2};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

fn input_layer(x: &[f64], y: &[f64], spec: &ArchitectureSpec) -> Result<Cov2> {
    spec.validate()?;
    if x.len() != spec.input_dim || y.len() != spec.input_dim {
        return Err(Error::invalid(format!(
            "points have dimension {} and {}, architecture expects {}",
            x.len(),
            y.len(),
            spec.input_dim
        )));
    }
    let c = spec.sigma_w * spec.sigma_w / spec.input_dim as f64;
    Ok(Cov2::new(c * dot(x, x), c * dot(x, y), c * dot(y, y)))
}

/// Apply `T` to the whole triple: diagonals see a perfectly correlated pair.
fn t_triple(k: &Cov2) -> Result<Cov2> {
    Ok(Cov2::new(
        t_relu(&Cov2::new(k.xx, k.xx, k.xx))?,
        t_relu(k)?,
        t_relu(&Cov2::new(k.yy, k.yy, k.yy))?,
    ))
}

fn require(spec: &ArchitectureSpec, kind: ArchKind) -> Result<()> {
    if spec.kind != kind {
        return Err(Error::ArchitectureMismatch(format!(
            "expected a {kind} architecture, got {}",
            spec.kind
        )));
    }
    Ok(())
}

/// `K^(1) = sigma_w^2/d x.y`, `K^(l+1) = sigma_w^2 T(K^(l))`.
pub fn gp_layers_mlp(x: &[f64], y: &[f64], spec: &ArchitectureSpec) -> Result<Vec<Cov2>> {
    require(spec, ArchKind::Mlp)?;
    let mut layers = vec![input_layer(x, y, spec)?];
    let s2 = spec.sigma_w * spec.sigma_w;
    for _ in 0..spec.depth {
        let t = t_triple(layers.last().unwrap())?;
        layers.push(Cov2::new(s2 * t.xx, s2 * t.xy, s2 * t.yy));
    }
    Ok(layers)
}

/// `K^(l+1) = K^(l) + alpha^2 sigma_v^2 sigma_w^2 T(K^(l))`.
pub fn gp_layers_resnet(x: &[f64], y: &[f64], spec: &ArchitectureSpec) -> Result<Vec<Cov2>> {
    require(spec, ArchKind::ResNet)?;
    let mut layers = vec![input_layer(x, y, spec)?];
    let c = spec.alpha * spec.alpha * spec.sigma_v * spec.sigma_v * spec.sigma_w * spec.sigma_w;
    for _ in 0..spec.depth {
        let k = *layers.last().unwrap();
        let t = t_triple(&k)?;
        layers.push(Cov2::new(k.xx + c * t.xx, k.xy + c * t.xy, k.yy + c * t.yy));
    }
    Ok(layers)
}

pub fn gp_layers(x: &[f64], y: &[f64], spec: &ArchitectureSpec) -> Result<Vec<Cov2>> {
    match spec.kind {
        ArchKind::Mlp => gp_layers_mlp(x, y, spec),
        ArchKind::ResNet => gp_layers_resnet(x, y, spec),
    }
}

/// `Theta^(1) = K^(1)`, `Theta^(l+1) = K^(l+1) + Theta^(l) sigma_w^2 Tdot(K^(l))`.
pub fn ntk_mlp(x: &[f64], y: &[f64], spec: &ArchitectureSpec) -> Result<f64> {
    let layers = gp_layers_mlp(x, y, spec)?;
    let s2 = spec.sigma_w * spec.sigma_w;
    let mut theta = layers[0].xy;
    for l in 1..=spec.depth {
        theta = layers[l].xy + theta * s2 * tdot_relu(&layers[l - 1])?;
    }
    Ok(theta)
}

/// ResNet NTK.
///
/// ```text
/// Theta = K^(L+1) + Pi^(0) K^(1)
///       + alpha^2 sum_{l=1..L} Pi^(l) (Sigma^(l+1) + K^(l) Sigmadot^(l+1))
/// Sigma^(l+1)    = sigma_v^2 sigma_w^2 T(K^(l))
/// Sigmadot^(l+1) = sigma_v^2 sigma_w^2 Tdot(K^(l))
/// Pi^(L) = 1,  Pi^(l) = Pi^(l+1) (1 + alpha^2 Sigmadot^(l+2))
/// ```
pub fn ntk_resnet(x: &[f64], y: &[f64], spec: &ArchitectureSpec) -> Result<f64> {
    let layers = gp_layers_resnet(x, y, spec)?;
    let depth = spec.depth;
    let a2 = spec.alpha * spec.alpha;
    let vw = spec.sigma_v * spec.sigma_v * spec.sigma_w * spec.sigma_w;

    // sigma[l] = Sigma^(l+1), sigma_dot[l] = Sigmadot^(l+1), both built from K^(l), l = 1..=L
    let mut sigma = vec![0.0; depth + 1];
    let mut sigma_dot = vec![0.0; depth + 1];
    for l in 1..=depth {
        let k = &layers[l - 1];
        sigma[l] = vw * t_relu(k)?;
        sigma_dot[l] = vw * tdot_relu(k)?;
    }

    let mut pi = vec![1.0; depth + 1];
    for l in (0..depth).rev() {
        pi[l] = pi[l + 1] * (1.0 + a2 * sigma_dot[l + 1]);
    }

    let k1 = layers[0].xy;
    let mut theta = layers[depth].xy + pi[0] * k1;
    let mut residual = 0.0;
    for l in 1..=depth {
        residual += pi[l] * (sigma[l] + layers[l - 1].xy * sigma_dot[l]);
    }
    theta += a2 * residual;
    Ok(theta)
}

pub fn ntk(x: &[f64], y: &[f64], spec: &ArchitectureSpec) -> Result<f64> {
    match spec.kind {
        ArchKind::Mlp => ntk_mlp(x, y, spec),
        ArchKind::ResNet => ntk_resnet(x, y, spec),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::embed_circle;
    use proptest::prelude::*;

    const E1: [f64; 2] = [1.0, 0.0];
    const E2: [f64; 2] = [0.0, 1.0];

    #[test]
    fn mlp_first_layer() {
        let layers = gp_layers_mlp(&E1, &E1, &ArchitectureSpec::mlp(1)).unwrap();
        assert_eq!(layers[0], Cov2::new(0.5, 0.5, 0.5));
        let layers = gp_layers_mlp(&E1, &E2, &ArchitectureSpec::mlp(1)).unwrap();
        assert_eq!(layers[0].xy, 0.0);
    }

    #[test]
    fn mlp_second_layer_by_hand() {
        let layers = gp_layers_mlp(&E1, &E1, &ArchitectureSpec::mlp(2)).unwrap();
        assert_eq!(layers.len(), 3);
        assert!((layers[1].xx - 0.25).abs() < 1e-15);
    }

    #[test]
    fn resnet_zero_alpha_is_linear() {
        let x = embed_circle(0.3);
        let y = embed_circle(1.7);
        let spec = ArchitectureSpec::resnet(7, 0.0);
        let layers = gp_layers_resnet(&x, &y, &spec).unwrap();
        assert_eq!(layers[7], layers[0]);
        assert!((layers[7].xy - 0.5 * (0.3f64 - 1.7).cos()).abs() < 1e-15);
    }

    #[test]
    fn resnet_one_layer_by_hand() {
        let spec = ArchitectureSpec::resnet(1, 0.1);
        let layers = gp_layers_resnet(&E1, &E1, &spec).unwrap();
        assert!((layers[1].xx - 0.5025).abs() < 1e-15);
        let layers = gp_layers_resnet(&E1, &E2, &spec).unwrap();
        // 0.01 * T(0.5, 0, 0.5) = 0.01 * 0.5 / (2 pi)
        let expected = 0.01 * 0.5 / (2.0 * std::f64::consts::PI);
        assert!((layers[1].xy - expected).abs() < 1e-17);
        assert!((layers[1].xy - 7.9577e-4).abs() < 1e-8);
    }

    #[test]
    fn resnet_ntk_zero_alpha() {
        let spec = ArchitectureSpec::resnet(4, 0.0);
        assert_eq!(ntk_resnet(&E1, &E1, &spec).unwrap(), 1.0);
        assert_eq!(ntk_resnet(&E1, &E2, &spec).unwrap(), 0.0);
    }

    #[test]
    fn mlp_ntk_base_case() {
        // depth 1: Theta^(2) = K^(2) + K^(1) Tdot; orthogonal inputs give K^(1) = 0
        let spec = ArchitectureSpec::mlp(1);
        let theta = ntk_mlp(&E1, &E2, &spec).unwrap();
        let k2 = gp_layers_mlp(&E1, &E2, &spec).unwrap()[1].xy;
        assert_eq!(theta, k2);
    }

    #[test]
    fn resnet_ntk_depth_one_by_hand() {
        // L = 1: Pi^(1) = 1, Pi^(0) = 1 + a^2 Sigmadot^(2)
        let (a, x, y) = (0.3, embed_circle(0.2), embed_circle(1.1));
        let spec = ArchitectureSpec::resnet(1, a);
        let k1 = Cov2::new(0.5, 0.5 * (0.2f64 - 1.1).cos(), 0.5);
        let t = t_relu(&k1).unwrap();
        let td = tdot_relu(&k1).unwrap();
        let k2 = k1.xy + a * a * t;
        let expected = k2 + (1.0 + a * a * td) * k1.xy + a * a * (t + k1.xy * td);
        assert!((ntk_resnet(&x, &y, &spec).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn wrong_architecture_is_rejected() {
        assert!(ntk_mlp(&E1, &E1, &ArchitectureSpec::resnet(2, 0.1)).is_err());
        assert!(gp_layers_resnet(&E1, &E1, &ArchitectureSpec::mlp(2)).is_err());
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        assert!(ntk(&[1.0, 0.0, 0.0], &E1, &ArchitectureSpec::mlp(2)).is_err());
    }

    #[test]
    fn resnet_diagonal_is_geometric() {
        for &(alpha, sv, sw) in &[(0.1, 1.0, 1.0), (0.7, 1.3, 0.8), (1.0, 1.0, 1.0)] {
            let spec = ArchitectureSpec::resnet(12, alpha).with_sigmas(sw, sv);
            let layers = gp_layers_resnet(&E1, &E1, &spec).unwrap();
            let growth = 1.0 + alpha * alpha * sv * sv * sw * sw / 2.0;
            let mut expected = sw * sw / 2.0;
            for k in &layers {
                assert!((k.xx - expected).abs() <= 1e-14 * expected, "{} vs {expected}", k.xx);
                expected *= growth;
            }
        }
    }

    proptest! {
        #[test]
        fn rotation_invariance(a in -3.1f64..3.1, b in -3.1f64..3.1, r in -3.1f64..3.1,
                               alpha in 0.0f64..1.5, depth in 1usize..8) {
            for spec in [ArchitectureSpec::mlp(depth), ArchitectureSpec::resnet(depth, alpha)] {
                let k = ntk(&embed_circle(a), &embed_circle(b), &spec).unwrap();
                let kr = ntk(&embed_circle(a + r), &embed_circle(b + r), &spec).unwrap();
                prop_assert!((k - kr).abs() <= 1e-10);
            }
        }

        #[test]
        fn symmetry_and_dominance(a in -3.1f64..3.1, b in -3.1f64..3.1,
                                  alpha in 0.0f64..1.5, depth in 1usize..10) {
            for spec in [ArchitectureSpec::mlp(depth), ArchitectureSpec::resnet(depth, alpha)] {
                let (x, y) = (embed_circle(a), embed_circle(b));
                prop_assert_eq!(ntk(&x, &y, &spec).unwrap(), ntk(&y, &x, &spec).unwrap());
                let diag = ntk(&x, &x, &spec).unwrap();
                let k = gp_layers(&x, &x, &spec).unwrap()[depth].xx;
                prop_assert!(diag >= k && k > 0.0);
            }
        }
    }
}
