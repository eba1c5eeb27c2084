#![allow(dead_code)]

use jamgame::reactive::ReactivePoint;
use jamgame::GameInstance;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Published equilibria for c = d = 1: (sigma2, alpha, beta, xhat0, xhat1).
pub const TABLE_ONE: [(f64, f64, f64, f64, f64); 5] = [
    (1.0, 0.0760, 0.3172, 0.5169, -0.4831),
    (2.0, 0.0350, 0.1572, 0.7030, -0.4338),
    (3.0, 0.0136, 0.0937, 0.7618, -0.4204),
    (4.0, 0.0040, 0.0634, 0.7894, -0.4148),
    (5.0, 0.0, 0.0475, 0.8082, -0.4039),
];

pub fn table_point(row: usize) -> ReactivePoint {
    let (_, a, b, x0, x1) = TABLE_ONE[row];
    ReactivePoint::new([x0, x1], [a, b]).unwrap()
}

pub fn gaussian(var: f64) -> GameInstance {
    GameInstance::gaussian(var, 1.0, 1.0).unwrap()
}

/// Largest per-coordinate distance to `want`, allowing the sign mirror.
pub fn mirror_distance(got: &ReactivePoint, want: &ReactivePoint) -> f64 {
    let dist = |p: &ReactivePoint| {
        [
            p.alpha - want.alpha,
            p.beta - want.beta,
            p.xhat0 - want.xhat0,
            p.xhat1 - want.xhat1,
        ]
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()))
    };
    dist(got).min(dist(&got.mirrored()))
}

pub const FD_STEP: f64 = 1e-5;

pub fn central_difference<F: Fn(f64) -> f64>(f: F, x: f64) -> f64 {
    (f(x + FD_STEP) - f(x - FD_STEP)) / (2.0 * FD_STEP)
}

/// Interior points: symbols in `[-1.5 sigma, 1.5 sigma]`, probabilities in
/// `[0.05, 0.95]`.
pub fn random_interior_points(inst: &GameInstance, n: usize, seed: u64) -> Vec<ReactivePoint> {
    let s = inst.dist.std_dev();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            ReactivePoint::new(
                [rng.random_range(-1.5 * s..1.5 * s), rng.random_range(-1.5 * s..1.5 * s)],
                [rng.random_range(0.05..0.95), rng.random_range(0.05..0.95)],
            )
            .unwrap()
        })
        .collect()
}

/// Gaussian partial moments over `[a, b]` for N(0, s^2): returns
/// (P, E[X 1], E[X^2 1]).
pub fn gaussian_partial_moments(s: f64, a: f64, b: f64) -> (f64, f64, f64) {
    let phi = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let cdf = |z: f64| 0.5 * libm::erfc(-z / std::f64::consts::SQRT_2);
    let (za, zb) = (a / s, b / s);
    let p = cdf(zb) - cdf(za);
    let m1 = s * (phi(za) - phi(zb));
    let zphi = |z: f64| if z.is_finite() { z * phi(z) } else { 0.0 };
    let m2 = s * s * (p + zphi(za) - zphi(zb));
    (p, m1, m2)
}
