#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tfac_core::TimeMesh;

/// Tanh-sinh quadrature of `f` over `[a, b]`. The integrand receives the
/// point together with its distances to both endpoints, so singular factors
/// like `(b - s)^(-alpha)` can be evaluated without cancellation.
pub fn tanh_sinh(a: f64, b: f64, f: impl Fn(f64, f64, f64) -> f64) -> f64 {
    let half = 0.5 * (b - a);
    let h = 1.0 / 64.0;
    let mut sum = 0.0;
    let kmax = (6.5 / h) as i64;
    for k in -kmax..=kmax {
        let u = k as f64 * h;
        let v = 0.5 * std::f64::consts::PI * u.sinh();
        let weight = 0.5 * std::f64::consts::PI * u.cosh() / v.cosh().powi(2);
        // Distances to a and b: (b-a) / (1 + e^{-2v}) and (b-a) / (1 + e^{2v}).
        let da = (b - a) / (1.0 + (-2.0 * v).exp());
        let db = (b - a) / (1.0 + (2.0 * v).exp());
        if da <= 0.0 || db <= 0.0 || weight == 0.0 {
            continue;
        }
        sum += weight * f(a + da, da, db);
    }
    sum * half * h
}

/// Steps with log-uniform sizes spanning two decades.
pub fn random_steps_mesh(rng: &mut ChaCha8Rng, n: usize) -> TimeMesh {
    let steps: Vec<f64> = (0..n).map(|_| 10f64.powf(rng.random_range(-2.0..0.0))).collect();
    TimeMesh::from_steps(&steps).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
