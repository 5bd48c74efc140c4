//! Finite-difference and random-tensor helpers for the acceptance suite,
//! independent of the library's gradient path.

#![allow(dead_code)]

use arcnn::tensor::Tensor;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOLERANCE: f64 = 1e-5;

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rand_tensor(rng: &mut ChaCha8Rng, n: usize, c: usize, h: usize, w: usize) -> Tensor<f64> {
    let data = (0..n * c * h * w)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    Tensor::from_vec(n, c, h, w, data).unwrap()
}

/// Random values bounded away from zero so finite differences never cross a
/// PReLU kink.
pub fn rand_tensor_off_zero(
    rng: &mut ChaCha8Rng,
    n: usize,
    c: usize,
    h: usize,
    w: usize,
) -> Tensor<f64> {
    let data = (0..n * c * h * w)
        .map(|_| {
            let v: f64 = rng.random_range(0.01..1.0);
            if rng.random_bool(0.5) {
                v
            } else {
                -v
            }
        })
        .collect();
    Tensor::from_vec(n, c, h, w, data).unwrap()
}

pub fn rand_vec(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

pub fn central_diff(mut eval: impl FnMut(f64) -> f64, x: f64) -> f64 {
    (eval(x + FD_STEP) - eval(x - FD_STEP)) / (2.0 * FD_STEP)
}

/// Assert every analytic derivative against central differences; returns the
/// worst relative error seen.
pub fn check_gradient(
    label: &str,
    params: &[f64],
    analytic: &[f64],
    mut scalar: impl FnMut(usize, f64) -> f64,
) -> f64 {
    assert_eq!(params.len(), analytic.len(), "{label}: length mismatch");
    let mut worst = 0.0f64;
    for k in 0..params.len() {
        let numeric = central_diff(|v| scalar(k, v), params[k]);
        let err = rel_err(numeric, analytic[k]);
        worst = worst.max(err);
        assert!(
            err <= FD_TOLERANCE,
            "{label}[{k}]: numeric {numeric:.10e} vs analytic {:.10e} (rel err {err:.3e})",
            analytic[k]
        );
    }
    worst
}
