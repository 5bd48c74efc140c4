//! Shared test oracles, independent of the library's convolution path:
//! direct-summation forward references and central finite differences.

#![allow(dead_code)]

use arcnn::layers::ConvParams;
use arcnn::tensor::Tensor;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Direct-summation convolution: quadruple loop over output positions and
/// filter taps, zero padding outside the borders.
pub fn naive_conv(input: &Tensor<f64>, p: &ConvParams<f64>) -> Tensor<f64> {
    assert!(!p.transposed);
    let (n, c, h, w) = input.shape();
    assert_eq!(c, p.in_channels);
    let out_h = (h + 2 * p.pad - p.filter) / p.stride + 1;
    let out_w = (w + 2 * p.pad - p.filter) / p.stride + 1;
    let mut out = Tensor::zeros(n, p.out_channels, out_h, out_w).unwrap();
    let f = p.filter;
    for i in 0..n {
        for oc in 0..p.out_channels {
            for oy in 0..out_h {
                for ox in 0..out_w {
                    let mut acc = p.biases[oc];
                    for ic in 0..c {
                        for ky in 0..f {
                            for kx in 0..f {
                                let iy = (oy * p.stride + ky) as isize - p.pad as isize;
                                let ix = (ox * p.stride + kx) as isize - p.pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                let wv = p.weights[((oc * c + ic) * f + ky) * f + kx];
                                acc += wv * input.at(i, ic, iy as usize, ix as usize);
                            }
                        }
                    }
                    *out.at_mut(i, oc, oy, ox) = acc;
                }
            }
        }
    }
    out
}

/// Direct scatter-add transposed convolution with (in, out, f, f) weights
/// and output cropping by `pad`.
pub fn naive_deconv(input: &Tensor<f64>, p: &ConvParams<f64>) -> Tensor<f64> {
    assert!(p.transposed);
    let (n, c, h, w) = input.shape();
    assert_eq!(c, p.in_channels);
    let out_h = p.stride * (h - 1) + p.filter - 2 * p.pad;
    let out_w = p.stride * (w - 1) + p.filter - 2 * p.pad;
    let mut out = Tensor::zeros(n, p.out_channels, out_h, out_w).unwrap();
    let f = p.filter;
    for i in 0..n {
        for oc in 0..p.out_channels {
            for oy in 0..out_h {
                for ox in 0..out_w {
                    *out.at_mut(i, oc, oy, ox) = p.biases[oc];
                }
            }
        }
        for ic in 0..c {
            for iy in 0..h {
                for ix in 0..w {
                    let v = input.at(i, ic, iy, ix);
                    for oc in 0..p.out_channels {
                        for ky in 0..f {
                            for kx in 0..f {
                                let oy = (iy * p.stride + ky) as isize - p.pad as isize;
                                let ox = (ix * p.stride + kx) as isize - p.pad as isize;
                                if oy < 0 || ox < 0 || oy >= out_h as isize || ox >= out_w as isize
                                {
                                    continue;
                                }
                                let wv = p.weights[((ic * p.out_channels + oc) * f + ky) * f + kx];
                                *out.at_mut(i, oc, oy as usize, ox as usize) += wv * v;
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

pub fn rand_tensor(rng: &mut ChaCha8Rng, n: usize, c: usize, h: usize, w: usize) -> Tensor<f64> {
    let data = (0..n * c * h * w)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    Tensor::from_vec(n, c, h, w, data).unwrap()
}

/// Random values bounded away from zero, for inputs that feed a PReLU.
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

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOLERANCE: f64 = 1e-5;

/// Relative error with an absolute floor for near-zero pairs.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Central finite difference of a scalar function at x along one coordinate,
/// implemented by mutating a copy of the parameter vector.
pub fn central_diff(mut eval: impl FnMut(f64) -> f64, x: f64) -> f64 {
    (eval(x + FD_STEP) - eval(x - FD_STEP)) / (2.0 * FD_STEP)
}

/// Check each analytic derivative against central differences of `scalar`,
/// where `scalar(k, v)` evaluates the objective with parameter `k` set to
/// `v` and `params[k]` is the evaluation point.
pub fn check_gradient(
    label: &str,
    params: &[f64],
    analytic: &[f64],
    mut scalar: impl FnMut(usize, f64) -> f64,
) {
    assert_eq!(params.len(), analytic.len(), "{label}: length mismatch");
    for k in 0..params.len() {
        let numeric = central_diff(|v| scalar(k, v), params[k]);
        let err = rel_err(numeric, analytic[k]);
        assert!(
            err <= FD_TOLERANCE,
            "{label}[{k}]: numeric {numeric:.10e} vs analytic {:.10e} (rel err {err:.3e})",
            analytic[k]
        );
    }
}
