//! Procedural grayscale test images: piecewise-smooth content with ramps,
//! blobs, step edges, and mild texture, the kind of material block-DCT
//! quantization visibly mangles. Useful for demos and self-contained tests
//! when no photo corpus is at hand.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::gray::GrayImage;

/// Generate one deterministic pseudo-natural image for a seed.
pub fn natural_image(seed: u64, h: usize, w: usize) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5973_7468);
    let mut img = vec![0.0f64; h * w];

    // Oriented base ramp.
    let theta: f64 = rng.random_range(0.0..std::f64::consts::PI);
    let (ct, st) = (theta.cos(), theta.sin());
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for y in 0..h {
        for x in 0..w {
            let g = ct * x as f64 + st * y as f64;
            lo = lo.min(g);
            hi = hi.max(g);
            img[y * w + x] = g;
        }
    }
    let span = (hi - lo).max(1e-9);
    for v in &mut img {
        *v = 60.0 + 130.0 * (*v - lo) / span;
    }

    // Smooth blobs.
    for _ in 0..rng.random_range(2..5) {
        let cy: f64 = rng.random_range(0.0..h as f64);
        let cx: f64 = rng.random_range(0.0..w as f64);
        let sy: f64 = rng.random_range(h as f64 / 8.0..h as f64 / 2.0);
        let sx: f64 = rng.random_range(w as f64 / 8.0..w as f64 / 2.0);
        let amp: f64 = rng.random_range(-60.0..60.0);
        for y in 0..h {
            for x in 0..w {
                let dy = (y as f64 - cy) / sy;
                let dx = (x as f64 - cx) / sx;
                img[y * w + x] += amp * (-(dy * dy + dx * dx)).exp();
            }
        }
    }

    // Half-plane step edges.
    for _ in 0..rng.random_range(2..5) {
        let th: f64 = rng.random_range(0.0..std::f64::consts::PI);
        let off: f64 = rng.random_range(0.2..0.8) * (th.cos() * w as f64 + th.sin() * h as f64);
        let amp: f64 = rng.random_range(-50.0..50.0);
        for y in 0..h {
            for x in 0..w {
                if th.cos() * x as f64 + th.sin() * y as f64 > off {
                    img[y * w + x] += amp;
                }
            }
        }
    }

    // Rectangles.
    for _ in 0..rng.random_range(1..4) {
        let y0 = rng.random_range(0..h.saturating_sub(16).max(1));
        let x0 = rng.random_range(0..w.saturating_sub(16).max(1));
        let hh = rng.random_range(8..h / 2 + 9);
        let ww = rng.random_range(8..w / 2 + 9);
        let amp: f64 = rng.random_range(-40.0..40.0);
        for y in y0..(y0 + hh).min(h) {
            for x in x0..(x0 + ww).min(w) {
                img[y * w + x] += amp;
            }
        }
    }

    // Mild texture: 3x3 box-blurred white noise.
    let noise: Vec<f64> = (0..h * w).map(|_| rng.random_range(-1.0..1.0)).collect();
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            let mut count = 0.0;
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let ny = y as i64 + dy;
                    let nx = x as i64 + dx;
                    if ny >= 0 && ny < h as i64 && nx >= 0 && nx < w as i64 {
                        acc += noise[ny as usize * w + nx as usize];
                        count += 1.0;
                    }
                }
            }
            img[y * w + x] += 6.0 * acc / count;
        }
    }

    // Quantize to 8-bit levels like a real photo.
    GrayImage::new(
        h,
        w,
        img.iter().map(|&v| v.clamp(0.0, 255.0).round() as f32).collect(),
    )
    .expect("generator dimensions are positive")
}

/// A batch of [`natural_image`]s with consecutive seeds.
pub fn natural_corpus(seed: u64, count: usize, h: usize, w: usize) -> Vec<GrayImage> {
    (0..count as u64).map(|i| natural_image(seed + i, h, w)).collect()
}
