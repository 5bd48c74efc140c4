//! Image-quality metrics: PSNR, unweighted 8x8-window SSIM, and PSNR-B with
//! its blocking-effect factor. All sums run in double precision.

use crate::error::{Error, Result};
use crate::gray::GrayImage;

/// Block size used by both the SSIM windows and the PSNR-B boundary sets.
const BLOCK: usize = 8;

/// Value substituted for infinite PSNR in text output.
pub const PSNR_CAP: f64 = 99.99;

/// The three scores for one (reference, test) pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QualityReport {
    pub psnr: f64,
    pub ssim: f64,
    pub psnr_b: f64,
}

impl QualityReport {
    pub fn measure(reference: &GrayImage, test: &GrayImage) -> Result<Self> {
        Ok(Self {
            psnr: psnr(reference, test)?,
            ssim: ssim(reference, test)?,
            psnr_b: psnr_b(reference, test)?,
        })
    }

    /// CSV cell values with infinite PSNR capped at 99.99.
    pub fn csv_row(&self, name: &str) -> String {
        format!(
            "{name},{:.4},{:.6},{:.4}",
            cap(self.psnr),
            self.ssim,
            cap(self.psnr_b)
        )
    }
}

pub fn cap(psnr: f64) -> f64 {
    if psnr.is_finite() {
        psnr.min(PSNR_CAP)
    } else {
        PSNR_CAP
    }
}

fn require_same_size(a: &GrayImage, b: &GrayImage) -> Result<()> {
    if a.h() != b.h() || a.w() != b.w() {
        return Err(Error::SizeMismatch {
            a_h: a.h(),
            a_w: a.w(),
            b_h: b.h(),
            b_w: b.w(),
        });
    }
    Ok(())
}

fn mse(a: &GrayImage, b: &GrayImage) -> f64 {
    let sum: f64 = a
        .samples()
        .iter()
        .zip(b.samples())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    sum / (a.h() * a.w()) as f64
}

/// Peak signal-to-noise ratio, 10*log10(255^2 / MSE). Identical images give
/// +infinity.
pub fn psnr(reference: &GrayImage, test: &GrayImage) -> Result<f64> {
    require_same_size(reference, test)?;
    let m = mse(reference, test);
    if m == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (255.0f64 * 255.0 / m).log10())
}

/// Unweighted structural similarity over sliding 8x8 windows (stride 1),
/// C1 = (0.01*255)^2 and C2 = (0.03*255)^2, uniform window averaging.
pub fn ssim(reference: &GrayImage, test: &GrayImage) -> Result<f64> {
    require_same_size(reference, test)?;
    let (h, w) = (reference.h(), reference.w());
    if h < BLOCK || w < BLOCK {
        return Err(Error::ImageTooSmall { h, w });
    }
    const C1: f64 = (0.01 * 255.0) * (0.01 * 255.0);
    const C2: f64 = (0.03 * 255.0) * (0.03 * 255.0);
    let n = (BLOCK * BLOCK) as f64;
    let mut total = 0.0;
    let mut windows = 0u64;
    for y0 in 0..=(h - BLOCK) {
        for x0 in 0..=(w - BLOCK) {
            let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for y in y0..y0 + BLOCK {
                for x in x0..x0 + BLOCK {
                    let a = reference.at(y, x) as f64;
                    let b = test.at(y, x) as f64;
                    sx += a;
                    sy += b;
                    sxx += a * a;
                    syy += b * b;
                    sxy += a * b;
                }
            }
            let mx = sx / n;
            let my = sy / n;
            let vx = sxx / n - mx * mx;
            let vy = syy / n - my * my;
            let cov = sxy / n - mx * my;
            total += ((2.0 * mx * my + C1) * (2.0 * cov + C2))
                / ((mx * mx + my * my + C1) * (vx + vy + C2));
            windows += 1;
        }
    }
    Ok(total / windows as f64)
}

/// Blocking-effect factor of a single image. `D_B` is the mean squared
/// difference over adjacent pixel pairs straddling an 8x8 block boundary,
/// `D_C` the same over all other adjacent pairs; the excess is weighted by
/// log2(8)/log2(min(h, w)) when positive.
pub fn blocking_effect_factor(test: &GrayImage) -> Result<f64> {
    let (h, w) = (test.h(), test.w());
    if h < BLOCK || w < BLOCK {
        return Err(Error::ImageTooSmall { h, w });
    }
    let mut boundary_sum = 0.0f64;
    let mut boundary_n = 0u64;
    let mut interior_sum = 0.0f64;
    let mut interior_n = 0u64;
    // Horizontal neighbours (x, x+1): boundary when x+1 is a multiple of 8.
    for y in 0..h {
        for x in 0..w - 1 {
            let d = test.at(y, x) as f64 - test.at(y, x + 1) as f64;
            if (x + 1) % BLOCK == 0 {
                boundary_sum += d * d;
                boundary_n += 1;
            } else {
                interior_sum += d * d;
                interior_n += 1;
            }
        }
    }
    // Vertical neighbours (y, y+1).
    for y in 0..h - 1 {
        for x in 0..w {
            let d = test.at(y, x) as f64 - test.at(y + 1, x) as f64;
            if (y + 1) % BLOCK == 0 {
                boundary_sum += d * d;
                boundary_n += 1;
            } else {
                interior_sum += d * d;
                interior_n += 1;
            }
        }
    }
    let d_b = if boundary_n > 0 {
        boundary_sum / boundary_n as f64
    } else {
        0.0
    };
    let d_c = if interior_n > 0 {
        interior_sum / interior_n as f64
    } else {
        0.0
    };
    if d_b > d_c {
        let eta = (BLOCK as f64).log2() / (h.min(w) as f64).log2();
        Ok(eta * (d_b - d_c))
    } else {
        Ok(0.0)
    }
}

/// PSNR with the blocking-effect factor of the test image added to the MSE:
/// 10*log10(255^2 / (MSE + BEF)).
pub fn psnr_b(reference: &GrayImage, test: &GrayImage) -> Result<f64> {
    require_same_size(reference, test)?;
    let denom = mse(reference, test) + blocking_effect_factor(test)?;
    if denom == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (255.0f64 * 255.0 / denom).log10())
}
