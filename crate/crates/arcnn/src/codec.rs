//! Compression-artifact synthesis: block-DCT luminance degradation with a
//! quality-scaled quantization table, plus the rescale-then-compress
//! pipeline.
//!
//! The simulator quantizes and dequantizes DCT coefficients without entropy
//! coding, which is lossless and contributes nothing to the artifacts.

use crate::error::{Error, Result};
use crate::gray::{scale_by, GrayImage};

pub const BLOCK: usize = 8;

/// Standard luminance quantization table, in row-major order.
const LUMA_TABLE: [f64; 64] = [
    16.0, 11.0, 10.0, 16.0, 24.0, 40.0, 51.0, 61.0, //
    12.0, 12.0, 14.0, 19.0, 26.0, 58.0, 60.0, 55.0, //
    14.0, 13.0, 16.0, 24.0, 40.0, 57.0, 69.0, 56.0, //
    14.0, 17.0, 22.0, 29.0, 51.0, 87.0, 80.0, 62.0, //
    18.0, 22.0, 37.0, 56.0, 68.0, 109.0, 103.0, 77.0, //
    24.0, 35.0, 55.0, 64.0, 81.0, 104.0, 113.0, 92.0, //
    49.0, 64.0, 78.0, 87.0, 103.0, 121.0, 120.0, 101.0, //
    72.0, 92.0, 95.0, 98.0, 112.0, 100.0, 103.0, 99.0,
];

/// Codec-simulator parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DegradeConfig {
    /// JPEG-style quality factor in [1, 100]; lower is coarser.
    pub quality: u32,
    /// Optional pre-compression downscale factor in (0, 1].
    pub rescale: Option<f64>,
}

impl DegradeConfig {
    pub fn new(quality: u32) -> Result<Self> {
        let cfg = Self {
            quality,
            rescale: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_rescale(quality: u32, rescale: f64) -> Result<Self> {
        let cfg = Self {
            quality,
            rescale: Some(rescale),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.quality < 1 || self.quality > 100 {
            return Err(Error::BadQuality(self.quality));
        }
        if let Some(r) = self.rescale {
            if !(r > 0.0 && r <= 1.0) {
                return Err(Error::BadRescale(r));
            }
        }
        Ok(())
    }
}

/// Quality-scaled table: scale = 5000/q for q < 50 else 200 - 2q, entry =
/// clamp(floor((Q * scale + 50) / 100), 1, 255).
pub fn scaled_table(quality: u32) -> [f64; 64] {
    let scale = if quality < 50 {
        5000.0 / quality as f64
    } else {
        200.0 - 2.0 * quality as f64
    };
    let mut table = [0.0; 64];
    for (t, q) in table.iter_mut().zip(LUMA_TABLE) {
        *t = ((q * scale + 50.0) / 100.0).floor().clamp(1.0, 255.0);
    }
    table
}

/// Orthonormal 8x8 DCT-II basis matrix.
fn dct_basis() -> [[f64; BLOCK]; BLOCK] {
    let mut c = [[0.0; BLOCK]; BLOCK];
    for (u, row) in c.iter_mut().enumerate() {
        let alpha = if u == 0 {
            (1.0 / BLOCK as f64).sqrt()
        } else {
            (2.0 / BLOCK as f64).sqrt()
        };
        for (i, v) in row.iter_mut().enumerate() {
            *v = alpha
                * ((2.0 * i as f64 + 1.0) * u as f64 * std::f64::consts::PI
                    / (2.0 * BLOCK as f64))
                    .cos();
        }
    }
    c
}

fn forward_dct(block: &[f64; 64], basis: &[[f64; BLOCK]; BLOCK]) -> [f64; 64] {
    // C * B * C^T, separable.
    let mut tmp = [0.0; 64];
    for u in 0..BLOCK {
        for j in 0..BLOCK {
            let mut acc = 0.0;
            for i in 0..BLOCK {
                acc += basis[u][i] * block[i * BLOCK + j];
            }
            tmp[u * BLOCK + j] = acc;
        }
    }
    let mut out = [0.0; 64];
    for u in 0..BLOCK {
        for v in 0..BLOCK {
            let mut acc = 0.0;
            for j in 0..BLOCK {
                acc += tmp[u * BLOCK + j] * basis[v][j];
            }
            out[u * BLOCK + v] = acc;
        }
    }
    out
}

fn inverse_dct(coeffs: &[f64; 64], basis: &[[f64; BLOCK]; BLOCK]) -> [f64; 64] {
    // C^T * F * C.
    let mut tmp = [0.0; 64];
    for i in 0..BLOCK {
        for v in 0..BLOCK {
            let mut acc = 0.0;
            for u in 0..BLOCK {
                acc += basis[u][i] * coeffs[u * BLOCK + v];
            }
            tmp[i * BLOCK + v] = acc;
        }
    }
    let mut out = [0.0; 64];
    for i in 0..BLOCK {
        for j in 0..BLOCK {
            let mut acc = 0.0;
            for v in 0..BLOCK {
                acc += tmp[i * BLOCK + v] * basis[v][j];
            }
            out[i * BLOCK + j] = acc;
        }
    }
    out
}

fn round_half_away(v: f64) -> f64 {
    v.signum() * (v.abs() + 0.5).floor()
}

/// Pad to a multiple of the block size by edge replication.
fn pad_to_blocks(img: &GrayImage) -> (Vec<f64>, usize, usize) {
    let (h, w) = (img.h(), img.w());
    let ph = h.div_ceil(BLOCK) * BLOCK;
    let pw = w.div_ceil(BLOCK) * BLOCK;
    let mut data = vec![0.0f64; ph * pw];
    for y in 0..ph {
        let sy = y.min(h - 1);
        for x in 0..pw {
            let sx = x.min(w - 1);
            data[y * pw + x] = img.at(sy, sx) as f64;
        }
    }
    (data, ph, pw)
}

fn block_pipeline(img: &GrayImage, table: Option<&[f64; 64]>, round_output: bool) -> GrayImage {
    let basis = dct_basis();
    let (padded, ph, pw) = pad_to_blocks(img);
    let mut out = vec![0.0f64; ph * pw];
    for by in (0..ph).step_by(BLOCK) {
        for bx in (0..pw).step_by(BLOCK) {
            let mut block = [0.0f64; 64];
            for y in 0..BLOCK {
                for x in 0..BLOCK {
                    block[y * BLOCK + x] = padded[(by + y) * pw + bx + x] - 128.0;
                }
            }
            let mut coeffs = forward_dct(&block, &basis);
            if let Some(t) = table {
                for (c, &q) in coeffs.iter_mut().zip(t.iter()) {
                    *c = round_half_away(*c / q) * q;
                }
            }
            let rec = inverse_dct(&coeffs, &basis);
            for y in 0..BLOCK {
                for x in 0..BLOCK {
                    out[(by + y) * pw + bx + x] = rec[y * BLOCK + x] + 128.0;
                }
            }
        }
    }
    let mut samples = Vec::with_capacity(img.h() * img.w());
    for y in 0..img.h() {
        for x in 0..img.w() {
            let v = out[y * pw + x].clamp(0.0, 255.0);
            samples.push(if round_output { v.round() as f32 } else { v as f32 });
        }
    }
    GrayImage::new(img.h(), img.w(), samples).expect("same dimensions as the input")
}

/// Degrade an image with the block-DCT quantize/dequantize pipeline.
///
/// Output samples are rounded to integer levels, matching what a decoder
/// writing 8-bit pixels produces.
pub fn jpeg_degrade(img: &GrayImage, cfg: &DegradeConfig) -> Result<GrayImage> {
    cfg.validate()?;
    let table = scaled_table(cfg.quality);
    Ok(block_pipeline(img, Some(&table), true))
}

/// The same pipeline with quantization disabled and no output rounding: a
/// pure DCT round trip, useful as a distortion-free reference.
pub fn dct_round_trip(img: &GrayImage) -> GrayImage {
    block_pipeline(img, None, false)
}

/// Bicubic downscale followed by [`jpeg_degrade`]: the rescale-then-compress
/// use case. Returns the degraded image and the rescaled clean image it
/// should be compared against.
pub fn rescale_degrade(img: &GrayImage, cfg: &DegradeConfig) -> Result<(GrayImage, GrayImage)> {
    cfg.validate()?;
    let clean = match cfg.rescale {
        Some(f) if f < 1.0 => scale_by(img, f)?,
        _ => img.clone(),
    };
    if clean.h() < BLOCK || clean.w() < BLOCK {
        return Err(Error::ImageTooSmall {
            h: clean.h(),
            w: clean.w(),
        });
    }
    let degraded = jpeg_degrade(&clean, cfg)?;
    Ok((degraded, clean))
}
