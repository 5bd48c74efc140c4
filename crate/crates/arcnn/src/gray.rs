//! Grayscale image carrier, PGM/PPM interchange, luminance conversion, and
//! the bicubic resampler shared by the codec simulator and the data
//! pipeline.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A luminance image with real-valued samples in [0, 255].
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    h: usize,
    w: usize,
    samples: Vec<f32>,
}

/// An 8-bit RGB image, only used as the source for luminance extraction.
#[derive(Clone, Debug)]
pub struct RgbImage {
    pub h: usize,
    pub w: usize,
    /// Interleaved r, g, b bytes, row-major.
    pub data: Vec<u8>,
}

impl GrayImage {
    pub fn new(h: usize, w: usize, samples: Vec<f32>) -> Result<Self> {
        if h == 0 || w == 0 {
            return Err(Error::ZeroDim { what: "image size" });
        }
        if samples.len() != h * w {
            return Err(Error::ImageParse {
                format: "gray",
                reason: format!("{} samples for a {h}x{w} image", samples.len()),
            });
        }
        Ok(Self { h, w, samples })
    }

    pub fn constant(h: usize, w: usize, value: f32) -> Self {
        Self {
            h,
            w,
            samples: vec![value; h * w],
        }
    }

    #[inline]
    pub fn h(&self) -> usize {
        self.h
    }

    #[inline]
    pub fn w(&self) -> usize {
        self.w
    }

    #[inline]
    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    #[inline]
    pub fn samples_mut(&mut self) -> &mut [f32] {
        &mut self.samples
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize) -> f32 {
        self.samples[y * self.w + x]
    }

    #[inline]
    pub fn at_mut(&mut self, y: usize, x: usize) -> &mut f32 {
        &mut self.samples[y * self.w + x]
    }

    pub fn clamp(&mut self) {
        for v in &mut self.samples {
            *v = v.clamp(0.0, 255.0);
        }
    }

    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> GrayImage {
        assert!(y0 + h <= self.h && x0 + w <= self.w);
        let mut samples = Vec::with_capacity(h * w);
        for y in y0..y0 + h {
            samples.extend_from_slice(&self.samples[y * self.w + x0..y * self.w + x0 + w]);
        }
        GrayImage { h, w, samples }
    }

    /// Rotate counter-clockwise by a multiple of 90 degrees.
    pub fn rotate(&self, quarter_turns: usize) -> GrayImage {
        let (src_h, src_w) = (self.h, self.w);
        match quarter_turns % 4 {
            0 => self.clone(),
            1 => {
                // (y, x) -> (src_w - 1 - x, y) in a src_w x src_h image.
                let (h, w) = (src_w, src_h);
                let mut samples = vec![0.0; h * w];
                for y in 0..src_h {
                    for x in 0..src_w {
                        samples[(src_w - 1 - x) * w + y] = self.at(y, x);
                    }
                }
                GrayImage { h, w, samples }
            }
            2 => {
                let mut samples = self.samples.clone();
                samples.reverse();
                GrayImage {
                    h: src_h,
                    w: src_w,
                    samples,
                }
            }
            _ => {
                // (y, x) -> (x, src_h - 1 - y) in a src_w x src_h image.
                let (h, w) = (src_w, src_h);
                let mut samples = vec![0.0; h * w];
                for y in 0..src_h {
                    for x in 0..src_w {
                        samples[x * w + (src_h - 1 - y)] = self.at(y, x);
                    }
                }
                GrayImage { h, w, samples }
            }
        }
    }

    /// View as a 1 x 1 x h x w tensor scaled to [0, 1].
    pub fn to_tensor(&self) -> Tensor<f32> {
        Tensor::from_vec(
            1,
            1,
            self.h,
            self.w,
            self.samples.iter().map(|&v| v / 255.0).collect(),
        )
        .expect("image dimensions are validated on construction")
    }

    /// Back from a single-sample [0, 1] tensor, clamped to [0, 255].
    pub fn from_tensor(t: &Tensor<f32>) -> GrayImage {
        debug_assert_eq!((t.n(), t.c()), (1, 1));
        GrayImage {
            h: t.h(),
            w: t.w(),
            samples: t
                .data()
                .iter()
                .map(|&v| (v * 255.0).clamp(0.0, 255.0))
                .collect(),
        }
    }

    /// Write as binary 8-bit PGM (P5). Samples are rounded to the nearest
    /// integer. Comment lines, if any, go between the magic and the size.
    pub fn write_pgm(&self, path: impl AsRef<Path>, comments: &[&str]) -> Result<()> {
        let mut f = BufWriter::new(File::create(path)?);
        f.write_all(b"P5\n")?;
        for c in comments {
            writeln!(f, "# {c}")?;
        }
        writeln!(f, "{} {}", self.w, self.h)?;
        f.write_all(b"255\n")?;
        let bytes: Vec<u8> = self
            .samples
            .iter()
            .map(|&v| v.round().clamp(0.0, 255.0) as u8)
            .collect();
        f.write_all(&bytes)?;
        f.flush()?;
        Ok(())
    }

    pub fn read_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
        let mut bytes = Vec::new();
        BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
        parse_pgm(&bytes)
    }
}

/// BT.601 luminance: Y = 0.299 R + 0.587 G + 0.114 B, clamped to [0, 255].
pub fn to_luminance(rgb: &RgbImage) -> GrayImage {
    let samples = rgb
        .data
        .chunks_exact(3)
        .map(|px| {
            let y = 0.299 * px[0] as f64 + 0.587 * px[1] as f64 + 0.114 * px[2] as f64;
            y.clamp(0.0, 255.0) as f32
        })
        .collect();
    GrayImage {
        h: rgb.h,
        w: rgb.w,
        samples,
    }
}

fn parse_netpbm_header<'a>(bytes: &'a [u8], magic: &str) -> Result<(usize, usize, &'a [u8])> {
    let err = |reason: &str| Error::ImageParse {
        format: if magic == "P5" { "PGM" } else { "PPM" },
        reason: reason.into(),
    };
    if bytes.len() < 2 || &bytes[..2] != magic.as_bytes() {
        return Err(err(&format!("missing {magic} magic")));
    }
    // Read three whitespace-separated tokens (width, height, maxval),
    // skipping `#` comments.
    let mut pos = 2;
    let mut tokens = Vec::new();
    while tokens.len() < 3 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(err("truncated header"));
        }
        tokens.push(
            std::str::from_utf8(&bytes[start..pos])
                .ok()
                .and_then(|t| t.parse::<usize>().ok())
                .ok_or_else(|| err("non-numeric header field"))?,
        );
    }
    if pos >= bytes.len() {
        return Err(err("missing raster"));
    }
    pos += 1; // single whitespace after maxval
    let (w, h, maxval) = (tokens[0], tokens[1], tokens[2]);
    if w == 0 || h == 0 {
        return Err(err("zero dimension"));
    }
    if maxval != 255 {
        return Err(err(&format!("unsupported maxval {maxval}, expected 255")));
    }
    Ok((h, w, &bytes[pos..]))
}

pub fn parse_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let (h, w, raster) = parse_netpbm_header(bytes, "P5")?;
    if raster.len() < h * w {
        return Err(Error::ImageParse {
            format: "PGM",
            reason: format!("raster has {} bytes, expected {}", raster.len(), h * w),
        });
    }
    let samples = raster[..h * w].iter().map(|&b| b as f32).collect();
    GrayImage::new(h, w, samples)
}

pub fn parse_ppm(bytes: &[u8]) -> Result<RgbImage> {
    let (h, w, raster) = parse_netpbm_header(bytes, "P6")?;
    if raster.len() < h * w * 3 {
        return Err(Error::ImageParse {
            format: "PPM",
            reason: format!("raster has {} bytes, expected {}", raster.len(), h * w * 3),
        });
    }
    Ok(RgbImage {
        h,
        w,
        data: raster[..h * w * 3].to_vec(),
    })
}

/// Read a PGM or PPM file; PPM input is converted to luminance.
pub fn read_image(path: impl AsRef<Path>) -> Result<GrayImage> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path.as_ref())?).read_to_end(&mut bytes)?;
    match bytes.first() {
        Some(b'P') if bytes.get(1) == Some(&b'6') => Ok(to_luminance(&parse_ppm(&bytes)?)),
        _ => parse_pgm(&bytes),
    }
}

/// Catmull-Rom cubic kernel (a = -0.5).
fn cubic(t: f64) -> f64 {
    const A: f64 = -0.5;
    let t = t.abs();
    if t <= 1.0 {
        (A + 2.0) * t * t * t - (A + 3.0) * t * t + 1.0
    } else if t < 2.0 {
        A * t * t * t - 5.0 * A * t * t + 8.0 * A * t - 4.0 * A
    } else {
        0.0
    }
}

/// Separable bicubic resample to the given size. Border samples are clamped.
pub fn resize_bicubic(img: &GrayImage, out_h: usize, out_w: usize) -> Result<GrayImage> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::ZeroDim { what: "image size" });
    }
    let (h, w) = (img.h(), img.w());
    // Horizontal pass.
    let scale_x = w as f64 / out_w as f64;
    let mut mid = vec![0.0f64; h * out_w];
    for ox in 0..out_w {
        let src = (ox as f64 + 0.5) * scale_x - 0.5;
        let base = src.floor() as isize;
        let frac = src - base as f64;
        let mut k = [0.0f64; 4];
        for (i, kv) in k.iter_mut().enumerate() {
            *kv = cubic(frac - (i as f64 - 1.0));
        }
        let norm: f64 = k.iter().sum();
        for y in 0..h {
            let mut acc = 0.0;
            for (i, kv) in k.iter().enumerate() {
                let sx = (base + i as isize - 1).clamp(0, w as isize - 1) as usize;
                acc += kv * img.at(y, sx) as f64;
            }
            mid[y * out_w + ox] = acc / norm;
        }
    }
    // Vertical pass.
    let scale_y = h as f64 / out_h as f64;
    let mut out = vec![0.0f32; out_h * out_w];
    for oy in 0..out_h {
        let src = (oy as f64 + 0.5) * scale_y - 0.5;
        let base = src.floor() as isize;
        let frac = src - base as f64;
        let mut k = [0.0f64; 4];
        for (i, kv) in k.iter_mut().enumerate() {
            *kv = cubic(frac - (i as f64 - 1.0));
        }
        let norm: f64 = k.iter().sum();
        for ox in 0..out_w {
            let mut acc = 0.0;
            for (i, kv) in k.iter().enumerate() {
                let sy = (base + i as isize - 1).clamp(0, h as isize - 1) as usize;
                acc += kv * mid[sy * out_w + ox];
            }
            out[oy * out_w + ox] = (acc / norm).clamp(0.0, 255.0) as f32;
        }
    }
    GrayImage::new(out_h, out_w, out)
}

/// Scale both dimensions by `factor`, rounding to the nearest integer size.
pub fn scale_by(img: &GrayImage, factor: f64) -> Result<GrayImage> {
    let out_h = (img.h() as f64 * factor).round().max(1.0) as usize;
    let out_w = (img.w() as f64 * factor).round().max(1.0) as usize;
    resize_bicubic(img, out_h, out_w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn luminance_of_white_is_255() {
        let rgb = RgbImage {
            h: 1,
            w: 1,
            data: vec![255, 255, 255],
        };
        assert_eq!(to_luminance(&rgb).samples(), &[255.0]);
    }

    #[test]
    fn luminance_of_pure_red() {
        let rgb = RgbImage {
            h: 1,
            w: 1,
            data: vec![255, 0, 0],
        };
        let y = to_luminance(&rgb).samples()[0];
        assert!((y - 76.245).abs() < 1e-4, "{y}");
    }

    #[test]
    fn luminance_of_gray_is_identity() {
        for g in [0u8, 1, 77, 128, 254, 255] {
            let rgb = RgbImage {
                h: 1,
                w: 1,
                data: vec![g, g, g],
            };
            let y = to_luminance(&rgb).samples()[0];
            assert!((y - g as f32).abs() < 1e-4);
        }
    }

    #[test]
    fn pgm_round_trip() {
        let img = GrayImage::new(3, 5, (0..15).map(|v| v as f32 * 17.0).collect()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.pgm");
        img.write_pgm(&path, &["test image"]).unwrap();
        let back = GrayImage::read_pgm(&path).unwrap();
        assert_eq!(back.h(), 3);
        assert_eq!(back.w(), 5);
        for (a, b) in img.samples().iter().zip(back.samples()) {
            assert!((a - b).abs() <= 0.5);
        }
    }

    #[test]
    fn pgm_rejects_bad_magic() {
        assert!(parse_pgm(b"P3\n1 1\n255\n0").is_err());
    }

    #[test]
    fn rotate_twice_is_reverse() {
        let img = GrayImage::new(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let r = img.rotate(2);
        assert_eq!(r.samples(), &[6.0, 5.0, 4.0, 3.0, 2.0, 1.0]);
        assert_eq!(r.rotate(2), img);
    }

    #[test]
    fn four_quarter_turns_is_identity() {
        let img = GrayImage::new(3, 4, (0..12).map(|v| v as f32).collect()).unwrap();
        assert_eq!(img.rotate(1).rotate(1).rotate(1).rotate(1), img);
        assert_eq!(img.rotate(1).rotate(3), img);
    }

    #[test]
    fn bicubic_preserves_constant_images() {
        let img = GrayImage::constant(40, 30, 93.0);
        let out = resize_bicubic(&img, 27, 21).unwrap();
        for &v in out.samples() {
            assert!((v - 93.0).abs() < 1e-4);
        }
    }

    #[test]
    fn scale_rounds_dimensions() {
        let img = GrayImage::constant(100, 80, 10.0);
        let out = scale_by(&img, 0.6).unwrap();
        assert_eq!((out.h(), out.w()), (60, 48));
    }

    #[test]
    fn crop_extracts_expected_window() {
        let img = GrayImage::new(4, 4, (0..16).map(|v| v as f32).collect()).unwrap();
        let c = img.crop(1, 2, 2, 2);
        assert_eq!(c.samples(), &[6.0, 7.0, 10.0, 11.0]);
    }
}
