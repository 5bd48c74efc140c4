//! Training-corpus construction: augmentation, sub-image extraction,
//! degradation pairing, and target cropping.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::codec::{rescale_degrade, DegradeConfig};
use crate::error::{Error, Result};
use crate::gray::{read_image, scale_by, GrayImage};

pub const SUB_IMAGE: usize = 24;
pub const EXTRACT_STRIDE: usize = 20;

const CACHE_MAGIC: &[u8; 4] = b"ARCP";
const CACHE_VERSION: u32 = 1;

/// One training example: a degraded sub-image and its clean target, cropped
/// to the upper-left (24 - s + 1) square for a stride-s network.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplePair {
    pub input: GrayImage,
    pub target: GrayImage,
}

/// Scale by {1.0, 0.9, 0.8, 0.7, 0.6} and rotate each result by 0/90/180/270
/// degrees: 20 variants. Variants smaller than the sub-image size are
/// dropped with a warning.
pub fn augment(img: &GrayImage) -> Result<Vec<GrayImage>> {
    let mut out = Vec::with_capacity(20);
    for factor in [1.0, 0.9, 0.8, 0.7, 0.6] {
        let scaled = if factor == 1.0 {
            img.clone()
        } else {
            scale_by(img, factor)?
        };
        if scaled.h() < SUB_IMAGE || scaled.w() < SUB_IMAGE {
            log::warn!(
                "dropping scale {factor} variant: {}x{} is smaller than {SUB_IMAGE}x{SUB_IMAGE}",
                scaled.h(),
                scaled.w()
            );
            continue;
        }
        for turns in 0..4 {
            out.push(scaled.rotate(turns));
        }
    }
    Ok(out)
}

/// Grid positions 0, 20, 40, ... while position + 24 fits; images smaller
/// than the sub-image size yield an empty list.
pub fn extract_subimages(img: &GrayImage, size: usize, stride: usize) -> Vec<GrayImage> {
    let mut out = Vec::new();
    if img.h() < size || img.w() < size {
        return out;
    }
    let mut y = 0;
    while y + size <= img.h() {
        let mut x = 0;
        while x + size <= img.w() {
            out.push(img.crop(y, x, size, size));
            x += stride;
        }
        y += stride;
    }
    out
}

/// Per-axis count of [`extract_subimages`] positions.
pub fn subimage_count(dim: usize, size: usize, stride: usize) -> usize {
    if dim < size {
        0
    } else {
        (dim - size) / stride + 1
    }
}

/// Build aligned (degraded, clean) pairs from whole images.
///
/// The degradation runs on the full image before extraction so block
/// artifacts land at realistic positions relative to patch borders; when the
/// config rescales, the rescaled clean image becomes the ground truth.
/// Targets keep the upper-left (24 - s + 1) square. A seed applies one
/// global shuffle; `None` keeps (image, grid) order.
pub fn build_pairs(
    images: &[GrayImage],
    cfg: &DegradeConfig,
    net_stride: usize,
    shuffle_seed: Option<u64>,
) -> Result<Vec<SamplePair>> {
    if net_stride == 0 || net_stride > SUB_IMAGE {
        return Err(Error::BadConfig(format!(
            "network stride {net_stride} incompatible with {SUB_IMAGE}-pixel sub-images"
        )));
    }
    let target_size = SUB_IMAGE - net_stride + 1;
    let per_image: Vec<Vec<SamplePair>> = images
        .par_iter()
        .map(|img| -> Result<Vec<SamplePair>> {
            let (degraded, clean) = rescale_degrade(img, cfg)?;
            let inputs = extract_subimages(&degraded, SUB_IMAGE, EXTRACT_STRIDE);
            let targets = extract_subimages(&clean, SUB_IMAGE, EXTRACT_STRIDE);
            debug_assert_eq!(inputs.len(), targets.len());
            Ok(inputs
                .into_iter()
                .zip(targets)
                .map(|(input, target)| SamplePair {
                    input,
                    target: target.crop(0, 0, target_size, target_size),
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let mut pairs: Vec<SamplePair> = per_image.into_iter().flatten().collect();
    if let Some(seed) = shuffle_seed {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        pairs.shuffle(&mut rng);
    }
    Ok(pairs)
}

/// Read a corpus manifest: one image path per line, blank lines and `#`
/// comments skipped. Relative paths resolve against the manifest's
/// directory.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let file = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for line in file.lines() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let p = Path::new(line);
        out.push(if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        });
    }
    Ok(out)
}

/// Load every image named by a manifest.
pub fn load_manifest_images(path: impl AsRef<Path>) -> Result<Vec<GrayImage>> {
    read_manifest(path)?.iter().map(read_image).collect()
}

/// Write pairs as a single binary blob: `ARCP`, u32 LE version, u32 LE pair
/// count, u32 LE input size, u32 LE target size, then per pair the input and
/// target samples as f32 LE.
pub fn save_pairs(pairs: &[SamplePair], path: impl AsRef<Path>) -> Result<()> {
    if pairs.is_empty() {
        return Err(Error::BadConfig("refusing to write an empty pair cache".into()));
    }
    let in_size = pairs[0].input.h();
    let target_size = pairs[0].target.h();
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(CACHE_MAGIC)?;
    w.write_all(&CACHE_VERSION.to_le_bytes())?;
    w.write_all(&(pairs.len() as u32).to_le_bytes())?;
    w.write_all(&(in_size as u32).to_le_bytes())?;
    w.write_all(&(target_size as u32).to_le_bytes())?;
    for pair in pairs {
        for &v in pair.input.samples().iter().chain(pair.target.samples()) {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_pairs(path: impl AsRef<Path>) -> Result<Vec<SamplePair>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != CACHE_MAGIC {
        return Err(Error::ImageParse {
            format: "pair cache",
            reason: "bad magic (expected `ARCP`)".into(),
        });
    }
    let mut u32buf = [0u8; 4];
    let mut next = || -> Result<u32> {
        r.read_exact(&mut u32buf)?;
        Ok(u32::from_le_bytes(u32buf))
    };
    let version = next()?;
    if version != CACHE_VERSION {
        return Err(Error::ImageParse {
            format: "pair cache",
            reason: format!("unsupported version {version}"),
        });
    }
    let count = next()? as usize;
    let in_size = next()? as usize;
    let target_size = next()? as usize;
    if in_size == 0 || target_size == 0 || target_size > in_size || count == 0 {
        return Err(Error::ImageParse {
            format: "pair cache",
            reason: "implausible header".into(),
        });
    }
    let mut pairs = Vec::with_capacity(count);
    let mut buf = vec![0u8; (in_size * in_size + target_size * target_size) * 4];
    for i in 0..count {
        r.read_exact(&mut buf).map_err(|_| Error::ImageParse {
            format: "pair cache",
            reason: format!("truncated at pair {i} of {count}"),
        })?;
        let floats: Vec<f32> = buf
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        let (a, b) = floats.split_at(in_size * in_size);
        pairs.push(SamplePair {
            input: GrayImage::new(in_size, in_size, a.to_vec())?,
            target: GrayImage::new(target_size, target_size, b.to_vec())?,
        });
    }
    Ok(pairs)
}

/// Sniff whether a path holds a pair cache (as opposed to a manifest).
pub fn is_pair_cache(path: impl AsRef<Path>) -> bool {
    let mut magic = [0u8; 4];
    File::open(path)
        .and_then(|mut f| f.read_exact(&mut magic))
        .map(|_| &magic == CACHE_MAGIC)
        .unwrap_or(false)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn textured(h: usize, w: usize) -> GrayImage {
        GrayImage::new(
            h,
            w,
            (0..h * w)
                .map(|i| {
                    let (y, x) = (i / w, i % w);
                    (128.0 + 90.0 * ((x as f32) * 0.31).sin() * ((y as f32) * 0.17).cos())
                        .clamp(0.0, 255.0)
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn augment_yields_twenty_variants() {
        let img = textured(60, 80);
        let variants = augment(&img).unwrap();
        assert_eq!(variants.len(), 20);
        assert_eq!((variants[0].h(), variants[0].w()), (60, 80));
        assert_eq!((variants[1].h(), variants[1].w()), (80, 60));
    }

    #[test]
    fn augment_drops_undersized_scales() {
        // 30 * 0.7 = 21 < 24, so two scale groups drop.
        let img = textured(30, 100);
        let variants = augment(&img).unwrap();
        assert_eq!(variants.len(), 12);
    }

    #[test]
    fn scale_0_6_of_100x80() {
        let img = textured(100, 80);
        let variants = augment(&img).unwrap();
        assert!(variants.iter().any(|v| v.h() == 60 && v.w() == 48));
    }

    #[test]
    fn subimage_counts_match_formula() {
        assert_eq!(subimage_count(481, 24, 20), 23);
        assert_eq!(subimage_count(321, 24, 20), 15);
        let img = textured(321, 481);
        assert_eq!(extract_subimages(&img, 24, 20).len(), 345);
    }

    #[test]
    fn exact_fit_gives_single_subimage() {
        let img = textured(24, 24);
        assert_eq!(extract_subimages(&img, 24, 20).len(), 1);
    }

    #[test]
    fn boundary_of_count_formula() {
        let img = textured(24, 43);
        assert_eq!(extract_subimages(&img, 24, 20).len(), 1);
        let img = textured(24, 44);
        assert_eq!(extract_subimages(&img, 24, 20).len(), 2);
    }

    #[test]
    fn undersized_image_gives_empty_list() {
        let img = textured(23, 100);
        assert!(extract_subimages(&img, 24, 20).is_empty());
    }

    #[test]
    fn pairs_are_aligned_and_cropped() {
        let img = textured(64, 64);
        let cfg = DegradeConfig::new(10).unwrap();
        let pairs = build_pairs(std::slice::from_ref(&img), &cfg, 2, None).unwrap();
        assert_eq!(pairs.len(), 9);
        for pair in &pairs {
            assert_eq!((pair.input.h(), pair.input.w()), (24, 24));
            assert_eq!((pair.target.h(), pair.target.w()), (23, 23));
        }
        // Targets come from the clean image at the same grid coordinates.
        let clean_subs = extract_subimages(&img, 24, 20);
        for (pair, clean) in pairs.iter().zip(&clean_subs) {
            assert_eq!(pair.target, clean.crop(0, 0, 23, 23));
        }
    }

    #[test]
    fn stride_one_keeps_full_target() {
        let img = textured(24, 24);
        let cfg = DegradeConfig::new(40).unwrap();
        let pairs = build_pairs(std::slice::from_ref(&img), &cfg, 1, None).unwrap();
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].target, img);
    }

    #[test]
    fn shuffle_is_deterministic() {
        let imgs: Vec<GrayImage> = (0..3).map(|_| textured(64, 64)).collect();
        let cfg = DegradeConfig::new(20).unwrap();
        let a = build_pairs(&imgs, &cfg, 1, Some(7)).unwrap();
        let b = build_pairs(&imgs, &cfg, 1, Some(7)).unwrap();
        let c = build_pairs(&imgs, &cfg, 1, Some(8)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn pair_count_is_sum_of_per_image_products() {
        let imgs = vec![textured(44, 64), textured(64, 44), textured(24, 24)];
        let cfg = DegradeConfig::new(20).unwrap();
        let pairs = build_pairs(&imgs, &cfg, 1, None).unwrap();
        let want: usize = imgs
            .iter()
            .map(|im| subimage_count(im.h(), 24, 20) * subimage_count(im.w(), 24, 20))
            .sum();
        assert_eq!(pairs.len(), want);
        assert_eq!(want, 2 * 3 + 3 * 2 + 1);
    }

    #[test]
    fn pair_cache_round_trip() {
        let img = textured(44, 44);
        let cfg = DegradeConfig::new(10).unwrap();
        let pairs = build_pairs(&[img], &cfg, 2, Some(1)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pairs.bin");
        save_pairs(&pairs, &path).unwrap();
        assert!(is_pair_cache(&path));
        let back = load_pairs(&path).unwrap();
        assert_eq!(back, pairs);
    }

    #[test]
    fn manifest_resolves_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let img = textured(24, 24);
        img.write_pgm(dir.path().join("a.pgm"), &[]).unwrap();
        std::fs::write(
            dir.path().join("list.txt"),
            "# corpus\na.pgm\n\n",
        )
        .unwrap();
        let paths = read_manifest(dir.path().join("list.txt")).unwrap();
        assert_eq!(paths.len(), 1);
        let images = load_manifest_images(dir.path().join("list.txt")).unwrap();
        assert_eq!(images[0].h(), 24);
    }
}
