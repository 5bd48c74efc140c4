//! Hourglass architecture notation: parsing, parameter counts, per-pixel
//! operation counts, and receptive fields.
//!
//! A notation string like `64(9)-32(1)-32(7)-64(1)-1[9]-s2` lists layers from
//! input to output. Round parentheses denote a convolution, square brackets a
//! transposed convolution (which must come last), the number before the
//! bracket is the filter count and the number inside the spatial filter size.
//! An `xM` suffix repeats a segment M times; a trailing `-sK` sets the stride
//! applied to the first convolution and the final transposed layer.

use crate::error::{Error, Result};

/// Reference parameter totals widely quoted for the baseline
/// `64(9)-32(7)-16(1)-1(5)` and fast `64(9)-32(1)-32(7)-64(1)-1[9]-s2`
/// configurations. The parameter formula reproduces the baseline total but
/// gives 64,640 for the fast configuration; the quoted 56,496 is kept only
/// for the reference acceleration arithmetic `106448/56496 * s^2 = 7.5`.
pub const BASELINE_QUOTED_PARAMS: u64 = 106_448;
pub const FAST_QUOTED_PARAMS: u64 = 56_496;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerKind {
    Conv,
    Deconv,
}

/// One layer of an [`ArchSpec`]: filter count, spatial size, and kind.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerSpec {
    pub channels: usize,
    pub filter: usize,
    pub kind: LayerKind,
}

/// A parsed hourglass architecture.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ArchSpec {
    layers: Vec<LayerSpec>,
    stride: usize,
    input_channels: usize,
}

impl std::str::FromStr for ArchSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_arch(s)
    }
}

impl std::fmt::Display for ArchSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (i, layer) in self.layers.iter().enumerate() {
            if i > 0 {
                write!(f, "-")?;
            }
            match layer.kind {
                LayerKind::Conv => write!(f, "{}({})", layer.channels, layer.filter)?,
                LayerKind::Deconv => write!(f, "{}[{}]", layer.channels, layer.filter)?,
            }
        }
        if self.stride > 1 {
            write!(f, "-s{}", self.stride)?;
        }
        Ok(())
    }
}

/// Parse an architecture notation string. Repeat suffixes are expanded, so
/// the resulting layer list is explicit.
pub fn parse_arch(text: &str) -> Result<ArchSpec> {
    let text = text.trim();
    if text.is_empty() {
        return Err(Error::ArchParse {
            segment: String::new(),
            reason: "empty notation".into(),
        });
    }
    let mut layers = Vec::new();
    let mut stride: Option<usize> = None;
    for segment in text.split('-') {
        if let Some(rest) = segment.strip_prefix('s') {
            if let Ok(s) = rest.parse::<usize>() {
                if stride.is_some() {
                    return Err(Error::ArchParse {
                        segment: segment.into(),
                        reason: "more than one stride suffix".into(),
                    });
                }
                if s == 0 {
                    return Err(Error::ArchParse {
                        segment: segment.into(),
                        reason: "stride must be at least 1".into(),
                    });
                }
                stride = Some(s);
                continue;
            }
        }
        if stride.is_some() {
            return Err(Error::ArchParse {
                segment: segment.into(),
                reason: "stride suffix must come last".into(),
            });
        }
        let (layer, repeat) = parse_layer_segment(segment)?;
        for _ in 0..repeat {
            layers.push(layer);
        }
    }
    ArchSpec::new(layers, stride.unwrap_or(1), 1)
}

/// Parse `N(F)`, `N[F]`, or `N(F)xM`.
fn parse_layer_segment(segment: &str) -> Result<(LayerSpec, usize)> {
    let err = |reason: &str| Error::ArchParse {
        segment: segment.into(),
        reason: reason.into(),
    };
    let open = segment
        .find(['(', '['])
        .ok_or_else(|| err("expected `channels(filter)` or `channels[filter]`"))?;
    let kind = if segment.as_bytes()[open] == b'(' {
        LayerKind::Conv
    } else {
        LayerKind::Deconv
    };
    let close_ch = if kind == LayerKind::Conv { ')' } else { ']' };
    let close = segment
        .find(close_ch)
        .ok_or_else(|| err("unbalanced bracket"))?;
    if close < open {
        return Err(err("unbalanced bracket"));
    }
    let channels: usize = segment[..open]
        .parse()
        .map_err(|_| err("filter count is not a number"))?;
    let filter: usize = segment[open + 1..close]
        .parse()
        .map_err(|_| err("filter size is not a number"))?;
    let tail = &segment[close + 1..];
    let repeat = if tail.is_empty() {
        1
    } else if let Some(m) = tail.strip_prefix('x') {
        m.parse::<usize>().map_err(|_| err("bad repeat count"))?
    } else {
        return Err(err("trailing characters after bracket"));
    };
    if channels == 0 {
        return Err(err("filter count must be at least 1"));
    }
    if filter == 0 {
        return Err(err("filter size must be at least 1"));
    }
    if filter.is_multiple_of(2) {
        return Err(err("filter size must be odd for same-size padding"));
    }
    if repeat == 0 {
        return Err(err("repeat count must be at least 1"));
    }
    Ok((LayerSpec { channels, filter, kind }, repeat))
}

impl ArchSpec {
    pub fn new(layers: Vec<LayerSpec>, stride: usize, input_channels: usize) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::BadArch("a network needs at least one layer".into()));
        }
        if input_channels == 0 {
            return Err(Error::BadArch("input channel count must be at least 1".into()));
        }
        if stride == 0 {
            return Err(Error::BadArch("stride must be at least 1".into()));
        }
        let deconvs = layers.iter().filter(|l| l.kind == LayerKind::Deconv).count();
        if deconvs > 1 {
            return Err(Error::BadArch("at most one transposed layer is allowed".into()));
        }
        if deconvs == 1 && layers.last().unwrap().kind != LayerKind::Deconv {
            return Err(Error::BadArch("the transposed layer must come last".into()));
        }
        if stride > 1 {
            if layers.last().unwrap().kind != LayerKind::Deconv {
                return Err(Error::BadArch(
                    "stride above 1 requires a transposed layer at the end".into(),
                ));
            }
            if layers.len() < 2 {
                return Err(Error::BadArch(
                    "stride above 1 requires a strided convolution before the transposed layer"
                        .into(),
                ));
            }
        }
        Ok(Self {
            layers,
            stride,
            input_channels,
        })
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn input_channels(&self) -> usize {
        self.input_channels
    }

    /// Input channel count of layer `i` (the previous layer's filter count).
    pub fn in_channels(&self, i: usize) -> usize {
        if i == 0 {
            self.input_channels
        } else {
            self.layers[i - 1].channels
        }
    }

    /// Stride of layer `i`: the spec stride on the first convolution and the
    /// final transposed layer, 1 elsewhere.
    pub fn layer_stride(&self, i: usize) -> usize {
        let last = self.layers.len() - 1;
        let is_strided = (i == 0 && self.layers[i].kind == LayerKind::Conv)
            || (i == last && self.layers[i].kind == LayerKind::Deconv);
        if is_strided {
            self.stride
        } else {
            1
        }
    }

    /// Same-size zero padding for layer `i`: (f - 1) / 2.
    pub fn layer_pad(&self, i: usize) -> usize {
        (self.layers[i].filter - 1) / 2
    }

    /// Spatial size after each layer for an h x w input.
    pub fn trace_sizes(&self, h: usize, w: usize) -> Result<Vec<(usize, usize)>> {
        let mut sizes = Vec::with_capacity(self.layers.len());
        let (mut ch, mut cw) = (h, w);
        for (i, layer) in self.layers.iter().enumerate() {
            let s = self.layer_stride(i);
            let p = self.layer_pad(i);
            let f = layer.filter;
            (ch, cw) = match layer.kind {
                LayerKind::Conv => {
                    if ch + 2 * p < f || cw + 2 * p < f {
                        return Err(Error::KernelTooLarge {
                            filter: f,
                            h: ch,
                            w: cw,
                            pad: p,
                        });
                    }
                    ((ch + 2 * p - f) / s + 1, (cw + 2 * p - f) / s + 1)
                }
                LayerKind::Deconv => {
                    let oh = (s * (ch - 1) + f).checked_sub(2 * p);
                    let ow = (s * (cw - 1) + f).checked_sub(2 * p);
                    match (oh, ow) {
                        (Some(oh), Some(ow)) if oh > 0 && ow > 0 => (oh, ow),
                        _ => {
                            return Err(Error::EmptyDeconvOutput {
                                h: ch,
                                w: cw,
                                filter: f,
                                stride: s,
                                pad: p,
                            })
                        }
                    }
                }
            };
            sizes.push((ch, cw));
        }
        Ok(sizes)
    }

    /// Network output size for an h x w input: h - (s - 1) per axis for the
    /// strided hourglass, h for s = 1.
    pub fn output_size(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        Ok(*self.trace_sizes(h, w)?.last().unwrap())
    }
}

/// Weight counts per layer and their total, with biases and activation
/// slopes tallied separately (the headline total excludes them).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamCounts {
    pub per_layer: Vec<u64>,
    pub total: u64,
    pub biases: u64,
    pub slopes: u64,
}

/// Per-layer weight count n_{i-1} * n_i * f_i^2 and the total.
pub fn count_params(spec: &ArchSpec) -> ParamCounts {
    let per_layer: Vec<u64> = spec
        .layers()
        .iter()
        .enumerate()
        .map(|(i, l)| (spec.in_channels(i) * l.channels * l.filter * l.filter) as u64)
        .collect();
    let total = per_layer.iter().sum();
    let biases = spec.layers().iter().map(|l| l.channels as u64).sum();
    let slopes = spec
        .layers()
        .iter()
        .take(spec.num_layers().saturating_sub(1))
        .map(|l| l.channels as u64)
        .sum();
    ParamCounts {
        per_layer,
        total,
        biases,
        slopes,
    }
}

/// Multiply-accumulate counts for one forward pass over an h x w input.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OpCounts {
    pub per_layer: Vec<u64>,
    pub total: u64,
}

/// Count multiply-accumulates per layer: n_{i-1} * n_i * f_i^2 times the
/// layer's output area, or its input area for the scatter accounting of a
/// transposed layer.
pub fn count_ops(spec: &ArchSpec, input_h: usize, input_w: usize) -> Result<OpCounts> {
    let sizes = spec.trace_sizes(input_h, input_w)?;
    let mut per_layer = Vec::with_capacity(spec.num_layers());
    for (i, layer) in spec.layers().iter().enumerate() {
        let (ah, aw) = match layer.kind {
            LayerKind::Conv => sizes[i],
            LayerKind::Deconv => {
                if i == 0 {
                    (input_h, input_w)
                } else {
                    sizes[i - 1]
                }
            }
        };
        let macs = (spec.in_channels(i) * layer.channels * layer.filter * layer.filter) as u64
            * (ah as u64)
            * (aw as u64);
        per_layer.push(macs);
    }
    let total = per_layer.iter().sum();
    Ok(OpCounts { per_layer, total })
}

/// Inclusive rectangle of input pixels, possibly extending past the image
/// borders into the padding halo.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PixelRect {
    pub y0: i64,
    pub y1: i64,
    pub x0: i64,
    pub x1: i64,
}

impl PixelRect {
    pub fn contains(&self, y: i64, x: i64) -> bool {
        y >= self.y0 && y <= self.y1 && x >= self.x0 && x <= self.x1
    }
}

/// The rectangle of input pixels that can influence the given output pixel.
pub fn receptive_field(spec: &ArchSpec, output_y: usize, output_x: usize) -> PixelRect {
    let mut y = (output_y as i64, output_y as i64);
    let mut x = (output_x as i64, output_x as i64);
    for (i, layer) in spec.layers().iter().enumerate().rev() {
        let s = spec.layer_stride(i) as i64;
        let p = spec.layer_pad(i) as i64;
        let f = layer.filter as i64;
        let back = |(lo, hi): (i64, i64)| -> (i64, i64) {
            match layer.kind {
                // input positions lo*s - p ..= hi*s - p + f - 1
                LayerKind::Conv => (lo * s - p, hi * s - p + f - 1),
                // positions i with i*s - p + k == out for some k in [0, f)
                LayerKind::Deconv => (div_ceil(lo + p - f + 1, s), div_floor(hi + p, s)),
            }
        };
        y = back(y);
        x = back(x);
    }
    PixelRect {
        y0: y.0,
        y1: y.1,
        x0: x.0,
        x1: x.1,
    }
}

fn div_floor(a: i64, b: i64) -> i64 {
    a.div_euclid(b)
}

fn div_ceil(a: i64, b: i64) -> i64 {
    -((-a).div_euclid(b))
}
