//! Layer primitives: convolution, transposed convolution, and PReLU, each
//! with an exact backward pass.
//!
//! Filters are applied as cross-correlation (no kernel flip). A transposed
//! layer computes the adjoint of the plain convolution with the same
//! (filter, stride, pad), so `<conv(x), y> == <x, deconv(y)>` holds for a
//! shared weight array. Padding on a transposed layer crops the output by
//! `pad` on each border, the adjoint of input zero-padding.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Samples per reduction chunk when accumulating weight gradients across a
/// batch. Fixed so the floating-point summation order does not depend on
/// thread count.
const GRAD_CHUNK: usize = 16;

/// Convolution / transposed-convolution parameters.
///
/// Weight layout is `(out_channels, in_channels, f, f)` for a plain
/// convolution and `(in_channels, out_channels, f, f)` for a transposed one.
/// The swap lets one flat array serve as both a convolution and its adjoint.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvParams<T = f32> {
    pub out_channels: usize,
    pub in_channels: usize,
    pub filter: usize,
    pub stride: usize,
    pub pad: usize,
    pub transposed: bool,
    pub weights: Vec<T>,
    pub biases: Vec<T>,
}

impl<T: Scalar> ConvParams<T> {
    pub fn conv(
        out_channels: usize,
        in_channels: usize,
        filter: usize,
        stride: usize,
        pad: usize,
        weights: Vec<T>,
        biases: Vec<T>,
    ) -> Result<Self> {
        let p = Self {
            out_channels,
            in_channels,
            filter,
            stride,
            pad,
            transposed: false,
            weights,
            biases,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn deconv(
        out_channels: usize,
        in_channels: usize,
        filter: usize,
        stride: usize,
        pad: usize,
        weights: Vec<T>,
        biases: Vec<T>,
    ) -> Result<Self> {
        let p = Self {
            out_channels,
            in_channels,
            filter,
            stride,
            pad,
            transposed: true,
            weights,
            biases,
        };
        p.validate()?;
        Ok(p)
    }

    /// All-zero parameters of the given geometry.
    pub fn zeros(
        out_channels: usize,
        in_channels: usize,
        filter: usize,
        stride: usize,
        pad: usize,
        transposed: bool,
    ) -> Result<Self> {
        let weights = vec![T::ZERO; out_channels * in_channels * filter * filter];
        let biases = vec![T::ZERO; out_channels];
        let p = Self {
            out_channels,
            in_channels,
            filter,
            stride,
            pad,
            transposed,
            weights,
            biases,
        };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        if self.filter == 0 {
            return Err(Error::ZeroDim { what: "filter size" });
        }
        if self.stride == 0 {
            return Err(Error::ZeroDim { what: "stride" });
        }
        if self.out_channels == 0 || self.in_channels == 0 {
            return Err(Error::ZeroDim { what: "channel count" });
        }
        let want = self.out_channels * self.in_channels * self.filter * self.filter;
        if self.weights.len() != want {
            return Err(Error::BadParams(format!(
                "weight array has {} values, geometry needs {want}",
                self.weights.len()
            )));
        }
        if self.biases.len() != self.out_channels {
            return Err(Error::BadParams(format!(
                "bias array has {} values, expected {}",
                self.biases.len(),
                self.out_channels
            )));
        }
        Ok(())
    }

    /// The plain convolution sharing this transposed layer's weight array.
    ///
    /// For weights stored `(in, out, f, f)` this is the map whose adjoint the
    /// transposed layer computes; it carries zero biases.
    pub(crate) fn adjoint_conv(&self) -> ConvParams<T> {
        debug_assert!(self.transposed);
        ConvParams {
            out_channels: self.in_channels,
            in_channels: self.out_channels,
            filter: self.filter,
            stride: self.stride,
            pad: self.pad,
            transposed: false,
            weights: self.weights.clone(),
            biases: vec![T::ZERO; self.in_channels],
        }
    }

    /// Output spatial size of a plain convolution over an h x w input.
    pub fn conv_output_size(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let f = self.filter;
        if h + 2 * self.pad < f || w + 2 * self.pad < f {
            return Err(Error::KernelTooLarge {
                filter: f,
                h,
                w,
                pad: self.pad,
            });
        }
        Ok((
            (h + 2 * self.pad - f) / self.stride + 1,
            (w + 2 * self.pad - f) / self.stride + 1,
        ))
    }

    /// Output spatial size of a transposed convolution: s*(h-1) + f - 2p.
    pub fn deconv_output_size(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let grow = |d: usize| -> Option<usize> {
            (self.stride * (d - 1) + self.filter).checked_sub(2 * self.pad)
        };
        match (grow(h), grow(w)) {
            (Some(oh), Some(ow)) if oh > 0 && ow > 0 => Ok((oh, ow)),
            _ => Err(Error::EmptyDeconvOutput {
                h,
                w,
                filter: self.filter,
                stride: self.stride,
                pad: self.pad,
            }),
        }
    }
}

/// Per-channel PReLU slopes for the negative part.
#[derive(Clone, Debug, PartialEq)]
pub struct PReluParams<T = f32> {
    pub slopes: Vec<T>,
}

impl<T: Scalar> PReluParams<T> {
    pub fn new(slopes: Vec<T>) -> Self {
        Self { slopes }
    }

    pub fn constant(channels: usize, value: T) -> Self {
        Self {
            slopes: vec![value; channels],
        }
    }
}

fn require_kind<T: Scalar>(p: &ConvParams<T>, transposed: bool) -> Result<()> {
    if p.transposed != transposed {
        let (got, want) = if transposed {
            ("a plain convolution", "transposed")
        } else {
            ("transposed", "plain convolution")
        };
        return Err(Error::WrongLayerKind { got, want });
    }
    Ok(())
}

fn require_channels<T: Scalar>(input: &Tensor<T>, want: usize) -> Result<()> {
    if input.c() != want {
        return Err(Error::ChannelMismatch {
            got: input.c(),
            want,
        });
    }
    Ok(())
}

/// Cap on the scratch column matrix, in elements. Large images are
/// processed in bands of output rows so the unrolled patches never exceed
/// this.
const MAX_COL_ELEMS: usize = 1 << 23;

fn band_rows(k: usize, out_w: usize, out_h: usize) -> usize {
    (MAX_COL_ELEMS / (k * out_w).max(1)).clamp(1, out_h)
}

/// Unroll receptive fields for output rows [oy0, oy0 + rows) into a
/// (c*f*f) x (rows*out_w) column matrix. Out-of-border positions contribute
/// zero.
#[allow(clippy::too_many_arguments)]
fn im2col_band<T: Scalar>(
    sample: &[T],
    channels: usize,
    h: usize,
    w: usize,
    filter: usize,
    stride: usize,
    pad: usize,
    oy0: usize,
    rows: usize,
    out_w: usize,
    col: &mut [T],
) {
    debug_assert!(col.len() >= channels * filter * filter * rows * out_w);
    let cols = rows * out_w;
    for c in 0..channels {
        let plane = &sample[c * h * w..(c + 1) * h * w];
        for ky in 0..filter {
            for kx in 0..filter {
                let row = (c * filter + ky) * filter + kx;
                let dst = &mut col[row * cols..(row + 1) * cols];
                for band_y in 0..rows {
                    let iy = ((oy0 + band_y) * stride + ky) as isize - pad as isize;
                    let dst_row = &mut dst[band_y * out_w..(band_y + 1) * out_w];
                    if iy < 0 || iy >= h as isize {
                        dst_row.fill(T::ZERO);
                        continue;
                    }
                    let src_row = &plane[iy as usize * w..(iy as usize + 1) * w];
                    if stride == 1 {
                        // Contiguous span: ix = ox + kx - pad.
                        let shift = kx as isize - pad as isize;
                        let ox_lo = (-shift).max(0) as usize;
                        let ox_hi = (w as isize - shift).clamp(0, out_w as isize) as usize;
                        dst_row[..ox_lo.min(out_w)].fill(T::ZERO);
                        if ox_lo < ox_hi {
                            let src_lo = (ox_lo as isize + shift) as usize;
                            dst_row[ox_lo..ox_hi]
                                .copy_from_slice(&src_row[src_lo..src_lo + (ox_hi - ox_lo)]);
                        }
                        dst_row[ox_hi.max(ox_lo).min(out_w)..].fill(T::ZERO);
                    } else {
                        for (ox, d) in dst_row.iter_mut().enumerate() {
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            *d = if ix < 0 || ix >= w as isize {
                                T::ZERO
                            } else {
                                src_row[ix as usize]
                            };
                        }
                    }
                }
            }
        }
    }
}

/// Scatter-add a band column matrix back to one sample: the adjoint of
/// [`im2col_band`].
#[allow(clippy::too_many_arguments)]
fn col2im_band_add<T: Scalar>(
    col: &[T],
    channels: usize,
    h: usize,
    w: usize,
    filter: usize,
    stride: usize,
    pad: usize,
    sy0: usize,
    rows: usize,
    src_w: usize,
    sample: &mut [T],
) {
    let cols = rows * src_w;
    for c in 0..channels {
        let plane = &mut sample[c * h * w..(c + 1) * h * w];
        for ky in 0..filter {
            for kx in 0..filter {
                let row = (c * filter + ky) * filter + kx;
                let src = &col[row * cols..(row + 1) * cols];
                for band_y in 0..rows {
                    let iy = ((sy0 + band_y) * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst_row = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                    let src_row = &src[band_y * src_w..(band_y + 1) * src_w];
                    if stride == 1 {
                        let shift = kx as isize - pad as isize;
                        let sx_lo = (-shift).max(0) as usize;
                        let sx_hi = (w as isize - shift).clamp(0, src_w as isize) as usize;
                        if sx_lo < sx_hi {
                            let dst_lo = (sx_lo as isize + shift) as usize;
                            for (d, &s) in dst_row[dst_lo..dst_lo + (sx_hi - sx_lo)]
                                .iter_mut()
                                .zip(&src_row[sx_lo..sx_hi])
                            {
                                *d += s;
                            }
                        }
                    } else {
                        for (sx, &v) in src_row.iter().enumerate() {
                            let ix = (sx * stride + kx) as isize - pad as isize;
                            if ix >= 0 && (ix as usize) < w {
                                dst_row[ix as usize] += v;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Forward pass of a plain convolution (cross-correlation plus bias).
pub fn conv_forward<T: Scalar>(input: &Tensor<T>, p: &ConvParams<T>) -> Result<Tensor<T>> {
    require_kind(p, false)?;
    require_channels(input, p.in_channels)?;
    let (n, c, h, w) = input.shape();
    let (out_h, out_w) = p.conv_output_size(h, w)?;
    let mut out = Tensor::zeros(n, p.out_channels, out_h, out_w)?;

    let k = c * p.filter * p.filter;
    let l = out_h * out_w;
    let band = band_rows(k, out_w, out_h);
    let in_len = input.sample_len();
    let out_len = out.sample_len();
    let in_data = input.data();

    out.data_mut()
        .par_chunks_mut(out_len)
        .zip(in_data.par_chunks(in_len))
        .for_each(|(out_s, in_s)| {
            let mut col = vec![T::ZERO; k * band * out_w];
            for (oc, row) in out_s.chunks_mut(l).enumerate() {
                row.fill(p.biases[oc]);
            }
            let mut oy0 = 0;
            while oy0 < out_h {
                let rows = band.min(out_h - oy0);
                let cols = rows * out_w;
                im2col_band(in_s, c, h, w, p.filter, p.stride, p.pad, oy0, rows, out_w, &mut col);
                // Output band: strided view with full-plane row stride.
                unsafe {
                    T::gemm(
                        p.out_channels,
                        k,
                        cols,
                        T::ONE,
                        p.weights.as_ptr(),
                        k as isize,
                        1,
                        col.as_ptr(),
                        cols as isize,
                        1,
                        T::ONE,
                        out_s.as_mut_ptr().add(oy0 * out_w),
                        l as isize,
                        1,
                    );
                }
                oy0 += rows;
            }
        });
    Ok(out)
}

/// Gradient of a plain convolution with respect to its input.
///
/// `grad_out` has the convolution's output shape; the result has the input
/// shape `(n, in_channels, in_h, in_w)`.
fn conv_input_grad<T: Scalar>(
    p: &ConvParams<T>,
    grad_out: &Tensor<T>,
    in_h: usize,
    in_w: usize,
) -> Result<Tensor<T>> {
    // At stride 1 the scatter is itself a convolution with the spatially
    // rotated, channel-swapped kernel, which runs on the efficient gather
    // path. Its scratch scales with out_channels instead of in_channels, so
    // take it only when that is not a regression.
    if p.stride == 1 && p.pad < p.filter && p.out_channels <= p.in_channels {
        let f = p.filter;
        let mut rotated = vec![T::ZERO; p.weights.len()];
        for o in 0..p.out_channels {
            for i in 0..p.in_channels {
                for ky in 0..f {
                    for kx in 0..f {
                        let src = ((o * p.in_channels + i) * f + ky) * f + kx;
                        let dst = ((i * p.out_channels + o) * f + (f - 1 - ky)) * f + (f - 1 - kx);
                        rotated[dst] = p.weights[src];
                    }
                }
            }
        }
        let flipped = ConvParams {
            out_channels: p.in_channels,
            in_channels: p.out_channels,
            filter: f,
            stride: 1,
            pad: f - 1 - p.pad,
            transposed: false,
            weights: rotated,
            biases: vec![T::ZERO; p.in_channels],
        };
        let out = conv_forward(grad_out, &flipped)?;
        debug_assert_eq!(out.shape(), (grad_out.n(), p.in_channels, in_h, in_w));
        return Ok(out);
    }

    let (n, oc, gh, gw) = grad_out.shape();
    debug_assert_eq!(oc, p.out_channels);
    let mut grad_in = Tensor::zeros(n, p.in_channels, in_h, in_w)?;

    let k = p.in_channels * p.filter * p.filter;
    let l = gh * gw;
    let band = band_rows(k, gw, gh);
    let gi_len = grad_in.sample_len();
    let go_len = grad_out.sample_len();
    let go_data = grad_out.data();

    grad_in
        .data_mut()
        .par_chunks_mut(gi_len)
        .zip(go_data.par_chunks(go_len))
        .for_each(|(gi_s, go_s)| {
            let mut col = vec![T::ZERO; k * band * gw];
            let mut gy0 = 0;
            while gy0 < gh {
                let rows = band.min(gh - gy0);
                let cols = rows * gw;
                // col_grad = W^T (k x oc) * grad_out band (oc x cols)
                unsafe {
                    T::gemm(
                        k,
                        p.out_channels,
                        cols,
                        T::ONE,
                        p.weights.as_ptr(),
                        1,
                        k as isize,
                        go_s.as_ptr().add(gy0 * gw),
                        l as isize,
                        1,
                        T::ZERO,
                        col.as_mut_ptr(),
                        cols as isize,
                        1,
                    );
                }
                col2im_band_add(
                    &col,
                    p.in_channels,
                    in_h,
                    in_w,
                    p.filter,
                    p.stride,
                    p.pad,
                    gy0,
                    rows,
                    gw,
                    gi_s,
                );
                gy0 += rows;
            }
        });
    Ok(grad_in)
}

/// Gradient of a plain convolution with respect to its weights, summed over
/// the batch. Layout matches `p.weights`.
fn conv_weight_grad<T: Scalar>(
    p: &ConvParams<T>,
    input: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Vec<T> {
    let (n, c, h, w) = input.shape();
    let (_, _, gh, gw) = grad_out.shape();
    let k = c * p.filter * p.filter;
    let l = gh * gw;
    let band = band_rows(k, gw, gh);
    let in_len = input.sample_len();
    let go_len = grad_out.sample_len();

    // Fixed-size chunks keep the summation order independent of scheduling.
    let partials: Vec<Vec<T>> = (0..n)
        .collect::<Vec<_>>()
        .par_chunks(GRAD_CHUNK)
        .map(|samples| {
            let mut acc = vec![T::ZERO; p.out_channels * k];
            let mut col = vec![T::ZERO; k * band * gw];
            for &i in samples {
                let in_s = &input.data()[i * in_len..(i + 1) * in_len];
                let go_s = &grad_out.data()[i * go_len..(i + 1) * go_len];
                let mut gy0 = 0;
                while gy0 < gh {
                    let rows = band.min(gh - gy0);
                    let cols = rows * gw;
                    im2col_band(in_s, c, h, w, p.filter, p.stride, p.pad, gy0, rows, gw, &mut col);
                    // acc += grad_out band (oc x cols) * col^T (cols x k)
                    unsafe {
                        T::gemm(
                            p.out_channels,
                            cols,
                            k,
                            T::ONE,
                            go_s.as_ptr().add(gy0 * gw),
                            l as isize,
                            1,
                            col.as_ptr(),
                            1,
                            cols as isize,
                            T::ONE,
                            acc.as_mut_ptr(),
                            k as isize,
                            1,
                        );
                    }
                    gy0 += rows;
                }
            }
            acc
        })
        .collect();

    let mut grad_w = vec![T::ZERO; p.out_channels * k];
    for part in partials {
        for (g, v) in grad_w.iter_mut().zip(part) {
            *g += v;
        }
    }
    grad_w
}

/// Per-channel sums of `grad_out`: the bias gradient.
fn channel_sums<T: Scalar>(grad_out: &Tensor<T>) -> Vec<T> {
    let (n, c, h, w) = grad_out.shape();
    let plane = h * w;
    let mut sums = vec![T::ZERO; c];
    for i in 0..n {
        let s = grad_out.sample(i);
        for (ch, sum) in sums.iter_mut().enumerate() {
            for &v in &s[ch * plane..(ch + 1) * plane] {
                *sum += v;
            }
        }
    }
    sums
}

/// Backward pass of a plain convolution.
///
/// Returns the exact partial derivatives of `<grad_out, conv_forward(input)>`
/// with respect to the input, the weights, and the biases.
pub fn conv_backward<T: Scalar>(
    input: &Tensor<T>,
    p: &ConvParams<T>,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Vec<T>, Vec<T>)> {
    require_kind(p, false)?;
    require_channels(input, p.in_channels)?;
    let (n, _, h, w) = input.shape();
    let (out_h, out_w) = p.conv_output_size(h, w)?;
    let want = (n, p.out_channels, out_h, out_w);
    if grad_out.shape() != want {
        return Err(Error::ShapeMismatch {
            context: "convolution output gradient",
            got: grad_out.shape(),
            want,
        });
    }
    let grad_input = conv_input_grad(p, grad_out, h, w)?;
    let grad_weights = conv_weight_grad(p, input, grad_out);
    let grad_biases = channel_sums(grad_out);
    Ok((grad_input, grad_weights, grad_biases))
}

/// The weight and bias gradients of [`conv_backward`] without the input
/// gradient.
pub fn conv_param_grads<T: Scalar>(
    input: &Tensor<T>,
    p: &ConvParams<T>,
    grad_out: &Tensor<T>,
) -> Result<(Vec<T>, Vec<T>)> {
    require_kind(p, false)?;
    require_channels(input, p.in_channels)?;
    let (n, _, h, w) = input.shape();
    let (out_h, out_w) = p.conv_output_size(h, w)?;
    let want = (n, p.out_channels, out_h, out_w);
    if grad_out.shape() != want {
        return Err(Error::ShapeMismatch {
            context: "convolution output gradient",
            got: grad_out.shape(),
            want,
        });
    }
    Ok((conv_weight_grad(p, input, grad_out), channel_sums(grad_out)))
}

/// Forward pass of a transposed convolution: scatter-add upsampling.
pub fn deconv_forward<T: Scalar>(input: &Tensor<T>, p: &ConvParams<T>) -> Result<Tensor<T>> {
    require_kind(p, true)?;
    require_channels(input, p.in_channels)?;
    let (n, _, h, w) = input.shape();
    let (out_h, out_w) = p.deconv_output_size(h, w)?;
    // The adjoint of the convolution mapping (out_h, out_w) -> (h, w).
    let adj = p.adjoint_conv();
    let mut out = conv_input_grad(&adj, input, out_h, out_w)?;
    debug_assert_eq!(out.shape(), (n, p.out_channels, out_h, out_w));
    let plane = out_h * out_w;
    for i in 0..n {
        let s = &mut out.data_mut()[i * p.out_channels * plane..(i + 1) * p.out_channels * plane];
        for (oc, row) in s.chunks_mut(plane).enumerate() {
            for v in row {
                *v += p.biases[oc];
            }
        }
    }
    Ok(out)
}

/// Backward pass of a transposed convolution.
pub fn deconv_backward<T: Scalar>(
    input: &Tensor<T>,
    p: &ConvParams<T>,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Vec<T>, Vec<T>)> {
    require_kind(p, true)?;
    require_channels(input, p.in_channels)?;
    let (n, _, h, w) = input.shape();
    let (out_h, out_w) = p.deconv_output_size(h, w)?;
    let want = (n, p.out_channels, out_h, out_w);
    if grad_out.shape() != want {
        return Err(Error::ShapeMismatch {
            context: "transposed-convolution output gradient",
            got: grad_out.shape(),
            want,
        });
    }
    let adj = p.adjoint_conv();
    // Adjoint of the adjoint: the plain convolution itself.
    let grad_input = conv_forward(grad_out, &adj)?;
    let grad_weights = conv_weight_grad(&adj, grad_out, input);
    let grad_biases = channel_sums(grad_out);
    Ok((grad_input, grad_weights, grad_biases))
}

/// PReLU forward: `max(x, 0) + a * min(0, x)` with one slope per channel.
pub fn prelu_forward<T: Scalar>(input: &Tensor<T>, p: &PReluParams<T>) -> Result<Tensor<T>> {
    if p.slopes.len() != input.c() {
        return Err(Error::SlopeCountMismatch {
            got: p.slopes.len(),
            want: input.c(),
        });
    }
    let (_, _, h, w) = input.shape();
    let plane = h * w;
    let mut out = input.clone();
    let sample_len = input.sample_len();
    out.data_mut().par_chunks_mut(sample_len).for_each(|s| {
        for (ch, row) in s.chunks_mut(plane).enumerate() {
            let a = p.slopes[ch];
            for v in row {
                if *v < T::ZERO {
                    *v *= a;
                }
            }
        }
    });
    Ok(out)
}

/// PReLU backward. At exactly zero the positive-branch derivative (1) is
/// used. Slope gradients are per-channel sums of `grad_out * x` over
/// negative inputs.
pub fn prelu_backward<T: Scalar>(
    input: &Tensor<T>,
    p: &PReluParams<T>,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Vec<T>)> {
    if p.slopes.len() != input.c() {
        return Err(Error::SlopeCountMismatch {
            got: p.slopes.len(),
            want: input.c(),
        });
    }
    if grad_out.shape() != input.shape() {
        return Err(Error::ShapeMismatch {
            context: "activation gradient",
            got: grad_out.shape(),
            want: input.shape(),
        });
    }
    let (_, c, h, w) = input.shape();
    let plane = h * w;
    let sample_len = input.sample_len();
    let mut grad_in = grad_out.clone();
    // Per-sample slope partials, reduced in fixed order.
    let partials: Vec<Vec<T>> = grad_in
        .data_mut()
        .par_chunks_mut(sample_len)
        .zip(input.data().par_chunks(sample_len))
        .map(|(g_sample, x_sample)| {
            let mut gs = vec![T::ZERO; c];
            for ch in 0..c {
                let a = p.slopes[ch];
                let x = &x_sample[ch * plane..(ch + 1) * plane];
                let g = &mut g_sample[ch * plane..(ch + 1) * plane];
                let acc = &mut gs[ch];
                for (gv, &xv) in g.iter_mut().zip(x) {
                    if xv < T::ZERO {
                        *acc += *gv * xv;
                        *gv *= a;
                    }
                }
            }
            gs
        })
        .collect();
    let mut grad_slopes = vec![T::ZERO; c];
    for part in partials {
        for (g, v) in grad_slopes.iter_mut().zip(part) {
            *g += v;
        }
    }
    Ok((grad_in, grad_slopes))
}
