//! Networks instantiated from an [`ArchSpec`]: full forward/backward passes
//! and binary checkpoint serialization.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::arch::{ArchSpec, LayerKind};
use crate::error::{Error, Result};
use crate::layers::{
    conv_backward, conv_forward, deconv_backward, deconv_forward, prelu_backward, prelu_forward,
    ConvParams, PReluParams,
};
use crate::tensor::{Scalar, Tensor};

const CHECKPOINT_MAGIC: &[u8; 4] = b"ARCN";
const CHECKPOINT_VERSION: u32 = 1;

/// An instantiated network: one [`ConvParams`] per layer and a PReLU after
/// every layer except the last.
#[derive(Clone, Debug, PartialEq)]
pub struct Network<T = f32> {
    spec: ArchSpec,
    layers: Vec<ConvParams<T>>,
    prelus: Vec<PReluParams<T>>,
}

impl<T: Scalar> Network<T> {
    /// Build a network with all parameters zero.
    pub fn zeros(spec: &ArchSpec) -> Result<Self> {
        let mut layers = Vec::with_capacity(spec.num_layers());
        for (i, l) in spec.layers().iter().enumerate() {
            layers.push(ConvParams::zeros(
                l.channels,
                spec.in_channels(i),
                l.filter,
                spec.layer_stride(i),
                spec.layer_pad(i),
                l.kind == LayerKind::Deconv,
            )?);
        }
        let prelus = spec
            .layers()
            .iter()
            .take(spec.num_layers() - 1)
            .map(|l| PReluParams::constant(l.channels, T::ZERO))
            .collect();
        Ok(Self {
            spec: spec.clone(),
            layers,
            prelus,
        })
    }

    pub fn spec(&self) -> &ArchSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[ConvParams<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [ConvParams<T>] {
        &mut self.layers
    }

    pub fn prelus(&self) -> &[PReluParams<T>] {
        &self.prelus
    }

    pub fn prelus_mut(&mut self) -> &mut [PReluParams<T>] {
        &mut self.prelus
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Total learnable values: weights + biases + slopes.
    pub fn num_params(&self) -> usize {
        let w: usize = self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum();
        let s: usize = self.prelus.iter().map(|p| p.slopes.len()).sum();
        w + s
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        let convert = |v: &[T]| v.iter().map(|x| U::from_f64(x.to_f64())).collect::<Vec<U>>();
        Network {
            spec: self.spec.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| ConvParams {
                    out_channels: l.out_channels,
                    in_channels: l.in_channels,
                    filter: l.filter,
                    stride: l.stride,
                    pad: l.pad,
                    transposed: l.transposed,
                    weights: convert(&l.weights),
                    biases: convert(&l.biases),
                })
                .collect(),
            prelus: self
                .prelus
                .iter()
                .map(|p| PReluParams::new(convert(&p.slopes)))
                .collect(),
        }
    }

    /// Inference without gradient bookkeeping.
    pub fn infer(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(input)?;
        let mut x = None;
        for (i, layer) in self.layers.iter().enumerate() {
            let cur = x.as_ref().unwrap_or(input);
            let mut z = if layer.transposed {
                deconv_forward(cur, layer)?
            } else {
                conv_forward(cur, layer)?
            };
            if i + 1 < self.layers.len() {
                z = prelu_forward(&z, &self.prelus[i])?;
            }
            x = Some(z);
        }
        Ok(x.unwrap())
    }

    /// Forward pass keeping the intermediate tensors needed for
    /// [`Network::backward`].
    pub fn forward(&self, input: &Tensor<T>) -> Result<(Tensor<T>, ForwardCache<T>)> {
        self.check_input(input)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut preacts = Vec::with_capacity(self.layers.len() - 1);
        let mut x = input.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = if layer.transposed {
                deconv_forward(&x, layer)?
            } else {
                conv_forward(&x, layer)?
            };
            inputs.push(x);
            if i + 1 < self.layers.len() {
                let a = prelu_forward(&z, &self.prelus[i])?;
                preacts.push(z);
                x = a;
            } else {
                x = z;
            }
        }
        let cache = ForwardCache {
            inputs,
            preacts,
            output_shape: x.shape(),
        };
        Ok((x, cache))
    }

    /// Exact gradients of `<grad_out, output>` with respect to every
    /// parameter, plus the gradient with respect to the network input.
    pub fn backward(&self, cache: &ForwardCache<T>, grad_out: &Tensor<T>) -> Result<Gradients<T>> {
        self.backward_impl(cache, grad_out, true)
    }

    /// Parameter gradients only: the first layer's input gradient is skipped
    /// (`Gradients::input` comes back empty-shaped). Saves one gather pass
    /// per step during training.
    pub fn backward_params(
        &self,
        cache: &ForwardCache<T>,
        grad_out: &Tensor<T>,
    ) -> Result<Gradients<T>> {
        self.backward_impl(cache, grad_out, false)
    }

    fn backward_impl(
        &self,
        cache: &ForwardCache<T>,
        grad_out: &Tensor<T>,
        with_input_grad: bool,
    ) -> Result<Gradients<T>> {
        if cache.inputs.len() != self.layers.len() || cache.preacts.len() + 1 != self.layers.len()
        {
            return Err(Error::StaleCache(format!(
                "cache holds {} layer inputs, network has {} layers",
                cache.inputs.len(),
                self.layers.len()
            )));
        }
        if grad_out.shape() != cache.output_shape {
            return Err(Error::StaleCache(format!(
                "gradient shape {:?} does not match cached output shape {:?}",
                grad_out.shape(),
                cache.output_shape
            )));
        }
        for (i, (layer, input)) in self.layers.iter().zip(&cache.inputs).enumerate() {
            if input.c() != layer.in_channels {
                return Err(Error::StaleCache(format!(
                    "cached input {i} has {} channels, layer expects {}",
                    input.c(),
                    layer.in_channels
                )));
            }
        }

        let d = self.layers.len();
        let mut weights = vec![Vec::new(); d];
        let mut biases = vec![Vec::new(); d];
        let mut slopes = vec![Vec::new(); d - 1];
        let mut grad = grad_out.clone();
        for i in (0..d).rev() {
            if i + 1 < d {
                let (g, gs) = prelu_backward(&cache.preacts[i], &self.prelus[i], &grad)?;
                slopes[i] = gs;
                grad = g;
            }
            let layer = &self.layers[i];
            if i == 0 && !with_input_grad {
                let (g_w, g_b) = if layer.transposed {
                    let (_, g_w, g_b) = deconv_backward(&cache.inputs[i], layer, &grad)?;
                    (g_w, g_b)
                } else {
                    crate::layers::conv_param_grads(&cache.inputs[i], layer, &grad)?
                };
                weights[i] = g_w;
                biases[i] = g_b;
                grad = Tensor::zeros(1, 1, 1, 1)?;
                break;
            }
            let (g_in, g_w, g_b) = if layer.transposed {
                deconv_backward(&cache.inputs[i], layer, &grad)?
            } else {
                conv_backward(&cache.inputs[i], layer, &grad)?
            };
            weights[i] = g_w;
            biases[i] = g_b;
            grad = g_in;
        }
        Ok(Gradients {
            weights,
            biases,
            slopes,
            input: grad,
        })
    }

    fn check_input(&self, input: &Tensor<T>) -> Result<()> {
        if input.c() != self.spec.input_channels() {
            return Err(Error::ChannelMismatch {
                got: input.c(),
                want: self.spec.input_channels(),
            });
        }
        // Zero padding would let smaller inputs through, but an output pixel
        // then sees mostly halo; require the first filter to fit the image.
        let need = self.spec.layers()[0].filter;
        if input.h() < need || input.w() < need {
            return Err(Error::InputTooSmall {
                got_h: input.h(),
                got_w: input.w(),
                need,
            });
        }
        self.spec.trace_sizes(input.h(), input.w())?;
        Ok(())
    }
}

/// Intermediate activations kept by [`Network::forward`]: each layer's input
/// and each hidden layer's pre-activation.
#[derive(Clone, Debug)]
pub struct ForwardCache<T = f32> {
    inputs: Vec<Tensor<T>>,
    preacts: Vec<Tensor<T>>,
    output_shape: (usize, usize, usize, usize),
}

/// Parameter gradients in the same layout as [`Network`] parameters.
#[derive(Clone, Debug)]
pub struct Gradients<T = f32> {
    pub weights: Vec<Vec<T>>,
    pub biases: Vec<Vec<T>>,
    pub slopes: Vec<Vec<T>>,
    pub input: Tensor<T>,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros_like(net: &Network<T>) -> Self {
        Gradients {
            weights: net.layers().iter().map(|l| vec![T::ZERO; l.weights.len()]).collect(),
            biases: net.layers().iter().map(|l| vec![T::ZERO; l.biases.len()]).collect(),
            slopes: net.prelus().iter().map(|p| vec![T::ZERO; p.slopes.len()]).collect(),
            input: Tensor::zeros(1, 1, 1, 1).unwrap(),
        }
    }

    pub fn scale(&mut self, factor: T) {
        for v in self
            .weights
            .iter_mut()
            .chain(self.biases.iter_mut())
            .chain(self.slopes.iter_mut())
            .flatten()
        {
            *v *= factor;
        }
    }
}

/// A serialized network: architecture notation, backprop counter, and all
/// parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub network: Network<f32>,
    pub backprops: u64,
}

impl Checkpoint {
    pub fn new(network: Network<f32>, backprops: u64) -> Self {
        Self { network, backprops }
    }

    /// Write the checkpoint. Layout: `ARCN` magic, u32 LE version, u32 LE
    /// notation length + UTF-8 notation, u64 LE backprop counter, then per
    /// layer the weights, biases, and (hidden layers) slopes as f32 LE.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        let notation = self.network.spec().to_string();
        w.write_all(&(notation.len() as u32).to_le_bytes())?;
        w.write_all(notation.as_bytes())?;
        w.write_all(&self.backprops.to_le_bytes())?;
        let d = self.network.num_layers();
        for i in 0..d {
            let layer = &self.network.layers()[i];
            write_f32s(&mut w, &layer.weights)?;
            write_f32s(&mut w, &layer.biases)?;
            if i + 1 < d {
                write_f32s(&mut w, &self.network.prelus()[i].slopes)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Read and validate a checkpoint. Array lengths are recomputed from the
    /// notation string; any mismatch is reported as corruption.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)
            .map_err(|_| Error::CheckpointMagic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::CheckpointMagic);
        }
        let version = read_u32(&mut r)?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::CheckpointVersion(version));
        }
        let notation_len = read_u32(&mut r)? as usize;
        if notation_len > 1 << 20 {
            return Err(Error::CheckpointCorrupt(format!(
                "implausible notation length {notation_len}"
            )));
        }
        let mut notation = vec![0u8; notation_len];
        r.read_exact(&mut notation)
            .map_err(|_| Error::CheckpointCorrupt("truncated notation string".into()))?;
        let notation = String::from_utf8(notation)
            .map_err(|_| Error::CheckpointCorrupt("notation is not UTF-8".into()))?;
        let spec: ArchSpec = notation.parse()?;
        let mut backprops = [0u8; 8];
        r.read_exact(&mut backprops)
            .map_err(|_| Error::CheckpointCorrupt("truncated backprop counter".into()))?;
        let backprops = u64::from_le_bytes(backprops);

        let mut network = Network::<f32>::zeros(&spec)?;
        let d = network.num_layers();
        for i in 0..d {
            let want = network.layers()[i].weights.len();
            network.layers_mut()[i].weights = read_f32s(&mut r, want, i + 1)?;
            let want = network.layers()[i].biases.len();
            network.layers_mut()[i].biases = read_f32s(&mut r, want, i + 1)?;
            if i + 1 < d {
                let want = network.prelus()[i].slopes.len();
                network.prelus_mut()[i].slopes = read_f32s(&mut r, want, i + 1)?;
            }
        }
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)? != 0 {
            return Err(Error::CheckpointCorrupt(
                "trailing bytes after the last layer".into(),
            ));
        }
        Ok(Self { network, backprops })
    }
}

fn write_f32s<W: Write>(w: &mut W, values: &[f32]) -> Result<()> {
    let mut buf = Vec::with_capacity(values.len() * 4);
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_f32s<R: Read>(r: &mut R, count: usize, layer: usize) -> Result<Vec<f32>> {
    let mut buf = vec![0u8; count * 4];
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..])? {
            0 => {
                return Err(Error::CheckpointTruncated {
                    layer,
                    missing: (buf.len() - filled).div_ceil(4),
                })
            }
            n => filled += n,
        }
    }
    Ok(buf
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)
        .map_err(|_| Error::CheckpointCorrupt("truncated header".into()))?;
    Ok(u32::from_le_bytes(buf))
}
