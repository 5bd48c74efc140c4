//! Compression-artifact reduction toolkit: dense tensor and layer
//! primitives with manual backpropagation, hourglass architecture notation,
//! a block-DCT codec simulator, corpus construction, momentum-SGD training
//! with transfer initialization, and PSNR / SSIM / PSNR-B quality metrics.

pub mod arch;
pub mod codec;
pub mod data;
pub mod error;
pub mod gray;
pub mod layers;
pub mod metrics;
pub mod net;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Tensor;
