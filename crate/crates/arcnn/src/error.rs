use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: input has {got} channels but the layer expects {want}")]
    ChannelMismatch { got: usize, want: usize },

    #[error("shape mismatch in {context}: got {got:?}, expected {want:?}")]
    ShapeMismatch {
        context: &'static str,
        got: (usize, usize, usize, usize),
        want: (usize, usize, usize, usize),
    },

    #[error("tensor data length {got} does not match shape {shape:?} ({want} values)")]
    BadTensorLength {
        shape: (usize, usize, usize, usize),
        got: usize,
        want: usize,
    },

    #[error("{what} must be at least 1, got 0")]
    ZeroDim { what: &'static str },

    #[error("kernel {filter}x{filter} does not fit {h}x{w} input with padding {pad}")]
    KernelTooLarge {
        filter: usize,
        h: usize,
        w: usize,
        pad: usize,
    },

    #[error("transposed-convolution parameters imply a non-positive output size (input {h}x{w}, filter {filter}, stride {stride}, pad {pad})")]
    EmptyDeconvOutput {
        h: usize,
        w: usize,
        filter: usize,
        stride: usize,
        pad: usize,
    },

    #[error("layer is {got}, but the operation requires a {want} layer")]
    WrongLayerKind { got: &'static str, want: &'static str },

    #[error("activation has {got} slopes but the input has {want} channels")]
    SlopeCountMismatch { got: usize, want: usize },

    #[error("invalid parameter array: {0}")]
    BadParams(String),

    #[error("cannot parse architecture notation: {reason} in segment `{segment}`")]
    ArchParse { segment: String, reason: String },

    #[error("invalid architecture: {0}")]
    BadArch(String),

    #[error("network input is {got_h}x{got_w}, smaller than the first receptive field ({need}x{need})")]
    InputTooSmall {
        got_h: usize,
        got_w: usize,
        need: usize,
    },

    #[error("forward cache does not match this network or gradient ({0})")]
    StaleCache(String),

    #[error("corrupt checkpoint: bad magic (expected `ARCN`)")]
    CheckpointMagic,

    #[error("unsupported checkpoint version {0}")]
    CheckpointVersion(u32),

    #[error("corrupt checkpoint: layer {layer} short by {missing} values")]
    CheckpointTruncated { layer: usize, missing: usize },

    #[error("corrupt checkpoint: {0}")]
    CheckpointCorrupt(String),

    #[error("transfer layer {layer}: source is {got:?}, target expects {want:?} (out_channels, in_channels, filter)")]
    TransferShapeMismatch {
        layer: usize,
        got: (usize, usize, usize),
        want: (usize, usize, usize),
    },

    #[error("invalid configuration: {0}")]
    BadConfig(String),

    #[error("quality must be in [1, 100], got {0}")]
    BadQuality(u32),

    #[error("rescale factor must be in (0, 1], got {0}")]
    BadRescale(f64),

    #[error("image is {h}x{w}, smaller than the 8x8 minimum for this operation")]
    ImageTooSmall { h: usize, w: usize },

    #[error("images have different sizes: {a_h}x{a_w} vs {b_h}x{b_w}")]
    SizeMismatch {
        a_h: usize,
        a_w: usize,
        b_h: usize,
        b_w: usize,
    },

    #[error("cannot parse {format} image: {reason}")]
    ImageParse {
        format: &'static str,
        reason: String,
    },

    #[error("training diverged at {backprops} backprops: {reason}")]
    Diverged { backprops: u64, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
