//! MSE training with per-layer learning rates, Gaussian initialization, and
//! transfer initialization from a source checkpoint.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::arch::ArchSpec;
use crate::data::SamplePair;
use crate::error::{Error, Result};
use crate::metrics::PSNR_CAP;
use crate::net::{Checkpoint, Gradients, Network};
use crate::tensor::Tensor;

pub const DEFAULT_PRELU_SLOPE: f32 = 0.25;

/// Training hyperparameters. The JSON config file mirrors these field names.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    /// Learning rate for the last layer's weights and biases.
    pub lr_last: f64,
    /// Learning rate everywhere else.
    pub lr_rest: f64,
    /// Learning rate for PReLU slopes; defaults to `lr_rest`.
    pub lr_slopes: Option<f64>,
    pub momentum: f64,
    pub init_std: f64,
    /// Training budget in samples processed by backpropagation.
    pub max_backprops: u64,
    /// Validate and log every this many backprops.
    pub validation_interval: u64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 128,
            lr_last: 5e-5,
            lr_rest: 5e-4,
            lr_slopes: None,
            momentum: 0.9,
            init_std: 0.001,
            max_backprops: 128 * 4000,
            validation_interval: 128 * 500,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn lr_slopes(&self) -> f64 {
        self.lr_slopes.unwrap_or(self.lr_rest)
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::BadConfig("batch_size must be at least 1".into()));
        }
        if self.lr_last < 0.0 || self.lr_rest < 0.0 || self.lr_slopes() < 0.0 {
            return Err(Error::BadConfig("learning rates must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::BadConfig("momentum must be in [0, 1)".into()));
        }
        if self.init_std < 0.0 {
            return Err(Error::BadConfig("init_std must be non-negative".into()));
        }
        if self.max_backprops == 0 {
            return Err(Error::BadConfig("max_backprops must be at least 1".into()));
        }
        if self.validation_interval == 0 {
            return Err(Error::BadConfig(
                "validation_interval must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Gaussian-initialize a network: weights N(0, std^2), biases 0, PReLU
/// slopes 0.25.
pub fn init_gaussian(spec: &ArchSpec, std: f64, seed: u64) -> Result<Network<f32>> {
    let mut net = Network::<f32>::zeros(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0f64, std)
        .map_err(|e| Error::BadConfig(format!("bad init_std {std}: {e}")))?;
    for layer in net.layers_mut() {
        for w in &mut layer.weights {
            *w = normal.sample(&mut rng) as f32;
        }
    }
    for p in net.prelus_mut() {
        p.slopes.fill(DEFAULT_PRELU_SLOPE);
    }
    Ok(net)
}

/// How to seed a target network from a trained source checkpoint.
#[derive(Clone, Debug)]
pub struct TransferPlan {
    pub source: Checkpoint,
    /// 1-based layer indices, counted from the input.
    pub copy_layers: Vec<usize>,
    /// Copy each transferred layer's PReLU slopes along with its weights.
    pub copy_slopes: bool,
    /// Per entry of `copy_layers`: exclude the copied layer from updates.
    pub freeze: Vec<bool>,
}

impl TransferPlan {
    pub fn new(source: Checkpoint, copy_layers: Vec<usize>) -> Self {
        let freeze = vec![false; copy_layers.len()];
        Self {
            source,
            copy_layers,
            copy_slopes: true,
            freeze,
        }
    }
}

/// Initialize a target network by copying the plan's layers from the source
/// and Gaussian-initializing the rest. Returns the network and the per-layer
/// frozen mask.
pub fn transfer_init(
    target: &ArchSpec,
    plan: &TransferPlan,
    std: f64,
    seed: u64,
) -> Result<(Network<f32>, Vec<bool>)> {
    if plan.freeze.len() != plan.copy_layers.len() {
        return Err(Error::BadConfig(format!(
            "freeze list has {} entries for {} copied layers",
            plan.freeze.len(),
            plan.copy_layers.len()
        )));
    }
    let mut net = init_gaussian(target, std, seed)?;
    let mut frozen = vec![false; net.num_layers()];
    let source = &plan.source.network;
    for (&layer_no, &freeze) in plan.copy_layers.iter().zip(&plan.freeze) {
        if layer_no == 0 || layer_no > net.num_layers() || layer_no > source.num_layers() {
            return Err(Error::BadConfig(format!(
                "copy layer {layer_no} out of range (source has {}, target has {} layers)",
                source.num_layers(),
                net.num_layers()
            )));
        }
        let i = layer_no - 1;
        let src = &source.layers()[i];
        let dst = &net.layers()[i];
        if (src.out_channels, src.in_channels, src.filter, src.transposed)
            != (dst.out_channels, dst.in_channels, dst.filter, dst.transposed)
        {
            return Err(Error::TransferShapeMismatch {
                layer: layer_no,
                got: (src.out_channels, src.in_channels, src.filter),
                want: (dst.out_channels, dst.in_channels, dst.filter),
            });
        }
        net.layers_mut()[i].weights.copy_from_slice(&src.weights);
        net.layers_mut()[i].biases.copy_from_slice(&src.biases);
        if plan.copy_slopes && i < net.prelus().len() && i < source.prelus().len() {
            net.prelus_mut()[i]
                .slopes
                .copy_from_slice(&source.prelus()[i].slopes);
        }
        frozen[i] = freeze;
    }
    Ok((net, frozen))
}

/// Mean over the batch of per-sample squared-error sums, and its gradient
/// with respect to the prediction.
pub fn mse_loss<T: crate::tensor::Scalar>(
    pred: &Tensor<T>,
    target: &Tensor<T>,
) -> Result<(f64, Tensor<T>)> {
    if pred.shape() != target.shape() {
        return Err(Error::ShapeMismatch {
            context: "loss target",
            got: target.shape(),
            want: pred.shape(),
        });
    }
    let n = pred.n() as f64;
    let mut grad = pred.clone();
    let mut loss = 0.0f64;
    for (g, &t) in grad.data_mut().iter_mut().zip(target.data()) {
        let d = g.to_f64() - t.to_f64();
        loss += d * d;
        *g = T::from_f64(2.0 * d / n);
    }
    Ok((loss / n, grad))
}

/// Momentum buffers and the frozen-layer mask for SGD.
#[derive(Clone, Debug)]
pub struct SgdState {
    velocity: Gradients<f32>,
    frozen: Vec<bool>,
}

impl SgdState {
    pub fn new(net: &Network<f32>, frozen: Vec<bool>) -> Self {
        let frozen = if frozen.is_empty() {
            vec![false; net.num_layers()]
        } else {
            frozen
        };
        assert_eq!(frozen.len(), net.num_layers());
        Self {
            velocity: Gradients::zeros_like(net),
            frozen,
        }
    }

    pub fn frozen(&self) -> &[bool] {
        &self.frozen
    }
}

/// One momentum-SGD update: v <- momentum*v - lr*g; p <- p + v. The last
/// layer uses `lr_last`, every other layer `lr_rest`, slopes `lr_slopes`.
/// Frozen layers are untouched.
pub fn sgd_step(
    net: &mut Network<f32>,
    grads: &Gradients<f32>,
    state: &mut SgdState,
    cfg: &TrainConfig,
) {
    let d = net.num_layers();
    let momentum = cfg.momentum as f32;
    for i in 0..d {
        if state.frozen[i] {
            continue;
        }
        let lr = if i + 1 == d { cfg.lr_last } else { cfg.lr_rest } as f32;
        let layer = &mut net.layers_mut()[i];
        for ((w, v), &g) in layer
            .weights
            .iter_mut()
            .zip(&mut state.velocity.weights[i])
            .zip(&grads.weights[i])
        {
            *v = momentum * *v - lr * g;
            *w += *v;
        }
        for ((b, v), &g) in layer
            .biases
            .iter_mut()
            .zip(&mut state.velocity.biases[i])
            .zip(&grads.biases[i])
        {
            *v = momentum * *v - lr * g;
            *b += *v;
        }
    }
    let lr_slopes = cfg.lr_slopes() as f32;
    for i in 0..d - 1 {
        if state.frozen[i] {
            continue;
        }
        for ((s, v), &g) in net.prelus_mut()[i]
            .slopes
            .iter_mut()
            .zip(&mut state.velocity.slopes[i])
            .zip(&grads.slopes[i])
        {
            *v = momentum * *v - lr_slopes * g;
            *s += *v;
        }
    }
}

/// One log entry: backprops seen so far, mean training loss since the
/// previous entry, and the validation-set average patch PSNR.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogRow {
    pub backprops: u64,
    pub train_loss: f64,
    pub val_psnr: f64,
}

pub const LOG_CSV_HEADER: &str = "backprops,train_loss,val_psnr";

impl LogRow {
    pub fn to_csv(&self) -> String {
        format!("{},{:.6e},{:.4}", self.backprops, self.train_loss, self.val_psnr)
    }
}

/// What [`train`] produces: the final and best-on-validation checkpoints,
/// the log, and the divergence diagnostic if training aborted.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub final_checkpoint: Checkpoint,
    pub best_checkpoint: Checkpoint,
    pub log: Vec<LogRow>,
    pub diverged: Option<String>,
}

fn grads_finite(grads: &Gradients<f32>) -> bool {
    grads
        .weights
        .iter()
        .chain(grads.biases.iter())
        .chain(grads.slopes.iter())
        .all(|v| v.iter().all(|g| g.is_finite()))
}

fn params_finite(net: &Network<f32>) -> bool {
    net.layers()
        .iter()
        .all(|l| l.weights.iter().chain(l.biases.iter()).all(|v| v.is_finite()))
        && net
            .prelus()
            .iter()
            .all(|p| p.slopes.iter().all(|v| v.is_finite()))
}

/// Stack sample pairs into [0, 1]-scaled input/target batch tensors.
fn batch_tensors(pairs: &[SamplePair], idx: &[usize]) -> (Tensor<f32>, Tensor<f32>) {
    let (ih, iw) = (pairs[idx[0]].input.h(), pairs[idx[0]].input.w());
    let (th, tw) = (pairs[idx[0]].target.h(), pairs[idx[0]].target.w());
    let mut input = Vec::with_capacity(idx.len() * ih * iw);
    let mut target = Vec::with_capacity(idx.len() * th * tw);
    for &i in idx {
        input.extend(pairs[i].input.samples().iter().map(|&v| v / 255.0));
        target.extend(pairs[i].target.samples().iter().map(|&v| v / 255.0));
    }
    (
        Tensor::from_vec(idx.len(), 1, ih, iw, input).expect("uniform pair sizes"),
        Tensor::from_vec(idx.len(), 1, th, tw, target).expect("uniform pair sizes"),
    )
}

/// Average patch PSNR of the network over validation pairs, computed on
/// [0, 255] values with outputs clamped; exact matches count as the cap.
pub fn validation_psnr(net: &Network<f32>, pairs: &[SamplePair], batch: usize) -> Result<f64> {
    if pairs.is_empty() {
        return Ok(f64::NAN);
    }
    let mut total = 0.0f64;
    let indices: Vec<usize> = (0..pairs.len()).collect();
    for chunk in indices.chunks(batch.max(1)) {
        let (input, target) = batch_tensors(pairs, chunk);
        let out = net.infer(&input)?;
        if out.shape() != target.shape() {
            return Err(Error::ShapeMismatch {
                context: "validation target",
                got: target.shape(),
                want: out.shape(),
            });
        }
        let plane = out.sample_len();
        for (o, t) in out.data().chunks(plane).zip(target.data().chunks(plane)) {
            let mse: f64 = o
                .iter()
                .zip(t)
                .map(|(&a, &b)| {
                    let d = (a.clamp(0.0, 1.0) - b) as f64 * 255.0;
                    d * d
                })
                .sum::<f64>()
                / plane as f64;
            total += if mse == 0.0 {
                PSNR_CAP
            } else {
                (10.0 * (255.0f64 * 255.0 / mse).log10()).min(PSNR_CAP)
            };
        }
    }
    Ok(total / pairs.len() as f64)
}

/// Mini-batch SGD over the sample pairs for `cfg.max_backprops` samples.
///
/// Pairs are reshuffled every epoch from the config seed; validation runs
/// every `validation_interval` backprops and once more at the end. A
/// non-finite loss aborts with the last good parameters.
pub fn train(
    mut net: Network<f32>,
    frozen: Vec<bool>,
    pairs: &[SamplePair],
    val_pairs: &[SamplePair],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(Error::BadConfig("no training pairs".into()));
    }
    let (ih, iw) = (pairs[0].input.h(), pairs[0].input.w());
    let want = net.spec().output_size(ih, iw)?;
    let got = (pairs[0].target.h(), pairs[0].target.w());
    if want != got {
        return Err(Error::BadConfig(format!(
            "target patches are {}x{} but the network maps {ih}x{iw} to {}x{}",
            got.0, got.1, want.0, want.1
        )));
    }

    let mut state = SgdState::new(&net, frozen);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let batch = cfg.batch_size.min(pairs.len());
    let mut order: Vec<usize> = Vec::new();
    let mut cursor = 0usize;

    let mut backprops = 0u64;
    let mut next_validation = cfg.validation_interval;
    let mut loss_accum = 0.0f64;
    let mut loss_steps = 0u64;
    let mut log = Vec::new();
    let mut best: Option<(f64, Checkpoint)> = None;

    macro_rules! validate_now {
        () => {{
            let val = validation_psnr(&net, val_pairs, cfg.batch_size)?;
            let steps = std::mem::take(&mut loss_steps);
            let accum = std::mem::take(&mut loss_accum);
            log.push(LogRow {
                backprops,
                train_loss: if steps > 0 { accum / steps as f64 } else { f64::NAN },
                val_psnr: val,
            });
            if !val.is_nan() && best.as_ref().map_or(true, |(b, _)| val > *b) {
                best = Some((val, Checkpoint::new(net.clone(), backprops)));
            }
        }};
    }

    while backprops < cfg.max_backprops {
        if cursor + batch > order.len() {
            order = (0..pairs.len()).collect();
            use rand::seq::SliceRandom;
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let idx = &order[cursor..cursor + batch];
        cursor += batch;

        let (input, target) = batch_tensors(pairs, idx);
        let (pred, cache) = net.forward(&input)?;
        let (loss, grad) = mse_loss(&pred, &target)?;
        let abort = |net: Network<f32>, best: Option<(f64, Checkpoint)>, log, reason: String| {
            let last_good = Checkpoint::new(net, backprops);
            Ok(TrainOutcome {
                final_checkpoint: last_good.clone(),
                best_checkpoint: best.map(|(_, c)| c).unwrap_or(last_good),
                log,
                diverged: Some(reason),
            })
        };
        if !loss.is_finite() {
            return abort(net, best, log, format!("loss became {loss}"));
        }
        let grads = net.backward_params(&cache, &grad)?;
        if !grads_finite(&grads) {
            return abort(net, best, log, "gradients became non-finite".into());
        }
        // The update itself can overflow f32 at extreme rates; keep the
        // pre-step parameters as the last-good state.
        let before = net.clone();
        sgd_step(&mut net, &grads, &mut state, cfg);
        if !params_finite(&net) {
            return abort(before, best, log, "parameters overflowed during the update".into());
        }

        backprops += batch as u64;
        loss_accum += loss;
        loss_steps += 1;

        if backprops >= next_validation {
            validate_now!();
            next_validation += cfg.validation_interval;
        }
    }
    if log.last().map(|r| r.backprops) != Some(backprops) {
        validate_now!();
    }

    let final_checkpoint = Checkpoint::new(net, backprops);
    let best_checkpoint = best
        .map(|(_, c)| c)
        .unwrap_or_else(|| final_checkpoint.clone());
    Ok(TrainOutcome {
        final_checkpoint,
        best_checkpoint,
        log,
        diverged: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::parse_arch;
    use crate::codec::DegradeConfig;
    use crate::data::build_pairs;
    use crate::gray::GrayImage;

    fn textured(h: usize, w: usize) -> GrayImage {
        GrayImage::new(
            h,
            w,
            (0..h * w)
                .map(|i| {
                    let (y, x) = (i / w, i % w);
                    (128.0 + 70.0 * ((x as f32) * 0.23).sin() + 40.0 * ((y as f32) * 0.41).cos())
                        .clamp(0.0, 255.0)
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn gaussian_init_statistics() {
        let spec = parse_arch("64(9)-32(7)-16(1)-1(5)").unwrap();
        let net = init_gaussian(&spec, 0.001, 42).unwrap();
        let weights: Vec<f64> = net
            .layers()
            .iter()
            .flat_map(|l| l.weights.iter().map(|&w| w as f64))
            .collect();
        assert_eq!(weights.len(), 106_448);
        let mean = weights.iter().sum::<f64>() / weights.len() as f64;
        let bound = 3.0 * 0.001 / (weights.len() as f64).sqrt();
        assert!(mean.abs() < bound, "mean {mean} exceeds {bound}");
        assert!(net.layers().iter().all(|l| l.biases.iter().all(|&b| b == 0.0)));
        assert!(net
            .prelus()
            .iter()
            .all(|p| p.slopes.iter().all(|&s| s == 0.25)));
    }

    #[test]
    fn same_seed_same_parameters() {
        let spec = parse_arch("8(3)-4(1)-1(3)").unwrap();
        let a = init_gaussian(&spec, 0.001, 7).unwrap();
        let b = init_gaussian(&spec, 0.001, 7).unwrap();
        let c = init_gaussian(&spec, 0.001, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn zero_std_gives_zero_weights() {
        let spec = parse_arch("4(3)-1(3)").unwrap();
        let net = init_gaussian(&spec, 0.0, 3).unwrap();
        assert!(net.layers().iter().all(|l| l.weights.iter().all(|&w| w == 0.0)));
    }

    #[test]
    fn transfer_copies_named_layers_only() {
        let base_spec = parse_arch("8(9)-4(7)-2(1)-1(5)").unwrap();
        let base = init_gaussian(&base_spec, 0.05, 1).unwrap();
        let ckpt = Checkpoint::new(base.clone(), 1000);
        let deeper = parse_arch("8(9)-4(7)-4(3)-2(1)-1(5)").unwrap();
        let plan = TransferPlan::new(ckpt, vec![1, 2]);
        let (net, frozen) = transfer_init(&deeper, &plan, 0.001, 2).unwrap();
        assert_eq!(net.layers()[0].weights, base.layers()[0].weights);
        assert_eq!(net.layers()[1].weights, base.layers()[1].weights);
        assert_eq!(net.prelus()[0].slopes, base.prelus()[0].slopes);
        assert_ne!(net.layers()[2].weights, base.layers()[2].weights);
        assert!(frozen.iter().all(|&f| !f));
        // Fresh layers follow the Gaussian init scale, not the source's.
        let fresh_absmax = net.layers()[3]
            .weights
            .iter()
            .fold(0.0f32, |m, &w| m.max(w.abs()));
        assert!(fresh_absmax < 0.01);
    }

    #[test]
    fn empty_copy_list_equals_gaussian_init() {
        let spec = parse_arch("6(3)-3(1)-1(3)").unwrap();
        let source = Checkpoint::new(init_gaussian(&spec, 0.1, 9).unwrap(), 5);
        let plan = TransferPlan::new(source, vec![]);
        let (net, _) = transfer_init(&spec, &plan, 0.001, 4).unwrap();
        assert_eq!(net, init_gaussian(&spec, 0.001, 4).unwrap());
    }

    #[test]
    fn slope_copy_can_be_disabled() {
        let spec = parse_arch("4(3)-2(1)-1(3)").unwrap();
        let mut base = init_gaussian(&spec, 0.05, 31).unwrap();
        base.prelus_mut()[0].slopes.fill(0.77);
        let plan = TransferPlan {
            source: Checkpoint::new(base.clone(), 0),
            copy_layers: vec![1],
            copy_slopes: false,
            freeze: vec![false],
        };
        let (net, _) = transfer_init(&spec, &plan, 0.001, 32).unwrap();
        assert_eq!(net.layers()[0].weights, base.layers()[0].weights);
        assert!(net.prelus()[0].slopes.iter().all(|&s| s == 0.25));
    }

    #[test]
    fn runaway_lr_aborts_with_last_good_checkpoint() {
        let spec = parse_arch("4(3)-2(1)-1(3)").unwrap();
        let net = init_gaussian(&spec, 0.01, 41).unwrap();
        let pairs = build_pairs(
            &[textured(64, 64)],
            &DegradeConfig::new(10).unwrap(),
            1,
            Some(4),
        )
        .unwrap();
        let cfg = TrainConfig {
            batch_size: 4,
            lr_last: 1e9,
            lr_rest: 1e9,
            max_backprops: 4 * 200,
            validation_interval: 4 * 10,
            seed: 5,
            ..TrainConfig::default()
        };
        let outcome = train(net, vec![], &pairs, &pairs[..2], &cfg).unwrap();
        let reason = outcome.diverged.expect("an exploding run must abort");
        assert!(
            reason.contains("NaN")
                || reason.contains("inf")
                || reason.contains("non-finite")
                || reason.contains("overflowed"),
            "{reason}"
        );
        assert!(outcome
            .final_checkpoint
            .network
            .layers()
            .iter()
            .all(|l| l.weights.iter().all(|w| w.is_finite())));
    }

    #[test]
    fn transfer_shape_mismatch_names_layer() {
        let base = init_gaussian(&parse_arch("8(9)-1(5)").unwrap(), 0.001, 1).unwrap();
        let plan = TransferPlan::new(Checkpoint::new(base, 0), vec![1]);
        let target = parse_arch("16(9)-1(5)").unwrap();
        let err = transfer_init(&target, &plan, 0.001, 2).unwrap_err();
        match err {
            Error::TransferShapeMismatch { layer, got, want } => {
                assert_eq!(layer, 1);
                assert_eq!(got.0, 8);
                assert_eq!(want.0, 16);
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn mse_hand_case() {
        let pred = Tensor::from_vec(1, 1, 1, 1, vec![2.0]).unwrap();
        let target = Tensor::from_vec(1, 1, 1, 1, vec![0.0]).unwrap();
        let (loss, grad) = mse_loss(&pred, &target).unwrap();
        assert_eq!(loss, 4.0);
        assert_eq!(grad.data(), &[4.0]);
    }

    #[test]
    fn mse_zero_at_optimum() {
        let pred = Tensor::from_vec(1, 1, 2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (loss, grad) = mse_loss(&pred, &pred.clone()).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sgd_without_momentum_is_plain_descent() {
        let spec = parse_arch("2(3)-1(1)").unwrap();
        let mut net = init_gaussian(&spec, 0.01, 5).unwrap();
        let before = net.clone();
        let mut grads = Gradients::zeros_like(&net);
        for g in grads.weights[0].iter_mut() {
            *g = 2.0;
        }
        let cfg = TrainConfig {
            momentum: 0.0,
            lr_rest: 0.1,
            ..TrainConfig::default()
        };
        let mut state = SgdState::new(&net, vec![]);
        sgd_step(&mut net, &grads, &mut state, &cfg);
        for (w, w0) in net.layers()[0].weights.iter().zip(&before.layers()[0].weights) {
            assert!((w - (w0 - 0.2)).abs() < 1e-7);
        }
    }

    #[test]
    fn momentum_two_step_displacement() {
        // v1 = -lr g, p1 = p0 - lr g; v2 = 0.9 v1 - lr g, p2 = p0 - lr g (1 + 1.9).
        let spec = parse_arch("1(1)").unwrap();
        let mut net = Network::<f32>::zeros(&spec).unwrap();
        net.layers_mut()[0].weights[0] = 1.0;
        let mut grads = Gradients::zeros_like(&net);
        grads.weights[0][0] = 1.0;
        let cfg = TrainConfig {
            momentum: 0.9,
            lr_last: 0.01,
            ..TrainConfig::default()
        };
        let mut state = SgdState::new(&net, vec![]);
        sgd_step(&mut net, &grads, &mut state, &cfg);
        sgd_step(&mut net, &grads, &mut state, &cfg);
        let w = net.layers()[0].weights[0];
        assert!((w - (1.0 - 0.01 * (1.0 + 1.9))).abs() < 1e-7, "{w}");
    }

    #[test]
    fn frozen_layer_is_bit_identical() {
        let spec = parse_arch("4(3)-2(1)-1(3)").unwrap();
        let base = init_gaussian(&spec, 0.05, 11).unwrap();
        let plan = TransferPlan {
            source: Checkpoint::new(base.clone(), 0),
            copy_layers: vec![1],
            copy_slopes: true,
            freeze: vec![true],
        };
        let (net, frozen) = transfer_init(&spec, &plan, 0.001, 12).unwrap();
        assert_eq!(frozen, vec![true, false, false]);

        let imgs: Vec<GrayImage> = (0..2).map(|_| textured(64, 64)).collect();
        let cfg10 = DegradeConfig::new(10).unwrap();
        let pairs = build_pairs(&imgs, &cfg10, 1, Some(3)).unwrap();
        let cfg = TrainConfig {
            batch_size: 8,
            max_backprops: 8 * 30,
            validation_interval: 8 * 30,
            seed: 13,
            ..TrainConfig::default()
        };
        let outcome = train(net, frozen, &pairs, &pairs[..4], &cfg).unwrap();
        let trained = &outcome.final_checkpoint.network;
        assert_eq!(trained.layers()[0].weights, base.layers()[0].weights);
        assert_eq!(trained.layers()[0].biases, base.layers()[0].biases);
        assert_eq!(trained.prelus()[0].slopes, base.prelus()[0].slopes);
        assert_ne!(trained.layers()[1].weights, base.layers()[1].weights);
    }

    #[test]
    fn zero_lr_keeps_parameters_and_loss_constant() {
        let spec = parse_arch("4(3)-2(1)-1(3)").unwrap();
        let net = init_gaussian(&spec, 0.01, 21).unwrap();
        let before = net.clone();
        let pairs = build_pairs(
            &[textured(64, 64)],
            &DegradeConfig::new(10).unwrap(),
            1,
            Some(1),
        )
        .unwrap();
        // A single repeated sample makes every step's loss exactly equal.
        let pairs = &pairs[..1];
        let cfg = TrainConfig {
            batch_size: 1,
            lr_last: 0.0,
            lr_rest: 0.0,
            lr_slopes: Some(0.0),
            max_backprops: 6,
            validation_interval: 2,
            seed: 2,
            ..TrainConfig::default()
        };
        let outcome = train(net, vec![], pairs, pairs, &cfg).unwrap();
        assert_eq!(outcome.final_checkpoint.network, before);
        assert!(outcome.log.len() >= 2);
        let first = outcome.log[0].train_loss;
        for row in &outcome.log {
            assert_eq!(row.train_loss, first);
        }
    }

    #[test]
    fn same_seed_reproduces_logs_exactly() {
        let spec = parse_arch("4(3)-2(1)-1(3)").unwrap();
        let pairs = build_pairs(
            &[textured(64, 64)],
            &DegradeConfig::new(10).unwrap(),
            1,
            Some(5),
        )
        .unwrap();
        let cfg = TrainConfig {
            batch_size: 8,
            max_backprops: 8 * 25,
            validation_interval: 8 * 5,
            seed: 77,
            ..TrainConfig::default()
        };
        let run = |seed: u64| {
            let net = init_gaussian(&spec, 0.001, seed).unwrap();
            train(net, vec![], &pairs, &pairs[..4], &cfg).unwrap()
        };
        let a = run(9);
        let b = run(9);
        assert_eq!(a.log, b.log);
        assert_eq!(a.final_checkpoint, b.final_checkpoint);
    }

    #[test]
    fn target_size_mismatch_rejected_before_training() {
        let spec = parse_arch("4(9)-2(1)-2(3)-4(1)-1[9]-s2").unwrap();
        let net = init_gaussian(&spec, 0.001, 1).unwrap();
        // Stride-1 pairs have 24x24 targets; the s=2 net outputs 23x23.
        let pairs = build_pairs(
            &[textured(64, 64)],
            &DegradeConfig::new(10).unwrap(),
            1,
            None,
        )
        .unwrap();
        let cfg = TrainConfig::default();
        assert!(train(net, vec![], &pairs, &[], &cfg).is_err());
    }
}
