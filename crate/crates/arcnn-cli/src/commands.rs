use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use clap::{Args, Parser, Subcommand};

use arcnn::arch::{
    count_ops, count_params, parse_arch, ArchSpec, BASELINE_QUOTED_PARAMS, FAST_QUOTED_PARAMS,
};
use arcnn::codec::{rescale_degrade, DegradeConfig};
use arcnn::data::{
    augment, build_pairs, is_pair_cache, load_manifest_images, load_pairs, save_pairs, SamplePair,
};
use arcnn::gray::{read_image, GrayImage};
use arcnn::metrics::{cap, QualityReport};
use arcnn::net::{Checkpoint, Network};
use arcnn::synth::natural_image;
use arcnn::train::{
    init_gaussian, train, transfer_init, TrainConfig, TransferPlan, LOG_CSV_HEADER,
};
use arcnn::Tensor;

#[derive(Parser)]
#[command(name = "arcnn", version, about = "Compression-artifact reduction toolkit")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize compression artifacts on one image and report its quality.
    Degrade(DegradeArgs),
    /// Build a cached training-pair blob from a corpus manifest.
    BuildDataset(BuildDatasetArgs),
    /// Train a network and write checkpoints plus a CSV log.
    Train(TrainArgs),
    /// Run a trained model over an image.
    Restore(RestoreArgs),
    /// Score a directory of test images against references.
    Eval(EvalArgs),
    /// Print per-layer parameter and operation counts for an architecture.
    Inspect(InspectArgs),
    /// Time two architectures on the same input and compare with the
    /// operation-count model.
    Bench(BenchArgs),
    /// Write procedural grayscale test images.
    Synth(SynthArgs),
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Degrade(args) => degrade(args),
        Command::BuildDataset(args) => build_dataset(args),
        Command::Train(args) => train_cmd(args),
        Command::Restore(args) => restore(args),
        Command::Eval(args) => eval(args),
        Command::Inspect(args) => inspect(args),
        Command::Bench(args) => bench(args),
        Command::Synth(args) => synth(args),
    }
}

#[derive(Args)]
struct DegradeArgs {
    /// Input image (PGM, or PPM for luminance extraction).
    #[arg(long = "in")]
    input: PathBuf,
    /// Output PGM path.
    #[arg(long = "out")]
    output: PathBuf,
    /// Quality factor in [1, 100].
    #[arg(long)]
    quality: u32,
    /// Downscale by this factor before compressing.
    #[arg(long)]
    rescale: Option<f64>,
    /// Also write the pre-compression reference (the rescaled clean image).
    #[arg(long)]
    reference_out: Option<PathBuf>,
}

fn degrade_config(quality: u32, rescale: Option<f64>) -> Result<DegradeConfig> {
    Ok(match rescale {
        Some(f) => DegradeConfig::with_rescale(quality, f)?,
        None => DegradeConfig::new(quality)?,
    })
}

fn degrade(args: DegradeArgs) -> Result<()> {
    let cfg = degrade_config(args.quality, args.rescale)?;
    let img = read_image(&args.input)
        .with_context(|| format!("reading {}", args.input.display()))?;
    let (degraded, clean) = rescale_degrade(&img, &cfg)?;
    let comment = format!("degraded q={}{}", args.quality, match args.rescale {
        Some(f) => format!(" rescale={f}"),
        None => String::new(),
    });
    degraded.write_pgm(&args.output, &[&comment])?;
    if let Some(ref_path) = &args.reference_out {
        clean.write_pgm(ref_path, &["pre-compression reference"])?;
    }
    let report = QualityReport::measure(&clean, &degraded)?;
    println!("path,psnr,ssim,psnr_b");
    println!("{}", report.csv_row(&args.output.display().to_string()));
    Ok(())
}

#[derive(Args)]
struct BuildDatasetArgs {
    /// Corpus manifest: one image path per line.
    #[arg(long)]
    data: PathBuf,
    /// Architecture notation; its stride fixes the target crop.
    #[arg(long)]
    arch: String,
    #[arg(long)]
    quality: u32,
    #[arg(long)]
    rescale: Option<f64>,
    /// Apply the 20-variant scale/rotation augmentation.
    #[arg(long)]
    augment: bool,
    /// Output pair-cache path.
    #[arg(long = "out")]
    output: PathBuf,
    /// Shuffle seed for the emitted pair order.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn corpus_pairs(
    manifest: &Path,
    arch: &ArchSpec,
    quality: u32,
    rescale: Option<f64>,
    do_augment: bool,
    seed: u64,
) -> Result<Vec<SamplePair>> {
    let cfg = degrade_config(quality, rescale)?;
    let mut images = load_manifest_images(manifest)
        .with_context(|| format!("loading corpus from {}", manifest.display()))?;
    if do_augment {
        let mut augmented = Vec::with_capacity(images.len() * 20);
        for img in &images {
            augmented.extend(augment(img)?);
        }
        images = augmented;
    }
    Ok(build_pairs(&images, &cfg, arch.stride(), Some(seed))?)
}

fn build_dataset(args: BuildDatasetArgs) -> Result<()> {
    let spec = parse_arch(&args.arch)?;
    let pairs = corpus_pairs(
        &args.data,
        &spec,
        args.quality,
        args.rescale,
        args.augment,
        args.seed,
    )?;
    save_pairs(&pairs, &args.output)?;
    log::info!("wrote {} pairs to {}", pairs.len(), args.output.display());
    Ok(())
}

#[derive(Args)]
struct TrainArgs {
    /// Architecture notation, e.g. 64(9)-32(7)-16(1)-1(5).
    #[arg(long)]
    arch: String,
    /// Training data: corpus manifest or pair cache.
    #[arg(long)]
    data: PathBuf,
    /// Validation data: corpus manifest or pair cache.
    #[arg(long)]
    val: Option<PathBuf>,
    /// JSON training config mirroring the TrainConfig fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Degradation quality used when building pairs from a manifest.
    #[arg(long, default_value_t = 10)]
    quality: u32,
    #[arg(long)]
    rescale: Option<f64>,
    /// Apply the 20-variant augmentation when building from a manifest.
    #[arg(long)]
    augment: bool,
    /// Source checkpoint for transfer initialization.
    #[arg(long)]
    transfer_from: Option<PathBuf>,
    /// Comma-separated 1-based layer indices to copy from the source.
    #[arg(long, value_delimiter = ',')]
    copy_layers: Vec<usize>,
    /// Comma-separated subset of --copy-layers to freeze.
    #[arg(long, value_delimiter = ',')]
    freeze: Vec<usize>,
    /// Do not copy PReLU slopes along with transferred layers.
    #[arg(long)]
    no_copy_slopes: bool,
    /// Final checkpoint path.
    #[arg(long = "out", default_value = "final.ckpt")]
    output: PathBuf,
    /// Best-on-validation checkpoint path.
    #[arg(long, default_value = "best.ckpt")]
    best_out: PathBuf,
    /// Training log CSV path.
    #[arg(long, default_value = "train_log.csv")]
    log: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config backprop budget.
    #[arg(long)]
    max_backprops: Option<u64>,
}

fn load_dataset(
    path: &Path,
    arch: &ArchSpec,
    quality: u32,
    rescale: Option<f64>,
    do_augment: bool,
    seed: u64,
) -> Result<Vec<SamplePair>> {
    if is_pair_cache(path) {
        Ok(load_pairs(path)?)
    } else {
        corpus_pairs(path, arch, quality, rescale, do_augment, seed)
    }
}

fn train_cmd(args: TrainArgs) -> Result<()> {
    let spec = parse_arch(&args.arch)?;
    let mut cfg: TrainConfig = match &args.config {
        Some(path) => serde_json::from_str(
            &fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?,
        )
        .with_context(|| format!("parsing config {}", path.display()))?,
        None => TrainConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(budget) = args.max_backprops {
        cfg.max_backprops = budget;
    }
    cfg.validate()?;

    // Reject an incompatible transfer source before touching any data.
    let (net, frozen) = match &args.transfer_from {
        Some(src) => {
            let source = Checkpoint::load(src)
                .with_context(|| format!("loading transfer source {}", src.display()))?;
            for f in &args.freeze {
                if !args.copy_layers.contains(f) {
                    bail!("--freeze {f} is not among --copy-layers");
                }
            }
            let plan = TransferPlan {
                source,
                copy_layers: args.copy_layers.clone(),
                copy_slopes: !args.no_copy_slopes,
                freeze: args
                    .copy_layers
                    .iter()
                    .map(|l| args.freeze.contains(l))
                    .collect(),
            };
            transfer_init(&spec, &plan, cfg.init_std, cfg.seed)?
        }
        None => {
            if !args.copy_layers.is_empty() || !args.freeze.is_empty() {
                bail!("--copy-layers/--freeze require --transfer-from");
            }
            (init_gaussian(&spec, cfg.init_std, cfg.seed)?, Vec::new())
        }
    };

    let pairs = load_dataset(&args.data, &spec, args.quality, args.rescale, args.augment, cfg.seed)?;
    let val_pairs = match &args.val {
        Some(path) => load_dataset(path, &spec, args.quality, args.rescale, false, cfg.seed)?,
        None => Vec::new(),
    };
    log::info!(
        "training {} on {} pairs ({} validation)",
        spec,
        pairs.len(),
        val_pairs.len()
    );

    let outcome = train(net, frozen, &pairs, &val_pairs, &cfg)?;
    outcome.final_checkpoint.save(&args.output)?;
    outcome.best_checkpoint.save(&args.best_out)?;
    let mut csv = String::from(LOG_CSV_HEADER);
    for row in &outcome.log {
        csv.push('\n');
        csv.push_str(&row.to_csv());
    }
    csv.push('\n');
    fs::write(&args.log, csv)?;
    if let Some(reason) = outcome.diverged {
        bail!("training aborted ({reason}); last-good checkpoint written to {}",
            args.output.display());
    }
    Ok(())
}

#[derive(Args)]
struct RestoreArgs {
    /// Checkpoint to run.
    #[arg(long)]
    model: PathBuf,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long = "out")]
    output: PathBuf,
}

fn restore(args: RestoreArgs) -> Result<()> {
    let ckpt = Checkpoint::load(&args.model)
        .with_context(|| format!("loading checkpoint {}", args.model.display()))?;
    let img = read_image(&args.input)?;
    let restored = restore_image(&ckpt.network, &img)?;
    let stride = ckpt.network.spec().stride();
    let comment = if stride > 1 {
        format!(
            "restored by {} (output cropped by {} pixels per axis)",
            ckpt.network.spec(),
            stride - 1
        )
    } else {
        format!("restored by {}", ckpt.network.spec())
    };
    restored.write_pgm(&args.output, &[&comment])?;
    Ok(())
}

/// Run a network over one [0, 255] image.
pub fn restore_image(net: &Network<f32>, img: &GrayImage) -> Result<GrayImage> {
    let input = img.to_tensor();
    let out = net.infer(&input)?;
    debug_assert_eq!((out.n(), out.c()), (1, 1));
    let out = Tensor::from_vec(1, 1, out.h(), out.w(), out.into_vec())?;
    Ok(GrayImage::from_tensor(&out))
}

#[derive(Args)]
struct EvalArgs {
    /// Directory of reference images.
    #[arg(long)]
    ref_dir: PathBuf,
    /// Directory of images to score; filenames must match the references.
    #[arg(long)]
    test_dir: PathBuf,
}

fn image_names(dir: &Path) -> Result<Vec<String>> {
    let mut names = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.ends_with(".pgm") || name.ends_with(".ppm") {
            names.push(name);
        }
    }
    names.sort();
    Ok(names)
}

fn eval(args: EvalArgs) -> Result<()> {
    let ref_names = image_names(&args.ref_dir)?;
    let test_names = image_names(&args.test_dir)?;
    let missing_in_test: Vec<_> = ref_names.iter().filter(|n| !test_names.contains(n)).collect();
    let missing_in_ref: Vec<_> = test_names.iter().filter(|n| !ref_names.contains(n)).collect();
    if !missing_in_test.is_empty() || !missing_in_ref.is_empty() {
        bail!(
            "file sets differ: missing in test dir: [{}]; missing in ref dir: [{}]",
            missing_in_test.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", "),
            missing_in_ref.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")
        );
    }
    if ref_names.is_empty() {
        bail!("no .pgm/.ppm images in {}", args.ref_dir.display());
    }

    // Scoring is parallel over files; rows print in sorted-name order.
    let reports: Vec<QualityReport> = ref_names
        .par_iter()
        .map(|name| -> Result<QualityReport> {
            let reference = read_image(args.ref_dir.join(name))?;
            let test = read_image(args.test_dir.join(name))?;
            // A restored image may be (s - 1) pixels smaller; crop the
            // reference upper-left to match, mirroring the training-target
            // crop.
            let reference = if test.h() <= reference.h() && test.w() <= reference.w() {
                reference.crop(0, 0, test.h(), test.w())
            } else {
                reference
            };
            Ok(QualityReport::measure(&reference, &test)?)
        })
        .collect::<Result<_>>()?;

    println!("path,psnr,ssim,psnr_b");
    let mut sums = (0.0f64, 0.0f64, 0.0f64);
    for (name, report) in ref_names.iter().zip(&reports) {
        println!("{}", report.csv_row(name));
        sums.0 += cap(report.psnr);
        sums.1 += report.ssim;
        sums.2 += cap(report.psnr_b);
    }
    let n = ref_names.len() as f64;
    println!(
        "average,{:.4},{:.6},{:.4}",
        sums.0 / n,
        sums.1 / n,
        sums.2 / n
    );
    Ok(())
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long)]
    arch: String,
}

fn inspect(args: InspectArgs) -> Result<()> {
    let spec = parse_arch(&args.arch)?;
    let params = count_params(&spec);
    // Per-pixel operation counts from a reference tile divisible by any
    // stride the notation allows.
    let tile = 480usize;
    let ops = count_ops(&spec, tile, tile)?;
    let area = (tile * tile) as f64;
    println!("arch,{}", spec);
    println!("layer,kind,filters,size,stride,weights,ops_per_pixel");
    for (i, layer) in spec.layers().iter().enumerate() {
        let kind = match layer.kind {
            arcnn::arch::LayerKind::Conv => "conv",
            arcnn::arch::LayerKind::Deconv => "deconv",
        };
        println!(
            "{},{},{},{},{},{},{:.1}",
            i + 1,
            kind,
            layer.channels,
            layer.filter,
            spec.layer_stride(i),
            params.per_layer[i],
            ops.per_layer[i] as f64 / area
        );
    }
    println!(
        "total,,,,,{},{:.1}",
        params.total,
        ops.total as f64 / area
    );
    println!("biases,{}", params.biases);
    println!("slopes,{}", params.slopes);
    Ok(())
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    arch_a: String,
    #[arg(long)]
    arch_b: String,
    /// Square input size for the timing run.
    #[arg(long, default_value_t = 512)]
    size: usize,
    /// Timing repetitions; the median is reported.
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn median_forward_seconds(net: &Network<f32>, input: &Tensor<f32>, repeats: usize) -> Result<f64> {
    let mut times = Vec::with_capacity(repeats);
    net.infer(input)?; // warm up
    for _ in 0..repeats.max(1) {
        let start = Instant::now();
        std::hint::black_box(net.infer(std::hint::black_box(input))?);
        times.push(start.elapsed().as_secs_f64());
    }
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(times[times.len() / 2])
}

fn bench(args: BenchArgs) -> Result<()> {
    let spec_a = parse_arch(&args.arch_a)?;
    let spec_b = parse_arch(&args.arch_b)?;
    let image = natural_image(args.seed, args.size, args.size);
    let input = image.to_tensor();

    let net_a = init_gaussian(&spec_a, 0.001, args.seed)?;
    let net_b = init_gaussian(&spec_b, 0.001, args.seed)?;
    let t_a = median_forward_seconds(&net_a, &input, args.repeats)?;
    let t_b = median_forward_seconds(&net_b, &input, args.repeats)?;

    let ops_a = count_ops(&spec_a, args.size, args.size)?.total;
    let ops_b = count_ops(&spec_b, args.size, args.size)?.total;
    let params_a = count_params(&spec_a).total;
    let params_b = count_params(&spec_b).total;

    println!("metric,value");
    println!("arch_a,{spec_a}");
    println!("arch_b,{spec_b}");
    println!("params_a,{params_a}");
    println!("params_b,{params_b}");
    println!("ops_a,{ops_a}");
    println!("ops_b,{ops_b}");
    println!("median_seconds_a,{t_a:.4}");
    println!("median_seconds_b,{t_b:.4}");
    println!("measured_speedup,{:.2}", t_a / t_b);
    println!("op_model_speedup,{:.2}", ops_a as f64 / ops_b as f64);
    // Parameter-formula acceleration arithmetic: N_a / N_b * s_b^2.
    let s_b = spec_b.stride() as f64;
    println!(
        "param_formula_speedup,{:.2}",
        params_a as f64 / params_b as f64 * s_b * s_b
    );
    // Reference arithmetic with the widely quoted totals for the baseline
    // and fast configurations. The quoted fast total (56,496) is not
    // reproducible from the parameter formula, which gives 64,640 for that
    // configuration; both ratios are printed for comparison.
    println!(
        "quoted_reference_speedup,{:.1}",
        BASELINE_QUOTED_PARAMS as f64 / FAST_QUOTED_PARAMS as f64 * 4.0
    );
    println!(
        "formula_reference_speedup,{:.2}",
        BASELINE_QUOTED_PARAMS as f64 / 64_640.0 * 4.0
    );
    println!(
        "reference_note,quoted fast total {FAST_QUOTED_PARAMS} differs from the formula total 64640 for that configuration"
    );
    Ok(())
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory for the generated PGM files.
    #[arg(long = "out")]
    output: PathBuf,
    #[arg(long, default_value_t = 8)]
    count: usize,
    #[arg(long, default_value_t = 200)]
    size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn synth(args: SynthArgs) -> Result<()> {
    fs::create_dir_all(&args.output)?;
    for i in 0..args.count {
        let img = natural_image(args.seed + i as u64, args.size, args.size);
        let path = args.output.join(format!("synth_{i:03}.pgm"));
        img.write_pgm(&path, &["procedural test image"])?;
        println!("{}", path.display());
    }
    Ok(())
}
