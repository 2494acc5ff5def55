//! Command-line front end: argument parsing, commands and report files.
//!
//! Exit codes: 0 success, 1 property failure, 2 usage error, 3 I/O error.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::corruptions::{apply, center_crop, CorruptionKind, CorruptionSpec, TranslationProtocol};
use crate::ecpe::{ecpe_accumulate, EcpeReport, TOOL_VERSION};
use crate::embedding::{EarlyStageConfig, EarlyStageInit, Variant};
use crate::error::{Error, Result};
use crate::image::{Image, Mode};
use crate::probe::{extract_all, run_sweep, split_indices, train_probe, FeatureReduction, ProbeConfig, ProbeModel, SweepResult, SweepSetup};
use crate::suite::{run_invariance_suite, SuiteConfig};
use crate::svg::{LinePlot, Series};
use crate::synth::{ensure_dataset, generate, load_dataset, write_dataset, Background, Dataset, SynthSpec};
use crate::tensor::RngSeed;

pub const EXIT_OK: i32 = 0;
pub const EXIT_PROPERTY: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;

pub const DEFAULT_DATA_DIR: &str = "data/synth";
pub const DEFAULT_MODEL_SEED: u64 = 7;
pub const DEFAULT_PATCH_SIZE: usize = 16;
pub const DEFAULT_EMBED_DIM: usize = 64;
pub const DEFAULT_OUT_DIR: &str = "out";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantChoice {
    Vit,
    Swin,
    Both,
}

impl VariantChoice {
    pub fn variants(self) -> Vec<Variant> {
        match self {
            VariantChoice::Vit => vec![Variant::VitStyle],
            VariantChoice::Swin => vec![Variant::SwinStyle],
            VariantChoice::Both => Variant::BOTH.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeChoice {
    Idealized,
    Pil,
}

impl From<ModeChoice> for Mode {
    fn from(m: ModeChoice) -> Mode {
        match m {
            ModeChoice::Idealized => Mode::Idealized,
            ModeChoice::Pil => Mode::PilExact,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackgroundChoice {
    Flat,
    Noise,
}

#[derive(Debug, Clone, Parser)]
#[command(name = "prelayernorm", version, about = "Patch-embedding invariance, ECPE and corruption benchmarks")]
pub struct RunConfig {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Run the seeded invariance / inconsistency property suite.
    Invariance(InvarianceArgs),
    /// ECPE of a dataset under contrast changes.
    Ecpe(EcpeArgs),
    /// Write corrupted copies of PPM images.
    Corrupt(CorruptArgs),
    /// Train linear probes and sweep corruption severities.
    Bench(BenchArgs),
    /// Generate the synthetic shape dataset.
    Generate(GenerateArgs),
}

/// Early-stage geometry and the seed every random parameter derives from.
#[derive(Debug, Clone, Copy, Args)]
pub struct ModelArgs {
    #[arg(long, default_value_t = DEFAULT_MODEL_SEED)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_PATCH_SIZE)]
    pub patch_size: usize,
    #[arg(long, default_value_t = DEFAULT_EMBED_DIM)]
    pub embed_dim: usize,
}

impl Default for ModelArgs {
    fn default() -> Self {
        ModelArgs {
            seed: DEFAULT_MODEL_SEED,
            patch_size: DEFAULT_PATCH_SIZE,
            embed_dim: DEFAULT_EMBED_DIM,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct InvarianceArgs {
    #[arg(long, value_enum)]
    pub variant: VariantChoice,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    /// Directory for invariance.json; stdout only when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EcpeArgs {
    #[arg(long, value_enum, default_value = "both")]
    pub variant: VariantChoice,
    #[arg(long, value_enum, default_value = "idealized")]
    pub mode: ModeChoice,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
    pub factors: Vec<f64>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value = DEFAULT_DATA_DIR)]
    pub data: PathBuf,
    #[arg(long, default_value = DEFAULT_OUT_DIR)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct CorruptArgs {
    /// A PPM file or a directory of PPM files.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "contrast")]
    pub corruption: CorruptionKind,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub factors: Vec<f64>,
    #[arg(long, value_enum, default_value = "pil")]
    pub mode: ModeChoice,
    #[arg(long, default_value_t = TranslationProtocol::STANDARD.short_side)]
    pub short_side: usize,
    #[arg(long, default_value_t = TranslationProtocol::STANDARD.crop)]
    pub crop: usize,
    #[arg(long, default_value = DEFAULT_OUT_DIR)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[arg(long, value_enum, default_value = "both")]
    pub variant: VariantChoice,
    #[arg(long, value_enum, default_value = "pil")]
    pub mode: ModeChoice,
    #[arg(long, value_delimiter = ',', default_value = "contrast")]
    pub corruptions: Vec<CorruptionKind>,
    /// Severities for every requested corruption; each kind has its own
    /// default list when absent.
    #[arg(long, value_delimiter = ',')]
    pub factors: Option<Vec<f64>>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = ProbeConfig::default().epochs)]
    pub epochs: usize,
    #[arg(long, default_value_t = ProbeConfig::default().lr)]
    pub lr: f64,
    #[arg(long, default_value = DEFAULT_DATA_DIR)]
    pub data: PathBuf,
    #[arg(long, default_value = DEFAULT_OUT_DIR)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = SynthSpec::default().seed.0)]
    pub seed: u64,
    #[arg(long, default_value_t = SynthSpec::default().num_images)]
    pub num_images: usize,
    #[arg(long, default_value_t = SynthSpec::default().image_size)]
    pub image_size: usize,
    #[arg(long, default_value_t = SynthSpec::default().patch_size)]
    pub patch_size: usize,
    #[arg(long, default_value_t = SynthSpec::default().num_classes)]
    pub classes: usize,
    #[arg(long, value_enum, default_value = "flat")]
    pub background: BackgroundChoice,
    #[arg(long, default_value = DEFAULT_DATA_DIR)]
    pub out: PathBuf,
}

/// Default severities; translation shifts are 0, 1/4, 1/2 and all of the
/// protocol's largest shift (0, 4, 8, 16 for 96-pixel images).
pub fn default_factors(kind: CorruptionKind, protocol: TranslationProtocol) -> Vec<f64> {
    match kind {
        CorruptionKind::Contrast | CorruptionKind::Brightness => vec![1.0, 2.0, 3.0],
        CorruptionKind::Gamma => vec![0.5, 1.0, 2.0],
        CorruptionKind::Translation => {
            let m = protocol.max_shift();
            vec![0.0, (m / 4) as f64, (m / 2) as f64, m as f64]
        }
        CorruptionKind::Rotation => vec![0.0, 5.0, 10.0, 15.0],
    }
}

/// Template geometry for translating square `size`-pixel images: the
/// short side is scaled by 4/3 and the window is the original size.
pub fn translation_protocol(size: usize) -> TranslationProtocol {
    TranslationProtocol {
        short_side: size * 4 / 3,
        crop: size,
    }
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidArgument(_) | Error::Shape(_) | Error::OutOfRange(_) => EXIT_USAGE,
        Error::Io { .. } | Error::Format { .. } | Error::Json(_) => EXIT_IO,
        Error::Divergence { .. } => EXIT_PROPERTY,
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cfg = match RunConfig::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(&cfg) {
        Ok(true) => EXIT_OK,
        Ok(false) => EXIT_PROPERTY,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Runs one command. `Ok(false)` means a property check failed.
pub fn run(cfg: &RunConfig) -> Result<bool> {
    match &cfg.command {
        Command::Invariance(a) => cmd_invariance(a),
        Command::Ecpe(a) => cmd_ecpe(a).map(|_| true),
        Command::Corrupt(a) => cmd_corrupt(a).map(|_| true),
        Command::Bench(a) => cmd_bench(a).map(|_| true),
        Command::Generate(a) => cmd_generate(a).map(|_| true),
    }
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_file(path, serde_json::to_string_pretty(value)? + "\n")
}

fn timed<T>(label: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let t = Instant::now();
    let out = f();
    eprintln!("[time] {label}: {:.3}s", t.elapsed().as_secs_f64());
    out
}

fn require_identity(factors: &[f64], kind: CorruptionKind) -> Result<()> {
    if factors.is_empty() {
        return Err(Error::invalid("--factors must not be empty"));
    }
    if let Some(f) = factors.iter().find(|f| !f.is_finite()) {
        return Err(Error::invalid(format!("factor {f} is not finite")));
    }
    let id = kind.identity_factor();
    if !factors.contains(&id) {
        return Err(Error::invalid(format!("--factors must include the {kind} baseline {id}")));
    }
    Ok(())
}

/// Pipeline used by the `ecpe` and `bench` commands for images shaped like
/// `image`: [`EarlyStageInit::synthetic`] parameters drawn from `model.seed`.
pub fn model_config(variant: Variant, model: &ModelArgs, image: &Image) -> Result<EarlyStageConfig> {
    let p = model.patch_size;
    if p == 0 || !image.width().is_multiple_of(p) || !image.height().is_multiple_of(p) {
        return Err(Error::invalid(format!(
            "patch size {p} does not tile {}x{} images",
            image.width(),
            image.height()
        )));
    }
    EarlyStageConfig::random(
        variant,
        p,
        (image.width() / p, image.height() / p),
        model.embed_dim,
        &EarlyStageInit::synthetic(),
        RngSeed(model.seed),
    )
}

pub fn cmd_invariance(args: &InvarianceArgs) -> Result<bool> {
    let cfg = SuiteConfig {
        trials: args.trials,
        patch_size: args.model.patch_size,
        embed_dim: args.model.embed_dim,
        seed: RngSeed(args.model.seed),
        ..SuiteConfig::default()
    };
    if cfg.patch_size == 0 || cfg.embed_dim < 2 {
        return Err(Error::invalid("patch size must be positive and embed dim at least 2"));
    }
    let report = timed("invariance", || run_invariance_suite(&args.variant.variants(), &cfg))?;
    for p in &report.properties {
        let variant = p.variant.map(|v| v.to_string()).unwrap_or_else(|| "-".into());
        println!(
            "{} {:<30} {:<5} measured {:e} (want {})",
            if p.passed { "PASS" } else { "FAIL" },
            p.name,
            variant,
            p.measured,
            p.criterion
        );
    }
    if let Some(dir) = &args.out {
        write_json(&dir.join("invariance.json"), &report)?;
    }
    Ok(report.passed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcpeCurve {
    pub variant: Variant,
    pub factors: Vec<f64>,
    pub values: Vec<f64>,
    /// `(max - min) / max` over the curve.
    pub relative_spread: f64,
    pub strictly_decreasing: bool,
}

impl EcpeCurve {
    pub fn from_reports(variant: Variant, reports: &[EcpeReport]) -> Self {
        let factors: Vec<f64> = reports.iter().map(|r| r.corruption_factor).collect();
        let values: Vec<f64> = reports.iter().map(|r| r.ecpe_value).collect();
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let mut order: Vec<usize> = (0..factors.len()).collect();
        order.sort_by(|&a, &b| factors[a].total_cmp(&factors[b]));
        let strictly_decreasing = order.windows(2).all(|w| values[w[1]] < values[w[0]]);
        EcpeCurve {
            variant,
            relative_spread: if max > 0.0 { (max - min) / max } else { 0.0 },
            factors,
            values,
            strictly_decreasing,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcpeRun {
    pub tool_version: String,
    pub seed: RngSeed,
    pub mode: Mode,
    pub dataset_checksum: String,
    pub patch_size: usize,
    pub embed_dim: usize,
    pub curves: Vec<EcpeCurve>,
    pub reports: Vec<EcpeReport>,
}

pub fn ecpe_run(dataset: &Dataset, variants: &[Variant], mode: Mode, factors: &[f64], model: &ModelArgs) -> Result<EcpeRun> {
    require_identity(factors, CorruptionKind::Contrast)?;
    let first = dataset.images.first().ok_or_else(|| Error::invalid("dataset is empty"))?;
    let mut curves = Vec::new();
    let mut reports = Vec::new();
    for &variant in variants {
        let cfg = model_config(variant, model, first)?;
        let per_factor = factors
            .iter()
            .map(|&f| {
                Ok(ecpe_accumulate(&dataset.images, f, &cfg, mode, RngSeed(model.seed))?
                    .with_checksum(dataset.checksum()))
            })
            .collect::<Result<Vec<_>>>()?;
        curves.push(EcpeCurve::from_reports(variant, &per_factor));
        reports.extend(per_factor);
    }
    Ok(EcpeRun {
        tool_version: TOOL_VERSION.to_string(),
        seed: RngSeed(model.seed),
        mode,
        dataset_checksum: dataset.checksum().to_string(),
        patch_size: model.patch_size,
        embed_dim: model.embed_dim,
        curves,
        reports,
    })
}

pub fn cmd_ecpe(args: &EcpeArgs) -> Result<EcpeRun> {
    require_identity(&args.factors, CorruptionKind::Contrast)?;
    let dataset = timed("load dataset", || load_dataset(&args.data))?;
    let run = timed("ecpe", || {
        ecpe_run(&dataset, &args.variant.variants(), args.mode.into(), &args.factors, &args.model)
    })?;
    let mut plot = LinePlot::new(format!("ECPE vs contrast factor ({})", run.mode), "contrast factor", "ECPE");
    for c in &run.curves {
        println!(
            "{:<5} ecpe {:?} relative spread {:e} strictly decreasing {}",
            c.variant, c.values, c.relative_spread, c.strictly_decreasing
        );
        plot = plot.with_series(Series::new(c.variant.name(), c.factors.iter().copied().zip(c.values.iter().copied()).collect()));
    }
    write_json(&args.out.join("ecpe.json"), &run)?;
    write_file(&args.out.join("ecpe.svg"), plot.render())?;
    Ok(run)
}

fn ppm_inputs(path: &Path) -> Result<Vec<PathBuf>> {
    let meta = fs::metadata(path).map_err(|e| Error::io(path, e))?;
    if !meta.is_dir() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = fs::read_dir(path)
        .map_err(|e| Error::io(path, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(path, err)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("ppm")))
        .collect();
    files.sort();
    Ok(files)
}

/// Output name for `input` corrupted by `kind` at `factor`.
pub fn corrupted_name(input: &Path, kind: CorruptionKind, factor: f64) -> String {
    let stem = input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "image".into());
    format!("{stem}_{kind}_{factor}.ppm")
}

/// Writes one corrupted copy per input and factor. Idealized outputs are
/// quantized on write, since PPM holds integers.
pub fn cmd_corrupt(args: &CorruptArgs) -> Result<Vec<PathBuf>> {
    if args.factors.is_empty() {
        return Err(Error::invalid("--factors must not be empty"));
    }
    let protocol = TranslationProtocol {
        short_side: args.short_side,
        crop: args.crop,
    };
    if protocol.crop == 0 || protocol.crop > protocol.short_side {
        return Err(Error::invalid("--crop must be positive and at most --short-side"));
    }
    let inputs = ppm_inputs(&args.data)?;
    let mut written = Vec::new();
    for input in &inputs {
        let img = Image::read_ppm(input)?;
        for &factor in &args.factors {
            let out = apply(&img, CorruptionSpec::new(args.corruption, factor, args.mode.into()), protocol)?;
            let path = args.out.join(corrupted_name(input, args.corruption, factor));
            write_file(&path, out.quantized().encode_ppm()?)?;
            written.push(path);
        }
    }
    println!("wrote {} images to {}", written.len(), args.out.display());
    Ok(written)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantBench {
    pub variant: Variant,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
    pub sweeps: Vec<SweepResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub tool_version: String,
    pub seed: RngSeed,
    pub dataset_checksum: String,
    pub patch_size: usize,
    pub embed_dim: usize,
    pub probe: ProbeConfig,
    pub translation_protocol: TranslationProtocol,
    pub split: [usize; 3],
    pub variants: Vec<VariantBench>,
}

impl BenchReport {
    pub fn csv(&self) -> String {
        let mut out = String::from(SweepResult::CSV_HEADER);
        out.push('\n');
        for row in self.variants.iter().flat_map(|v| v.sweeps.iter()).flat_map(|s| s.csv_rows()) {
            out.push_str(&row);
            out.push('\n');
        }
        out
    }
}

/// What a benchmark run needs besides the dataset.
#[derive(Debug, Clone)]
pub struct BenchPlan {
    pub variants: Vec<Variant>,
    pub mode: Mode,
    pub sweeps: Vec<(CorruptionKind, Vec<f64>)>,
    pub model: ModelArgs,
    pub probe: ProbeConfig,
}

fn subset<T: Clone>(items: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| items[i].clone()).collect()
}

fn fit(images: &[Image], labels: &[usize], classes: usize, cfg: &EarlyStageConfig, probe: &ProbeConfig) -> Result<(ProbeModel, f64)> {
    let feats = extract_all(images, cfg, FeatureReduction::MeanPoolRows)?;
    let model = train_probe(&feats, labels, classes, FeatureReduction::MeanPoolRows, probe)?;
    let acc = model.accuracy(&feats, labels);
    Ok((model, acc))
}

/// Trains one probe per variant on the training split and sweeps every
/// requested corruption over the test split. Translation sweeps use a probe
/// trained on center crops of the training images.
pub fn bench_run(dataset: &Dataset, plan: &BenchPlan) -> Result<BenchReport> {
    for (kind, factors) in &plan.sweeps {
        require_identity(factors, *kind)?;
    }
    let first = dataset.images.first().ok_or_else(|| Error::invalid("dataset is empty"))?;
    let labels = dataset.labels();
    let classes = dataset.manifest.spec.num_classes;
    let seed = RngSeed(plan.model.seed);
    let (train, val, test) = split_indices(dataset.images.len(), seed);
    let (train_img, train_lab) = (subset(&dataset.images, &train), subset(&labels, &train));
    let (val_img, val_lab) = (subset(&dataset.images, &val), subset(&labels, &val));
    let (test_img, test_lab) = (subset(&dataset.images, &test), subset(&labels, &test));
    let protocol = translation_protocol(first.width().min(first.height()));

    let mut variants = Vec::new();
    for &variant in &plan.variants {
        let cfg = model_config(variant, &plan.model, first)?;
        let (probe, train_accuracy) = timed(&format!("{variant} probe"), || fit(&train_img, &train_lab, classes, &cfg, &plan.probe))?;
        let val_feats = extract_all(&val_img, &cfg, FeatureReduction::MeanPoolRows)?;
        let val_accuracy = probe.accuracy(&val_feats, &val_lab);
        let mut crop_probe = None;
        let mut sweeps = Vec::new();
        for (kind, factors) in &plan.sweeps {
            let probe = if *kind == CorruptionKind::Translation {
                if crop_probe.is_none() {
                    let crops = train_img
                        .iter()
                        .map(|img| center_crop(img, protocol, plan.mode))
                        .collect::<Result<Vec<_>>>()?;
                    crop_probe = Some(fit(&crops, &train_lab, classes, &cfg, &plan.probe)?.0);
                }
                crop_probe.as_ref().expect("trained above")
            } else {
                &probe
            };
            let setup = SweepSetup {
                probe,
                cfg: &cfg,
                kind: *kind,
                mode: plan.mode,
                protocol,
                seed,
            };
            sweeps.push(timed(&format!("{variant} {kind} sweep"), || run_sweep(&test_img, &test_lab, &setup, factors))?);
        }
        variants.push(VariantBench {
            variant,
            train_accuracy,
            val_accuracy,
            sweeps,
        });
    }
    Ok(BenchReport {
        tool_version: TOOL_VERSION.to_string(),
        seed,
        dataset_checksum: dataset.checksum().to_string(),
        patch_size: plan.model.patch_size,
        embed_dim: plan.model.embed_dim,
        probe: plan.probe,
        translation_protocol: protocol,
        split: [train.len(), val.len(), test.len()],
        variants,
    })
}

pub fn cmd_bench(args: &BenchArgs) -> Result<BenchReport> {
    if args.corruptions.is_empty() {
        return Err(Error::invalid("--corruptions must not be empty"));
    }
    if let Some(factors) = &args.factors {
        for &kind in &args.corruptions {
            require_identity(factors, kind)?;
        }
    }
    let spec = SynthSpec {
        patch_size: args.model.patch_size,
        ..SynthSpec::default()
    };
    let dataset = timed("dataset", || ensure_dataset(&args.data, &spec))?;
    let size = dataset.manifest.spec.image_size;
    let sweeps = args
        .corruptions
        .iter()
        .map(|&k| (k, args.factors.clone().unwrap_or_else(|| default_factors(k, translation_protocol(size)))))
        .collect();
    let plan = BenchPlan {
        variants: args.variant.variants(),
        mode: args.mode.into(),
        sweeps,
        model: args.model,
        probe: ProbeConfig {
            lr: args.lr,
            epochs: args.epochs,
            seed: RngSeed(args.model.seed),
            ..ProbeConfig::default()
        },
    };
    let report = bench_run(&dataset, &plan)?;
    for v in &report.variants {
        println!("{:<5} train {:.4} val {:.4}", v.variant, v.train_accuracy, v.val_accuracy);
        for s in &v.sweeps {
            println!("      {} {} {:?} -> {:?}", s.corruption, s.mode, s.factors, s.accuracy);
        }
    }
    write_json(&args.out.join("bench.json"), &report)?;
    write_file(&args.out.join("bench.csv"), report.csv())?;
    for (kind, _) in &plan.sweeps {
        let mut plot = LinePlot::new(format!("Test accuracy under {kind} ({})", plan.mode), format!("{kind} factor"), "accuracy");
        for v in &report.variants {
            if let Some(s) = v.sweeps.iter().find(|s| s.corruption == *kind) {
                plot = plot.with_series(Series::new(v.variant.name(), s.factors.iter().copied().zip(s.accuracy.iter().copied()).collect()));
            }
        }
        write_file(&args.out.join(format!("bench_{kind}.svg")), plot.render())?;
    }
    Ok(report)
}

pub fn cmd_generate(args: &GenerateArgs) -> Result<Dataset> {
    let spec = SynthSpec {
        num_images: args.num_images,
        image_size: args.image_size,
        patch_size: args.patch_size,
        num_classes: args.classes,
        seed: RngSeed(args.seed),
        background: match args.background {
            BackgroundChoice::Flat => Background::Flat,
            BackgroundChoice::Noise => Background::Noise,
        },
    };
    let (images, manifest) = timed("generate", || generate(&spec))?;
    write_dataset(&args.out, &images, &manifest)?;
    println!("wrote {} images to {} (sha256 {})", images.len(), args.out.display(), manifest.checksum);
    Ok(Dataset { images, manifest })
}
