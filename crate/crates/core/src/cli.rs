//! The `pyramid-count` command line. Exit codes: 0 success, 2 usage or
//! input error, 3 runtime failure.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::density::{
    adaptive_sigmas, generate_fixed, generate_with_sigmas, read_annotations, read_density_csv,
    write_annotations, write_density_csv, write_density_pgm, AdaptiveKernel, AnnotationFile,
    DensityMap, PointAnnotations,
};
use crate::error::Error;
use crate::evaluation::{
    benchmark_fps, evaluate, predict_detailed, write_report, EvalResult, ImageResult, DENSITY_SCALE,
};
use crate::image::{pgm_dims, read_pgm, write_pgm, GrayImage};
use crate::network::{
    decode_weights, decode_weights_with, default_scales, peek_header, receptive_field,
    save_weights, FusionMode, LayerSpec, NetworkConfig, PyramidModel, PRESET_NAMES,
};
use crate::training::{
    continue_training, generate_synthetic_dataset, train, Sample, SyntheticSceneSpec, TrainConfig,
    TrainOptions, Trainer, CHECKPOINT_OPTIMIZER, CHECKPOINT_WEIGHTS, TRAIN_LOG,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Diverged(_) | Error::Shape(_) => EXIT_RUNTIME,
            Error::Io(io) if io.kind() != ErrorKind::NotFound => EXIT_RUNTIME,
            _ => EXIT_USAGE,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "pyramid-count",
    version,
    about = "Crowd counting with adaptive image-pyramid fusion"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum GtMode {
    Fixed,
    Adaptive,
}

/// Model selection shared by train/eval/predict/inspect.
#[derive(Debug, clap::Args)]
struct ModelArgs {
    /// Backbone JSON config, for weight files whose config is not a preset.
    #[arg(long)]
    net_config: Option<PathBuf>,
    /// Comma-separated pyramid scales, first must be 1.0 (default depends on scale count).
    #[arg(long, value_delimiter = ',')]
    scales: Option<Vec<f32>>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic perspective dataset (PGM images + annotation JSON).
    Synth {
        /// JSON file: {"n_images": N, "scene": {...scene fields...}}.
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build ground-truth density CSVs from annotation files.
    Gt {
        /// Directory of annotation JSON files.
        #[arg(long)]
        annotations: PathBuf,
        /// Directory holding the images, used for dims when annotations lack them.
        #[arg(long)]
        images: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "adaptive")]
        mode: GtMode,
        /// Kernel σ in fixed mode.
        #[arg(long, default_value_t = 15.0)]
        sigma: f64,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long, default_value_t = 0.3)]
        beta: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model on a dataset directory.
    Train {
        /// Training config JSON (missing fields take defaults).
        #[arg(long)]
        config: PathBuf,
        /// Dataset directory with images/, annotations/ and optionally density/.
        #[arg(long)]
        data: PathBuf,
        /// Validation dataset directory (same layout).
        #[arg(long)]
        val: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Preset name, optionally with a scale-count suffix (FCN-7c-3s), or a JSON config path.
        #[arg(long, default_value = "FCN-5c-2s")]
        model: String,
        #[arg(long, default_value = "adaptive")]
        fusion: FusionMode,
        #[arg(long, value_delimiter = ',')]
        scales: Option<Vec<f32>>,
        /// Continue from the checkpoint in --out.
        #[arg(long)]
        resume: bool,
        #[arg(long)]
        quiet: bool,
    },
    /// Evaluate a model (or the ground truth itself) on a dataset directory.
    Eval {
        #[arg(long, required_unless_present = "gt_passthrough")]
        weights: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Use the ground-truth density sums as predictions (sanity check of the pipeline).
        #[arg(long)]
        gt_passthrough: bool,
        /// Timed runs for the fps figure (0 disables).
        #[arg(long, default_value_t = 0)]
        fps_runs: usize,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Predict a density map and per-scale attention maps for one image.
    Predict {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Print receptive field, parameter count and per-layer shapes.
    Inspect {
        /// Preset name (e.g. FCN-7c, FCN-7c-3s) or JSON config file.
        name: String,
        #[arg(long)]
        fusion: Option<FusionMode>,
        #[arg(long, value_delimiter = ',')]
        scales: Option<Vec<f32>>,
        /// Input size used for the activation shapes column.
        #[arg(long, default_value_t = 128)]
        input: usize,
    },
}

/// Parse arguments, run, print errors; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

fn run(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::Synth { spec, out } => cmd_synth(&spec, &out),
        Command::Gt {
            annotations,
            images,
            mode,
            sigma,
            k,
            beta,
            out,
        } => cmd_gt(&annotations, images.as_deref(), mode, sigma, k, beta, &out),
        Command::Train {
            config,
            data,
            val,
            out,
            model,
            fusion,
            scales,
            resume,
            quiet,
        } => cmd_train(
            &config,
            &data,
            val.as_deref(),
            &out,
            &model,
            fusion,
            scales,
            resume,
            quiet,
        ),
        Command::Eval {
            weights,
            data,
            out,
            gt_passthrough,
            fps_runs,
            model,
        } => cmd_eval(
            weights.as_deref(),
            &data,
            &out,
            gt_passthrough,
            fps_runs,
            &model,
        ),
        Command::Predict {
            weights,
            image,
            out,
            model,
        } => cmd_predict(&weights, &image, &out, &model),
        Command::Inspect {
            name,
            fusion,
            scales,
            input,
        } => cmd_inspect(&name, fusion, scales, input),
    }
}

/// Decimal with 6 significant digits, never in exponent form.
pub fn format_sig6(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v.is_finite() {
            "0".into()
        } else {
            v.to_string()
        };
    }
    let mag = v.abs().log10().floor() as i32;
    let decimals = (5 - mag).max(0) as usize;
    format!("{v:.decimals$}")
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: Option<String>,
    pub seed: Option<u64>,
    pub output_dir: String,
    pub started_unix: f64,
    pub finished_unix: f64,
    /// Relative artifact path → SHA-256.
    pub artifacts: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub notes: BTreeMap<String, String>,
}

fn now_unix() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

fn sha256_file(path: &Path) -> std::io::Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

struct ManifestBuilder {
    m: RunManifest,
    out: PathBuf,
}

impl ManifestBuilder {
    fn new(command: &str, config: Option<&Path>, seed: Option<u64>, out: &Path) -> Self {
        ManifestBuilder {
            m: RunManifest {
                command: command.into(),
                config_path: config.map(|p| p.display().to_string()),
                seed,
                output_dir: out.display().to_string(),
                started_unix: now_unix(),
                finished_unix: 0.0,
                artifacts: BTreeMap::new(),
                notes: BTreeMap::new(),
            },
            out: out.to_path_buf(),
        }
    }

    fn artifact(&mut self, path: &Path) -> CliResult<()> {
        let rel = path
            .strip_prefix(&self.out)
            .unwrap_or(path)
            .display()
            .to_string();
        let sum = sha256_file(path).map_err(Error::from)?;
        self.m.artifacts.insert(rel, sum);
        Ok(())
    }

    fn note(&mut self, key: &str, value: impl Into<String>) {
        self.m.notes.insert(key.into(), value.into());
    }

    fn write(mut self) -> CliResult<()> {
        self.m.finished_unix = now_unix();
        let text = serde_json::to_string_pretty(&self.m).map_err(Error::from)?;
        fs::write(self.out.join("manifest.json"), text + "\n").map_err(Error::from)?;
        Ok(())
    }
}

fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| CliError {
        code: EXIT_RUNTIME,
        message: format!("cannot create {}: {e}", path.display()),
    })
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let bytes = fs::read(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    serde_json::from_slice(&bytes).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SynthFile {
    n_images: usize,
    #[serde(default)]
    scene: SyntheticSceneSpec,
}

fn cmd_synth(spec_path: &Path, out: &Path) -> CliResult<()> {
    let spec: SynthFile = read_json(spec_path)?;
    spec.scene
        .validate()
        .map_err(|e| CliError::usage(format!("{}: {e}", spec_path.display())))?;
    let images = generate_synthetic_dataset(&spec.scene, spec.n_images)?;
    let (img_dir, ann_dir) = (out.join("images"), out.join("annotations"));
    create_dir(&img_dir)?;
    create_dir(&ann_dir)?;
    let mut manifest = ManifestBuilder::new("synth", Some(spec_path), Some(spec.scene.seed), out);
    for s in &images {
        let img_name = format!("{}.pgm", s.name);
        let img_path = img_dir.join(&img_name);
        write_pgm(&img_path, &s.image)?;
        let ann_path = ann_dir.join(format!("{}.json", s.name));
        let ann = AnnotationFile {
            image: img_name,
            points: s.points.iter().map(|&(x, y)| [x, y]).collect(),
            height: Some(s.image.height),
            width: Some(s.image.width),
        };
        write_annotations(&ann_path, &ann)?;
        manifest.artifact(&img_path)?;
        manifest.artifact(&ann_path)?;
    }
    manifest.write()?;
    println!("wrote {} images to {}", images.len(), out.display());
    Ok(())
}

fn json_files(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let entries =
        fs::read_dir(dir).map_err(|e| CliError::usage(format!("{}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    Ok(files)
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn annotation_dims(ann: &AnnotationFile, images: Option<&Path>) -> crate::Result<(usize, usize)> {
    match (ann.height, ann.width, images) {
        (Some(h), Some(w), _) => Ok((h, w)),
        (_, _, Some(dir)) => pgm_dims(dir.join(&ann.image)),
        _ => Err(Error::Input(format!(
            "annotation for '{}' has no height/width and no --images directory was given",
            ann.image
        ))),
    }
}

/// Returns the map and whether the fallback σ was used.
fn build_density(
    points: &PointAnnotations,
    mode: GtMode,
    sigma: f64,
    kernel: &AdaptiveKernel,
) -> crate::Result<(DensityMap, bool)> {
    match mode {
        GtMode::Fixed => Ok((generate_fixed(points, sigma)?, false)),
        GtMode::Adaptive => {
            let (sigmas, fallback) = adaptive_sigmas(&points.points, kernel)?;
            Ok((
                generate_with_sigmas(points, &sigmas)?,
                fallback && !points.is_empty(),
            ))
        }
    }
}

fn cmd_gt(
    ann_dir: &Path,
    images: Option<&Path>,
    mode: GtMode,
    sigma: f64,
    k: usize,
    beta: f64,
    out: &Path,
) -> CliResult<()> {
    if !(sigma > 0.0) || k == 0 || !(beta > 0.0) {
        return Err(CliError::usage("--sigma and --beta must be > 0, --k >= 1"));
    }
    let kernel = AdaptiveKernel {
        k,
        beta,
        ..AdaptiveKernel::default()
    };
    let files = json_files(ann_dir)?;
    create_dir(out)?;
    let mut manifest = ManifestBuilder::new("gt", None, None, out);
    let mut failures = Vec::new();
    for f in &files {
        let result = (|| -> crate::Result<(PathBuf, f64, usize, bool)> {
            let ann = read_annotations(f)?;
            let (h, w) = annotation_dims(&ann, images)?;
            let pts = ann.to_points(h, w)?;
            let (d, fallback) = build_density(&pts, mode, sigma, &kernel)?;
            let path = out.join(format!("{}.csv", stem(f)));
            write_density_csv(&path, &d)?;
            Ok((path, d.total(), pts.len(), fallback))
        })();
        match result {
            Ok((path, mass, n, fallback)) => {
                if fallback {
                    eprintln!(
                        "warning: {}: fewer than 2 points, using fallback sigma {}",
                        f.display(),
                        kernel.fallback_sigma
                    );
                }
                manifest.note(&stem(f), format!("points {n} mass {}", format_sig6(mass)));
                manifest.artifact(&path)?;
            }
            Err(e) => failures.push(format!("{}: {e}", f.display())),
        }
    }
    manifest.write()?;
    if !failures.is_empty() {
        for m in &failures {
            eprintln!("error: {m}");
        }
        return Err(CliError::usage(format!(
            "{} of {} annotation files failed",
            failures.len(),
            files.len()
        )));
    }
    println!("wrote {} density maps to {}", files.len(), out.display());
    Ok(())
}

/// Load `dir/annotations/*.json` with images from `dir/images/`. Densities
/// come from `dir/density/<stem>.csv` when present, otherwise from
/// adaptive kernels with default settings.
pub fn load_dataset(dir: &Path) -> crate::Result<Vec<Sample>> {
    let ann_dir = dir.join("annotations");
    let files = json_files(&ann_dir).map_err(|e| Error::Input(e.message))?;
    if files.is_empty() {
        return Err(Error::Input(format!(
            "no annotation files in {}",
            ann_dir.display()
        )));
    }
    files
        .iter()
        .map(|f| {
            let ann = read_annotations(f)?;
            let image = read_pgm(dir.join("images").join(&ann.image))?;
            let pts = ann.to_points(image.height, image.width)?;
            let csv = dir.join("density").join(format!("{}.csv", stem(f)));
            let density = if csv.exists() {
                read_density_csv(&csv, 1)?
            } else {
                build_density(&pts, GtMode::Adaptive, 0.0, &AdaptiveKernel::default())?.0
            };
            Sample::new(stem(f), image, density, pts.len() as f64)
        })
        .collect()
}

/// `FCN-7c-3s` → preset FCN-7c with 3 default scales; a `.json` path is a
/// backbone config file.
fn resolve_model_name(name: &str) -> CliResult<(NetworkConfig, Option<usize>)> {
    if name.ends_with(".json") || Path::new(name).is_file() {
        let cfg: NetworkConfig = read_json(Path::new(name))?;
        cfg.validate().map_err(CliError::from)?;
        return Ok((cfg, None));
    }
    let (base, count) = match name.rsplit_once('-') {
        Some((b, suffix))
            if suffix.len() == 2
                && suffix.ends_with('s')
                && suffix.as_bytes()[0].is_ascii_digit() =>
        {
            (b, Some((suffix.as_bytes()[0] - b'0') as usize))
        }
        _ => (name, None),
    };
    NetworkConfig::preset(base)
        .map(|c| (c, count))
        .map_err(|_| {
            CliError::usage(format!(
                "unknown model '{name}'; presets: {}",
                PRESET_NAMES.join(", ")
            ))
        })
}

fn pick_scales(
    count: Option<usize>,
    explicit: Option<Vec<f32>>,
    mode: FusionMode,
) -> CliResult<Vec<f32>> {
    match explicit {
        Some(s) => Ok(s),
        None if mode == FusionMode::Single => Ok(vec![1.0]),
        None => default_scales(count.unwrap_or(1)).map_err(CliError::from),
    }
}

fn load_model(weights: &Path, args: &ModelArgs) -> CliResult<PyramidModel> {
    let bytes =
        fs::read(weights).map_err(|e| CliError::usage(format!("{}: {e}", weights.display())))?;
    let model = match &args.net_config {
        Some(p) => {
            let cfg: NetworkConfig = read_json(p)?;
            decode_weights_with(&bytes, &cfg, args.scales.clone())
        }
        None => match &args.scales {
            Some(s) => {
                let header = peek_header(&bytes)?;
                let cfg = NetworkConfig::preset(&header.config_name)?;
                decode_weights_with(&bytes, &cfg, Some(s.clone()))
            }
            None => decode_weights(&bytes),
        },
    };
    model.map_err(|e| CliError::usage(format!("{}: {e}", weights.display())))
}

#[allow(clippy::too_many_arguments)]
fn cmd_train(
    config_path: &Path,
    data: &Path,
    val: Option<&Path>,
    out: &Path,
    model_name: &str,
    fusion: FusionMode,
    scales: Option<Vec<f32>>,
    resume: bool,
    quiet: bool,
) -> CliResult<()> {
    let cfg: TrainConfig = read_json(config_path)?;
    cfg.validate()
        .map_err(|e| CliError::usage(format!("{}: {e}", config_path.display())))?;
    let (net, count) = resolve_model_name(model_name)?;
    let scales = pick_scales(count, scales, fusion)?;
    let template = PyramidModel::build(&net, &scales, fusion, cfg.seed)?;
    let train_set = load_dataset(data)?;
    let val_set = val.map(load_dataset).transpose()?;
    create_dir(out)?;
    let options = TrainOptions {
        validation: val_set.as_deref(),
        checkpoint_dir: Some(out.to_path_buf()),
        verbose: !quiet,
    };
    let (model, log_len) = if resume {
        let (mut model, mut trainer) = Trainer::resume(out, cfg.clone(), &template)?;
        continue_training(&mut trainer, &mut model, &train_set, &options)?;
        (model, trainer.log.records.len())
    } else {
        let mut model = template;
        let log = train(&mut model, &train_set, &cfg, &options)?;
        (model, log.records.len())
    };
    let final_path = out.join("model.pyrd");
    save_weights(&model, &final_path)?;
    let mut manifest = ManifestBuilder::new("train", Some(config_path), Some(cfg.seed), out);
    for name in [
        CHECKPOINT_WEIGHTS,
        CHECKPOINT_OPTIMIZER,
        TRAIN_LOG,
        "model.pyrd",
    ] {
        manifest.artifact(&out.join(name))?;
    }
    manifest.note(
        "model",
        format!(
            "{} {} {:?}",
            model.config().name,
            model.mode(),
            model.scales()
        ),
    );
    manifest.write()?;
    println!(
        "trained {log_len} epochs, weights at {}",
        final_path.display()
    );
    Ok(())
}

fn cmd_eval(
    weights: Option<&Path>,
    data: &Path,
    out: &Path,
    passthrough: bool,
    fps_runs: usize,
    args: &ModelArgs,
) -> CliResult<()> {
    let model = match weights {
        Some(w) if !passthrough => Some(load_model(w, args)?),
        _ => None,
    };
    let samples = load_dataset(data)?;
    let result = match &model {
        Some(m) => evaluate(m, &samples)?,
        None => EvalResult::from_counts(
            samples
                .iter()
                .map(|s| ImageResult {
                    image: s.name.clone(),
                    gt_count: s.count,
                    pred_count: s.density.total(),
                })
                .collect(),
        )?,
    };
    let fps = match (&model, fps_runs) {
        (Some(m), n) if n > 0 => {
            let s = &samples[0].image;
            Some(benchmark_fps(m, s.height, s.width, n)?)
        }
        _ => None,
    };
    create_dir(out)?;
    let (csv, json) = (out.join("report.csv"), out.join("summary.json"));
    write_report(&result, fps, &csv, &json)?;
    let mut manifest = ManifestBuilder::new("eval", None, None, out);
    manifest.artifact(&csv)?;
    manifest.artifact(&json)?;
    manifest.write()?;
    println!(
        "mae {} mse {} rmse {}",
        format_sig6(result.mae),
        format_sig6(result.mse),
        format_sig6(result.rmse)
    );
    Ok(())
}

fn attention_image(a: &DensityMap) -> GrayImage {
    // Softmax weights are in [0, 1]; raw (no-softmax) maps are max-normalised.
    let max = a.max();
    let k = if max > 1.0 { 255.0 / max } else { 255.0 };
    GrayImage {
        width: a.width,
        height: a.height,
        data: a
            .data
            .iter()
            .map(|&v| (v.max(0.0) * k).round().min(255.0) as u8)
            .collect(),
    }
}

fn cmd_predict(weights: &Path, image: &Path, out: &Path, args: &ModelArgs) -> CliResult<()> {
    let model = load_model(weights, args)?;
    let img = read_pgm(image).map_err(|e| CliError::usage(e.to_string()))?;
    let pred = predict_detailed(&model, &img, DENSITY_SCALE)?;
    create_dir(out)?;
    let mut manifest = ManifestBuilder::new("predict", None, None, out);
    let csv = out.join("density.csv");
    write_density_csv(&csv, &pred.density)?;
    manifest.artifact(&csv)?;
    let pgm = out.join("density.pgm");
    write_density_pgm(&pgm, &pred.density)?;
    manifest.artifact(&pgm)?;
    for (a, s) in pred.attention.iter().zip(model.scales()) {
        let p = out.join(format!("attention_{s}.pgm"));
        write_pgm(&p, &attention_image(a))?;
        manifest.artifact(&p)?;
    }
    manifest.note("count", format_sig6(pred.count()));
    manifest.write()?;
    println!("{}", format_sig6(pred.count()));
    Ok(())
}

/// Table rows for `inspect`: one per layer with weight and activation shapes.
pub fn layer_table(cfg: &NetworkConfig, input: usize) -> Vec<(String, String, String)> {
    let (mut c, mut h, mut w) = (1usize, input, input);
    let mut rows = Vec::new();
    let mut conv = 0;
    for layer in &cfg.layers {
        match layer {
            LayerSpec::Conv {
                out_ch,
                in_ch,
                kh,
                kw,
                ..
            } => {
                conv += 1;
                c = *out_ch;
                rows.push((
                    format!("conv{conv}"),
                    format!("{out_ch}x{in_ch}x{kh}x{kw}"),
                    format!("{c}x{h}x{w}"),
                ));
            }
            LayerSpec::Pool => {
                h /= 2;
                w /= 2;
                rows.push(("pool".into(), "-".into(), format!("{c}x{h}x{w}")));
            }
        }
    }
    rows
}

fn cmd_inspect(
    name: &str,
    fusion: Option<FusionMode>,
    scales: Option<Vec<f32>>,
    input: usize,
) -> CliResult<()> {
    let (cfg, count) = resolve_model_name(name)?;
    let mode = fusion.unwrap_or(match (count, &scales) {
        (None, None) => FusionMode::Single,
        _ => FusionMode::Adaptive,
    });
    let scales = pick_scales(count, scales, mode)?;
    let model = PyramidModel::build(&cfg, &scales, mode, 0)?;
    println!("model        {}", cfg.name);
    println!("fusion       {mode}");
    println!("scales       {scales:?}");
    println!("rf           {}", receptive_field(&cfg));
    println!("backbone     {}", cfg.param_count());
    println!("parameters   {}", model.count_parameters());
    println!();
    println!("{:<10} {:<14} output@{input}", "layer", "weights");
    for (l, wshape, oshape) in layer_table(&cfg, input) {
        println!("{l:<10} {wshape:<14} {oshape}");
    }
    for (n, dims) in model.expected_shapes()?.iter().skip(cfg.conv_count()) {
        println!(
            "{n:<10} {:<14}",
            format!("{}x{}x{}x{}", dims[0], dims[1], dims[2], dims[3])
        );
    }
    Ok(())
}
