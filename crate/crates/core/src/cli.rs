//! `divesight` command line: `synth`, `train`, `eval`, `explain`, `stream`.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::dataset::{load_image, load_manifest, split, synth_generate, ClassVocab, Manifest, Record, SyntheticSpec};
use crate::error::Error;
use crate::explain::{
    integrated_gradients, occlusion_map, render_heatmap, threshold_mask, AttributionGrid, IgConfig, OcclusionConfig,
    RenderMode,
};
use crate::model::{load_checkpoint, save_checkpoint, CheckpointMeta, FreezeMode, ModelConfig, ModelGraph};
use crate::report::{accuracy_line, confusion_csv, training_csv, write_text, ConfidenceTable, RunConfig};
use crate::stream::{count_switches, infer_frames, smooth, write_annotations, write_flicker_fixture, FrameSource};
use crate::train::{evaluate, train, AugmentConfig, StepLrSchedule, TrainConfig};

#[derive(Debug, Parser)]
#[command(name = "divesight", version, about = "Gesture classifier training, evaluation and explanation")]
pub struct Cli {
    /// Seed for every random choice the command makes.
    #[arg(long, global = true, default_value_t = 7)]
    pub seed: u64,
    /// Directory receiving the command's artifacts.
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic glyph dataset.
    Synth(SynthArgs),
    /// Train a model and write report.csv, checkpoint/ and confusion.csv.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a manifest.
    Eval(EvalArgs),
    /// Attribution heatmap for one image.
    Explain(ExplainArgs),
    /// Classify an ordered frame sequence with rolling-average smoothing.
    Stream(StreamArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(2..=17))]
    pub classes: u64,
    #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u64).range(1..))]
    pub per_class: u64,
    #[arg(long, default_value_t = 32, value_parser = clap::value_parser!(u64).range(8..=512))]
    pub size: u64,
    /// Also write the 200-frame flicker stream into `<out-dir>/flicker`.
    #[arg(long)]
    pub flicker: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Model description; the bundled tiny-resnet when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Manifest CSV (`path,label`).
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 30, value_parser = clap::value_parser!(u64).range(1..))]
    pub epochs: u64,
    #[arg(long, default_value_t = 64, value_parser = clap::value_parser!(u64).range(1..))]
    pub batch: u64,
    #[arg(long, default_value = "fine-tuning")]
    pub mode: FreezeMode,
    /// Share of each class held out for testing.
    #[arg(long, default_value_t = 0.2)]
    pub test_fraction: f64,
    /// Train without rotation/zoom augmentation.
    #[arg(long)]
    pub no_augment: bool,
    /// Base learning rate of the step schedule.
    #[arg(long, default_value_t = 0.001)]
    pub lr: f64,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Fail unless the checkpoint was trained with this config.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Ig,
    Occlusion,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Render {
    Magnitude,
    Signed,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[arg(long, value_enum)]
    pub method: Method,
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Integration steps (ig).
    #[arg(long, default_value_t = 64, value_parser = clap::value_parser!(u64).range(1..))]
    pub steps: u64,
    /// Occlusion patch side in pixels.
    #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u64).range(1..))]
    pub patch: u64,
    /// Occlusion stride in pixels.
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..))]
    pub stride: u64,
    /// Class name or index; defaults to the predicted class.
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long, value_enum, default_value = "magnitude")]
    pub render: Render,
    /// Also write mask.pgm marking the top fraction of pixels by magnitude
    /// (0.1 when given without a value).
    #[arg(long, num_args = 0..=1, default_missing_value = "0.1")]
    pub mask_top: Option<f64>,
    /// Also write the raw attribution values as attributions.gten.
    #[arg(long)]
    pub dump_gten: bool,
}

#[derive(Debug, Args)]
pub struct StreamArgs {
    /// Directory of .ppm frames or a list file with one path per line.
    #[arg(long)]
    pub frames: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Rolling-average window size Q.
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
    pub window: u64,
    /// Abort on the first unreadable frame instead of skipping it.
    #[arg(long)]
    pub strict: bool,
}

/// Why a command failed; decides the exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Runtime(_) => 1,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "usage error: {m}"),
            Failure::Runtime(e) => write!(f, "error: {e}"),
        }
    }
}

type CmdResult = std::result::Result<(), Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn require_exists(path: &Path, what: &str) -> CmdResult {
    if path.exists() {
        Ok(())
    } else {
        Err(usage(format!("{what} not found: {}", path.display())))
    }
}

pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .try_init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{f}");
            ExitCode::from(f.exit_code())
        }
    }
}

/// Executes a parsed command line.
pub fn run(cli: &Cli) -> CmdResult {
    match &cli.command {
        Command::Synth(a) => cmd_synth(cli, a),
        Command::Train(a) => cmd_train(cli, a),
        Command::Eval(a) => cmd_eval(cli, a),
        Command::Explain(a) => cmd_explain(cli, a),
        Command::Stream(a) => cmd_stream(cli, a),
    }
}

fn out_dir(cli: &Cli) -> Result<&Path, Failure> {
    std::fs::create_dir_all(&cli.out_dir).map_err(|e| Error::io(&cli.out_dir, e))?;
    Ok(&cli.out_dir)
}

fn cmd_synth(cli: &Cli, a: &SynthArgs) -> CmdResult {
    let out = out_dir(cli)?;
    let vocab = ClassVocab::default();
    let spec = SyntheticSpec {
        classes: a.classes as usize,
        per_class: a.per_class as usize,
        size: a.size as usize,
        seed: cli.seed,
    };
    let manifest = synth_generate(&spec, &vocab, out)?;
    let mut rc = RunConfig::new("synth");
    rc.set("seed", cli.seed)
        .set("classes", a.classes)
        .set("per_class", a.per_class)
        .set("size", a.size)
        .set("flicker", a.flicker);
    write_text(&out.join("run_config.txt"), &rc.to_text())?;
    println!("wrote {} images to {}", manifest.len(), out.join("manifest.csv").display());
    if a.flicker {
        let dir = out.join("flicker");
        let labels = write_flicker_fixture(a.classes as usize, a.size as usize, cli.seed, &vocab, &dir)?;
        println!("wrote {} flicker frames to {}", labels.len(), dir.display());
    }
    Ok(())
}

fn read_config(path: Option<&Path>) -> Result<ModelConfig, Failure> {
    match path {
        None => Ok(ModelConfig::tiny_resnet()),
        Some(p) => {
            require_exists(p, "config")?;
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            Ok(ModelConfig::parse(&text)?)
        }
    }
}

/// Copy of `m` whose record paths are absolute, so it can live anywhere.
fn relocated(m: &Manifest) -> Manifest {
    let records = m
        .records
        .iter()
        .map(|r| Record {
            path: m.image_path(r).to_string_lossy().into_owned(),
            label: r.label,
        })
        .collect();
    Manifest::new(m.root.clone(), m.vocab.clone(), records)
}

fn cmd_train(cli: &Cli, a: &TrainArgs) -> CmdResult {
    require_exists(&a.data, "manifest")?;
    if !(a.test_fraction > 0.0 && a.test_fraction < 1.0) {
        return Err(usage(format!("--test-fraction must be in (0,1), got {}", a.test_fraction)));
    }
    if !(a.lr > 0.0 && a.lr.is_finite()) {
        return Err(usage(format!("--lr must be positive, got {}", a.lr)));
    }
    let config = read_config(a.config.as_deref())?;
    let out = out_dir(cli)?;
    let vocab = ClassVocab::default();
    let data_path = std::fs::canonicalize(&a.data).map_err(|e| Error::io(&a.data, e))?;
    let manifest = load_manifest(&data_path, &vocab)?;
    let (train_m, test_m) = split(&manifest, 1.0 - a.test_fraction, a.test_fraction, cli.seed)?;
    relocated(&train_m).write_csv(&out.join("train_manifest.csv"))?;
    relocated(&test_m).write_csv(&out.join("test_manifest.csv"))?;
    let train_set = train_m.load_images()?;
    let test_set = test_m.load_images()?;

    let mut model = ModelGraph::build(&config, cli.seed)?;
    let cfg = TrainConfig {
        epochs: a.epochs as usize,
        batch_size: a.batch as usize,
        mode: a.mode,
        schedule: StepLrSchedule {
            base_lr: a.lr,
            ..StepLrSchedule::default()
        },
        augment: AugmentConfig {
            enabled: !a.no_augment,
            ..AugmentConfig::default()
        },
        seed: cli.seed,
    };

    let mut rc = RunConfig::new("train");
    rc.set("seed", cli.seed)
        .set("config", a.config.as_ref().map_or("<bundled tiny-resnet>".into(), |p| p.display().to_string()))
        .set("config_digest", config.digest())
        .set("data", a.data.display())
        .set("epochs", a.epochs)
        .set("batch", a.batch)
        .set("mode", a.mode)
        .set("test_fraction", a.test_fraction)
        .set("augment", !a.no_augment)
        .set("lr", a.lr)
        .set("lr_decay", cfg.schedule.decay)
        .set("lr_period", cfg.schedule.period)
        .set("train_samples", train_set.len())
        .set("test_samples", test_set.len());
    write_text(&out.join("run_config.txt"), &rc.to_text())?;

    let started = Instant::now();
    let report = if test_set.is_empty() {
        train(&mut model, &train_set, None, &cfg)?
    } else {
        train(&mut model, &train_set, Some(&test_set), &cfg)?
    };
    let mut log_text = String::new();
    let frozen = model.frozen_names();
    let _ = writeln!(log_text, "mode: {}", a.mode);
    let _ = writeln!(log_text, "frozen parameters ({}):", frozen.len());
    for name in &frozen {
        let _ = writeln!(log_text, "  {name}");
    }
    if a.mode == FreezeMode::FeatureExtraction {
        log::info!("feature extraction: {} frozen parameters: {}", frozen.len(), frozen.join(", "));
    }

    write_text(&out.join("report.csv"), &training_csv(&report))?;
    let meta = CheckpointMeta {
        epoch: report.epochs.len(),
        lr: report.final_lr(),
        seed: cli.seed,
    };
    save_checkpoint(&model, &meta, &out.join("checkpoint"))?;

    let mut metrics = String::new();
    if !test_set.is_empty() {
        let eval = evaluate(&model, &test_set)?;
        write_text(&out.join("confusion.csv"), &confusion_csv(&eval))?;
        write_text(&out.join("confidence.csv"), &ConfidenceTable::from_evaluation(&eval, &vocab).to_csv())?;
        let _ = writeln!(metrics, "test_{}", accuracy_line(&eval));
        let _ = writeln!(metrics, "test_samples: {}", eval.total());
        println!("test {}", accuracy_line(&eval));
    }
    if let Some(last) = report.epochs.last() {
        let _ = writeln!(metrics, "final_loss: {:.8}", last.loss);
        let _ = writeln!(metrics, "final_train_acc: {:.6}", last.train_accuracy);
    }
    write_text(&out.join("metrics.txt"), &metrics)?;
    let _ = writeln!(log_text, "train wall time: {:.3} s", report.wall_time.as_secs_f64());
    let _ = writeln!(log_text, "total wall time: {:.3} s", started.elapsed().as_secs_f64());
    write_text(&out.join("run.log"), &log_text)?;
    Ok(())
}

fn load_model(checkpoint: &Path, expected: Option<&ModelConfig>) -> Result<ModelGraph, Failure> {
    require_exists(checkpoint, "checkpoint")?;
    Ok(load_checkpoint(checkpoint, expected)?.0)
}

fn cmd_eval(cli: &Cli, a: &EvalArgs) -> CmdResult {
    require_exists(&a.data, "manifest")?;
    let expected = a.config.as_deref().map(|p| read_config(Some(p))).transpose()?;
    let model = load_model(&a.checkpoint, expected.as_ref())?;
    let out = out_dir(cli)?;
    let manifest = load_manifest(&a.data, model.vocab())?;
    let eval = evaluate(&model, &manifest.load_images()?)?;
    write_text(&out.join("confusion.csv"), &confusion_csv(&eval))?;
    write_text(
        &out.join("confidence.csv"),
        &ConfidenceTable::from_evaluation(&eval, model.vocab()).to_csv(),
    )?;
    let mut rc = RunConfig::new("eval");
    rc.set("seed", cli.seed)
        .set("checkpoint", a.checkpoint.display())
        .set("data", a.data.display())
        .set("config", a.config.as_ref().map_or("-".into(), |p| p.display().to_string()))
        .set("samples", eval.total());
    write_text(&out.join("run_config.txt"), &rc.to_text())?;
    println!("{}", accuracy_line(&eval));
    Ok(())
}

fn parse_target(spec: &str, vocab: &ClassVocab) -> Result<usize, Failure> {
    if let Ok(i) = spec.parse::<usize>() {
        return if i < vocab.len() {
            Ok(i)
        } else {
            Err(usage(format!("--target {i} outside 0..{}", vocab.len())))
        };
    }
    vocab
        .index_of(spec)
        .ok_or_else(|| usage(format!("--target '{spec}' is not a class name or index")))
}

fn cmd_explain(cli: &Cli, a: &ExplainArgs) -> CmdResult {
    require_exists(&a.image, "image")?;
    if let Some(f) = a.mask_top {
        if !(f > 0.0 && f <= 1.0) {
            return Err(usage(format!("--mask-top must be in (0,1], got {f}")));
        }
    }
    let model = load_model(&a.checkpoint, None)?;
    let vocab = model.vocab().clone();
    let raw = load_image(&a.image)?;
    let image = model.normalization.apply(&raw)?;
    let (h, w) = (image.shape()[1], image.shape()[2]);
    if a.method == Method::Occlusion {
        let (patch, stride) = (a.patch as usize, a.stride as usize);
        if patch > h.min(w) || stride > patch {
            return Err(usage(format!(
                "occlusion needs stride <= patch <= {}, got patch {patch} stride {stride}",
                h.min(w)
            )));
        }
    }
    let prediction = model.predict(&image)?;
    let (target, origin) = match &a.target {
        Some(t) => (parse_target(t, &vocab)?, "given"),
        None => (prediction.index, "predicted"),
    };
    let out = out_dir(cli)?;
    println!(
        "prediction: {} ({:.2}%)",
        prediction.name,
        100.0 * prediction.confidence
    );
    println!("target: {} (index {target}, {origin})", vocab.name(target).unwrap_or("?"));
    let mode = match a.render {
        Render::Magnitude => RenderMode::Magnitude,
        Render::Signed => RenderMode::Signed,
    };
    let mut rc = RunConfig::new("explain");
    rc.set("seed", cli.seed)
        .set("method", format!("{:?}", a.method).to_lowercase())
        .set("image", a.image.display())
        .set("checkpoint", a.checkpoint.display())
        .set("target", target)
        .set("render", format!("{:?}", a.render).to_lowercase());

    let heatmap_path = out.join("heatmap.pgm");
    match a.method {
        Method::Ig => {
            let cfg = IgConfig {
                steps: a.steps as usize,
                ..IgConfig::new(target)
            };
            rc.set("steps", cfg.steps);
            let map = integrated_gradients(&model, &image, &cfg)?;
            finish_explain(&map, mode, a, out)?;
            println!(
                "completeness_gap: {:.6e} (sum {:.6e}, F(x)-F(baseline) {:.6e}, steps {})",
                map.completeness_gap,
                map.values.sum(),
                map.score_input - map.score_baseline,
                cfg.steps
            );
            if a.dump_gten {
                map.values.save_gten(&out.join("attributions.gten"))?;
            }
        }
        Method::Occlusion => {
            let cfg = OcclusionConfig {
                patch: a.patch as usize,
                stride: a.stride as usize,
                ..OcclusionConfig::new(target)
            };
            rc.set("patch", cfg.patch).set("stride", cfg.stride);
            let map = occlusion_map(&model, &image, &cfg)?;
            finish_explain(&map, mode, a, out)?;
            let (r, c, drop) = map.max_drop();
            let (y0, x0, y1, x1) = map.window(r, c);
            println!("grid: {}x{}", map.rows, map.cols);
            println!("max_drop: {drop:.6} at row {r} col {c} (pixels y {y0}..{y1}, x {x0}..{x1})");
            if a.dump_gten {
                crate::Tensor::new(vec![map.rows, map.cols], map.drops.clone())?
                    .save_gten(&out.join("attributions.gten"))?;
            }
        }
    }
    write_text(&out.join("run_config.txt"), &rc.to_text())?;
    println!("heatmap: {}", heatmap_path.display());
    Ok(())
}

fn finish_explain(map: &impl AttributionGrid, mode: RenderMode, a: &ExplainArgs, out: &Path) -> CmdResult {
    render_heatmap(map, mode).save_pgm(&out.join("heatmap.pgm"))?;
    if let Some(f) = a.mask_top {
        threshold_mask(map, f)?.save_pgm(&out.join("mask.pgm"))?;
    }
    Ok(())
}

fn cmd_stream(cli: &Cli, a: &StreamArgs) -> CmdResult {
    require_exists(&a.frames, "frames")?;
    let model = load_model(&a.checkpoint, None)?;
    let out = out_dir(cli)?;
    let source = FrameSource::from_path(&a.frames);
    let probs = infer_frames(&model, &source, a.strict)?;
    let q = a.window as usize;
    let smoothed = smooth(&probs, q, model.vocab())?;
    let per_frame = smooth(&probs, 1, model.vocab())?;
    write_annotations(&out.join("annotations.csv"), &smoothed)?;
    let mut rc = RunConfig::new("stream");
    rc.set("seed", cli.seed)
        .set("frames", a.frames.display())
        .set("checkpoint", a.checkpoint.display())
        .set("window", q)
        .set("strict", a.strict);
    write_text(&out.join("run_config.txt"), &rc.to_text())?;
    println!(
        "frames: {} switches(Q={q}): {} switches(Q=1): {}",
        smoothed.len(),
        count_switches(&smoothed),
        count_switches(&per_frame)
    );
    Ok(())
}
