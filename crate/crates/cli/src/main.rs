use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use repest::eval::{run_dataset_with, Estimator};
use repest::io::{
    read_flow_dir, read_frames_dir, read_manifest, read_signal, scalogram_csv, write_flow_dir,
    write_frames_dir, write_manifest, write_pgm, write_scalogram, write_signal, Manifest,
    ManifestEntry, VideoSource,
};
use repest::pipeline::{analyze_video, PipelineConfig, VideoInput};
use repest::synth::{
    gen_bouncing_square_video, gen_flow_sequence, gen_signal, gen_viewpoint_transition, SynthKind,
    SynthSpec, TaxonomyCase,
};
use repest::wavelet::cwt;
use repest::{CycleAnnotation, FlowField, Grid, WaveletConfig};

/// Repetition counting in video from dense wavelet analysis of motion maps.
#[derive(Debug, Parser)]
#[command(name = "repest", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Count repetitions in a frame or flow sequence.
    Count(CountArgs),
    /// Score a manifest of annotated videos.
    Eval(EvalArgs),
    /// Generate a synthetic clip with ground truth.
    Synth(SynthArgs),
    /// Dump the wavelet scalogram of a 1-D signal.
    Spectrum(SpectrumArgs),
    /// Export per-frame foreground masks.
    Segment(SegmentArgs),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Stride {
    Auto,
    Fixed(usize),
}

impl FromStr for Stride {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Stride::Auto);
        }
        match s.parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Stride::Fixed(n)),
            _ => Err(format!("expected 'auto' or a positive integer, got {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct MinCycles(Option<f64>);

impl FromStr for MinCycles {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("none") {
            return Ok(MinCycles(None));
        }
        s.parse::<f64>()
            .map(|v| MinCycles(Some(v)))
            .map_err(|_| format!("expected a number or 'none', got {s:?}"))
    }
}

#[derive(Debug, Args)]
struct WaveletFlags {
    /// Morlet centre frequency.
    #[arg(long, default_value_t = 6.0)]
    omega0: f64,
    /// Scale resolution in octaves.
    #[arg(long, default_value_t = 0.125)]
    dj: f64,
    /// Smallest scale, frames.
    #[arg(long, default_value_t = 2.0)]
    s0: f64,
    /// Cycles the largest scale must fit in the clip, or 'none'.
    #[arg(long, default_value = "4")]
    min_cycles: MinCycles,
}

impl WaveletFlags {
    fn config(&self, fps: f64) -> WaveletConfig {
        WaveletConfig {
            omega0: self.omega0,
            dj: self.dj,
            s0: self.s0,
            min_cycles: self.min_cycles.0,
            dt: 1.0 / fps,
        }
    }
}

#[derive(Debug, Args)]
struct PipelineFlags {
    /// Gaussian derivative scale, px at processing resolution.
    #[arg(long, default_value_t = 4.0)]
    sigma: f64,
    #[command(flatten)]
    wavelet: WaveletFlags,
    /// Spatial downsampling factor, or 'auto' for at most 64 px per side.
    #[arg(long, default_value = "auto")]
    stride: Stride,
    /// Median filter length for the frequency trace, frames (odd).
    #[arg(long, default_value_t = 9)]
    median_window: usize,
    /// Minimum foreground fraction before a mask is carried over.
    #[arg(long, default_value_t = 0.01)]
    mask_floor: f64,
}

impl PipelineFlags {
    fn config(&self, fps: f64) -> PipelineConfig {
        PipelineConfig {
            sigma: self.sigma,
            wavelet: self.wavelet.config(fps),
            stride: match self.stride {
                Stride::Auto => None,
                Stride::Fixed(n) => Some(n),
            },
            median_window: self.median_window,
            mask_floor: self.mask_floor,
            ..PipelineConfig::for_fps(fps)
        }
    }
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct InputSource {
    /// Directory of .pgm or .rimg frames, read in filename order.
    #[arg(long)]
    frames: Option<PathBuf>,
    /// Directory of .flo flow fields, read in filename order.
    #[arg(long)]
    flow: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CountArgs {
    #[command(flatten)]
    input: InputSource,
    /// Frame rate of the input.
    #[arg(long)]
    fps: f64,
    #[command(flatten)]
    pipeline: PipelineFlags,
    /// Write a JSON report with the count, frequency trace and increments.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Write per-step foreground masks as PGM into this directory.
    #[arg(long)]
    masks: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ReportFormat {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EstimatorArg {
    Wavelet,
    Periodogram,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// JSON manifest; its directories resolve relative to the manifest.
    #[arg(long)]
    manifest: PathBuf,
    /// Output report path.
    #[arg(long)]
    report: PathBuf,
    #[arg(long, value_enum, default_value_t = ReportFormat::Json)]
    format: ReportFormat,
    #[arg(long, value_enum, default_value_t = EstimatorArg::Wavelet)]
    estimator: EstimatorArg,
    #[command(flatten)]
    pipeline: PipelineFlags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
enum Case {
    Sinusoid,
    ExpChirp,
    MidpointAccel,
    OscTranslationSide,
    OscTranslationFront,
    ConstTranslationTexture,
    IntermittentTranslation,
    OscRotationFront,
    OscExpansionFront,
    OscExpansionSide,
    ViewpointTransition,
    BouncingSquare,
}

impl Case {
    fn kind(self) -> SynthKind {
        match self {
            Case::Sinusoid => SynthKind::Sinusoid,
            Case::ExpChirp => SynthKind::ExpChirp,
            Case::MidpointAccel => SynthKind::MidpointAccel,
            Case::OscTranslationSide => SynthKind::Taxonomy(TaxonomyCase::OscTranslationSide),
            Case::OscTranslationFront => SynthKind::Taxonomy(TaxonomyCase::OscTranslationFront),
            Case::ConstTranslationTexture => {
                SynthKind::Taxonomy(TaxonomyCase::ConstTranslationTexture)
            }
            Case::IntermittentTranslation => {
                SynthKind::Taxonomy(TaxonomyCase::IntermittentTranslation)
            }
            Case::OscRotationFront => SynthKind::Taxonomy(TaxonomyCase::OscRotationFront),
            Case::OscExpansionFront => SynthKind::Taxonomy(TaxonomyCase::OscExpansionFront),
            Case::OscExpansionSide => SynthKind::Taxonomy(TaxonomyCase::OscExpansionSide),
            Case::ViewpointTransition => SynthKind::ViewpointTransition,
            Case::BouncingSquare => SynthKind::BouncingSquare,
        }
    }
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, value_enum)]
    case: Case,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Identifier recorded in the manifest.
    #[arg(long, default_value = "synth")]
    id: String,
    #[arg(long, default_value_t = 30.0)]
    fps: f64,
    /// Clip length, seconds.
    #[arg(long, default_value_t = 20.0)]
    duration: f64,
    /// Oscillation frequency (start frequency for chirps), Hz.
    #[arg(long, default_value_t = 0.5)]
    freq: f64,
    /// Amplitude; peak displacement in px for motion cases. Case default if omitted.
    #[arg(long)]
    amplitude: Option<f64>,
    /// Exponential chirp rate, 1/s. Case default if omitted.
    #[arg(long)]
    chirp_rate: Option<f64>,
    /// Frame width, px. Case default if omitted.
    #[arg(long)]
    width: Option<usize>,
    /// Frame height, px. Case default if omitted.
    #[arg(long)]
    height: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct SpectrumArgs {
    /// Text file with one sample per line.
    #[arg(long)]
    signal: PathBuf,
    /// RSCL scalogram output.
    #[arg(long)]
    out: PathBuf,
    /// Also write the scalogram as a CSV matrix.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long, default_value_t = 30.0)]
    fps: f64,
    #[command(flatten)]
    wavelet: WaveletFlags,
}

#[derive(Debug, Args)]
struct SegmentArgs {
    #[command(flatten)]
    input: InputSource,
    #[arg(long)]
    fps: f64,
    /// Output directory for mask_NNNNN.pgm files.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    pipeline: PipelineFlags,
}

type CliResult<T> = Result<T, String>;

fn ctx<T, E: std::fmt::Display>(r: Result<T, E>, what: impl std::fmt::Display) -> CliResult<T> {
    r.map_err(|e| format!("{what}: {e}"))
}

fn load_video(input: &InputSource) -> CliResult<VideoFlows> {
    match (&input.frames, &input.flow) {
        (Some(dir), None) => Ok(VideoFlows::Frames(ctx(
            read_frames_dir(dir),
            dir.display(),
        )?)),
        (None, Some(dir)) => Ok(VideoFlows::Flows(ctx(read_flow_dir(dir), dir.display())?)),
        _ => unreachable!("clap enforces exactly one source"),
    }
}

enum VideoFlows {
    Frames(Vec<Grid>),
    Flows(Vec<FlowField>),
}

impl VideoFlows {
    fn input(&self) -> VideoInput<'_, f32> {
        match self {
            VideoFlows::Frames(f) => VideoInput::Frames(f),
            VideoFlows::Flows(f) => VideoInput::Flows(f),
        }
    }
}

fn write_masks(dir: &Path, masks: &[repest::SegMask]) -> CliResult<()> {
    ctx(fs::create_dir_all(dir), dir.display())?;
    for (i, m) in masks.iter().enumerate() {
        let img = Grid::new(
            m.width(),
            m.height(),
            m.as_slice()
                .iter()
                .map(|&b| if b { 1.0 } else { 0.0 })
                .collect(),
        )
        .expect("mask dims");
        let path = dir.join(format!("mask_{i:05}.pgm"));
        ctx(fs::write(&path, write_pgm(&img, 255)), path.display())?;
    }
    Ok(())
}

fn cmd_count(a: &CountArgs) -> CliResult<()> {
    let cfg = a.pipeline.config(a.fps);
    ctx(cfg.validate(), "configuration")?;
    let video = load_video(&a.input)?;
    let analysis = ctx(analyze_video(video.input(), &cfg), "counting failed")?;
    println!("count: {:.2}", analysis.result.count);
    if let Some(path) = &a.report {
        let text = ctx(serde_json::to_string_pretty(&analysis.result), "report")?;
        ctx(fs::write(path, text + "\n"), path.display())?;
    }
    if let Some(dir) = &a.masks {
        write_masks(dir, &analysis.masks)?;
    }
    Ok(())
}

fn cmd_eval(a: &EvalArgs) -> CliResult<()> {
    let text = ctx(fs::read_to_string(&a.manifest), a.manifest.display())?;
    let manifest = ctx(read_manifest(&text), a.manifest.display())?;
    let base = a.manifest.parent().unwrap_or(Path::new("."));
    let cfg = a.pipeline.config(30.0);
    let estimator = match a.estimator {
        EstimatorArg::Wavelet => Estimator::Wavelet,
        EstimatorArg::Periodogram => Estimator::Periodogram,
    };
    let report = ctx(
        run_dataset_with(&manifest, base, &cfg, estimator),
        "evaluation",
    )?;
    let out = match a.format {
        ReportFormat::Json => report.to_json() + "\n",
        ReportFormat::Csv => report.to_csv(),
    };
    ctx(fs::write(&a.report, out), a.report.display())?;
    for r in report.videos.iter().filter(|r| r.error.is_some()) {
        eprintln!(
            "warning: {}: {}",
            r.id,
            r.error.as_deref().unwrap_or_default()
        );
    }
    if let Some(agg) = report.aggregate {
        println!(
            "mae: {:.2} ± {:.2}  oboa: {:.3}  ({} scored, {} failed)",
            100.0 * agg.mae_mean,
            100.0 * agg.mae_std,
            agg.oboa,
            agg.scored,
            agg.failed
        );
    } else {
        println!("no videos scored");
    }
    Ok(())
}

fn synth_spec(a: &SynthArgs) -> SynthSpec {
    let mut spec = SynthSpec::new(a.case.kind());
    spec.fps = a.fps;
    spec.duration = a.duration;
    spec.base_freq = a.freq;
    spec.seed = a.seed;
    if let Some(v) = a.amplitude {
        spec.amplitude = v;
    }
    if let Some(v) = a.chirp_rate {
        spec.chirp_rate = v;
    }
    if let Some(v) = a.width {
        spec.width = v;
    }
    if let Some(v) = a.height {
        spec.height = v;
    }
    spec
}

fn write_json(path: &Path, value: &serde_json::Value) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).expect("json value serialises");
    ctx(fs::write(path, text + "\n"), path.display())
}

fn write_video_manifest(
    out: &Path,
    id: &str,
    fps: f64,
    source: VideoSource,
    true_count: f64,
) -> CliResult<()> {
    let annotation = ctx(
        CycleAnnotation::new(id, fps, true_count.round() as u32, None),
        "annotation",
    )?;
    let m = Manifest {
        videos: vec![ManifestEntry {
            id: id.to_string(),
            source,
            fps,
            annotation,
        }],
    };
    let path = out.join("manifest.json");
    ctx(fs::write(&path, write_manifest(&m) + "\n"), path.display())
}

fn cmd_synth(a: &SynthArgs) -> CliResult<()> {
    let spec = synth_spec(a);
    ctx(fs::create_dir_all(&a.out), a.out.display())?;
    match spec.kind {
        SynthKind::Sinusoid | SynthKind::ExpChirp | SynthKind::MidpointAccel => {
            let s = ctx(gen_signal(&spec), "synthesis")?;
            let path = a.out.join("signal.txt");
            ctx(
                fs::write(&path, write_signal(&s.samples, spec.fps)),
                path.display(),
            )?;
            let ann = ctx(s.annotation(&a.id, spec.fps), "annotation")?;
            write_json(
                &a.out.join("annotation.json"),
                &json!({ "annotation": ann, "true_count": s.true_count }),
            )?;
            println!("true count: {:.4}", s.true_count);
        }
        SynthKind::Taxonomy(_) | SynthKind::ViewpointTransition => {
            let seq = if spec.kind == SynthKind::ViewpointTransition {
                gen_viewpoint_transition::<f32>(&spec)
            } else {
                gen_flow_sequence::<f32>(&spec)
            };
            let seq = ctx(seq, "synthesis")?;
            let dir = a.out.join("flow");
            ctx(write_flow_dir(&dir, &seq.flows), dir.display())?;
            write_video_manifest(
                &a.out,
                &a.id,
                spec.fps,
                VideoSource::Flow("flow".into()),
                seq.true_count,
            )?;
            write_json(
                &a.out.join("truth.json"),
                &json!({ "true_count": seq.true_count, "true_freq": seq.true_freq }),
            )?;
            println!("true count: {:.4}", seq.true_count);
        }
        SynthKind::BouncingSquare => {
            let v = ctx(gen_bouncing_square_video(&spec), "synthesis")?;
            let dir = a.out.join("frames");
            ctx(write_frames_dir(&dir, &v.frames), dir.display())?;
            write_video_manifest(
                &a.out,
                &a.id,
                spec.fps,
                VideoSource::Frames("frames".into()),
                v.true_count,
            )?;
            write_json(
                &a.out.join("truth.json"),
                &json!({ "true_count": v.true_count, "cycle_bounds": v.cycle_bounds }),
            )?;
            println!("true count: {:.4}", v.true_count);
        }
    }
    Ok(())
}

fn cmd_spectrum(a: &SpectrumArgs) -> CliResult<()> {
    let text = ctx(fs::read_to_string(&a.signal), a.signal.display())?;
    let samples = ctx(read_signal(&text), a.signal.display())?;
    let cfg = ctx(a.wavelet.config(a.fps).validate(), "configuration")?;
    let s = ctx(
        cwt(&samples.iter().map(|&x| x as f32).collect::<Vec<_>>(), &cfg),
        "transform",
    )?;
    ctx(fs::write(&a.out, write_scalogram(&s)), a.out.display())?;
    if let Some(path) = &a.csv {
        ctx(fs::write(path, scalogram_csv(&s)), path.display())?;
    }
    println!("{} scales x {} samples", s.n_scales(), s.n_times());
    Ok(())
}

fn cmd_segment(a: &SegmentArgs) -> CliResult<()> {
    let cfg = a.pipeline.config(a.fps);
    ctx(cfg.validate(), "configuration")?;
    let video = load_video(&a.input)?;
    let analysis = ctx(analyze_video(video.input(), &cfg), "segmentation failed")?;
    write_masks(&a.out, &analysis.masks)?;
    println!("{} masks written", analysis.masks.len());
    Ok(())
}

fn configure_threads() -> CliResult<()> {
    let Ok(v) = std::env::var("REPEST_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .map_err(|_| format!("REPEST_THREADS must be a non-negative integer, got {v:?}"))?;
    if n > 0 {
        ctx(
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global(),
            "thread pool",
        )?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|_| match &cli.command {
        Command::Count(a) => cmd_count(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Spectrum(a) => cmd_spectrum(a),
        Command::Segment(a) => cmd_segment(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
