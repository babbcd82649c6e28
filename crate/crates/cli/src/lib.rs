//! Command-line front end: scene synthesis, detection, evaluation and
//! visual debugging over frame directories and JSONL detection files.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use smod_core::detectors::{
    CoarseConfig, CoarseDetector, ExternalCoarse, ExternalDetections, ExternalFine, FineConfig, FineDetector,
    PassThroughFine, ReferenceCoarse, ReferenceFine,
};
use smod_core::evaluation::{evaluate, GroundTruth};
use smod_core::io::{draw_box, frame_file_name, read_detections, write_cube, write_final_detections, FrameSource};
use smod_core::pipeline::{run_sequence, Pipeline, PipelineConfig};
use smod_core::synthgen::{export_streaming, Preset, SynthConfig};

#[derive(Debug, Parser)]
#[command(name = "smod", version, about = "Small moving object detection over frame sequences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a seeded synthetic scene with ground truth.
    Synth(SynthArgs),
    /// Run the two-stage pipeline over a frame directory.
    Detect(DetectArgs),
    /// Score detections against ground truth.
    Eval(EvalArgs),
    /// Draw detection (and truth) boxes onto the frames.
    Overlay(OverlayArgs),
    /// Dump every cube the pipeline builds.
    Cubes(CubesArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// `easy` or `slow`.
    #[arg(long, default_value = "easy")]
    preset: Preset,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of frames (preset default when omitted).
    #[arg(long)]
    frames: Option<u32>,
    #[arg(long)]
    width: Option<u32>,
    #[arg(long)]
    height: Option<u32>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PipelineArgs {
    /// Directory of numbered `.ppm`/`.png` frames.
    #[arg(long)]
    frames: PathBuf,
    /// TOML file with `[pipeline]`, `[coarse]` and `[fine]` tables.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Window length (odd, at least 3).
    #[arg(long)]
    n: Option<usize>,
    /// Minimum cube area as a multiple of the object area (1 disables).
    #[arg(long)]
    gamma: Option<f64>,
    /// Minimum coarse score passed to the tracker.
    #[arg(long)]
    coarse_thresh: Option<f64>,
    /// Minimum fine score reported.
    #[arg(long)]
    fine_thresh: Option<f64>,
    /// IoU at which overlapping final boxes are suppressed.
    #[arg(long)]
    nms_iou: Option<f64>,
    /// Coarse detections from a JSONL file instead of the reference detector.
    #[arg(long)]
    external_coarse: Option<PathBuf>,
    /// Fine detections from a JSONL file keyed by `cube_id`.
    #[arg(long, conflicts_with = "passthrough_fine")]
    external_fine: Option<PathBuf>,
    /// Report track boxes unchanged instead of re-detecting in the cube.
    #[arg(long)]
    passthrough_fine: bool,
}

#[derive(Debug, Args)]
struct DetectArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Output JSONL file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CubesArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Only dump cubes of this middle frame.
    #[arg(long)]
    frame: Option<u32>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    dets: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    /// Score cut-off for the precision and recall columns.
    #[arg(long, default_value_t = 0.5)]
    score_thresh: f64,
    /// Row label in the printed table.
    #[arg(long, default_value = "smod")]
    label: String,
    /// Also write the full report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct OverlayArgs {
    #[arg(long)]
    frames: PathBuf,
    #[arg(long)]
    dets: PathBuf,
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

/// Contents of a `--config` file. Missing keys keep their defaults.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    pipeline: PipelineConfig,
    coarse: CoarseConfig,
    fine: FineConfig,
}

struct Resolved {
    pipeline: PipelineConfig,
    coarse: Box<dyn CoarseDetector>,
    fine: Box<dyn FineDetector>,
}

impl PipelineArgs {
    fn resolve(&self) -> Result<Resolved> {
        let file = match &self.config {
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                toml::from_str::<FileConfig>(&text).with_context(|| format!("parsing {}", p.display()))?
            }
            None => FileConfig::default(),
        };
        let mut pipeline = file.pipeline;
        if let Some(n) = self.n {
            pipeline.n = n;
        }
        if let Some(g) = self.gamma {
            pipeline.gamma = g;
        }
        if let Some(t) = self.coarse_thresh {
            pipeline.coarse_score_min = t;
        }
        if let Some(t) = self.fine_thresh {
            pipeline.fine_score_min = t;
        }
        if let Some(t) = self.nms_iou {
            pipeline.nms_iou = t;
        }
        pipeline.validate()?;

        let coarse: Box<dyn CoarseDetector> = match &self.external_coarse {
            Some(p) => Box::new(ExternalCoarse(load_external(p)?)),
            None => Box::new(ReferenceCoarse::new(CoarseConfig {
                input_width: pipeline.coarse_width,
                input_height: pipeline.coarse_height,
                ..file.coarse
            })),
        };
        let fine: Box<dyn FineDetector> = match (&self.external_fine, self.passthrough_fine) {
            (Some(p), _) => Box::new(ExternalFine(load_external(p)?)),
            (None, true) => Box::new(PassThroughFine),
            (None, false) => Box::new(ReferenceFine::new(file.fine)),
        };
        Ok(Resolved { pipeline, coarse, fine })
    }
}

fn load_external(p: &Path) -> Result<ExternalDetections> {
    ExternalDetections::load(p).with_context(|| format!("loading {}", p.display()))
}

fn synth(a: &SynthArgs) -> Result<()> {
    let mut cfg = SynthConfig::preset(a.preset, a.seed);
    if let Some(f) = a.frames {
        cfg.frame_count = f;
    }
    if let Some(w) = a.width {
        cfg.width = w;
    }
    if let Some(h) = a.height {
        cfg.height = h;
    }
    export_streaming(&cfg, &a.out)?;
    println!("wrote {} frames and truth.jsonl to {}", cfg.frame_count, a.out.display());
    Ok(())
}

fn detect(a: &DetectArgs) -> Result<()> {
    let r = a.pipeline.resolve()?;
    let mut src = FrameSource::open(&a.pipeline.frames)?;
    let dets = run_sequence(src.iter(), &r.pipeline, r.coarse, r.fine)?;
    write_final_detections(&dets, &a.out)?;
    println!("wrote {} detections to {}", dets.len(), a.out.display());
    Ok(())
}

fn cubes(a: &CubesArgs) -> Result<()> {
    let r = a.pipeline.resolve()?;
    let mut src = FrameSource::open(&a.pipeline.frames)?;
    if src.len() < r.pipeline.n {
        return Err(smod_core::Error::SequenceTooShort {
            frames: src.len(),
            window: r.pipeline.n,
        }
        .into());
    }
    let mut p = Pipeline::new(r.pipeline, r.coarse, r.fine)?;
    fs::create_dir_all(&a.out)?;
    let mut written = 0;
    for frame in src.iter() {
        let Some(trace) = p.push_frame_traced(frame?)? else {
            continue;
        };
        if a.frame.is_some_and(|f| f != trace.frame_index) {
            continue;
        }
        for c in &trace.cubes {
            write_cube(&a.out, trace.frame_index, &c.cube, &c.tensor, &c.motion_range)?;
            written += 1;
        }
    }
    println!("wrote {written} cubes to {}", a.out.display());
    Ok(())
}

fn eval(a: &EvalArgs) -> Result<()> {
    let dets: Vec<_> = read_detections(&a.dets)
        .with_context(|| format!("reading {}", a.dets.display()))?
        .iter()
        .map(|r| r.to_detection())
        .collect();
    let gts: Vec<GroundTruth> = read_detections(&a.truth)
        .with_context(|| format!("reading {}", a.truth.display()))?
        .iter()
        .map(|r| GroundTruth::new(r.frame, r.class, r.to_detection().bbox))
        .collect();
    let report = evaluate(&dets, &gts, a.score_thresh)?;
    print!("{}", report.table(&a.label));
    if let Some(p) = &a.json {
        let json = serde_json::to_string_pretty(&report)?;
        fs::write(p, json + "\n")?;
    }
    Ok(())
}

const DET_COLOR: [u8; 3] = [255, 40, 40];
const TRUTH_COLOR: [u8; 3] = [40, 220, 40];

fn overlay(a: &OverlayArgs) -> Result<()> {
    let dets = read_detections(&a.dets)?;
    let truth = match &a.truth {
        Some(p) => read_detections(p)?,
        None => Vec::new(),
    };
    let mut src = FrameSource::open(&a.frames)?;
    fs::create_dir_all(&a.out)?;
    for frame in src.iter() {
        let mut f = frame?;
        for t in truth.iter().filter(|t| t.frame == f.index) {
            draw_box(&mut f.image, &t.to_detection().bbox, TRUTH_COLOR, 1);
        }
        for d in dets.iter().filter(|d| d.frame == f.index) {
            draw_box(&mut f.image, &d.to_detection().bbox, DET_COLOR, 2);
        }
        let name = Path::new(&frame_file_name(f.index)).with_extension("png");
        f.image.save(a.out.join(name))?;
    }
    println!("wrote {} frames to {}", src.len(), a.out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Synth(a) => synth(a),
        Command::Detect(a) => detect(a),
        Command::Eval(a) => eval(a),
        Command::Overlay(a) => overlay(a),
        Command::Cubes(a) => cubes(a),
    }
}

/// Parse `argv` (program name first) and run the subcommand. Returns the
/// process exit status; messages go to stdout/stderr.
pub fn cli_dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}
