//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage, 2 I/O, 3 parse, 4 data mismatch. Status
//! lines go to standard output, diagnostics to standard error.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{ArgAction, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::attention::{
    attention_map, AttentionConfig, Landmark, LandmarkSet, MapOutcome, Visibility,
};
use crate::geometry::{convex_boundary, Point};
use crate::ingest::{self, BBox, ParseError};
use crate::losses::{self, HeatmapTargetConfig, LossConfig};
use crate::metrics::{self, GroundTruth, MetricsError, RecallAveraging, ScoreRecord};
use crate::raster::{BlurConfig, Sigma};

/// Environment fallback for `--threads`.
pub const THREADS_ENV: &str = "BATTN_THREADS";

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
    Parse(String),
    Mismatch(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Io(_) => 2,
            CliError::Parse(_) => 3,
            CliError::Mismatch(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Io(m) | CliError::Parse(m) | CliError::Mismatch(m) => m,
        }
    }
}

fn parse_err(path: &Path, e: ParseError) -> CliError {
    CliError::Parse(format!("{}: {e}", path.display()))
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn metrics_err(e: MetricsError) -> CliError {
    match e {
        MetricsError::IdMismatch { offenders } => {
            let shown: Vec<&str> = offenders.iter().take(10).map(String::as_str).collect();
            CliError::Mismatch(format!(
                "{} mismatched image ids; first offenders: {}",
                offenders.len(),
                shown.join(" ")
            ))
        }
        other => CliError::Mismatch(other.to_string()),
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "battn",
    version,
    about = "Landmark boundary attention maps and fashion metrics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write one PGM attention map per landmark row.
    Map(MapArgs),
    /// Print the convex boundary of each landmark row.
    Hull(HullArgs),
    /// Score a prediction file against ground truth.
    Eval(EvalArgs),
    /// Map landmarks from original images into resized crop space.
    Transform(TransformArgs),
    /// Generate a random landmark file.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum InputFormat {
    /// `LANDMARKS v1` files.
    Native,
    /// DeepFashion `list_landmarks.txt`.
    Deepfashion,
}

#[derive(Debug, clap::Args)]
struct LandmarkInput {
    #[arg(long)]
    landmarks: PathBuf,
    #[arg(long, value_enum, default_value = "native")]
    input_format: InputFormat,
}

impl LandmarkInput {
    fn load(&self) -> Result<Vec<LandmarkSet>, CliError> {
        let text = read(&self.landmarks)?;
        match self.input_format {
            InputFormat::Native => ingest::parse_landmarks(&text),
            InputFormat::Deepfashion => ingest::parse_deepfashion_landmarks(&text),
        }
        .map_err(|e| parse_err(&self.landmarks, e))
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum OutputFormat {
    Pgm,
}

#[derive(Debug, clap::Args)]
struct MapArgs {
    #[command(flatten)]
    input: LandmarkInput,
    #[arg(long, default_value_t = 256)]
    width: usize,
    #[arg(long, default_value_t = 256)]
    height: usize,
    /// Blur sigma in pixels, or `auto` for 5% of the shorter side.
    #[arg(long, default_value = "auto", value_parser = parse_sigma)]
    sigma: Sigma,
    #[arg(long, default_value_t = 0.0)]
    floor: f64,
    #[arg(long, default_value_t = true, action = ArgAction::Set)]
    include_occluded: bool,
    #[arg(long, default_value_t = 8.0)]
    fallback_sigma: f64,
    /// Worker threads; falls back to BATTN_THREADS, then the CPU count.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    #[arg(long, value_enum, default_value = "pgm")]
    format: OutputFormat,
}

#[derive(Debug, clap::Args)]
struct HullArgs {
    #[command(flatten)]
    input: LandmarkInput,
    #[arg(long, default_value_t = true, action = ArgAction::Set)]
    include_occluded: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Task {
    Category,
    Attribute,
    Landmark,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum GtSpace {
    /// Ground truth already in the `--width x --height` crop space.
    Cropped,
    /// Ground truth in original image pixels; requires `--bbox`.
    Original,
}

#[derive(Debug, clap::Args)]
struct EvalArgs {
    #[arg(long, value_enum)]
    task: Task,
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "3,5")]
    topk: Vec<usize>,
    #[arg(long)]
    visible_only: bool,
    /// Landmark normalization width (crop space).
    #[arg(long, default_value_t = 256)]
    width: u32,
    #[arg(long, default_value_t = 256)]
    height: u32,
    #[arg(long, value_enum, default_value = "cropped")]
    gt_space: GtSpace,
    #[arg(long)]
    bbox: Option<PathBuf>,
    /// Per-sample (macro) instead of dataset-level (micro) attribute recall.
    #[arg(long = "macro")]
    macro_recall: bool,
    /// Also report the task's training loss.
    #[arg(long)]
    loss: bool,
    #[arg(long, default_value_t = losses::DEFAULT_POS_WEIGHT)]
    pos_weight: f64,
}

#[derive(Debug, clap::Args)]
struct TransformArgs {
    #[command(flatten)]
    input: LandmarkInput,
    #[arg(long)]
    bbox: PathBuf,
    #[arg(long, default_value_t = 256)]
    width: u32,
    #[arg(long, default_value_t = 256)]
    height: u32,
}

#[derive(Debug, clap::Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 100)]
    rows: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 256)]
    width: u32,
    #[arg(long, default_value_t = 256)]
    height: u32,
}

fn parse_sigma(s: &str) -> Result<Sigma, String> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(Sigma::Auto);
    }
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v >= 0.0 => Ok(Sigma::Fixed(v)),
        _ => Err(format!(
            "expected `auto` or a non-negative number, got {s:?}"
        )),
    }
}

/// Thread count from the flag, then `BATTN_THREADS`, then available
/// parallelism.
pub fn resolve_threads(flag: Option<usize>) -> Result<usize, CliError> {
    let n = match flag {
        Some(n) => n,
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("{THREADS_ENV}: not a count: {v:?}")))?,
            Err(_) => std::thread::available_parallelism().map_or(1, |n| n.get()),
        },
    };
    if n == 0 {
        return Err(CliError::Usage("threads must be >= 1".into()));
    }
    Ok(n)
}

/// Runs the CLI with `args` (including the program name) and returns the
/// process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            if code == 0 {
                let _ = write!(out, "{e}");
            } else {
                let _ = write!(err, "{e}");
            }
            return code;
        }
    };
    let result = match cli.command {
        Command::Map(a) => cmd_map(&a, out),
        Command::Hull(a) => cmd_hull(&a, out),
        Command::Eval(a) => cmd_eval(&a, out),
        Command::Transform(a) => cmd_transform(&a, out),
        Command::Synth(a) => cmd_synth(&a, out),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "battn: {}", e.message());
            e.exit_code()
        }
    }
}

fn io_out(e: std::io::Error) -> CliError {
    CliError::Io(format!("stdout: {e}"))
}

fn safe_file_stem(id: &str) -> bool {
    !id.is_empty() && id != "." && id != ".." && !id.contains(['/', '\\', '\0'])
}

fn cmd_map(a: &MapArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if a.width == 0 || a.height == 0 {
        return Err(CliError::Usage("width and height must be >= 1".into()));
    }
    if !(0.0..1.0).contains(&a.floor) {
        return Err(CliError::Usage("floor must be in [0, 1)".into()));
    }
    let threads = resolve_threads(a.threads)?;
    let sets = a.input.load()?;
    if let Some(bad) = sets.iter().find(|s| !safe_file_stem(&s.image_id)) {
        return Err(CliError::Mismatch(format!(
            "image id {:?} cannot be used as a file name",
            bad.image_id
        )));
    }
    fs::create_dir_all(&a.out_dir)
        .map_err(|e| CliError::Io(format!("{}: {e}", a.out_dir.display())))?;

    let cfg = AttentionConfig {
        include_occluded: a.include_occluded,
        blur: BlurConfig { sigma: a.sigma },
        floor: a.floor,
        fallback_sigma: a.fallback_sigma,
    };
    let OutputFormat::Pgm = a.format;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Io(format!("thread pool: {e}")))?;

    // Results come back in input order whatever the scheduling.
    let statuses: Vec<Result<MapOutcome, String>> = pool.install(|| {
        sets.par_iter()
            .map(|set| {
                let map = attention_map(set, a.width, a.height, &cfg);
                let path = a.out_dir.join(format!("{}.pgm", set.image_id));
                fs::write(&path, map.grid.to_pgm())
                    .map(|()| map.outcome)
                    .map_err(|e| format!("{}: {e}", path.display()))
            })
            .collect()
    });

    let mut first_failure = None;
    for (set, status) in sets.iter().zip(statuses) {
        match status {
            Ok(MapOutcome::Boundary) => writeln!(out, "OK {}", set.image_id),
            Ok(MapOutcome::Fallback(reason)) => {
                writeln!(out, "FALLBACK {} {reason}", set.image_id)
            }
            Err(msg) => {
                first_failure.get_or_insert(msg);
                Ok(())
            }
        }
        .map_err(io_out)?;
    }
    match first_failure {
        Some(msg) => Err(CliError::Io(msg)),
        None => Ok(()),
    }
}

/// One `hull` output line.
pub fn hull_line(set: &LandmarkSet, include_occluded: bool) -> String {
    let points: Vec<Point> = set
        .usable(include_occluded)
        .map(|p| Point::quantize(p.x, p.y))
        .collect();
    match convex_boundary(&points) {
        Ok(b) => {
            let mut line = format!("{} {}", set.image_id, b.vertices().len());
            for v in b.vertices() {
                line.push_str(&format!(" {} {}", v.x, v.y));
            }
            line.push_str(&format!(" dropped={}", b.dropped().len()));
            line
        }
        Err(_) => format!("{} 0 dropped=0", set.image_id),
    }
}

fn cmd_hull(a: &HullArgs, out: &mut dyn Write) -> Result<(), CliError> {
    for set in a.input.load()? {
        writeln!(out, "{}", hull_line(&set, a.include_occluded)).map_err(io_out)?;
    }
    Ok(())
}

fn check_topk(ks: &[usize]) -> Result<(), CliError> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(CliError::Usage("--topk needs values >= 1".into()));
    }
    Ok(())
}

fn cmd_eval(a: &EvalArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let pred_text = read(&a.pred)?;
    let gt_text = read(&a.gt)?;
    let (len, rows) = ingest::parse_score_file(&pred_text).map_err(|e| parse_err(&a.pred, e))?;

    match a.task {
        Task::Category => {
            check_topk(&a.topk)?;
            let (classes, labels) =
                ingest::parse_categories(&gt_text).map_err(|e| parse_err(&a.gt, e))?;
            if classes != len {
                return Err(CliError::Mismatch(format!(
                    "prediction length {len} != class count {classes}"
                )));
            }
            let records: Vec<ScoreRecord> = rows
                .into_iter()
                .map(|r| ScoreRecord::category(r.image_id, r.values))
                .collect();
            let truths: Vec<GroundTruth> = labels
                .into_iter()
                .map(|(id, c)| GroundTruth::new(id).with_category(c))
                .collect();
            for &k in &a.topk {
                let v = metrics::topk_accuracy(&records, &truths, k).map_err(metrics_err)?;
                writeln!(out, "top-{k} {:.2}", 100.0 * v).map_err(io_out)?;
            }
            if a.loss {
                let pairs = metrics::pair_by_id(&records, &truths).map_err(metrics_err)?;
                let mut total = 0.0;
                for (r, t) in &pairs {
                    let scores = r.category_scores.as_deref().unwrap_or_default();
                    let (l, _) = losses::softmax_cross_entropy(scores, t.category.unwrap_or(0))
                        .map_err(|e| CliError::Mismatch(format!("{}: {e}", r.image_id)))?;
                    total += l;
                }
                writeln!(out, "CE {:.6}", total / pairs.len().max(1) as f64).map_err(io_out)?;
            }
        }
        Task::Attribute => {
            check_topk(&a.topk)?;
            let (count, positives) =
                ingest::parse_attributes(&gt_text).map_err(|e| parse_err(&a.gt, e))?;
            if count != len {
                return Err(CliError::Mismatch(format!(
                    "prediction length {len} != attribute count {count}"
                )));
            }
            let records: Vec<ScoreRecord> = rows
                .into_iter()
                .map(|r| ScoreRecord::attribute(r.image_id, r.values))
                .collect();
            let truths: Vec<GroundTruth> = positives
                .into_iter()
                .map(|(id, attrs)| GroundTruth::new(id).with_attributes(attrs))
                .collect();
            let averaging = if a.macro_recall {
                RecallAveraging::Macro
            } else {
                RecallAveraging::Micro
            };
            for &k in &a.topk {
                let v = metrics::topk_recall_with(&records, &truths, k, averaging)
                    .map_err(metrics_err)?;
                writeln!(out, "top-{k} {:.2}", 100.0 * v).map_err(io_out)?;
            }
            if a.loss {
                if !(a.pos_weight > 0.0 && a.pos_weight.is_finite()) {
                    return Err(CliError::Usage(
                        "--pos-weight must be finite and > 0".into(),
                    ));
                }
                let cfg = LossConfig {
                    pos_weight: a.pos_weight,
                };
                let pairs = metrics::pair_by_id(&records, &truths).map_err(metrics_err)?;
                let mut total = 0.0;
                for (r, t) in &pairs {
                    let scores = r.attribute_scores.as_deref().unwrap_or_default();
                    let mut labels = vec![false; scores.len()];
                    t.attributes.iter().for_each(|&i| labels[i] = true);
                    let (l, _) = losses::asym_weighted_bce(scores, &labels, &cfg)
                        .map_err(|e| CliError::Mismatch(format!("{}: {e}", r.image_id)))?;
                    total += l;
                }
                writeln!(out, "BCE {:.6}", total / pairs.len().max(1) as f64).map_err(io_out)?;
            }
        }
        Task::Landmark => {
            let mut gt = ingest::parse_landmarks(&gt_text).map_err(|e| parse_err(&a.gt, e))?;
            if a.gt_space == GtSpace::Original {
                let path = a
                    .bbox
                    .as_ref()
                    .ok_or_else(|| CliError::Usage("--gt-space original requires --bbox".into()))?;
                gt = to_crop_space(&gt, path, a.width, a.height)?;
            }
            if len % 2 != 0 {
                return Err(CliError::Mismatch(format!(
                    "landmark predictions need x/y pairs, got vector length {len}"
                )));
            }
            let records: Vec<ScoreRecord> = rows
                .into_iter()
                .map(|r| {
                    let pts = r.values.chunks_exact(2).map(|c| (c[0], c[1])).collect();
                    ScoreRecord::landmarks(r.image_id, pts)
                })
                .collect();
            let (w, h) = (f64::from(a.width), f64::from(a.height));
            let truths: Vec<GroundTruth> = gt
                .into_iter()
                .map(|set| GroundTruth::new(set.image_id.clone()).with_landmarks(set, w, h))
                .collect();
            let ne = metrics::normalized_error(&records, &truths, a.visible_only)
                .map_err(metrics_err)?;
            writeln!(out, "NE {ne:.4}").map_err(io_out)?;
            if a.loss {
                let mse = heatmap_mse(&records, &truths, w, h)?;
                writeln!(out, "MSE {mse:.6}").map_err(io_out)?;
            }
        }
    }
    Ok(())
}

/// Mean heatmap MSE between predicted and true landmarks, both rendered on the
/// default 64x64 target grid.
fn heatmap_mse(
    records: &[ScoreRecord],
    truths: &[GroundTruth],
    w: f64,
    h: f64,
) -> Result<f64, CliError> {
    let cfg = HeatmapTargetConfig::default();
    let (sx, sy) = (cfg.out_width as f64 / w, cfg.out_height as f64 / h);
    let pairs = metrics::pair_by_id(records, truths).map_err(metrics_err)?;
    let mut total = 0.0;
    for (r, t) in &pairs {
        let pred = r.predicted_landmarks.as_deref().unwrap_or_default();
        let scale = |x: f64, y: f64, v| Landmark::new(x * sx, y * sy, v);
        let truth: Vec<Landmark> = t
            .landmarks
            .points
            .iter()
            .map(|p| scale(p.x, p.y, p.visibility))
            .collect();
        let guess: Vec<Landmark> = truth
            .iter()
            .enumerate()
            .map(|(i, p)| match pred.get(i) {
                Some(&(x, y)) if p.visibility != Visibility::Missing => {
                    scale(x, y, Visibility::Visible)
                }
                _ => Landmark::new(0.0, 0.0, Visibility::Missing),
            })
            .collect();
        let target = losses::heatmap_target(&LandmarkSet::new("", truth), &cfg);
        let predicted = losses::heatmap_target(&LandmarkSet::new("", guess), &cfg);
        let (l, _) = losses::mse_loss(&predicted, &target)
            .map_err(|e| CliError::Mismatch(format!("{}: {e}", r.image_id)))?;
        total += l;
    }
    Ok(total / pairs.len().max(1) as f64)
}

fn to_crop_space(
    sets: &[LandmarkSet],
    bbox_path: &Path,
    width: u32,
    height: u32,
) -> Result<Vec<LandmarkSet>, CliError> {
    let boxes: std::collections::HashMap<String, BBox> = ingest::parse_bboxes(&read(bbox_path)?)
        .map_err(|e| parse_err(bbox_path, e))?
        .into_iter()
        .collect();
    let missing: Vec<&str> = sets
        .iter()
        .filter(|s| !boxes.contains_key(&s.image_id))
        .map(|s| s.image_id.as_str())
        .collect();
    if !missing.is_empty() {
        return Err(CliError::Mismatch(format!(
            "{} images without a bounding box; first offenders: {}",
            missing.len(),
            missing
                .iter()
                .take(10)
                .copied()
                .collect::<Vec<_>>()
                .join(" ")
        )));
    }
    sets.iter()
        .map(|s| {
            ingest::transform_landmarks(s, &boxes[&s.image_id], width, height)
                .map_err(|e| CliError::Mismatch(format!("{}: {e}", s.image_id)))
        })
        .collect()
}

fn cmd_transform(a: &TransformArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if a.width == 0 || a.height == 0 {
        return Err(CliError::Usage("width and height must be >= 1".into()));
    }
    let sets = a.input.load()?;
    let mapped = to_crop_space(&sets, &a.bbox, a.width, a.height)?;
    let max_points = mapped.iter().map(|s| s.points.len()).max().unwrap_or(0);
    out.write_all(ingest::write_landmarks(max_points, &mapped).as_bytes())
        .map_err(io_out)
}

/// Random landmark sets: 1 to 8 points each, mostly visible, coordinates
/// inside a `width x height` grid.
pub fn synth_landmarks(rows: usize, seed: u64, width: u32, height: u32) -> Vec<LandmarkSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (f64::from(width.max(1)), f64::from(height.max(1)));
    (0..rows)
        .map(|i| {
            let n = rng.gen_range(1..=8);
            let points = (0..n)
                .map(|_| {
                    let visibility = match rng.gen_range(0..10) {
                        0 => Visibility::Missing,
                        1 | 2 => Visibility::Occluded,
                        _ => Visibility::Visible,
                    };
                    let x = (rng.gen_range(0.0..w) * 100.0).round() / 100.0;
                    let y = (rng.gen_range(0.0..h) * 100.0).round() / 100.0;
                    Landmark::new(x, y, visibility)
                })
                .collect();
            LandmarkSet::new(format!("img_{i:06}"), points)
        })
        .collect()
}

fn cmd_synth(a: &SynthArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let sets = synth_landmarks(a.rows, a.seed, a.width, a.height);
    out.write_all(ingest::write_landmarks(8, &sets).as_bytes())
        .map_err(io_out)
}
