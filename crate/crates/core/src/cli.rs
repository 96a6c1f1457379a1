//! `actloc` command line: `synth`, `train`, `predict`, `eval`.
//!
//! Exit status: 0 on success, 1 on usage errors, 2 on data errors, 3 on
//! numerical failures (non-finite gradients, diverging loss).

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{self, read_labels, read_manifest, split, Subset, SyntheticSpec, VideoRecord};
use crate::error::{Error, Result};
use crate::eval::{
    classification_map, detection_map, grid_search, hit_at_3, ClassificationResult, DetectionResult, GridTable,
    GridVideo,
};
use crate::nn::{load_checkpoint, model_forward, save_checkpoint, Mode, ModelParams};
use crate::postprocess::{postprocess_video, ClipProbSequence, PostprocessConfig, Segment};
use crate::training::{train_with_callback, TrainConfig};

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const TRAIN_LOG_FILE: &str = "train_log.tsv";
pub const PREDICTIONS_FILE: &str = "predictions.json";
pub const PROBS_DIR: &str = "probs";
pub const METRICS_FILE: &str = "metrics.json";

#[derive(Debug, Parser)]
#[command(name = "actloc", version, about = "LSTM activity classification and temporal localization")]
pub struct Cli {
    /// Random seed for data generation, initialization, shuffling and dropout
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Worker threads for per-window / per-video work (1 = fully sequential)
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,

    /// Directory that receives all outputs
    #[arg(long, global = true, default_value = ".")]
    pub output_dir: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset (features, manifest, labels)
    Synth(SynthArgs),
    /// Train the LSTM clip classifier
    Train(TrainArgs),
    /// Predict clip probabilities, video labels and temporal segments
    Predict(PredictArgs),
    /// Score predictions: classification mAP / Hit@3 and detection mAP
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Activity classes K (background is extra)
    #[arg(long, default_value_t = 10)]
    pub num_classes: usize,
    /// Clip feature dimension (C3D fc6 is 4096; small values keep runs fast)
    #[arg(long, default_value_t = 32)]
    pub feature_dim: usize,
    #[arg(long, default_value_t = 200)]
    pub train_videos: usize,
    #[arg(long, default_value_t = 50)]
    pub validation_videos: usize,
    #[arg(long, default_value_t = 0)]
    pub testing_videos: usize,
    #[arg(long, default_value_t = 20)]
    pub min_clips: usize,
    #[arg(long, default_value_t = 60)]
    pub max_clips: usize,
    #[arg(long, default_value_t = 1)]
    pub min_segments: usize,
    #[arg(long, default_value_t = 2)]
    pub max_segments: usize,
    #[arg(long, default_value_t = 8)]
    pub min_segment_clips: usize,
    #[arg(long, default_value_t = 30)]
    pub max_segment_clips: usize,
    /// Minimum background clips between segments of one video
    #[arg(long, default_value_t = 10)]
    pub min_gap_clips: usize,
    /// Distance of each class centroid from the origin
    #[arg(long, default_value_t = 1.0)]
    pub class_separation: f64,
    /// Per-dimension feature noise standard deviation
    #[arg(long, default_value_t = 0.25)]
    pub noise_sigma: f64,
    #[arg(long, default_value_t = 30.0)]
    pub fps: f64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// JSON-lines manifest; the `train` subset is used
    #[arg(long)]
    pub manifest: PathBuf,
    /// Class names file [default: labels.txt next to the manifest]
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Stacked LSTM layers N (best ActivityNet configuration: 1 x 512-LSTM)
    #[arg(long, default_value_t = 1)]
    pub layers: usize,
    /// LSTM cells per layer c (best ActivityNet configuration: 1 x 512-LSTM)
    #[arg(long, default_value_t = 512)]
    pub cells: usize,
    /// Dropout probability before the first and after the last LSTM layer
    #[arg(long, default_value_t = 0.5)]
    pub dropout: f64,
    /// Loss weight of background clips (rho = 0.3 in the reference recipe)
    #[arg(long, default_value_t = 0.3)]
    pub rho: f64,
    /// RMSprop learning rate (1e-5 in the reference recipe)
    #[arg(long, default_value_t = 1e-5)]
    pub lr: f64,
    /// RMSprop moving-average decay
    #[arg(long, default_value_t = 0.9)]
    pub decay: f64,
    /// RMSprop denominator epsilon
    #[arg(long, default_value_t = 1e-8)]
    pub epsilon: f64,
    /// Training epochs (100 in the reference recipe)
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    /// Windows per minibatch (256 in the reference recipe)
    #[arg(long, default_value_t = 256)]
    pub batch_size: usize,
    /// Clips per training window (20 clips of 16 frames in the reference recipe)
    #[arg(long, default_value_t = 20)]
    pub seq_len: usize,
    /// Clip feature dimension (4096 = C3D fc6)
    #[arg(long, default_value_t = 4096)]
    pub input_dim: usize,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    /// Class names file [default: labels.txt next to the manifest]
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Only predict this subset (train, validation, testing) [default: all]
    #[arg(long)]
    pub subset: Option<Subset>,
    #[command(flatten)]
    pub postprocess: PostprocessArgs,
}

#[derive(Debug, Args)]
pub struct PostprocessArgs {
    /// Mean-filter half-width in clips (best ActivityNet setting: k = 5)
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    /// Activity probability threshold (best ActivityNet setting: gamma = 0.2)
    #[arg(long, default_value_t = 0.2)]
    pub gamma: f64,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Prediction file written by `predict`
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    /// Only evaluate this subset [default: all videos in the manifest]
    #[arg(long)]
    pub subset: Option<Subset>,
    /// Temporal IoU a detection must exceed to count as correct
    #[arg(long, default_value_t = 0.5)]
    pub iou: f64,
    /// Smoothing half-widths for the grid search, comma separated (e.g. 0,5,10)
    #[arg(long, value_delimiter = ',')]
    pub grid_k: Vec<usize>,
    /// Thresholds for the grid search, comma separated (e.g. 0.2,0.3,0.5)
    #[arg(long, value_delimiter = ',')]
    pub grid_gamma: Vec<f64>,
    /// Per-video probability files [default: probs/ next to the predictions]
    #[arg(long)]
    pub probs_dir: Option<PathBuf>,
}

// Submission-style prediction file.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredLabel {
    pub label: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub label: usize,
    pub score: f64,
    pub segment: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoResult {
    /// All activity classes, highest score first.
    pub classification: Vec<ScoredLabel>,
    pub detection: Vec<Detection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionFile {
    pub version: String,
    pub smoothing_k: usize,
    pub gamma: f64,
    pub results: BTreeMap<String, VideoResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbsFile {
    pub video_id: String,
    pub clip_duration_s: f64,
    pub probs: Vec<Vec<f64>>,
}

impl ProbsFile {
    pub fn to_sequence(&self) -> Result<ClipProbSequence> {
        let cols = self.probs.first().map_or(0, Vec::len);
        if self.probs.iter().any(|r| r.len() != cols) {
            return Err(Error::shape("probability rows", cols, "ragged rows"));
        }
        let flat: Vec<f64> = self.probs.iter().flatten().copied().collect();
        let probs = Array2::from_shape_vec((self.probs.len(), cols), flat).expect("rows are uniform");
        ClipProbSequence::new(probs, self.clip_duration_s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub map: f64,
    pub hit_at_3: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionMetrics {
    pub map: f64,
    pub iou_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub classification: ClassificationMetrics,
    pub detection: DetectionMetrics,
    /// `[k, gamma, map]` rows.
    pub grid: Vec<(usize, f64, f64)>,
}

const PREDICTION_VERSION: &str = "actloc-1";

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Json {
        path: path.to_owned(),
        source: e,
    })?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.to_owned(),
        source: e,
    })
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn manifest_dir(manifest: &Path) -> PathBuf {
    manifest.parent().map(Path::to_owned).unwrap_or_default()
}

fn labels_path(labels: &Option<PathBuf>, manifest: &Path) -> PathBuf {
    labels
        .clone()
        .unwrap_or_else(|| manifest_dir(manifest).join(data::synthetic::LABELS_FILE))
}

fn thread_pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))
}

pub fn cmd_synth(args: &SynthArgs, seed: u64, output_dir: &Path) -> Result<PathBuf> {
    let spec = SyntheticSpec {
        num_classes: args.num_classes,
        feature_dim: args.feature_dim,
        train_videos: args.train_videos,
        validation_videos: args.validation_videos,
        testing_videos: args.testing_videos,
        clip_count_range: (args.min_clips, args.max_clips),
        segments_per_video_range: (args.min_segments, args.max_segments),
        segment_clips_range: (args.min_segment_clips, args.max_segment_clips),
        min_gap_clips: args.min_gap_clips,
        class_separation: args.class_separation,
        noise_sigma: args.noise_sigma,
        fps: args.fps,
        seed,
    };
    let dataset = data::generate_synthetic(&spec)?;
    create_dir(output_dir)?;
    dataset.write(output_dir)
}

impl TrainArgs {
    pub fn to_config(&self, num_classes: usize, seed: u64, threads: usize) -> TrainConfig {
        let mut config = TrainConfig::new(num_classes, self.input_dim);
        config.model.num_layers = self.layers;
        config.model.cells = self.cells;
        config.model.dropout_p = self.dropout;
        config.rho = self.rho;
        config.learning_rate = self.lr;
        config.decay = self.decay;
        config.epsilon = self.epsilon;
        config.epochs = self.epochs;
        config.batch_size = self.batch_size;
        config.seq_len = self.seq_len;
        config.seed = seed;
        config.threads = threads;
        config
    }
}

/// Trains on the manifest's `train` subset; writes the checkpoint and the
/// per-epoch loss log into `output_dir` and returns the checkpoint path.
pub fn cmd_train(args: &TrainArgs, seed: u64, threads: usize, output_dir: &Path) -> Result<PathBuf> {
    let records = read_manifest(&args.manifest)?;
    let train_records = split(&records, Subset::Train);
    if train_records.is_empty() {
        return Err(Error::EmptySequence("manifest has no train videos"));
    }
    let num_classes = read_labels(labels_path(&args.labels, &args.manifest))?.len();
    let dataset = data::load_labeled(&manifest_dir(&args.manifest), &train_records, num_classes)?;
    let config = args.to_config(num_classes, seed, threads);

    create_dir(output_dir)?;
    let log_path = output_dir.join(TRAIN_LOG_FILE);
    let mut log = BufWriter::new(File::create(&log_path).map_err(|e| Error::io(&log_path, e))?);
    let mut log_error = None;
    let outcome = train_with_callback(&dataset, &config, |epoch, loss| {
        if let Err(e) = writeln!(log, "{}\t{loss}", epoch + 1) {
            log_error.get_or_insert(e);
        }
    })?;
    if let Some(e) = log_error {
        return Err(Error::io(&log_path, e));
    }
    log.flush().map_err(|e| Error::io(&log_path, e))?;

    let ckpt = output_dir.join(CHECKPOINT_FILE);
    save_checkpoint(&outcome.params, &ckpt)?;
    Ok(ckpt)
}

/// Eval-mode clip probabilities for one video.
pub fn predict_probs(params: &ModelParams, manifest_dir: &Path, record: &VideoRecord) -> Result<ClipProbSequence> {
    let features = data::load_features(manifest_dir, record)?;
    let (probs, _) = model_forward(params, features.clips.view(), Mode::Eval, 0)?;
    ClipProbSequence::new(probs, record.clip_duration_s())
}

fn to_video_result(seq: &ClipProbSequence, config: &PostprocessConfig) -> VideoResult {
    let prediction = postprocess_video(seq, config);
    VideoResult {
        classification: prediction
            .classification
            .ranked()
            .into_iter()
            .map(|(label, score)| ScoredLabel { label, score })
            .collect(),
        detection: prediction
            .detections
            .into_iter()
            .map(|s| Detection {
                label: s.label,
                score: s.score,
                segment: [s.start_s, s.end_s],
            })
            .collect(),
    }
}

/// Writes `predictions.json` and `probs/<video_id>.json` into `output_dir`
/// and returns the prediction file path.
pub fn cmd_predict(args: &PredictArgs, threads: usize, output_dir: &Path) -> Result<PathBuf> {
    let params = load_checkpoint(&args.checkpoint)?;
    let num_classes = read_labels(labels_path(&args.labels, &args.manifest))?.len();
    if params.num_classes() != num_classes {
        return Err(Error::shape(
            "checkpoint classes vs labels file",
            num_classes,
            params.num_classes(),
        ));
    }
    let records = read_manifest(&args.manifest)?;
    let records = match args.subset {
        Some(s) => split(&records, s),
        None => records,
    };
    let config = PostprocessConfig {
        k: args.postprocess.k,
        gamma: args.postprocess.gamma,
    };
    let dir = manifest_dir(&args.manifest);

    let per_video: Vec<Result<(String, ProbsFile, VideoResult)>> = thread_pool(threads)?.install(|| {
        records
            .par_iter()
            .map(|r| {
                let seq = predict_probs(&params, &dir, r)?;
                let probs = ProbsFile {
                    video_id: r.video_id.clone(),
                    clip_duration_s: seq.clip_duration_s,
                    probs: seq.probs.rows().into_iter().map(|row| row.to_vec()).collect(),
                };
                Ok((r.video_id.clone(), probs, to_video_result(&seq, &config)))
            })
            .collect()
    });

    let probs_dir = output_dir.join(PROBS_DIR);
    create_dir(&probs_dir)?;
    let mut results = BTreeMap::new();
    for item in per_video {
        let (id, probs, result) = item?;
        write_json(&probs, &probs_dir.join(format!("{id}.json")))?;
        if results.insert(id.clone(), result).is_some() {
            return Err(Error::InvalidConfig(format!("video {id} appears twice in the manifest")));
        }
    }
    let file = PredictionFile {
        version: PREDICTION_VERSION.into(),
        smoothing_k: config.k,
        gamma: config.gamma,
        results,
    };
    let path = output_dir.join(PREDICTIONS_FILE);
    write_json(&file, &path)?;
    Ok(path)
}

fn ground_truth_segments(record: &VideoRecord) -> Vec<Segment> {
    record
        .annotations
        .iter()
        .map(|a| Segment {
            label: a.label,
            start_s: a.segment[0],
            end_s: a.segment[1],
            score: 1.0,
        })
        .collect()
}

/// Scores a prediction file against the manifest annotations. Videos without
/// annotations take part in detection only. Returns the report and, when a
/// grid was requested, the grid table.
pub fn evaluate(args: &EvalArgs) -> Result<(MetricsReport, Option<GridTable>)> {
    let predictions: PredictionFile = read_json(&args.predictions)?;
    let records = read_manifest(&args.manifest)?;
    let records = match args.subset {
        Some(s) => split(&records, s),
        None => records,
    };
    let missing: Vec<String> = records
        .iter()
        .filter(|r| !predictions.results.contains_key(&r.video_id))
        .map(|r| r.video_id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingVideos(missing));
    }

    let mut classification = Vec::new();
    let mut detection = Vec::new();
    for r in &records {
        let result = &predictions.results[&r.video_id];
        if let Some(gt) = r.video_label() {
            classification.push(ClassificationResult::new(
                r.video_id.clone(),
                result.classification.iter().map(|s| (s.label, s.score)).collect(),
                gt,
            )?);
        }
        detection.push(DetectionResult {
            video_id: r.video_id.clone(),
            predictions: result
                .detection
                .iter()
                .map(|d| Segment {
                    label: d.label,
                    start_s: d.segment[0],
                    end_s: d.segment[1],
                    score: d.score,
                })
                .collect(),
            ground_truth: ground_truth_segments(r),
        });
    }

    let grid = if args.grid_k.is_empty() && args.grid_gamma.is_empty() {
        None
    } else {
        let probs_dir = args.probs_dir.clone().unwrap_or_else(|| {
            args.predictions
                .parent()
                .map(Path::to_owned)
                .unwrap_or_default()
                .join(PROBS_DIR)
        });
        let videos = records
            .iter()
            .map(|r| {
                let file: ProbsFile = read_json(&probs_dir.join(format!("{}.json", r.video_id)))?;
                Ok(GridVideo {
                    video_id: r.video_id.clone(),
                    probs: file.to_sequence()?,
                    ground_truth: ground_truth_segments(r),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Some(grid_search(&videos, &args.grid_k, &args.grid_gamma, args.iou)?)
    };

    let report = MetricsReport {
        classification: ClassificationMetrics {
            map: classification_map(&classification),
            hit_at_3: hit_at_3(&classification),
        },
        detection: DetectionMetrics {
            map: detection_map(&detection, args.iou)?,
            iou_threshold: args.iou,
        },
        grid: grid
            .as_ref()
            .map(|g| g.cells.iter().map(|c| (c.k, c.gamma, c.map)).collect())
            .unwrap_or_default(),
    };
    Ok((report, grid))
}

pub fn render_report(report: &MetricsReport, grid: Option<&GridTable>) -> String {
    let mut out = String::new();
    out.push_str(&format!("{:<28} {:>9.5}\n", "classification mAP", report.classification.map));
    out.push_str(&format!("{:<28} {:>9.5}\n", "classification Hit@3", report.classification.hit_at_3));
    out.push_str(&format!(
        "{:<28} {:>9.5}\n",
        format!("detection mAP@{}", report.detection.iou_threshold),
        report.detection.map
    ));
    if let Some(grid) = grid {
        out.push('\n');
        out.push_str(&grid.render());
    }
    out
}

pub fn cmd_eval(args: &EvalArgs, output_dir: &Path) -> Result<MetricsReport> {
    let (report, grid) = evaluate(args)?;
    print!("{}", render_report(&report, grid.as_ref()));
    create_dir(output_dir)?;
    write_json(&report, &output_dir.join(METRICS_FILE))?;
    Ok(report)
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Synth(args) => {
            let manifest = cmd_synth(args, cli.seed, &cli.output_dir)?;
            println!("{}", manifest.display());
        }
        Command::Train(args) => {
            let ckpt = cmd_train(args, cli.seed, cli.threads, &cli.output_dir)?;
            println!("{}", ckpt.display());
        }
        Command::Predict(args) => {
            let path = cmd_predict(args, cli.threads, &cli.output_dir)?;
            println!("{}", path.display());
        }
        Command::Eval(args) => {
            cmd_eval(args, &cli.output_dir)?;
        }
    }
    Ok(())
}

/// Entry point of the binary; returns the process exit status.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
