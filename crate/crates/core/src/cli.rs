//! Command implementations behind the binary: track, train, eval, synth.
//!
//! Each command reads and writes only its named files and returns a
//! typed error carrying the process exit code: 1 for input problems,
//! 2 for dimension mismatches, 3 for an undefined metric (empty ground
//! truth). The effective configuration is echoed to standard error so
//! runs can be reproduced.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::io::{self, RunConfig};
use crate::metrics::{self, MetricsError};
use crate::synth::{self, ScenarioKind, ScenarioSpec, SynthError};
use crate::tgcn::{FeatureWindow, TgcnError, TgcnModel};
use crate::tracker::{self, TrackerError};
use crate::types::AppearanceFeature;

pub const EXIT_INPUT: i32 = 1;
pub const EXIT_DIMENSION: i32 = 2;
pub const EXIT_UNDEFINED_METRIC: i32 = 3;

/// Command failure with its process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl std::error::Error for CliError {}

fn input_error(message: impl Into<String>) -> CliError {
    CliError {
        code: EXIT_INPUT,
        message: message.into(),
    }
}

fn dimension_error(message: impl Into<String>) -> CliError {
    CliError {
        code: EXIT_DIMENSION,
        message: message.into(),
    }
}

impl From<io::IoError> for CliError {
    fn from(e: io::IoError) -> Self {
        input_error(e.to_string())
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        input_error(e.to_string())
    }
}

impl From<TgcnError> for CliError {
    fn from(e: TgcnError) -> Self {
        match e {
            TgcnError::DimensionMismatch { .. } => dimension_error(e.to_string()),
            _ => input_error(e.to_string()),
        }
    }
}

impl From<TrackerError> for CliError {
    fn from(e: TrackerError) -> Self {
        match e {
            TrackerError::WindowMismatch { .. } => dimension_error(e.to_string()),
            TrackerError::Tgcn(TgcnError::DimensionMismatch { .. }) => {
                dimension_error(e.to_string())
            }
            TrackerError::Association(crate::association::AssociationError::DimensionMismatch {
                ..
            }) => dimension_error(e.to_string()),
            _ => input_error(e.to_string()),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        CliError {
            code: EXIT_UNDEFINED_METRIC,
            message: e.to_string(),
        }
    }
}

fn read_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path)
        .map_err(|e| input_error(format!("cannot read {}: {e}", path.display())))
}

fn write_file(path: &Path, content: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .map_err(|e| input_error(format!("cannot create {}: {e}", parent.display())))?;
        }
    }
    fs::write(path, content)
        .map_err(|e| input_error(format!("cannot write {}: {e}", path.display())))
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, CliError> {
    match path {
        Some(p) => Ok(io::parse_config(&read_file(p)?)?),
        None => Ok(RunConfig::default()),
    }
}

fn echo_config(cfg: &RunConfig) {
    eprintln!("# effective configuration");
    for line in cfg.to_text().lines() {
        eprintln!("# {line}");
    }
}

/// Tracks one or more sequences. Every sequence needs one detection
/// file, one embedding file and one output path; `jobs` sequences run in
/// parallel. Window size and feature dimension come from the model;
/// conflicting explicit settings are dimension errors.
pub fn cmd_track(
    det_paths: &[PathBuf],
    emb_paths: &[PathBuf],
    model_path: &Path,
    config_path: Option<&Path>,
    out_paths: &[PathBuf],
    dim_override: Option<usize>,
    jobs: usize,
) -> Result<(), CliError> {
    if det_paths.len() != emb_paths.len() || det_paths.len() != out_paths.len() {
        return Err(input_error(format!(
            "need matching counts of --det/--emb/--out, got {}/{}/{}",
            det_paths.len(),
            emb_paths.len(),
            out_paths.len()
        )));
    }
    if det_paths.is_empty() {
        return Err(input_error("no input sequences given"));
    }
    if jobs == 0 {
        return Err(input_error("--jobs must be at least 1"));
    }

    let mut cfg = load_config(config_path)?;
    let model = TgcnModel::from_text(&read_file(model_path)?)?;

    // The model pins C and d. Explicit conflicting settings are errors;
    // defaults are adopted silently.
    let defaults = RunConfig::default();
    if let Some(dim) = dim_override {
        if dim != model.feature_dim {
            return Err(dimension_error(format!(
                "--dim {dim} conflicts with model feature dimension {}",
                model.feature_dim
            )));
        }
    }
    if cfg.feature_dim != defaults.feature_dim && cfg.feature_dim != model.feature_dim {
        return Err(dimension_error(format!(
            "configured feature_dim {} conflicts with model feature dimension {}",
            cfg.feature_dim, model.feature_dim
        )));
    }
    if cfg.tracker.window_c != defaults.tracker.window_c
        && cfg.tracker.window_c != model.window_c
    {
        return Err(dimension_error(format!(
            "configured window_c {} conflicts with model window size {}",
            cfg.tracker.window_c, model.window_c
        )));
    }
    cfg.feature_dim = model.feature_dim;
    cfg.tracker.window_c = model.window_c;
    echo_config(&cfg);

    let sequences: Vec<(usize, (&PathBuf, &PathBuf, &PathBuf))> = det_paths
        .iter()
        .zip(emb_paths)
        .zip(out_paths)
        .map(|((d, e), o)| (d, e, o))
        .enumerate()
        .collect();

    let run_one = |det_path: &PathBuf, emb_path: &PathBuf, out_path: &PathBuf| -> Result<(), CliError> {
        let detections = io::ingest_detections(
            &read_file(det_path)?,
            &read_file(emb_path)?,
            cfg.feature_dim,
            cfg.tracker.detection_min_confidence,
        )?;
        let frames = detections.len();
        let started = Instant::now();
        let rows = tracker::run_sequence(&detections, &model, &cfg.tracker)?;
        let elapsed = started.elapsed().as_secs_f64();
        write_file(out_path, &io::write_results(&rows))?;
        let fps = if elapsed > 0.0 {
            frames as f64 / elapsed
        } else {
            f64::INFINITY
        };
        eprintln!(
            "sequence {}: {} frames in {:.3} s ({:.0} frames/s)",
            out_path.display(),
            frames,
            elapsed,
            fps
        );
        Ok(())
    };

    if jobs == 1 || sequences.len() == 1 {
        for (_, (d, e, o)) in &sequences {
            run_one(d, e, o)?;
        }
        return Ok(());
    }

    // Fan independent sequences out over a bounded set of worker threads.
    let mut results: Vec<Option<Result<(), CliError>>> = Vec::new();
    results.resize_with(sequences.len(), || None);
    let chunk_size = sequences.len().div_ceil(jobs);
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for (chunk_index, chunk) in sequences.chunks(chunk_size).enumerate() {
            let run_one = &run_one;
            handles.push((
                chunk_index,
                scope.spawn(move || {
                    chunk
                        .iter()
                        .map(|(i, (d, e, o))| (*i, run_one(d, e, o)))
                        .collect::<Vec<_>>()
                }),
            ));
        }
        for (_, handle) in handles {
            for (i, result) in handle.join().expect("worker thread panicked") {
                results[i] = Some(result);
            }
        }
    });
    for result in results.into_iter().flatten() {
        result?;
    }
    Ok(())
}

/// Builds sliding-window training pairs from an embedding file: one
/// stream per detection index, windows of `window_c` consecutive frames
/// predicting the next one.
fn pairs_from_embeddings(
    text: &str,
    dim: usize,
    window_c: usize,
) -> Result<Vec<(FeatureWindow, AppearanceFeature)>, CliError> {
    let parsed = io::parse_embeddings(text, dim)?;
    let mut streams: BTreeMap<usize, Vec<AppearanceFeature>> = BTreeMap::new();
    for ((_frame, index), feature) in parsed {
        streams.entry(index).or_default().push(feature);
    }
    let mut pairs = Vec::new();
    for features in streams.values() {
        if features.len() < window_c + 1 {
            continue;
        }
        for end in window_c..features.len() {
            let window = FeatureWindow::from_features(&features[end - window_c..end])
                .map_err(CliError::from)?;
            pairs.push((window, features[end].clone()));
        }
    }
    Ok(pairs)
}

/// Trains a model from an embedding file or the periodic synthetic
/// scenario and writes it out, printing the initial and final dataset
/// loss.
#[allow(clippy::too_many_arguments)]
pub fn cmd_train(
    emb_path: Option<&Path>,
    scenario: Option<&str>,
    frames: Option<u32>,
    seed_override: Option<u64>,
    dim_override: Option<usize>,
    config_path: Option<&Path>,
    out_model_path: &Path,
) -> Result<(), CliError> {
    let mut cfg = load_config(config_path)?;
    if let Some(seed) = seed_override {
        cfg.train.seed = seed;
    }
    if let Some(dim) = dim_override {
        cfg.feature_dim = dim;
    }
    echo_config(&cfg);

    let window_c = cfg.tracker.window_c;
    let pairs = match (emb_path, scenario) {
        (Some(path), None) => pairs_from_embeddings(&read_file(path)?, cfg.feature_dim, window_c)?,
        (None, Some(name)) => {
            let kind = ScenarioKind::parse(name)
                .ok_or_else(|| input_error(format!("unknown scenario '{name}'")))?;
            if kind != ScenarioKind::PeriodicFeatures {
                return Err(input_error(format!(
                    "scenario '{name}' does not produce training pairs; use periodic_features"
                )));
            }
            let spec = ScenarioSpec {
                kind,
                frames: frames.unwrap_or(204),
                seed: cfg.train.seed,
                feature_dim: cfg.feature_dim,
                noise_std: 0.0,
            };
            synth::periodic_features(&spec, window_c)?
        }
        _ => {
            return Err(input_error(
                "exactly one of --emb or --scenario must be given",
            ))
        }
    };
    if pairs.is_empty() {
        return Err(input_error("training dataset is empty"));
    }

    let model = TgcnModel::init(window_c, cfg.feature_dim, cfg.layers, cfg.train.seed);
    let initial = model.dataset_mse(&pairs)?;
    let trained = model.train(&pairs, &cfg.train)?;
    let final_mse = trained.dataset_mse(&pairs)?;
    println!("initial_mse = {initial}");
    println!("final_mse = {final_mse}");
    write_file(out_model_path, &trained.to_text())?;
    Ok(())
}

/// Scores a result file against ground truth and prints the report row.
pub fn cmd_eval(gt_path: &Path, result_path: &Path, iou_threshold: f64) -> Result<(), CliError> {
    if !(iou_threshold > 0.0 && iou_threshold < 1.0) {
        return Err(input_error(format!(
            "--iou-threshold must lie strictly between 0 and 1, got {iou_threshold}"
        )));
    }
    let gt = io::parse_ground_truth(&read_file(gt_path)?)?;
    let hypotheses = io::parse_results(&read_file(result_path)?)?;
    let report = metrics::evaluate(&gt, &hypotheses, iou_threshold)?;
    eprintln!("{}", metrics::REPORT_HEADER);
    println!("{}", metrics::report_text(&report));
    Ok(())
}

/// Generates detection, embedding and ground-truth files for a scenario.
pub fn cmd_synth(
    scenario: &str,
    frames: u32,
    seed: u64,
    dim: usize,
    noise_std: f64,
    out_dir: &Path,
) -> Result<(), CliError> {
    let kind = ScenarioKind::parse(scenario)
        .ok_or_else(|| input_error(format!("unknown scenario '{scenario}'")))?;
    let spec = ScenarioSpec {
        kind,
        frames,
        seed,
        feature_dim: dim,
        noise_std,
    };
    let files = match kind {
        ScenarioKind::Crossing => synth::crossing(&spec)?,
        ScenarioKind::Parallel => synth::parallel(&spec)?,
        ScenarioKind::PeriodicFeatures => periodic_files(&spec)?,
    };
    fs::create_dir_all(out_dir)
        .map_err(|e| input_error(format!("cannot create {}: {e}", out_dir.display())))?;
    write_file(&out_dir.join("det.txt"), &files.detections)?;
    write_file(&out_dir.join("emb.txt"), &files.embeddings)?;
    write_file(&out_dir.join("gt.txt"), &files.ground_truth)?;
    Ok(())
}

/// The periodic scenario as files: a single static object whose
/// embedding alternates, so the embedding file can feed `cmd_train`.
fn periodic_files(spec: &ScenarioSpec) -> Result<synth::ScenarioFiles, CliError> {
    spec.validate()?;
    let mut det = String::new();
    let mut emb = String::new();
    let mut gt = String::new();
    use std::fmt::Write as _;
    for frame in 1..=spec.frames {
        let _ = writeln!(det, "{frame},-1,40,40,10,20,1,-1,-1,-1");
        let mut values = vec![0.0; spec.feature_dim];
        values[(frame % 2) as usize] = 1.0;
        let joined: Vec<String> = values.iter().map(|v| format!("{v}")).collect();
        let _ = writeln!(emb, "{frame},0,{}", joined.join(","));
        let _ = writeln!(gt, "{frame},1,40,40,10,20,1,1,1");
    }
    Ok(synth::ScenarioFiles {
        detections: det,
        embeddings: emb,
        ground_truth: gt,
    })
}
