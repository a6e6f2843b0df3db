//! MOT-challenge text formats, the embedding sidecar format and the flat
//! key = value run configuration.
//!
//! Detection and ground-truth files are bit-compatible with the benchmark
//! CSV conventions. Embeddings live in a sidecar CSV keyed by
//! `(frame, det_index)` where `det_index` is the 0-based position of the
//! detection within its frame in file order, so standard detection files
//! stay untouched.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;


use crate::tgcn::TrainConfig;
use crate::tracker::TrackerConfig;
use crate::types::{AppearanceFeature, BoundingBox, Detection};

#[derive(Debug, Error, PartialEq)]
pub enum IoError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("duplicate embedding key (frame {frame}, index {index}) on lines {first_line} and {second_line}")]
    DuplicateEmbedding {
        frame: u32,
        index: usize,
        first_line: usize,
        second_line: usize,
    },
    #[error("detections without embeddings: {}", format_keys(.keys))]
    MissingEmbeddings { keys: Vec<(u32, usize)> },
    #[error("line {line}: unknown configuration key '{key}'")]
    UnknownKey { line: usize, key: String },
}

fn format_keys(keys: &[(u32, usize)]) -> String {
    let shown: Vec<String> = keys
        .iter()
        .take(8)
        .map(|(f, i)| format!("(frame {f}, index {i})"))
        .collect();
    let mut out = shown.join(", ");
    if keys.len() > 8 {
        let _ = write!(out, " and {} more", keys.len() - 8);
    }
    out
}

/// One raw row of a MOT detection file.
#[derive(Debug, Clone, PartialEq)]
pub struct MotRow {
    pub frame: u32,
    pub id: i64,
    pub bb_left: f64,
    pub bb_top: f64,
    pub bb_width: f64,
    pub bb_height: f64,
    pub conf: f64,
    pub x3d: f64,
    pub y3d: f64,
    pub z3d: f64,
}

impl MotRow {
    pub fn bbox(&self) -> BoundingBox {
        BoundingBox::new(self.bb_left, self.bb_top, self.bb_width, self.bb_height)
    }
}

/// One ground-truth entry. `considered` follows the benchmark evaluation
/// filter: the row counts only when its flag is non-zero and its class is
/// pedestrian.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthEntry {
    pub id: i64,
    pub bbox: BoundingBox,
    pub considered: bool,
}

fn parse_fields(line: &str, line_no: usize, expected: usize) -> Result<Vec<f64>, IoError> {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() != expected {
        return Err(IoError::Parse {
            line: line_no,
            message: format!("expected {expected} comma-separated fields, got {}", fields.len()),
        });
    }
    fields
        .iter()
        .map(|f| {
            f.parse::<f64>().map_err(|_| IoError::Parse {
                line: line_no,
                message: format!("invalid number '{f}'"),
            })
        })
        .collect()
}

fn check_box(line_no: usize, width: f64, height: f64) -> Result<(), IoError> {
    let positive = |v: f64| v.is_finite() && v > 0.0;
    if !positive(width) || !positive(height) {
        return Err(IoError::Parse {
            line: line_no,
            message: format!("non-positive box size {width}x{height}"),
        });
    }
    Ok(())
}

fn numbered_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty())
}

/// Parses a MOT `det.txt`: rows
/// `frame,id,bb_left,bb_top,bb_width,bb_height,conf,x,y,z` grouped by
/// frame with the in-frame file order preserved.
pub fn parse_detections(text: &str) -> Result<BTreeMap<u32, Vec<MotRow>>, IoError> {
    let mut by_frame: BTreeMap<u32, Vec<MotRow>> = BTreeMap::new();
    for (line_no, line) in numbered_lines(text) {
        let f = parse_fields(line, line_no, 10)?;
        if f[0] < 1.0 || f[0].fract() != 0.0 {
            return Err(IoError::Parse {
                line: line_no,
                message: format!("invalid frame index '{}'", f[0]),
            });
        }
        check_box(line_no, f[4], f[5])?;
        let row = MotRow {
            frame: f[0] as u32,
            id: f[1] as i64,
            bb_left: f[2],
            bb_top: f[3],
            bb_width: f[4],
            bb_height: f[5],
            conf: f[6],
            x3d: f[7],
            y3d: f[8],
            z3d: f[9],
        };
        by_frame.entry(row.frame).or_default().push(row);
    }
    Ok(by_frame)
}

/// Parses the embedding sidecar: rows `frame,det_index,f0,...,f{d-1}`.
/// Keys must be unique and every row must carry exactly `d` values.
pub fn parse_embeddings(
    text: &str,
    d: usize,
) -> Result<BTreeMap<(u32, usize), AppearanceFeature>, IoError> {
    let mut map = BTreeMap::new();
    let mut first_lines: BTreeMap<(u32, usize), usize> = BTreeMap::new();
    for (line_no, line) in numbered_lines(text) {
        let f = parse_fields(line, line_no, 2 + d)?;
        if f[0] < 1.0 || f[0].fract() != 0.0 {
            return Err(IoError::Parse {
                line: line_no,
                message: format!("invalid frame index '{}'", f[0]),
            });
        }
        if f[1] < 0.0 || f[1].fract() != 0.0 {
            return Err(IoError::Parse {
                line: line_no,
                message: format!("invalid detection index '{}'", f[1]),
            });
        }
        let key = (f[0] as u32, f[1] as usize);
        let values = f[2..].to_vec();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(IoError::Parse {
                line: line_no,
                message: "non-finite feature value".into(),
            });
        }
        match first_lines.entry(key) {
            Entry::Vacant(e) => {
                e.insert(line_no);
            }
            Entry::Occupied(e) => {
                return Err(IoError::DuplicateEmbedding {
                    frame: key.0,
                    index: key.1,
                    first_line: *e.get(),
                    second_line: line_no,
                });
            }
        }
        map.insert(key, AppearanceFeature::new(values));
    }
    Ok(map)
}

/// Joins detections with their embeddings and applies the confidence
/// filter. Every detection row must have an embedding row; filtering
/// happens after the join so `det_index` always refers to raw file order.
pub fn ingest_detections(
    det_text: &str,
    emb_text: &str,
    d: usize,
    min_confidence: f64,
) -> Result<BTreeMap<u32, Vec<Detection>>, IoError> {
    let detections = parse_detections(det_text)?;
    let embeddings = parse_embeddings(emb_text, d)?;

    let mut missing = Vec::new();
    for (&frame, rows) in &detections {
        for (index, _) in rows.iter().enumerate() {
            if !embeddings.contains_key(&(frame, index)) {
                missing.push((frame, index));
            }
        }
    }
    if !missing.is_empty() {
        return Err(IoError::MissingEmbeddings { keys: missing });
    }

    let mut out: BTreeMap<u32, Vec<Detection>> = BTreeMap::new();
    for (&frame, rows) in &detections {
        let joined: Vec<Detection> = rows
            .iter()
            .enumerate()
            .filter(|(_, row)| row.conf >= min_confidence)
            .map(|(index, row)| {
                Detection::new(
                    frame,
                    row.bbox(),
                    row.conf.clamp(0.0, 1.0),
                    embeddings[&(frame, index)].clone(),
                )
            })
            .collect();
        if !joined.is_empty() {
            out.insert(frame, joined);
        }
    }
    Ok(out)
}

/// Serializes tracker output in the MOT submission format, sorted by
/// `(frame, id)`. Reals print in their shortest round-trip form.
pub fn write_results(rows: &[(u32, u64, BoundingBox)]) -> String {
    let mut sorted: Vec<&(u32, u64, BoundingBox)> = rows.iter().collect();
    sorted.sort_by_key(|(frame, id, _)| (*frame, *id));
    let mut out = String::new();
    for (frame, id, bbox) in sorted {
        let _ = writeln!(
            out,
            "{frame},{id},{},{},{},{},1,-1,-1,-1",
            bbox.x, bbox.y, bbox.w, bbox.h
        );
    }
    out
}

/// Parses tracker result rows (a detection-format file whose id column is
/// meaningful) into per-frame hypothesis lists.
pub fn parse_results(text: &str) -> Result<BTreeMap<u32, Vec<(i64, BoundingBox)>>, IoError> {
    let rows = parse_detections(text)?;
    Ok(rows
        .into_iter()
        .map(|(frame, rows)| {
            (
                frame,
                rows.into_iter().map(|r| (r.id, r.bbox())).collect(),
            )
        })
        .collect())
}

/// Parses a MOT `gt.txt`: rows
/// `frame,id,bb_left,bb_top,bb_width,bb_height,flag,class,visibility`.
/// An entry is considered for evaluation when `flag != 0` and `class == 1`.
pub fn parse_ground_truth(text: &str) -> Result<BTreeMap<u32, Vec<GroundTruthEntry>>, IoError> {
    let mut by_frame: BTreeMap<u32, Vec<GroundTruthEntry>> = BTreeMap::new();
    for (line_no, line) in numbered_lines(text) {
        let f = parse_fields(line, line_no, 9)?;
        if f[0] < 1.0 || f[0].fract() != 0.0 {
            return Err(IoError::Parse {
                line: line_no,
                message: format!("invalid frame index '{}'", f[0]),
            });
        }
        check_box(line_no, f[4], f[5])?;
        let considered = f[6] != 0.0 && f[7] == 1.0;
        by_frame.entry(f[0] as u32).or_default().push(GroundTruthEntry {
            id: f[1] as i64,
            bbox: BoundingBox::new(f[2], f[3], f[4], f[5]),
            considered,
        });
    }
    Ok(by_frame)
}

/// Every tunable of the tracker and the trainer, parsed from a flat
/// `key = value` file. Unset keys keep their defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub tracker: TrackerConfig,
    pub train: TrainConfig,
    /// Embedding dimension used to parse sidecar files.
    pub feature_dim: usize,
    /// Number of GCN layers for newly initialized models.
    pub layers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            tracker: TrackerConfig::default(),
            train: TrainConfig::default(),
            feature_dim: 16,
            layers: 2,
        }
    }
}

impl RunConfig {
    /// Lists the effective configuration in the file format itself, for
    /// reproducibility echoes.
    pub fn to_text(&self) -> String {
        let t = &self.tracker;
        let n = &t.noise;
        format!(
            "lambda1 = {}\nlambda2 = {}\ngate_threshold = {}\ncost_ceiling = {}\n\
             n_init = {}\nmax_age = {}\nwindow_c = {}\ndetection_min_confidence = {}\n\
             position_std_factor = {}\nvelocity_std_factor = {}\nmeasurement_std_factor = {}\n\
             learning_rate = {}\nepochs = {}\nseed = {}\nfeature_dim = {}\nlayers = {}\n",
            t.lambda1,
            t.lambda2,
            t.gate_threshold,
            t.cost_ceiling,
            t.n_init,
            t.max_age,
            t.window_c,
            t.detection_min_confidence,
            n.position_std_factor,
            n.velocity_std_factor,
            n.measurement_std_factor,
            self.train.learning_rate,
            self.train.epochs,
            self.train.seed,
            self.feature_dim,
            self.layers,
        )
    }
}

/// Parses the configuration file: one `key = value` pair per line, `#`
/// comments and blank lines allowed, unknown keys rejected.
pub fn parse_config(text: &str) -> Result<RunConfig, IoError> {
    let mut cfg = RunConfig::default();
    for (line_no, raw) in text.lines().enumerate() {
        let line_no = line_no + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| IoError::Parse {
            line: line_no,
            message: "expected 'key = value'".into(),
        })?;
        let key = key.trim();
        let value = value.trim();
        let parse_f64 = |v: &str| -> Result<f64, IoError> {
            v.parse().map_err(|_| IoError::Parse {
                line: line_no,
                message: format!("invalid number '{v}'"),
            })
        };
        let parse_usize = |v: &str| -> Result<usize, IoError> {
            v.parse().map_err(|_| IoError::Parse {
                line: line_no,
                message: format!("invalid integer '{v}'"),
            })
        };
        match key {
            "lambda1" => cfg.tracker.lambda1 = parse_f64(value)?,
            "lambda2" => cfg.tracker.lambda2 = parse_f64(value)?,
            "gate_threshold" => cfg.tracker.gate_threshold = parse_f64(value)?,
            "cost_ceiling" => cfg.tracker.cost_ceiling = parse_f64(value)?,
            "n_init" => cfg.tracker.n_init = parse_usize(value)?,
            "max_age" => cfg.tracker.max_age = parse_usize(value)?,
            "window_c" => cfg.tracker.window_c = parse_usize(value)?,
            "detection_min_confidence" => {
                cfg.tracker.detection_min_confidence = parse_f64(value)?
            }
            "position_std_factor" => cfg.tracker.noise.position_std_factor = parse_f64(value)?,
            "velocity_std_factor" => cfg.tracker.noise.velocity_std_factor = parse_f64(value)?,
            "measurement_std_factor" => {
                cfg.tracker.noise.measurement_std_factor = parse_f64(value)?
            }
            "learning_rate" => cfg.train.learning_rate = parse_f64(value)?,
            "epochs" => cfg.train.epochs = parse_usize(value)?,
            "seed" => {
                cfg.train.seed = value.parse().map_err(|_| IoError::Parse {
                    line: line_no,
                    message: format!("invalid integer '{value}'"),
                })?
            }
            "feature_dim" => cfg.feature_dim = parse_usize(value)?,
            "layers" => cfg.layers = parse_usize(value)?,
            _ => {
                return Err(IoError::UnknownKey {
                    line: line_no,
                    key: key.to_string(),
                })
            }
        }
    }
    validate_config(&cfg)?;
    Ok(cfg)
}

fn validate_config(cfg: &RunConfig) -> Result<(), IoError> {
    let t = &cfg.tracker;
    let bad = |message: String| IoError::Parse { line: 0, message };
    if t.lambda1 < 0.0 || t.lambda2 < 0.0 || t.lambda1 + t.lambda2 > 1.0 {
        return Err(bad(format!(
            "invalid lambda weights {} / {}",
            t.lambda1, t.lambda2
        )));
    }
    if t.n_init < 1 || t.max_age < 1 || t.window_c < 1 {
        return Err(bad("n_init, max_age and window_c must be at least 1".into()));
    }
    if t.noise.position_std_factor <= 0.0
        || t.noise.velocity_std_factor <= 0.0
        || t.noise.measurement_std_factor <= 0.0
    {
        return Err(bad("noise factors must be positive".into()));
    }
    if cfg.train.learning_rate <= 0.0 {
        return Err(bad("learning_rate must be positive".into()));
    }
    if cfg.feature_dim < 1 || cfg.layers < 1 {
        return Err(bad("feature_dim and layers must be at least 1".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_detection_row() {
        let parsed = parse_detections("1,-1,10,20,5,8,0.9,-1,-1,-1\n").unwrap();
        let rows = &parsed[&1];
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].bbox(), BoundingBox::new(10.0, 20.0, 5.0, 8.0));
        assert_eq!(rows[0].conf, 0.9);
    }

    #[test]
    fn parse_detections_empty_input() {
        assert!(parse_detections("").unwrap().is_empty());
    }

    #[test]
    fn parse_detections_rejects_zero_width() {
        let err = parse_detections("1,-1,10,20,0,8,0.9,-1,-1,-1\n").unwrap_err();
        match err {
            IoError::Parse { line, .. } => assert_eq!(line, 1),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn parse_detections_preserves_in_frame_order() {
        let text = "2,-1,1,1,1,1,0.5,-1,-1,-1\n1,-1,9,9,1,1,0.5,-1,-1,-1\n2,-1,2,2,1,1,0.5,-1,-1,-1\n";
        let parsed = parse_detections(text).unwrap();
        assert_eq!(parsed[&2][0].bb_left, 1.0);
        assert_eq!(parsed[&2][1].bb_left, 2.0);
        assert_eq!(parsed.keys().copied().collect::<Vec<_>>(), vec![1, 2]);
    }

    #[test]
    fn parse_embeddings_roundtrip_and_errors() {
        let m = parse_embeddings("3,0,1.0,0.0\n", 2).unwrap();
        assert_eq!(m[&(3, 0)].values(), &[1.0, 0.0]);

        assert!(matches!(
            parse_embeddings("3,0,1.0\n", 2),
            Err(IoError::Parse { line: 1, .. })
        ));

        let err = parse_embeddings("3,0,1,0\n3,0,0,1\n", 2).unwrap_err();
        assert_eq!(
            err,
            IoError::DuplicateEmbedding {
                frame: 3,
                index: 0,
                first_line: 1,
                second_line: 2
            }
        );
    }

    #[test]
    fn ingest_joins_and_filters() {
        let det = "1,-1,0,0,2,2,0.9,-1,-1,-1\n1,-1,5,5,2,2,0.3,-1,-1,-1\n";
        let emb = "1,0,1,0\n1,1,0,1\n";
        let joined = ingest_detections(det, emb, 2, 0.5).unwrap();
        assert_eq!(joined[&1].len(), 1);
        assert_eq!(joined[&1][0].feature.values(), &[1.0, 0.0]);
    }

    #[test]
    fn ingest_reports_missing_embeddings() {
        let det = "1,-1,0,0,2,2,0.9,-1,-1,-1\n2,-1,0,0,2,2,0.9,-1,-1,-1\n";
        let emb = "1,0,1,0\n";
        let err = ingest_detections(det, emb, 2, 0.5).unwrap_err();
        assert_eq!(
            err,
            IoError::MissingEmbeddings {
                keys: vec![(2, 0)]
            }
        );
    }

    #[test]
    fn write_results_format_and_sorting() {
        let rows = vec![
            (2, 1, BoundingBox::new(1.0, 2.0, 3.0, 4.0)),
            (1, 4, BoundingBox::new(10.0, 20.0, 5.0, 8.0)),
        ];
        let text = write_results(&rows);
        assert_eq!(text, "1,4,10,20,5,8,1,-1,-1,-1\n2,1,1,2,3,4,1,-1,-1,-1\n");
    }

    #[test]
    fn results_roundtrip_exactly() {
        let rows = vec![
            (1, 2, BoundingBox::new(0.125, -3.75, 10.1, 20.2)),
            (1, 3, BoundingBox::new(7.0, 8.0, 0.3333333333333333, 1.0)),
        ];
        let text = write_results(&rows);
        let parsed = parse_results(&text).unwrap();
        let frame1 = &parsed[&1];
        assert_eq!(frame1[0], (2, rows[0].2));
        assert_eq!(frame1[1], (3, rows[1].2));
    }

    #[test]
    fn parse_ground_truth_considered_filter() {
        let text = "1,7,0,0,5,10,0,1,1\n1,8,0,0,5,10,1,7,1\n1,9,0,0,5,10,1,1,0.6\n";
        let gt = parse_ground_truth(text).unwrap();
        let rows = &gt[&1];
        assert!(!rows[0].considered, "flag 0 row");
        assert!(!rows[1].considered, "class 7 row");
        assert!(rows[2].considered, "pedestrian flag 1 class 1");
    }

    #[test]
    fn config_defaults_and_overrides() {
        let cfg = parse_config("").unwrap();
        assert_eq!(cfg, RunConfig::default());

        let cfg = parse_config(
            "# tracker\nlambda1 = 0.4\nlambda2 = 0.1\nn_init = 2\nseed = 9\nfeature_dim = 4\n",
        )
        .unwrap();
        assert_eq!(cfg.tracker.lambda1, 0.4);
        assert_eq!(cfg.tracker.lambda2, 0.1);
        assert_eq!(cfg.tracker.n_init, 2);
        assert_eq!(cfg.train.seed, 9);
        assert_eq!(cfg.feature_dim, 4);
        // untouched keys keep defaults
        assert_eq!(cfg.tracker.max_age, RunConfig::default().tracker.max_age);
    }

    #[test]
    fn config_rejects_unknown_key() {
        let err = parse_config("lambda3 = 0.4\n").unwrap_err();
        assert_eq!(
            err,
            IoError::UnknownKey {
                line: 1,
                key: "lambda3".into()
            }
        );
    }

    #[test]
    fn config_rejects_invalid_values() {
        assert!(parse_config("lambda1 = 0.8\nlambda2 = 0.5\n").is_err());
        assert!(parse_config("learning_rate = -1\n").is_err());
        assert!(parse_config("n_init = 0\n").is_err());
    }

    #[test]
    fn config_echo_reparses_identically() {
        let cfg = parse_config("lambda1 = 0.25\nepochs = 321\n").unwrap();
        let echoed = parse_config(&cfg.to_text()).unwrap();
        assert_eq!(cfg, echoed);
    }

    proptest::proptest! {
        #[test]
        fn result_round_trip_is_value_exact(
            frame in 1u32..500,
            id in 1u64..1000,
            x in -1e6..1e6f64,
            y in -1e6..1e6f64,
            w in 1e-3..1e4f64,
            h in 1e-3..1e4f64,
        ) {
            let rows = vec![(frame, id, BoundingBox::new(x, y, w, h))];
            let text = write_results(&rows);
            let parsed = parse_results(&text).unwrap();
            let (pid, pbox) = parsed[&frame][0];
            proptest::prop_assert_eq!(pid, id as i64);
            proptest::prop_assert_eq!(pbox, rows[0].2);
        }
    }
}
