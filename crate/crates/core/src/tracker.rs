//! Per-frame tracking pipeline: Kalman predict, appearance predict,
//! associate, update, lifecycle management.
//!
//! Tracks are born Tentative, become Confirmed after `n_init` consecutive
//! hits and are Deleted when missed while Tentative or after coasting for
//! more than `max_age` frames. Only Confirmed tracks are reported.

use std::collections::{BTreeMap, VecDeque};

use thiserror::Error;

use crate::association::{associate, AssociationError};
use crate::kalman::{KalmanError, KalmanFilter, KalmanState, NoiseConfig};
use crate::tgcn::{FeatureWindow, TgcnError, TgcnModel};
use crate::types::{AppearanceFeature, BoundingBox, Detection};

#[derive(Debug, Error)]
pub enum TrackerError {
    #[error("frame {got} received after frame {last}; frames must strictly increase")]
    OutOfOrderFrame { last: u32, got: u32 },
    #[error("model window size {model_c} does not match configured window_c {config_c}")]
    WindowMismatch { model_c: usize, config_c: usize },
    #[error(transparent)]
    Association(#[from] AssociationError),
    #[error(transparent)]
    Kalman(#[from] KalmanError),
    #[error(transparent)]
    Tgcn(#[from] TgcnError),
}

/// All tracker tunables.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackerConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub gate_threshold: f64,
    pub cost_ceiling: f64,
    pub n_init: usize,
    pub max_age: usize,
    pub window_c: usize,
    pub detection_min_confidence: f64,
    pub noise: NoiseConfig,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            lambda1: 0.3,
            lambda2: 0.2,
            // chi-square 0.95 quantile with 4 degrees of freedom
            gate_threshold: 9.4877,
            cost_ceiling: 1.0,
            n_init: 3,
            max_age: 30,
            window_c: 8,
            detection_min_confidence: 0.5,
            noise: NoiseConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackStatus {
    Tentative,
    Confirmed,
    Deleted,
}

/// One tracked identity.
#[derive(Debug, Clone)]
pub struct Track {
    pub id: u64,
    pub status: TrackStatus,
    pub kalman: KalmanState,
    pub hits: usize,
    pub time_since_update: usize,
    /// Center of the last detection this track matched; anchors the
    /// displacement cue during association.
    pub last_detection_center: (f64, f64),
    window: VecDeque<AppearanceFeature>,
}

impl Track {
    fn new(id: u64, kalman: KalmanState, detection: &Detection, n_init: usize) -> Self {
        let mut window = VecDeque::new();
        window.push_back(detection.feature.clone());
        Self {
            id,
            status: if n_init <= 1 {
                TrackStatus::Confirmed
            } else {
                TrackStatus::Tentative
            },
            kalman,
            hits: 1,
            time_since_update: 0,
            last_detection_center: detection.bbox.center(),
            window,
        }
    }

    fn push_feature(&mut self, feature: AppearanceFeature, capacity: usize) {
        self.window.push_back(feature);
        while self.window.len() > capacity {
            self.window.pop_front();
        }
    }

    /// The stored features as a fixed-size window, left-padded with the
    /// oldest feature while the track is still warming up.
    pub fn feature_window(&self, c: usize) -> FeatureWindow {
        let mut rows: Vec<AppearanceFeature> = Vec::with_capacity(c);
        let oldest = self.window.front().expect("track window is never empty");
        for _ in self.window.len()..c {
            rows.push(oldest.clone());
        }
        rows.extend(self.window.iter().cloned());
        FeatureWindow::from_features(&rows).expect("window rows share one dimension")
    }

    /// Appearance feature expected at the current frame: the model
    /// prediction over the window, or a plain copy while only one
    /// feature is stored.
    fn predicted_feature(
        &self,
        model: &TgcnModel,
        c: usize,
    ) -> Result<AppearanceFeature, TgcnError> {
        if self.window.len() == 1 {
            return Ok(self.window[0].clone());
        }
        model.predict_feature(&self.feature_window(c))
    }
}

/// Reported state of a confirmed track at one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackOutput {
    pub id: u64,
    pub bbox: BoundingBox,
}

/// Tracker state for one sequence.
#[derive(Debug)]
pub struct Tracker {
    config: TrackerConfig,
    kf: KalmanFilter,
    tracks: Vec<Track>,
    next_id: u64,
    last_frame: Option<u32>,
}

impl Tracker {
    pub fn new(config: TrackerConfig) -> Self {
        let kf = KalmanFilter::new(config.noise);
        Self {
            config,
            kf,
            tracks: Vec::new(),
            next_id: 1,
            last_frame: None,
        }
    }

    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    /// Advances the tracker by one frame and returns the confirmed
    /// tracks: matched ones with their corrected box, coasting ones with
    /// the predicted box.
    pub fn step(
        &mut self,
        frame: u32,
        detections: &[Detection],
        model: &TgcnModel,
    ) -> Result<Vec<TrackOutput>, TrackerError> {
        if model.window_c != self.config.window_c {
            return Err(TrackerError::WindowMismatch {
                model_c: model.window_c,
                config_c: self.config.window_c,
            });
        }
        if let Some(last) = self.last_frame {
            if frame <= last {
                return Err(TrackerError::OutOfOrderFrame { last, got: frame });
            }
        }
        self.last_frame = Some(frame);

        let detections: Vec<Detection> = detections
            .iter()
            .filter(|d| d.confidence >= self.config.detection_min_confidence)
            .cloned()
            .collect();

        // Motion and appearance predictions for every live track.
        for track in &mut self.tracks {
            track.kalman = self.kf.predict(&track.kalman);
            track.time_since_update += 1;
        }
        let mut assoc_inputs = Vec::with_capacity(self.tracks.len());
        for track in &self.tracks {
            let feature = track.predicted_feature(model, self.config.window_c)?;
            assoc_inputs.push(crate::association::TrackQuery {
                state: track.kalman.clone(),
                last_detection_center: track.last_detection_center,
                predicted_feature: feature,
            });
        }

        let result = associate(
            &self.kf,
            &assoc_inputs,
            &detections,
            self.config.lambda1,
            self.config.lambda2,
            self.config.gate_threshold,
            self.config.cost_ceiling,
        )?;

        for &(track_idx, det_idx) in &result.matches {
            let track = &mut self.tracks[track_idx];
            let detection = &detections[det_idx];
            track.kalman = self.kf.update(&track.kalman, &detection.bbox)?;
            track.push_feature(detection.feature.clone(), self.config.window_c);
            track.last_detection_center = detection.bbox.center();
            track.hits += 1;
            track.time_since_update = 0;
            if track.status == TrackStatus::Tentative && track.hits >= self.config.n_init {
                track.status = TrackStatus::Confirmed;
            }
        }

        for &track_idx in &result.unmatched_tracks {
            let track = &mut self.tracks[track_idx];
            match track.status {
                TrackStatus::Tentative => track.status = TrackStatus::Deleted,
                TrackStatus::Confirmed => {
                    if track.time_since_update > self.config.max_age {
                        track.status = TrackStatus::Deleted;
                    }
                }
                TrackStatus::Deleted => {}
            }
        }

        for &det_idx in &result.unmatched_detections {
            let detection = &detections[det_idx];
            let state = self.kf.initiate(detection);
            self.tracks
                .push(Track::new(self.next_id, state, detection, self.config.n_init));
            self.next_id += 1;
        }

        self.tracks.retain(|t| t.status != TrackStatus::Deleted);

        Ok(self
            .tracks
            .iter()
            .filter(|t| t.status == TrackStatus::Confirmed)
            .map(|t| TrackOutput {
                id: t.id,
                bbox: t.kalman.bbox(),
            })
            .collect())
    }
}

/// Folds [`Tracker::step`] over a whole sequence, emitting one row per
/// confirmed track per frame.
pub fn run_sequence(
    detections_by_frame: &BTreeMap<u32, Vec<Detection>>,
    model: &TgcnModel,
    config: &TrackerConfig,
) -> Result<Vec<(u32, u64, BoundingBox)>, TrackerError> {
    let mut tracker = Tracker::new(config.clone());
    let mut rows = Vec::new();
    for (&frame, detections) in detections_by_frame {
        for output in tracker.step(frame, detections, model)? {
            rows.push((frame, output.id, output.bbox));
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(c: usize, d: usize) -> TgcnModel {
        TgcnModel::init(c, d, 2, 0)
    }

    fn config(window_c: usize) -> TrackerConfig {
        TrackerConfig {
            window_c,
            ..TrackerConfig::default()
        }
    }

    fn det(frame: u32, x: f64, y: f64, feature: Vec<f64>) -> Detection {
        Detection::new(
            frame,
            BoundingBox::new(x, y, 10.0, 20.0),
            1.0,
            AppearanceFeature::new(feature),
        )
    }

    #[test]
    fn empty_frame_creates_nothing() {
        let mut tracker = Tracker::new(config(4));
        let out = tracker.step(1, &[], &model(4, 2)).unwrap();
        assert!(out.is_empty());
        assert!(tracker.tracks().is_empty());
    }

    #[test]
    fn repeated_detection_confirms_single_track() {
        let mut tracker = Tracker::new(config(4));
        let m = model(4, 2);
        let mut outputs = Vec::new();
        for frame in 1..=6 {
            let out = tracker
                .step(frame, &[det(frame, 50.0, 50.0, vec![1.0, 0.0])], &m)
                .unwrap();
            outputs.push(out);
        }
        // confirmed from frame n_init = 3 onward
        assert!(outputs[0].is_empty());
        assert!(outputs[1].is_empty());
        for out in &outputs[2..] {
            assert_eq!(out.len(), 1);
            assert_eq!(out[0].id, 1);
        }
    }

    #[test]
    fn frames_must_strictly_increase() {
        let mut tracker = Tracker::new(config(4));
        let m = model(4, 2);
        tracker.step(5, &[], &m).unwrap();
        assert!(matches!(
            tracker.step(5, &[], &m),
            Err(TrackerError::OutOfOrderFrame { last: 5, got: 5 })
        ));
    }

    #[test]
    fn window_size_mismatch_is_rejected() {
        let mut tracker = Tracker::new(config(4));
        assert!(matches!(
            tracker.step(1, &[], &model(8, 2)),
            Err(TrackerError::WindowMismatch { .. })
        ));
    }

    #[test]
    fn low_confidence_detections_are_ignored() {
        let mut tracker = Tracker::new(config(4));
        let m = model(4, 2);
        let weak = Detection::new(
            1,
            BoundingBox::new(0.0, 0.0, 10.0, 20.0),
            0.2,
            AppearanceFeature::new(vec![1.0, 0.0]),
        );
        tracker.step(1, &[weak], &m).unwrap();
        assert!(tracker.tracks().is_empty());
    }

    #[test]
    fn tentative_track_missed_once_is_deleted() {
        let mut tracker = Tracker::new(config(4));
        let m = model(4, 2);
        tracker
            .step(1, &[det(1, 50.0, 50.0, vec![1.0, 0.0])], &m)
            .unwrap();
        assert_eq!(tracker.tracks().len(), 1);
        tracker.step(2, &[], &m).unwrap();
        assert!(tracker.tracks().is_empty());
    }

    #[test]
    fn confirmed_track_coasts_then_dies() {
        let mut cfg = config(4);
        cfg.max_age = 2;
        let mut tracker = Tracker::new(cfg);
        let m = model(4, 2);
        for frame in 1..=3 {
            tracker
                .step(frame, &[det(frame, 50.0, 50.0, vec![1.0, 0.0])], &m)
                .unwrap();
        }
        // Coasting frames: still reported with the predicted box.
        let out = tracker.step(4, &[], &m).unwrap();
        assert_eq!(out.len(), 1);
        let out = tracker.step(5, &[], &m).unwrap();
        assert_eq!(out.len(), 1);
        // time_since_update exceeds max_age: gone.
        let out = tracker.step(6, &[], &m).unwrap();
        assert!(out.is_empty());
        assert!(tracker.tracks().is_empty());
    }

    #[test]
    fn reappearing_object_gets_fresh_id() {
        let mut cfg = config(4);
        cfg.max_age = 1;
        let mut tracker = Tracker::new(cfg);
        let m = model(4, 2);
        for frame in 1..=3 {
            tracker
                .step(frame, &[det(frame, 50.0, 50.0, vec![1.0, 0.0])], &m)
                .unwrap();
        }
        // Disappear long enough to be deleted, then come back.
        tracker.step(4, &[], &m).unwrap();
        tracker.step(5, &[], &m).unwrap();
        tracker.step(6, &[], &m).unwrap();
        for frame in 7..=9 {
            tracker
                .step(frame, &[det(frame, 50.0, 50.0, vec![1.0, 0.0])], &m)
                .unwrap();
        }
        let out = tracker
            .step(10, &[det(10, 50.0, 50.0, vec![1.0, 0.0])], &m)
            .unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].id, 2);
    }

    #[test]
    fn matched_track_keeps_its_id_and_follows_motion() {
        let mut tracker = Tracker::new(config(4));
        let m = model(4, 2);
        let mut last_id = None;
        for frame in 1..=12 {
            let x = 10.0 + 2.0 * frame as f64;
            let out = tracker
                .step(frame, &[det(frame, x, 40.0, vec![1.0, 0.0])], &m)
                .unwrap();
            if let Some(track) = out.first() {
                if let Some(prev) = last_id {
                    assert_eq!(track.id, prev);
                }
                last_id = Some(track.id);
            }
        }
        assert_eq!(last_id, Some(1));
        // The track's box follows the moving object. det() passes the
        // top-left corner, so the center sits half a box further.
        let track = &tracker.tracks()[0];
        let (cx, _) = track.kalman.bbox().center();
        let expected = 10.0 + 2.0 * 12.0 + 5.0;
        assert!((cx - expected).abs() < 2.0, "cx = {cx}");
    }

    #[test]
    fn run_sequence_emits_expected_row_count() {
        let m = model(4, 2);
        let cfg = config(4);
        let mut frames: BTreeMap<u32, Vec<Detection>> = BTreeMap::new();
        for frame in 1..=20 {
            frames.insert(frame, vec![det(frame, 50.0, 50.0, vec![1.0, 0.0])]);
        }
        let rows = run_sequence(&frames, &m, &cfg).unwrap();
        assert_eq!(rows.len(), 20 - (cfg.n_init - 1));
        assert!(rows.iter().all(|(_, id, _)| *id == 1));

        assert!(run_sequence(&BTreeMap::new(), &m, &cfg).unwrap().is_empty());
    }

    #[test]
    fn run_sequence_is_deterministic() {
        let m = model(4, 2);
        let cfg = config(4);
        let mut frames: BTreeMap<u32, Vec<Detection>> = BTreeMap::new();
        for frame in 1..=15 {
            frames.insert(
                frame,
                vec![
                    det(frame, 10.0 + frame as f64, 40.0, vec![1.0, 0.0]),
                    det(frame, 90.0 - frame as f64, 80.0, vec![0.0, 1.0]),
                ],
            );
        }
        let a = run_sequence(&frames, &m, &cfg).unwrap();
        let b = run_sequence(&frames, &m, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn no_duplicate_ids_within_a_frame_and_ids_increase() {
        let m = model(4, 2);
        let cfg = config(4);
        let mut frames: BTreeMap<u32, Vec<Detection>> = BTreeMap::new();
        for frame in 1..=25 {
            let mut dets = vec![det(frame, 10.0 + 2.0 * frame as f64, 40.0, vec![1.0, 0.0])];
            if frame > 8 {
                dets.push(det(frame, 200.0, 80.0, vec![0.0, 1.0]));
            }
            frames.insert(frame, dets);
        }
        let rows = run_sequence(&frames, &m, &cfg).unwrap();
        let mut seen_first: Vec<u64> = Vec::new();
        let mut per_frame: BTreeMap<u32, Vec<u64>> = BTreeMap::new();
        for (frame, id, _) in &rows {
            per_frame.entry(*frame).or_default().push(*id);
            if !seen_first.contains(id) {
                seen_first.push(*id);
            }
        }
        let mut sorted = seen_first.clone();
        sorted.sort_unstable();
        assert_eq!(seen_first, sorted, "ids appear in increasing order");
        for (_, ids) in per_frame {
            let mut unique = ids.clone();
            unique.dedup();
            assert_eq!(ids, unique);
        }
    }
}
