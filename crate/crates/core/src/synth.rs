//! Deterministic synthetic scenarios: detection, embedding and
//! ground-truth files for tracker stress tests plus supervised pairs for
//! the appearance predictor.
//!
//! The `crossing` scenario stages the hard case for appearance-only
//! association: two pedestrians in identical "colors" walk toward each
//! other, stop face to face for a few frames, then continue past each
//! other along their lines. While they stand still the motion model's
//! velocity estimate decays, so on the first step apart the position term
//! alone slightly prefers the identity-swapping assignment and only the
//! velocity direction term resolves the pairing correctly.

use std::fmt::Write as _;

use rand::rngs::StdRng;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::tgcn::FeatureWindow;
use crate::types::AppearanceFeature;

/// Box size used by the two-object scenarios.
const BOX_W: f64 = 10.0;
const BOX_H: f64 = 20.0;
/// Meeting point of the crossing trajectories.
const MEET_X: f64 = 100.0;
const MEET_Y: f64 = 60.0;
/// Walking speed along x while approaching the meeting point.
const APPROACH_SPEED: f64 = 1.2;
/// Walking speed along x after the dwell.
const DEPART_SPEED: f64 = 3.3;
/// Slope dy/dx of the two lines (one positive, one negative).
const LINE_SLOPE: f64 = 0.02;
/// Distance from the meeting point at which each object stops.
const STOP_GAP: f64 = 1.25;
/// Frames spent standing face to face.
const PAUSE_FRAMES: u32 = 3;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid scenario spec: {0}")]
    InvalidSpec(String),
    #[error("need at least window + 1 = {needed} frames, got {frames}")]
    WindowTooLong { needed: u32, frames: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    Crossing,
    Parallel,
    PeriodicFeatures,
}

impl ScenarioKind {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "crossing" => Some(Self::Crossing),
            "parallel" => Some(Self::Parallel),
            "periodic_features" => Some(Self::PeriodicFeatures),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub frames: u32,
    pub seed: u64,
    pub feature_dim: usize,
    pub noise_std: f64,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.frames < 2 {
            return Err(SynthError::InvalidSpec(format!(
                "frames must be at least 2, got {}",
                self.frames
            )));
        }
        if self.feature_dim < 2 {
            return Err(SynthError::InvalidSpec(format!(
                "feature_dim must be at least 2, got {}",
                self.feature_dim
            )));
        }
        if self.noise_std.is_nan() || self.noise_std < 0.0 {
            return Err(SynthError::InvalidSpec(format!(
                "noise_std must be non-negative, got {}",
                self.noise_std
            )));
        }
        Ok(())
    }
}

/// Text files in the formats the io module parses.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioFiles {
    pub detections: String,
    pub embeddings: String,
    pub ground_truth: String,
}

/// The frame at which the two crossing objects meet: mid-sequence.
pub fn crossing_frame(frames: u32) -> u32 {
    frames / 2
}

/// Signed progress of an object along x at frame `t`: negative before
/// the meeting point, zero at it. Approach, dwell at `-STOP_GAP` around
/// the meeting frame, then depart faster and pass through the
/// intersection.
fn line_progress(t: u32, frames: u32) -> f64 {
    // integer boundaries keep every moving step a full-speed step
    let pause_start = (crossing_frame(frames) - PAUSE_FRAMES / 2) as f64;
    let pause_end = pause_start + PAUSE_FRAMES as f64;
    let t = t as f64;
    if t <= pause_start {
        -STOP_GAP - APPROACH_SPEED * (pause_start - t)
    } else if t <= pause_end {
        -STOP_GAP
    } else {
        -STOP_GAP + DEPART_SPEED * (t - pause_end)
    }
}

fn format_det_row(out: &mut String, frame: u32, cx: f64, cy: f64) {
    let left = cx - BOX_W / 2.0;
    let top = cy - BOX_H / 2.0;
    let _ = writeln!(out, "{frame},-1,{left},{top},{BOX_W},{BOX_H},1,-1,-1,-1");
}

fn format_gt_row(out: &mut String, frame: u32, id: u32, cx: f64, cy: f64) {
    let left = cx - BOX_W / 2.0;
    let top = cy - BOX_H / 2.0;
    let _ = writeln!(out, "{frame},{id},{left},{top},{BOX_W},{BOX_H},1,1,1");
}

fn shared_feature(dim: usize) -> Vec<f64> {
    let v = 1.0 / (dim as f64).sqrt();
    vec![v; dim]
}

fn format_feature(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| format!("{v}"))
        .collect::<Vec<_>>()
        .join(",")
}

fn two_object_files<F>(spec: &ScenarioSpec, centers: F) -> Result<ScenarioFiles, SynthError>
where
    F: Fn(u32) -> [(f64, f64); 2],
{
    spec.validate()?;
    let mut rng = StdRng::seed_from_u64(spec.seed);
    let jitter = Normal::new(0.0, spec.noise_std.max(f64::MIN_POSITIVE))
        .expect("std is finite and positive");
    let feature = format_feature(&shared_feature(spec.feature_dim));

    let mut det = String::new();
    let mut emb = String::new();
    let mut gt = String::new();
    for frame in 1..=spec.frames {
        let truth = centers(frame);
        for (index, (cx, cy)) in truth.iter().enumerate() {
            let (jx, jy) = if spec.noise_std > 0.0 {
                (jitter.sample(&mut rng), jitter.sample(&mut rng))
            } else {
                (0.0, 0.0)
            };
            format_det_row(&mut det, frame, cx + jx, cy + jy);
            let _ = writeln!(emb, "{frame},{index},{feature}");
            format_gt_row(&mut gt, frame, index as u32 + 1, *cx, *cy);
        }
    }
    Ok(ScenarioFiles {
        detections: det,
        embeddings: emb,
        ground_truth: gt,
    })
}

/// Two identical-looking pedestrians approach head-on along shallowly
/// crossing lines, dwell face to face around the crossing frame, then
/// walk on past each other. Ground truth keeps the true identities.
pub fn crossing(spec: &ScenarioSpec) -> Result<ScenarioFiles, SynthError> {
    two_object_files(spec, |frame| {
        let progress = line_progress(frame, spec.frames);
        // A walks left to right on y = Y + k(x - X); B walks right to
        // left on y = Y - k(x - X). Both pass the intersection just
        // after the dwell.
        let a = (MEET_X + progress, MEET_Y + LINE_SLOPE * progress);
        let b = (MEET_X - progress, MEET_Y + LINE_SLOPE * progress);
        [a, b]
    })
}

/// Control scenario: the same two identical-looking objects walk in the
/// same direction on parallel lines that never approach each other.
pub fn parallel(spec: &ScenarioSpec) -> Result<ScenarioFiles, SynthError> {
    two_object_files(spec, |frame| {
        let x = 20.0 + APPROACH_SPEED * frame as f64;
        [(x, MEET_Y - 25.0), (x, MEET_Y + 25.0)]
    })
}

/// Supervised pairs from a single simulated object whose appearance
/// alternates with period 2 between two orthogonal unit vectors: the
/// minimal signal on which modeling time beats copying the last frame.
/// Copy-last-frame has squared error exactly 2 on every pair.
pub fn periodic_features(
    spec: &ScenarioSpec,
    window_c: usize,
) -> Result<Vec<(FeatureWindow, AppearanceFeature)>, SynthError> {
    spec.validate()?;
    if (spec.frames as usize) < window_c + 1 {
        return Err(SynthError::WindowTooLong {
            needed: window_c as u32 + 1,
            frames: spec.frames,
        });
    }
    let feature = |t: u32| {
        let mut v = vec![0.0; spec.feature_dim];
        v[(t % 2) as usize] = 1.0;
        AppearanceFeature::new(v)
    };
    let mut pairs = Vec::with_capacity(spec.frames as usize - window_c);
    for end in window_c as u32..spec.frames {
        let rows: Vec<AppearanceFeature> =
            ((end - window_c as u32 + 1)..=end).map(feature).collect();
        let window = FeatureWindow::from_features(&rows).expect("uniform dimensions");
        pairs.push((window, feature(end + 1)));
    }
    Ok(pairs)
}
