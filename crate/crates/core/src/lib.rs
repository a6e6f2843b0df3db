//! Tracking-by-detection with temporal appearance prediction.
//!
//! The pipeline links per-frame pedestrian detections into identities by
//! combining three cues per track/detection pair: a Mahalanobis motion
//! distance from a velocity-augmented Kalman filter, a cosine distance
//! between the track velocity and the displacement implied by the
//! detection, and a cosine distance between the detection embedding and
//! the embedding predicted by a small graph-convolutional network over the
//! track's recent appearance history. The fused cost is solved per frame
//! with the Hungarian algorithm.
//!
//! Detections and appearance embeddings arrive as MOT-format text files;
//! results are written in the MOT submission format and scored with the
//! CLEAR MOT metrics in [`metrics`].

pub mod association;
pub mod cli;
pub mod io;
pub mod kalman;
pub mod metrics;
pub mod synth;
pub mod tgcn;
pub mod tracker;
pub mod types;

pub use types::{AppearanceFeature, BoundingBox, Detection, Velocity};
