//! Shared domain types and geometry primitives.

/// Axis-aligned box in top-left + size convention, matching the MOT file
/// layout (`bb_left, bb_top, bb_width, bb_height`). Coordinates are
/// real-valued; sub-pixel positions are allowed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    /// Creates a box. Width and height must be positive and all fields finite.
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        assert!(
            x.is_finite() && y.is_finite() && w.is_finite() && h.is_finite(),
            "bounding box fields must be finite"
        );
        assert!(w > 0.0 && h > 0.0, "bounding box size must be positive");
        Self { x, y, w, h }
    }

    /// Center of the box, `(x + w/2, y + h/2)`.
    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    /// Intersection over union with another box; 0 when disjoint,
    /// 1 iff the boxes are identical.
    pub fn iou(&self, other: &BoundingBox) -> f64 {
        let ix = (self.x + self.w).min(other.x + other.w) - self.x.max(other.x);
        let iy = (self.y + self.h).min(other.y + other.h) - self.y.max(other.y);
        if ix <= 0.0 || iy <= 0.0 {
            return 0.0;
        }
        let inter = ix * iy;
        let union = self.w * self.h + other.w * other.h - inter;
        inter / union
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }
}

/// Appearance embedding of a detection crop, dimension `d` fixed per run.
#[derive(Debug, Clone, PartialEq)]
pub struct AppearanceFeature {
    values: Vec<f64>,
}

impl AppearanceFeature {
    /// Wraps a finite-valued embedding vector.
    pub fn new(values: Vec<f64>) -> Self {
        assert!(
            values.iter().all(|v| v.is_finite()),
            "appearance feature entries must be finite"
        );
        Self { values }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// One detector output: frame index, box, confidence and embedding.
#[derive(Debug, Clone)]
pub struct Detection {
    pub frame: u32,
    pub bbox: BoundingBox,
    pub confidence: f64,
    pub feature: AppearanceFeature,
}

impl Detection {
    pub fn new(frame: u32, bbox: BoundingBox, confidence: f64, feature: AppearanceFeature) -> Self {
        assert!(frame >= 1, "frame indices start at 1");
        assert!(
            (0.0..=1.0).contains(&confidence),
            "confidence must lie in [0, 1]"
        );
        Self {
            frame,
            bbox,
            confidence,
            feature,
        }
    }
}

/// Per-frame velocity of a box center, in pixels/frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Velocity {
    pub vx: f64,
    pub vy: f64,
}

impl Velocity {
    pub fn new(vx: f64, vy: f64) -> Self {
        assert!(vx.is_finite() && vy.is_finite(), "velocity must be finite");
        Self { vx, vy }
    }

    pub fn norm(&self) -> f64 {
        (self.vx * self.vx + self.vy * self.vy).sqrt()
    }
}
