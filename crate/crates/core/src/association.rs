//! Track/detection association: the three pairwise distances, their fusion
//! into a single cost, chi-square gating and the Hungarian assignment.
//!
//! The fused cost of a track/detection pair is
//! `D = lambda1*d1 + lambda2*d2 + (1 - lambda1 - lambda2)*d3` where `d1`
//! is the squared Mahalanobis distance between the projected motion state
//! and the detected box, `d2` the cosine distance between the track
//! velocity and the displacement the detection would imply, and `d3` the
//! cosine distance between the predicted and detected appearance features.

use nalgebra::{Cholesky, Vector4};
use thiserror::Error;

use crate::kalman::{KalmanFilter, KalmanState, Projection};
use crate::types::{AppearanceFeature, BoundingBox, Detection, Velocity};

/// Norms below this are treated as zero vectors; the cosine distances map
/// them to the neutral value 1 so fresh tracks stay associable.
const ZERO_NORM: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum AssociationError {
    #[error("measurement covariance is not positive definite")]
    NonInvertibleCovariance,
    #[error("feature dimensions differ: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("invalid cost weights: lambda1 = {lambda1}, lambda2 = {lambda2}")]
    InvalidWeights { lambda1: f64, lambda2: f64 },
}

/// Rectangular cost matrix over (track, detection) pairs with a mask of
/// inadmissible entries.
#[derive(Debug, Clone)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    gated: Vec<bool>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            values: vec![0.0; rows * cols],
            gated: vec![false; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        assert!(value.is_finite(), "cost entries must be finite");
        self.values[row * self.cols + col] = value;
    }

    pub fn is_gated(&self, row: usize, col: usize) -> bool {
        self.gated[row * self.cols + col]
    }

    pub fn gate_entry(&mut self, row: usize, col: usize) {
        self.gated[row * self.cols + col] = true;
    }
}

/// Marks every entry whose motion distance exceeds `threshold` as
/// inadmissible. `d1_values` must have the same shape as `costs`.
pub fn gate(mut costs: CostMatrix, d1_values: &[Vec<f64>], threshold: f64) -> CostMatrix {
    assert_eq!(d1_values.len(), costs.rows());
    for (i, row) in d1_values.iter().enumerate() {
        assert_eq!(row.len(), costs.cols());
        for (j, &d1) in row.iter().enumerate() {
            if d1 > threshold {
                costs.gate_entry(i, j);
            }
        }
    }
    costs
}

/// Outcome of one assignment round. Every track and detection index
/// appears exactly once across the three lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssociationResult {
    pub matches: Vec<(usize, usize)>,
    pub unmatched_tracks: Vec<usize>,
    pub unmatched_detections: Vec<usize>,
}

/// Squared Mahalanobis distance between a projected state and a measured
/// box in center form.
pub fn motion_distance(projected: &Projection, z: &BoundingBox) -> Result<f64, AssociationError> {
    let (mean4, cov4) = projected;
    let chol = Cholesky::new(*cov4).ok_or(AssociationError::NonInvertibleCovariance)?;
    let (cx, cy) = z.center();
    let residual = Vector4::new(cx, cy, z.w, z.h) - mean4;
    // d1 = rᵀ S⁻¹ r = ‖L⁻¹ r‖² for S = L Lᵀ.
    let y = chol.l().solve_lower_triangular(&residual).unwrap();
    Ok(y.norm_squared())
}

/// Cosine distance `1 - cos(v1, v2)` in [0, 2]; 1 when either vector is
/// (numerically) zero.
pub fn velocity_distance(v1: &Velocity, v2: &Velocity) -> f64 {
    cosine_distance(&[v1.vx, v1.vy], &[v2.vx, v2.vy])
}

/// Cosine distance between two appearance features of equal dimension.
pub fn appearance_distance(
    predicted: &AppearanceFeature,
    detected: &AppearanceFeature,
) -> Result<f64, AssociationError> {
    if predicted.dim() != detected.dim() {
        return Err(AssociationError::DimensionMismatch {
            left: predicted.dim(),
            right: detected.dim(),
        });
    }
    Ok(cosine_distance(predicted.values(), detected.values()))
}

fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na < ZERO_NORM || nb < ZERO_NORM {
        return 1.0;
    }
    // Clamp for rounding so the result stays within [0, 2].
    1.0 - (dot / (na * nb)).clamp(-1.0, 1.0)
}

/// Affine combination of the three distances. Weights must satisfy
/// `lambda1 >= 0`, `lambda2 >= 0` and `lambda1 + lambda2 <= 1`.
pub fn combined_cost(
    d1: f64,
    d2: f64,
    d3: f64,
    lambda1: f64,
    lambda2: f64,
) -> Result<f64, AssociationError> {
    if lambda1 < 0.0 || lambda2 < 0.0 || lambda1 + lambda2 > 1.0 {
        return Err(AssociationError::InvalidWeights { lambda1, lambda2 });
    }
    Ok(lambda1 * d1 + lambda2 * d2 + (1.0 - lambda1 - lambda2) * d3)
}

/// Minimum-cost bipartite assignment over the non-gated entries, solved by
/// shortest augmenting paths on the square-padded matrix in O(n^3).
///
/// The result keeps the maximum number of admissible pairs achievable and,
/// among those, minimum total cost; remaining indices are reported
/// unmatched. Scan order is fixed, so ties resolve deterministically.
pub fn hungarian(costs: &CostMatrix) -> AssociationResult {
    let rows = costs.rows();
    let cols = costs.cols();
    if rows == 0 || cols == 0 {
        return AssociationResult {
            matches: Vec::new(),
            unmatched_tracks: (0..rows).collect(),
            unmatched_detections: (0..cols).collect(),
        };
    }

    let dim = rows.max(cols);
    // Inadmissible and padded cells get a cost larger than any achievable
    // admissible total, so cardinality is maximized before cost.
    let mut max_abs: f64 = 1.0;
    for i in 0..rows {
        for j in 0..cols {
            if !costs.is_gated(i, j) {
                max_abs = max_abs.max(costs.get(i, j).abs());
            }
        }
    }
    let big = max_abs * (dim as f64 + 1.0) * 2.0;

    let cell = |i: usize, j: usize| -> f64 {
        if i < rows && j < cols {
            if costs.is_gated(i, j) {
                big
            } else {
                costs.get(i, j)
            }
        } else {
            // Padding row/column: free, meaning "stay unmatched".
            0.0
        }
    };

    // Jonker-Volgenant style augmentation with row/column potentials.
    let mut row_potential = vec![0.0f64; dim];
    let mut col_potential = vec![0.0f64; dim];
    let mut col_to_row: Vec<Option<usize>> = vec![None; dim];

    for start_row in 0..dim {
        let mut min_to = vec![f64::INFINITY; dim];
        let mut prev_col: Vec<Option<usize>> = vec![None; dim];
        let mut visited = vec![false; dim];

        let mut current_row = start_row;
        let mut current_col: Option<usize> = None;
        loop {
            let mut best = f64::INFINITY;
            let mut best_col = dim;
            for j in 0..dim {
                if visited[j] {
                    continue;
                }
                let reduced = cell(current_row, j) - row_potential[current_row] - col_potential[j];
                if reduced < min_to[j] {
                    min_to[j] = reduced;
                    prev_col[j] = current_col;
                }
                if min_to[j] < best {
                    best = min_to[j];
                    best_col = j;
                }
            }

            for j in 0..dim {
                if visited[j] {
                    col_potential[j] -= best;
                    row_potential[col_to_row[j].unwrap()] += best;
                } else {
                    min_to[j] -= best;
                }
            }
            row_potential[start_row] += best;

            visited[best_col] = true;
            current_col = Some(best_col);
            match col_to_row[best_col] {
                None => break,
                Some(next_row) => current_row = next_row,
            }
        }

        // Walk the augmenting path backwards, flipping assignments.
        let mut col = current_col;
        while let Some(j) = col {
            let prev = prev_col[j];
            col_to_row[j] = match prev {
                Some(p) => col_to_row[p],
                None => Some(start_row),
            };
            col = prev;
        }
    }

    let mut matches = Vec::new();
    let mut matched_rows = vec![false; rows];
    let mut matched_cols = vec![false; cols];
    for j in 0..dim {
        if let Some(i) = col_to_row[j] {
            if i < rows && j < cols && !costs.is_gated(i, j) {
                matches.push((i, j));
                matched_rows[i] = true;
                matched_cols[j] = true;
            }
        }
    }
    matches.sort_unstable();

    AssociationResult {
        matches,
        unmatched_tracks: (0..rows).filter(|&i| !matched_rows[i]).collect(),
        unmatched_detections: (0..cols).filter(|&j| !matched_cols[j]).collect(),
    }
}

/// Everything the association round needs to know about one live track:
/// the predicted motion state, the center of the last detection the track
/// actually matched, and the appearance feature predicted for the
/// current frame.
#[derive(Debug, Clone)]
pub struct TrackQuery {
    pub state: KalmanState,
    pub last_detection_center: (f64, f64),
    pub predicted_feature: AppearanceFeature,
}

/// One association round: builds the fused cost matrix, gates on the
/// motion distance, solves the assignment and drops matches whose fused
/// cost exceeds `cost_ceiling`.
///
/// The velocity a detection would imply for a track is the displacement
/// from the track's last matched detection center, a measurement-only
/// cue: a stationary object yields a zero displacement, which the cosine
/// maps to the neutral value.
#[allow(clippy::too_many_arguments)]
pub fn associate(
    kf: &KalmanFilter,
    tracks: &[TrackQuery],
    detections: &[Detection],
    lambda1: f64,
    lambda2: f64,
    gate_threshold: f64,
    cost_ceiling: f64,
) -> Result<AssociationResult, AssociationError> {
    if lambda1 < 0.0 || lambda2 < 0.0 || lambda1 + lambda2 > 1.0 {
        return Err(AssociationError::InvalidWeights { lambda1, lambda2 });
    }
    let rows = tracks.len();
    let cols = detections.len();
    let mut costs = CostMatrix::new(rows, cols);
    let mut d1_values = vec![vec![0.0; cols]; rows];

    for (i, track) in tracks.iter().enumerate() {
        let projection = kf.project(&track.state);
        let v1 = track.state.velocity();
        let (prev_cx, prev_cy) = track.last_detection_center;
        for (j, detection) in detections.iter().enumerate() {
            let d1 = motion_distance(&projection, &detection.bbox)?;
            let (dcx, dcy) = detection.bbox.center();
            let implied = Velocity::new(dcx - prev_cx, dcy - prev_cy);
            let d2 = velocity_distance(&v1, &implied);
            let d3 = appearance_distance(&track.predicted_feature, &detection.feature)?;
            d1_values[i][j] = d1;
            costs.set(i, j, combined_cost(d1, d2, d3, lambda1, lambda2)?);
        }
    }

    let gated = gate(costs, &d1_values, gate_threshold);
    let mut result = hungarian(&gated);

    // Ceiling check: over-expensive matches become unmatched on both sides.
    let mut kept = Vec::with_capacity(result.matches.len());
    for (i, j) in result.matches.drain(..) {
        if gated.get(i, j) > cost_ceiling {
            result.unmatched_tracks.push(i);
            result.unmatched_detections.push(j);
        } else {
            kept.push((i, j));
        }
    }
    result.matches = kept;
    result.unmatched_tracks.sort_unstable();
    result.unmatched_detections.sort_unstable();
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kalman::NoiseConfig;
    use nalgebra::Matrix4;
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn motion_distance_zero_residual() {
        let proj = (Vector4::new(5.0, 5.0, 2.0, 2.0), Matrix4::identity());
        let z = BoundingBox::new(4.0, 4.0, 2.0, 2.0);
        assert_eq!(motion_distance(&proj, &z).unwrap(), 0.0);
    }

    #[test]
    fn motion_distance_identity_covariance() {
        // residual (1, 2, 0, 0) under identity covariance -> 5
        let proj = (Vector4::new(0.0, 0.0, 2.0, 2.0), Matrix4::identity());
        let z = BoundingBox::new(0.0, 1.0, 2.0, 2.0);
        assert!((motion_distance(&proj, &z).unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn motion_distance_scales_with_variance() {
        // residual (2, 0, 0, 0), variance 4 in x -> 2² / 4 = 1
        let cov = Matrix4::from_diagonal(&Vector4::new(4.0, 1.0, 1.0, 1.0));
        let proj = (Vector4::new(0.0, 0.0, 2.0, 2.0), cov);
        let z = BoundingBox::new(1.0, -1.0, 2.0, 2.0);
        assert!((motion_distance(&proj, &z).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn velocity_distance_cases() {
        let v = |x, y| Velocity::new(x, y);
        assert_eq!(velocity_distance(&v(3.0, 4.0), &v(3.0, 4.0)), 0.0);
        assert_eq!(velocity_distance(&v(1.0, 0.0), &v(-1.0, 0.0)), 2.0);
        assert_eq!(velocity_distance(&v(1.0, 0.0), &v(0.0, 1.0)), 1.0);
        // zero vector is neutral
        assert_eq!(velocity_distance(&v(0.0, 0.0), &v(1.0, 1.0)), 1.0);
    }

    #[test]
    fn appearance_distance_cases() {
        let f = |v: Vec<f64>| AppearanceFeature::new(v);
        assert!(
            appearance_distance(&f(vec![1.0, 2.0]), &f(vec![1.0, 2.0])).unwrap() < 1e-12
        );
        assert_eq!(
            appearance_distance(&f(vec![1.0, 0.0, 0.0]), &f(vec![0.0, 1.0, 0.0])).unwrap(),
            1.0
        );
        let d = appearance_distance(&f(vec![1.0, 1.0]), &f(vec![1.0, 0.0])).unwrap();
        assert!((d - (1.0 - 1.0 / 2.0f64.sqrt())).abs() < 1e-12);
        assert!(matches!(
            appearance_distance(&f(vec![1.0]), &f(vec![1.0, 2.0])),
            Err(AssociationError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn combined_cost_cases() {
        assert_eq!(combined_cost(2.0, 1.0, 4.0, 1.0, 0.0).unwrap(), 2.0);
        assert_eq!(combined_cost(2.0, 1.0, 4.0, 0.0, 0.0).unwrap(), 4.0);
        assert!((combined_cost(2.0, 1.0, 4.0, 0.5, 0.25).unwrap() - 2.25).abs() < 1e-15);
        assert!(combined_cost(1.0, 1.0, 1.0, 0.7, 0.4).is_err());
        assert!(combined_cost(1.0, 1.0, 1.0, -0.1, 0.2).is_err());
    }

    #[test]
    fn gate_marks_entries_above_threshold() {
        let costs = CostMatrix::new(2, 2);
        let d1 = vec![vec![1.0, 12.0], vec![3.0, 5.0]];
        let gated = gate(costs, &d1, 9.4877);
        assert!(!gated.is_gated(0, 0));
        assert!(gated.is_gated(0, 1));
        assert!(!gated.is_gated(1, 0));
        assert!(!gated.is_gated(1, 1));

        let all = gate(CostMatrix::new(2, 2), &d1, 0.0);
        assert!((0..2).all(|i| (0..2).all(|j| all.is_gated(i, j))));
        let none = gate(CostMatrix::new(2, 2), &d1, f64::INFINITY);
        assert!((0..2).all(|i| (0..2).all(|j| !none.is_gated(i, j))));
    }

    #[test]
    fn hungarian_diagonal_dominant() {
        let mut c = CostMatrix::new(2, 2);
        c.set(0, 0, 1.0);
        c.set(0, 1, 2.0);
        c.set(1, 0, 2.0);
        c.set(1, 1, 1.0);
        let r = hungarian(&c);
        assert_eq!(r.matches, vec![(0, 0), (1, 1)]);
        assert!(r.unmatched_tracks.is_empty());
        assert!(r.unmatched_detections.is_empty());
    }

    #[test]
    fn hungarian_empty_sides() {
        let r = hungarian(&CostMatrix::new(0, 3));
        assert!(r.matches.is_empty());
        assert_eq!(r.unmatched_detections, vec![0, 1, 2]);
        let r = hungarian(&CostMatrix::new(2, 0));
        assert_eq!(r.unmatched_tracks, vec![0, 1]);
    }

    #[test]
    fn hungarian_fully_gated_matches_nothing() {
        let mut c = CostMatrix::new(1, 1);
        c.set(0, 0, 0.5);
        c.gate_entry(0, 0);
        let r = hungarian(&c);
        assert!(r.matches.is_empty());
        assert_eq!(r.unmatched_tracks, vec![0]);
        assert_eq!(r.unmatched_detections, vec![0]);
    }

    #[test]
    fn hungarian_prefers_cardinality_over_cost() {
        // Column 1 is gated for both rows, so only one match is possible
        // and the cheaper row takes it.
        let mut c = CostMatrix::new(2, 2);
        c.set(0, 0, 10.0);
        c.set(0, 1, 100.0);
        c.set(1, 0, 0.5);
        c.set(1, 1, 100.0);
        c.gate_entry(0, 1);
        c.gate_entry(1, 1);
        let r = hungarian(&c);
        assert_eq!(r.matches, vec![(1, 0)]);
        assert_eq!(r.unmatched_tracks, vec![0]);
        assert_eq!(r.unmatched_detections, vec![1]);
    }

    /// Brute force over all partial assignments: maximum cardinality
    /// first, then minimum total cost.
    fn brute_force_min(costs: &CostMatrix) -> (usize, f64) {
        fn recurse(
            costs: &CostMatrix,
            row: usize,
            used: &mut Vec<bool>,
            picked: usize,
            acc: f64,
            best: &mut (usize, f64),
        ) {
            if row == costs.rows() {
                if picked > best.0 || (picked == best.0 && acc < best.1) {
                    *best = (picked, acc);
                }
                return;
            }
            // leave this row unmatched
            recurse(costs, row + 1, used, picked, acc, best);
            for j in 0..costs.cols() {
                if !used[j] && !costs.is_gated(row, j) {
                    used[j] = true;
                    recurse(
                        costs,
                        row + 1,
                        used,
                        picked + 1,
                        acc + costs.get(row, j),
                        best,
                    );
                    used[j] = false;
                }
            }
        }
        let mut best = (0, f64::INFINITY);
        let mut used = vec![false; costs.cols()];
        recurse(costs, 0, &mut used, 0, 0.0, &mut best);
        if best.0 == 0 {
            best.1 = 0.0;
        }
        best
    }

    fn total_cost(costs: &CostMatrix, matches: &[(usize, usize)]) -> f64 {
        matches.iter().map(|&(i, j)| costs.get(i, j)).sum()
    }

    #[test]
    fn hungarian_matches_brute_force_on_random_matrices() {
        let mut rng = StdRng::seed_from_u64(42);
        for _ in 0..1000 {
            let rows = rng.gen_range(1..=7);
            let cols = rng.gen_range(1..=7);
            let mut c = CostMatrix::new(rows, cols);
            for i in 0..rows {
                for j in 0..cols {
                    c.set(i, j, rng.gen_range(0.0..10.0));
                }
            }
            let r = hungarian(&c);
            let (card, best) = brute_force_min(&c);
            assert_eq!(r.matches.len(), card);
            let got = total_cost(&c, &r.matches);
            assert_eq!(got, best, "rows={rows} cols={cols}");
        }
    }

    #[test]
    fn hungarian_matches_brute_force_with_gating() {
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..500 {
            let rows = rng.gen_range(1..=6);
            let cols = rng.gen_range(1..=6);
            let mut c = CostMatrix::new(rows, cols);
            for i in 0..rows {
                for j in 0..cols {
                    c.set(i, j, rng.gen_range(0.0..10.0));
                    if rng.gen_bool(0.35) {
                        c.gate_entry(i, j);
                    }
                }
            }
            let r = hungarian(&c);
            let (card, best) = brute_force_min(&c);
            assert_eq!(r.matches.len(), card, "cardinality must be maximal");
            let got = total_cost(&c, &r.matches);
            assert!((got - best).abs() < 1e-9, "got {got}, brute force {best}");
            for &(i, j) in &r.matches {
                assert!(!c.is_gated(i, j));
            }
        }
    }

    /// Track whose last matched detection sat exactly one velocity step
    /// behind the current (predicted) state.
    fn make_track(
        kf: &KalmanFilter,
        cx: f64,
        cy: f64,
        vx: f64,
        vy: f64,
        feature: Vec<f64>,
    ) -> TrackQuery {
        let d = Detection::new(
            1,
            BoundingBox::new(cx - 5.0, cy - 10.0, 10.0, 20.0),
            1.0,
            AppearanceFeature::new(feature.clone()),
        );
        let mut state = kf.initiate(&d);
        state.mean[4] = vx;
        state.mean[5] = vy;
        TrackQuery {
            state,
            last_detection_center: (cx - vx, cy - vy),
            predicted_feature: AppearanceFeature::new(feature),
        }
    }

    #[test]
    fn associate_exact_hit_costs_zero() {
        let kf = KalmanFilter::new(NoiseConfig::default());
        let track = make_track(&kf, 50.0, 50.0, 0.0, 0.0, vec![1.0, 0.0]);
        let d = Detection::new(
            2,
            BoundingBox::new(45.0, 40.0, 10.0, 20.0),
            1.0,
            AppearanceFeature::new(vec![1.0, 0.0]),
        );
        let r = associate(&kf, &[track], &[d], 0.3, 0.2, 9.4877, 1.0).unwrap();
        assert_eq!(r.matches, vec![(0, 0)]);
    }

    #[test]
    fn associate_all_gated_leaves_everything_unmatched() {
        let kf = KalmanFilter::new(NoiseConfig::default());
        let track = make_track(&kf, 50.0, 50.0, 0.0, 0.0, vec![1.0, 0.0]);
        let d = Detection::new(
            2,
            BoundingBox::new(500.0, 500.0, 10.0, 20.0),
            1.0,
            AppearanceFeature::new(vec![1.0, 0.0]),
        );
        let r = associate(&kf, &[track], &[d], 0.3, 0.2, 9.4877, 1.0).unwrap();
        assert!(r.matches.is_empty());
        assert_eq!(r.unmatched_tracks, vec![0]);
        assert_eq!(r.unmatched_detections, vec![0]);
    }

    #[test]
    fn associate_velocity_term_resolves_crossing() {
        // Two tracks that met head-on, dwelled face to face and are now
        // stepping past each other. Features are identical (d3 ties at 0)
        // and each track's slowed velocity estimate puts its prediction
        // slightly nearer the *other* object's detection. Hand-computed
        // costs with sigma^2 = 2 per measurement axis:
        //   d1 correct pair: 1.6^2 / 2 = 1.28    d2 correct: 0
        //   d1 swapped pair: 1.3^2 / 2 = 0.845   d2 swapped: 2
        // lambda2 = 0:   swapped total 0.507 < correct 0.768 -> swap
        // lambda2 = 0.2: swapped total 1.307 > correct 0.768 -> keep ids
        let kf = KalmanFilter::new(NoiseConfig::default());
        let feature = vec![1.0, 0.0];
        // Track A stopped at x 47.45 moving right; decayed velocity 0.4
        // puts its prediction at 47.85. Track B mirrors around x 48.
        let a = make_track(&kf, 47.85, 50.0, 0.4, 0.0, feature.clone());
        let b = make_track(&kf, 48.15, 50.0, -0.4, 0.0, feature.clone());
        // On resume each object takes a full 2 px step along its line.
        let det_a = Detection::new(
            2,
            BoundingBox::new(49.45 - 5.0, 40.0, 10.0, 20.0),
            1.0,
            AppearanceFeature::new(feature.clone()),
        );
        let det_b = Detection::new(
            2,
            BoundingBox::new(46.55 - 5.0, 40.0, 10.0, 20.0),
            1.0,
            AppearanceFeature::new(feature.clone()),
        );
        let tracks = vec![a, b];
        let dets = vec![det_a, det_b];

        let with_velocity =
            associate(&kf, &tracks, &dets, 0.3, 0.2, f64::INFINITY, f64::INFINITY).unwrap();
        assert_eq!(with_velocity.matches, vec![(0, 0), (1, 1)]);

        let without =
            associate(&kf, &tracks, &dets, 0.3, 0.0, f64::INFINITY, f64::INFINITY).unwrap();
        assert_eq!(without.matches, vec![(0, 1), (1, 0)]);
    }

    proptest! {
        #[test]
        fn cosine_distances_scale_invariant(
            ax in -5.0..5.0f64, ay in -5.0..5.0f64,
            bx in -5.0..5.0f64, by in -5.0..5.0f64,
            alpha in 0.001..100.0f64,
        ) {
            let v1 = Velocity::new(ax, ay);
            let v1s = Velocity::new(ax * alpha, ay * alpha);
            let v2 = Velocity::new(bx, by);
            let d = velocity_distance(&v1, &v2);
            let ds = velocity_distance(&v1s, &v2);
            prop_assert!((d - ds).abs() < 1e-9);
            prop_assert!((0.0..=2.0).contains(&d));
        }

        #[test]
        fn combined_cost_monotone(
            d1 in 0.0..10.0f64, d2 in 0.0..2.0f64, d3 in 0.0..2.0f64,
            bump in 0.0..1.0f64,
            l1 in 0.0..0.6f64, l2 in 0.0..0.4f64,
        ) {
            let base = combined_cost(d1, d2, d3, l1, l2).unwrap();
            prop_assert!(combined_cost(d1 + bump, d2, d3, l1, l2).unwrap() >= base);
            prop_assert!(combined_cost(d1, d2 + bump, d3, l1, l2).unwrap() >= base);
            prop_assert!(combined_cost(d1, d2, d3 + bump, l1, l2).unwrap() >= base);
        }

        #[test]
        fn hungarian_partitions_indices(
            rows in 0usize..6, cols in 0usize..6, seed in 0u64..500,
        ) {
            let mut rng = StdRng::seed_from_u64(seed);
            let mut c = CostMatrix::new(rows, cols);
            for i in 0..rows {
                for j in 0..cols {
                    c.set(i, j, rng.gen_range(0.0..5.0));
                    if rng.gen_bool(0.3) {
                        c.gate_entry(i, j);
                    }
                }
            }
            let r = hungarian(&c);
            let mut seen_rows = vec![false; rows];
            let mut seen_cols = vec![false; cols];
            for &(i, j) in &r.matches {
                prop_assert!(!seen_rows[i] && !seen_cols[j]);
                seen_rows[i] = true;
                seen_cols[j] = true;
            }
            for &i in &r.unmatched_tracks {
                prop_assert!(!seen_rows[i]);
                seen_rows[i] = true;
            }
            for &j in &r.unmatched_detections {
                prop_assert!(!seen_cols[j]);
                seen_cols[j] = true;
            }
            prop_assert!(seen_rows.iter().all(|&s| s));
            prop_assert!(seen_cols.iter().all(|&s| s));
        }
    }
}
