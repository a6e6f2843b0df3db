//! CLEAR MOT evaluation of tracker output against ground truth.
//!
//! Matching follows the standard continuity discipline: correspondences
//! from the previous frame are kept while their overlap still clears the
//! IoU threshold, and only the remaining boxes enter a fresh optimal
//! matching. Skipping the carry-over step inflates identity switches
//! whenever two hypotheses hover over one object.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use thiserror::Error;

use crate::association::{gate, hungarian, CostMatrix};
use crate::io::GroundTruthEntry;
use crate::types::BoundingBox;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("ground truth contains no considered entries; MOTA is undefined")]
    EmptyGroundTruth,
}

/// Aggregate CLEAR MOT scores for one sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// 1 - (FN + FP + IDSW) / num_gt, at most 1.
    pub mota: f64,
    /// Mean IoU over matches, as a percentage in [0, 100].
    pub motp: f64,
    /// Fraction of ground-truth trajectories matched in >= 80% of their
    /// frames.
    pub mostly_tracked: f64,
    /// Fraction matched in <= 20% of their frames.
    pub mostly_lost: f64,
    pub id_switches: usize,
    pub fragmentations: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    /// Number of considered ground-truth boxes.
    pub num_gt: usize,
    pub num_matches: usize,
}

/// Scores `hypotheses` against `gt` with IoU-based matching at
/// `iou_threshold` (benchmark convention: 0.5).
pub fn evaluate(
    gt: &BTreeMap<u32, Vec<GroundTruthEntry>>,
    hypotheses: &BTreeMap<u32, Vec<(i64, BoundingBox)>>,
    iou_threshold: f64,
) -> Result<EvalReport, MetricsError> {
    assert!(
        iou_threshold > 0.0 && iou_threshold < 1.0,
        "iou_threshold must lie strictly between 0 and 1"
    );

    let frames: BTreeSet<u32> = gt.keys().chain(hypotheses.keys()).copied().collect();

    let mut num_gt = 0usize;
    let mut num_matches = 0usize;
    let mut iou_sum = 0.0f64;
    let mut false_positives = 0usize;
    let mut false_negatives = 0usize;
    let mut id_switches = 0usize;
    let mut fragmentations = 0usize;

    // gt id -> hyp id matched in the previous frame (continuity pool).
    let mut previous: HashMap<i64, i64> = HashMap::new();
    // gt id -> most recent matched hyp id, surviving gaps.
    let mut last_matched: HashMap<i64, i64> = HashMap::new();
    // gt id -> (frames present, frames matched, matched at last presence).
    let mut trajectory: HashMap<i64, (usize, usize, bool)> = HashMap::new();

    let empty_gt = Vec::new();
    let empty_hyp = Vec::new();
    for frame in frames {
        let entries = gt.get(&frame).unwrap_or(&empty_gt);
        let hyps = hypotheses.get(&frame).unwrap_or(&empty_hyp);
        let considered: Vec<&GroundTruthEntry> = entries.iter().filter(|e| e.considered).collect();
        let distractors: Vec<&GroundTruthEntry> =
            entries.iter().filter(|e| !e.considered).collect();

        num_gt += considered.len();

        let mut gt_open: Vec<bool> = vec![true; considered.len()];
        let mut hyp_open: Vec<bool> = vec![true; hyps.len()];
        let mut matched_pairs: Vec<(i64, i64, f64)> = Vec::new();

        // Carry previous-frame correspondences that still overlap.
        for (gi, entry) in considered.iter().enumerate() {
            if let Some(&hyp_id) = previous.get(&entry.id) {
                if let Some(hi) = hyps
                    .iter()
                    .position(|(id, _)| *id == hyp_id)
                    .filter(|&hi| hyp_open[hi])
                {
                    let overlap = entry.bbox.iou(&hyps[hi].1);
                    if overlap >= iou_threshold {
                        gt_open[gi] = false;
                        hyp_open[hi] = false;
                        matched_pairs.push((entry.id, hyp_id, overlap));
                    }
                }
            }
        }

        // Optimal matching of what remains, maximizing total IoU.
        let open_gt: Vec<usize> = (0..considered.len()).filter(|&i| gt_open[i]).collect();
        let open_hyp: Vec<usize> = (0..hyps.len()).filter(|&j| hyp_open[j]).collect();
        if !open_gt.is_empty() && !open_hyp.is_empty() {
            let mut costs = CostMatrix::new(open_gt.len(), open_hyp.len());
            let mut overlaps = vec![vec![0.0; open_hyp.len()]; open_gt.len()];
            for (r, &gi) in open_gt.iter().enumerate() {
                for (c, &hj) in open_hyp.iter().enumerate() {
                    let overlap = considered[gi].bbox.iou(&hyps[hj].1);
                    overlaps[r][c] = overlap;
                    costs.set(r, c, 1.0 - overlap);
                }
            }
            // Gate pairs below the threshold: reuse the d1-gate with the
            // "distance" 1 - IoU and threshold 1 - iou_threshold.
            let gated = gate(costs, &overlaps.iter().map(|row| {
                row.iter().map(|o| 1.0 - o).collect()
            }).collect::<Vec<_>>(), 1.0 - iou_threshold);
            let result = hungarian(&gated);
            for (r, c) in result.matches {
                let gi = open_gt[r];
                let hj = open_hyp[c];
                gt_open[gi] = false;
                hyp_open[hj] = false;
                matched_pairs.push((considered[gi].id, hyps[hj].0, overlaps[r][c]));
            }
        }

        for (gt_id, hyp_id, overlap) in &matched_pairs {
            num_matches += 1;
            iou_sum += overlap;
            if let Some(prev_hyp) = last_matched.get(gt_id) {
                if prev_hyp != hyp_id {
                    id_switches += 1;
                }
            }
            last_matched.insert(*gt_id, *hyp_id);
        }

        // Misses, and false positives that are not explained by a
        // non-considered ground-truth box (distractor absorption).
        false_negatives += gt_open.iter().filter(|&&open| open).count();
        for (hj, open) in hyp_open.iter().enumerate() {
            if *open {
                let absorbed = distractors
                    .iter()
                    .any(|d| d.bbox.iou(&hyps[hj].1) >= iou_threshold);
                if !absorbed {
                    false_positives += 1;
                }
            }
        }

        // Trajectory bookkeeping for MT/ML and fragmentations.
        for (gi, entry) in considered.iter().enumerate() {
            let matched_now = !gt_open[gi];
            let record = trajectory.entry(entry.id).or_insert((0, 0, false));
            let had_history = record.0 > 0;
            record.0 += 1;
            if matched_now {
                record.1 += 1;
            } else if had_history && record.2 {
                fragmentations += 1;
            }
            record.2 = matched_now;
        }

        previous = matched_pairs
            .iter()
            .map(|(gt_id, hyp_id, _)| (*gt_id, *hyp_id))
            .collect();
    }

    if num_gt == 0 {
        return Err(MetricsError::EmptyGroundTruth);
    }

    let errors = (false_negatives + false_positives + id_switches) as f64;
    let mota = 1.0 - errors / num_gt as f64;
    let motp = if num_matches > 0 {
        100.0 * iou_sum / num_matches as f64
    } else {
        0.0
    };
    let num_trajectories = trajectory.len();
    let mostly_tracked = trajectory
        .values()
        .filter(|(present, matched, _)| *matched as f64 >= 0.8 * *present as f64)
        .count() as f64
        / num_trajectories as f64;
    let mostly_lost = trajectory
        .values()
        .filter(|(present, matched, _)| *matched as f64 <= 0.2 * *present as f64)
        .count() as f64
        / num_trajectories as f64;

    Ok(EvalReport {
        mota,
        motp,
        mostly_tracked,
        mostly_lost,
        id_switches,
        fragmentations,
        false_positives,
        false_negatives,
        num_gt,
        num_matches,
    })
}

/// One aligned report row in the column order
/// `MOTA MOTP MT ML IDSW FM FP FN`, accuracy and precision printed as
/// percentages with one decimal, the trajectory ratios with three.
pub fn report_text(report: &EvalReport) -> String {
    format!(
        "{:.1}  {:.1}  {:.3}  {:.3}  {}  {}  {}  {}",
        report.mota * 100.0,
        report.motp,
        report.mostly_tracked,
        report.mostly_lost,
        report.id_switches,
        report.fragmentations,
        report.false_positives,
        report.false_negatives,
    )
}

/// Column header matching [`report_text`].
pub const REPORT_HEADER: &str = "MOTA  MOTP  MT  ML  IDSW  FM  FP  FN";
