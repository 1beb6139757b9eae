//! Detection quality metrics: IoU, greedy matching, recall, and
//! average precision / average recall pooled over scenes.
//!
//! Matching is class-aware and greedy in detection-score order: the highest
//! scored detection claims the best still-unmatched ground-truth box of its
//! class at or above the IoU threshold. Ties (equal scores, equal IoUs) are
//! broken toward lower indices so results never depend on iteration order.
//! AP is the all-point interpolated area under the precision/recall curve,
//! computed per class and IoU threshold, then averaged and reported in
//! percent. Recall over an empty ground-truth set is 1.0 by convention.

use crate::error::{Error, Result};
use crate::scene::BBox;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

/// Thresholds AP/AR are averaged over, plus the single threshold rewards use.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricConfig {
    pub iou_thresholds: Vec<f64>,
    pub reward_iou: f64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig {
            // 0.50 to 0.95 in steps of 0.05.
            iou_thresholds: (10..20).map(|i| i as f64 / 20.0).collect(),
            reward_iou: 0.5,
        }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iou_thresholds.is_empty() {
            return Err(Error::Config("iou_thresholds must not be empty".into()));
        }
        for t in self.iou_thresholds.iter().chain(core::iter::once(&self.reward_iou)) {
            if !(*t > 0.0 && *t <= 1.0) {
                return Err(Error::Config(format!("IoU threshold {t} outside (0, 1]")));
            }
        }
        Ok(())
    }
}

/// Outcome of matching one detection list against one ground-truth list.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    /// (gt index, det index, IoU) per matched pair.
    pub pairs: Vec<(usize, usize, f64)>,
    pub unmatched_gt: Vec<usize>,
    pub unmatched_det: Vec<usize>,
}

/// Intersection over union of two boxes. Degenerate boxes yield 0.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.rect().intersection_area(&b.rect());
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Detection indices sorted by score descending, missing scores sorting
/// last, ties broken by lower index.
fn score_order(det: &[BBox]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..det.len()).collect();
    order.sort_by(|&a, &b| {
        let sa = det[a].score.unwrap_or(f64::NEG_INFINITY);
        let sb = det[b].score.unwrap_or(f64::NEG_INFINITY);
        sb.partial_cmp(&sa).unwrap_or(core::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    order
}

/// Greedy score-ordered matching at a single IoU threshold.
pub fn match_greedy(gt: &[BBox], det: &[BBox], iou_threshold: f64) -> MatchResult {
    let mut gt_taken = vec![false; gt.len()];
    let mut pairs = Vec::new();
    let mut unmatched_det = Vec::new();
    for d in score_order(det) {
        let mut best: Option<(usize, f64)> = None;
        for (g, gbox) in gt.iter().enumerate() {
            if gt_taken[g] || gbox.class_id != det[d].class_id {
                continue;
            }
            let v = iou(gbox, &det[d]);
            if v >= iou_threshold {
                let better = match best {
                    None => true,
                    Some((_, bv)) => v > bv,
                };
                if better {
                    best = Some((g, v));
                }
            }
        }
        match best {
            Some((g, v)) => {
                gt_taken[g] = true;
                pairs.push((g, d, v));
            }
            None => unmatched_det.push(d),
        }
    }
    let unmatched_gt = (0..gt.len()).filter(|g| !gt_taken[*g]).collect();
    unmatched_det.sort_unstable();
    MatchResult { pairs, unmatched_gt, unmatched_det }
}

/// Fraction of ground-truth boxes matched at the threshold; 1.0 when there
/// is nothing to detect.
pub fn recall(gt: &[BBox], det: &[BBox], iou_threshold: f64) -> f64 {
    if gt.is_empty() {
        return 1.0;
    }
    let m = match_greedy(gt, det, iou_threshold);
    m.pairs.len() as f64 / gt.len() as f64
}

/// AP and AR averaged over classes and IoU thresholds, in percent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApAr {
    pub ap_percent: f64,
    pub ar_percent: f64,
}

/// Pooled evaluation over a dataset: detections for each scene are ranked
/// globally by score, matched greedily per scene, and the all-point
/// interpolated PR area is averaged over every (class, threshold) pair.
/// Classes are taken from ground truth; a dataset without any ground truth
/// has no defined metric.
pub fn average_precision(
    gt_by_scene: &[Vec<BBox>],
    det_by_scene: &[Vec<BBox>],
    config: &MetricConfig,
) -> Result<ApAr> {
    config.validate()?;
    if gt_by_scene.len() != det_by_scene.len() {
        return Err(Error::Argument(format!(
            "{} ground-truth scenes vs {} detection scenes",
            gt_by_scene.len(),
            det_by_scene.len()
        )));
    }
    let mut classes: Vec<u32> =
        gt_by_scene.iter().flatten().map(|b| b.class_id).collect();
    classes.sort_unstable();
    classes.dedup();
    if classes.is_empty() {
        return Err(Error::UndefinedMetric(
            "dataset contains no ground-truth boxes".into(),
        ));
    }

    let mut ap_sum = 0.0;
    let mut ar_sum = 0.0;
    let mut cells = 0usize;
    for &class in &classes {
        let n_gt: usize = gt_by_scene
            .iter()
            .map(|gts| gts.iter().filter(|b| b.class_id == class).count())
            .sum();
        let ranked = rank_detections(det_by_scene, class);
        for &t in &config.iou_thresholds {
            let tps = greedy_tp_flags(gt_by_scene, det_by_scene, &ranked, class, t);
            let (ap, rec) = pr_area(&tps, n_gt);
            ap_sum += ap;
            ar_sum += rec;
            cells += 1;
        }
    }
    Ok(ApAr {
        ap_percent: 100.0 * ap_sum / cells as f64,
        ar_percent: 100.0 * ar_sum / cells as f64,
    })
}

/// Detections of one class across scenes, ordered by score descending with
/// ties broken by (scene index, detection index).
fn rank_detections(det_by_scene: &[Vec<BBox>], class: u32) -> Vec<(usize, usize)> {
    let mut ranked: Vec<(usize, usize)> = det_by_scene
        .iter()
        .enumerate()
        .flat_map(|(s, dets)| {
            dets.iter()
                .enumerate()
                .filter(move |(_, d)| d.class_id == class)
                .map(move |(i, _)| (s, i))
        })
        .collect();
    ranked.sort_by(|&(sa, ia), &(sb, ib)| {
        let a = det_by_scene[sa][ia].score.unwrap_or(f64::NEG_INFINITY);
        let b = det_by_scene[sb][ib].score.unwrap_or(f64::NEG_INFINITY);
        b.partial_cmp(&a)
            .unwrap_or(core::cmp::Ordering::Equal)
            .then(sa.cmp(&sb))
            .then(ia.cmp(&ib))
    });
    ranked
}

/// True/false-positive flags for ranked detections, matching greedily
/// against per-scene ground truth of the class.
fn greedy_tp_flags(
    gt_by_scene: &[Vec<BBox>],
    det_by_scene: &[Vec<BBox>],
    ranked: &[(usize, usize)],
    class: u32,
    threshold: f64,
) -> Vec<bool> {
    let mut taken: Vec<Vec<bool>> =
        gt_by_scene.iter().map(|g| vec![false; g.len()]).collect();
    let mut tps = Vec::with_capacity(ranked.len());
    for &(s, d) in ranked {
        let det = &det_by_scene[s][d];
        let mut best: Option<(usize, f64)> = None;
        for (g, gbox) in gt_by_scene[s].iter().enumerate() {
            if taken[s][g] || gbox.class_id != class {
                continue;
            }
            let v = iou(gbox, det);
            if v >= threshold && best.is_none_or(|(_, bv)| v > bv) {
                best = Some((g, v));
            }
        }
        match best {
            Some((g, _)) => {
                taken[s][g] = true;
                tps.push(true);
            }
            None => tps.push(false),
        }
    }
    tps
}

/// All-point interpolated PR area plus final recall, from TP flags in rank
/// order. Precision at each recall level is the maximum precision achieved
/// at that recall or beyond.
fn pr_area(tps: &[bool], n_gt: usize) -> (f64, f64) {
    if n_gt == 0 {
        // No ground truth for this class cell; callers exclude this case.
        return (0.0, 0.0);
    }
    let n = tps.len();
    let mut cum = 0usize;
    let mut prec = Vec::with_capacity(n);
    let mut rec = Vec::with_capacity(n);
    for (k, &tp) in tps.iter().enumerate() {
        if tp {
            cum += 1;
        }
        prec.push(cum as f64 / (k + 1) as f64);
        rec.push(cum as f64 / n_gt as f64);
    }
    let final_recall = if n == 0 { 0.0 } else { rec[n - 1] };
    let mut ap = 0.0;
    let mut p_max = 0.0;
    let mut r_next = final_recall;
    for k in (0..n).rev() {
        if prec[k] > p_max {
            p_max = prec[k];
        }
        if tps[k] {
            let r_prev = if k == 0 { 0.0 } else { rec[k - 1] };
            ap += (r_next - r_prev) * p_max;
            r_next = r_prev;
        }
    }
    (ap, final_recall)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(cx: f64, cy: f64, w: f64, h: f64) -> BBox {
        BBox::new(cx, cy, w, h, 0)
    }

    fn d(cx: f64, cy: f64, w: f64, h: f64, score: f64) -> BBox {
        BBox::with_score(cx, cy, w, h, 0, score)
    }

    #[test]
    fn iou_of_identical_boxes_is_one() {
        let a = b(10.0, 10.0, 4.0, 6.0);
        assert_eq!(iou(&a, &a), 1.0);
    }

    #[test]
    fn iou_of_unit_offset_squares_is_a_third() {
        let a = b(1.0, 1.0, 2.0, 2.0);
        let c = b(2.0, 1.0, 2.0, 2.0);
        assert!((iou(&a, &c) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn iou_of_disjoint_and_touching_boxes_is_zero() {
        let a = b(0.0, 0.0, 2.0, 2.0);
        assert_eq!(iou(&a, &b(10.0, 0.0, 2.0, 2.0)), 0.0);
        // Sharing an edge only: zero intersection area.
        assert_eq!(iou(&a, &b(2.0, 0.0, 2.0, 2.0)), 0.0);
    }

    #[test]
    fn higher_score_claims_the_ground_truth_first() {
        // The better-overlapping detection loses the box to the higher score.
        let gt = [b(0.0, 0.0, 10.0, 10.0)];
        let det = [
            BBox::with_score(0.5, 0.0, 10.0, 10.0, 0, 0.5), // IoU ~0.9
            BBox::with_score(2.0, 0.0, 10.0, 10.0, 0, 0.9), // IoU ~0.67
        ];
        let m = match_greedy(&gt, &det, 0.5);
        assert_eq!(m.pairs.len(), 1);
        assert_eq!(m.pairs[0].0, 0);
        assert_eq!(m.pairs[0].1, 1);
        assert_eq!(m.unmatched_det, alloc::vec![0]);
    }

    #[test]
    fn matching_is_class_aware() {
        let gt = [BBox::new(0.0, 0.0, 10.0, 10.0, 1)];
        let det = [BBox::with_score(0.0, 0.0, 10.0, 10.0, 0, 0.9)];
        let m = match_greedy(&gt, &det, 0.5);
        assert!(m.pairs.is_empty());
    }

    #[test]
    fn equal_iou_ties_go_to_lower_gt_index() {
        let gt = [b(0.0, 0.0, 10.0, 10.0), b(0.0, 0.0, 10.0, 10.0)];
        let det = [d(0.0, 0.0, 10.0, 10.0, 0.9)];
        let m = match_greedy(&gt, &det, 0.5);
        assert_eq!(m.pairs[0].0, 0);
        assert_eq!(m.unmatched_gt, alloc::vec![1]);
    }

    #[test]
    fn recall_over_empty_ground_truth_is_one() {
        assert_eq!(recall(&[], &[d(0.0, 0.0, 1.0, 1.0, 0.5)], 0.5), 1.0);
        assert_eq!(recall(&[], &[], 0.5), 1.0);
    }

    #[test]
    fn perfect_detections_score_hundred() {
        let gt = alloc::vec![b(10.0, 10.0, 4.0, 4.0), b(30.0, 30.0, 6.0, 6.0)];
        let det: Vec<BBox> = gt
            .iter()
            .map(|g| BBox::with_score(g.cx, g.cy, g.w, g.h, g.class_id, 0.9))
            .collect();
        let r = average_precision(&[gt], &[det], &MetricConfig::default()).unwrap();
        assert!((r.ap_percent - 100.0).abs() < 1e-9);
        assert!((r.ar_percent - 100.0).abs() < 1e-9);
    }

    #[test]
    fn no_detections_scores_zero() {
        let gt = alloc::vec![b(10.0, 10.0, 4.0, 4.0)];
        let r = average_precision(&[gt], &[Vec::new()], &MetricConfig::default()).unwrap();
        assert_eq!(r.ap_percent, 0.0);
        assert_eq!(r.ar_percent, 0.0);
    }

    #[test]
    fn no_ground_truth_is_undefined() {
        let err =
            average_precision(&[Vec::new()], &[Vec::new()], &MetricConfig::default()).unwrap_err();
        assert!(matches!(err, Error::UndefinedMetric(_)));
    }

    #[test]
    fn mismatched_scene_counts_rejected() {
        let err = average_precision(&[Vec::new(), Vec::new()], &[Vec::new()], &MetricConfig::default())
            .unwrap_err();
        assert!(matches!(err, Error::Argument(_)));
    }

    #[test]
    fn false_positive_ranked_above_tp_halves_ap_shape() {
        // One gt, one perfect detection, one higher-scored far-away FP:
        // precision at the TP is 1/2, so AP = 0.5 while AR stays 1.
        let gt = alloc::vec![b(10.0, 10.0, 4.0, 4.0)];
        let det = alloc::vec![
            d(100.0, 100.0, 4.0, 4.0, 0.95),
            d(10.0, 10.0, 4.0, 4.0, 0.6),
        ];
        let cfg = MetricConfig { iou_thresholds: alloc::vec![0.5], reward_iou: 0.5 };
        let r = average_precision(&[gt], &[det], &cfg).unwrap();
        assert!((r.ap_percent - 50.0).abs() < 1e-9);
        assert!((r.ar_percent - 100.0).abs() < 1e-9);
    }

    #[test]
    fn ap_invariant_under_order_preserving_score_rescale() {
        let gt = alloc::vec![b(10.0, 10.0, 4.0, 4.0), b(30.0, 10.0, 4.0, 4.0)];
        let det = alloc::vec![
            d(10.5, 10.0, 4.0, 4.0, 0.8),
            d(29.0, 10.0, 4.0, 4.0, 0.4),
            d(70.0, 70.0, 4.0, 4.0, 0.6),
        ];
        let scaled: Vec<BBox> = det
            .iter()
            .map(|x| BBox::with_score(x.cx, x.cy, x.w, x.h, x.class_id, x.score.unwrap() * 0.5))
            .collect();
        let cfg = MetricConfig::default();
        let gt_scenes = [gt];
        let a = average_precision(&gt_scenes, &[det], &cfg).unwrap();
        let bb = average_precision(&gt_scenes, &[scaled], &cfg).unwrap();
        assert_eq!(a.ap_percent, bb.ap_percent);
        assert_eq!(a.ar_percent, bb.ar_percent);
    }
}
