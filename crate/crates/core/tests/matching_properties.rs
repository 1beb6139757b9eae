//! Structural guarantees of greedy score-ordered matching, checked against
//! a brute-force maximum bipartite matching on random box sets.

use zoomcascade_core::metrics::{iou, match_greedy, recall};
use zoomcascade_core::rng::RngStream;
use zoomcascade_core::scene::BBox;

/// Maximum matching size over (gt, det) pairs with equal class and IoU at
/// or above the threshold, by dynamic programming over detection index and
/// the set of taken ground-truth boxes.
fn max_matching(gt: &[BBox], det: &[BBox], threshold: f64) -> usize {
    assert!(gt.len() <= 16, "bitmask capacity");
    let adj: Vec<Vec<usize>> = det
        .iter()
        .map(|d| {
            gt.iter()
                .enumerate()
                .filter(|(_, g)| g.class_id == d.class_id && iou(g, d) >= threshold)
                .map(|(g, _)| g)
                .collect()
        })
        .collect();
    let mut memo = vec![u8::MAX; (det.len() + 1) << gt.len()];
    fn solve(adj: &[Vec<usize>], d: usize, used: usize, n_gt: usize, memo: &mut [u8]) -> u8 {
        if d == adj.len() {
            return 0;
        }
        let key = (d << n_gt) | used;
        if memo[key] != u8::MAX {
            return memo[key];
        }
        let mut best = solve(adj, d + 1, used, n_gt, memo);
        for &g in &adj[d] {
            if used >> g & 1 == 0 {
                best = best.max(1 + solve(adj, d + 1, used | 1 << g, n_gt, memo));
            }
        }
        memo[key] = best;
        best
    }
    solve(&adj, 0, 0, gt.len(), &mut memo) as usize
}

fn gen_boxes(rng: &mut RngStream, two_classes: bool) -> (Vec<BBox>, Vec<BBox>) {
    let n_classes = if two_classes { 2 } else { 1 };
    let mut gt = Vec::new();
    for _ in 0..rng.index(7) {
        gt.push(BBox::new(
            rng.uniform(15.0, 85.0),
            rng.uniform(15.0, 85.0),
            rng.uniform(5.0, 30.0),
            rng.uniform(5.0, 30.0),
            rng.index(n_classes) as u32,
        ));
    }
    let mut det = Vec::new();
    for _ in 0..rng.index(8) {
        let b = if !gt.is_empty() && rng.bernoulli(0.75) {
            let src = gt[rng.index(gt.len())].clone();
            BBox::new(
                src.cx + rng.uniform(-8.0, 8.0),
                src.cy + rng.uniform(-8.0, 8.0),
                (src.w * rng.uniform(0.6, 1.5)).max(1.0),
                (src.h * rng.uniform(0.6, 1.5)).max(1.0),
                src.class_id,
            )
        } else {
            BBox::new(
                rng.uniform(15.0, 85.0),
                rng.uniform(15.0, 85.0),
                rng.uniform(5.0, 30.0),
                rng.uniform(5.0, 30.0),
                rng.index(n_classes) as u32,
            )
        };
        det.push(BBox { score: Some(rng.next_f64()), ..b });
    }
    (gt, det)
}

#[test]
fn greedy_matching_is_valid_and_near_optimal() {
    for seed in 0..300u64 {
        let mut rng = RngStream::derive(seed, &[0x6d61]);
        let (gt, det) = gen_boxes(&mut rng, seed % 3 == 0);
        for threshold in [0.3, 0.5, 0.75] {
            let m = match_greedy(&gt, &det, threshold);

            // Every pair is a legal edge, and nothing is used twice.
            let mut gt_seen = vec![false; gt.len()];
            let mut det_seen = vec![false; det.len()];
            for &(g, d, v) in &m.pairs {
                assert!(!gt_seen[g] && !det_seen[d], "seed {seed}: reused index");
                gt_seen[g] = true;
                det_seen[d] = true;
                assert_eq!(gt[g].class_id, det[d].class_id, "seed {seed}");
                assert!(v >= threshold, "seed {seed}: pair IoU {v} below {threshold}");
                assert!((v - iou(&gt[g], &det[d])).abs() < 1e-15, "seed {seed}");
            }
            assert_eq!(m.pairs.len() + m.unmatched_gt.len(), gt.len(), "seed {seed}");
            assert_eq!(m.pairs.len() + m.unmatched_det.len(), det.len(), "seed {seed}");

            // Greedy is maximal: no leftover legal edge between unmatched
            // boxes on either side.
            for &g in &m.unmatched_gt {
                for &d in &m.unmatched_det {
                    assert!(
                        gt[g].class_id != det[d].class_id || iou(&gt[g], &det[d]) < threshold,
                        "seed {seed}: augmenting edge {g}-{d} left behind"
                    );
                }
            }

            // Bracketed by the brute-force optimum: a maximal matching is
            // at most the maximum and at least half of it.
            let opt = max_matching(&gt, &det, threshold);
            assert!(m.pairs.len() <= opt, "seed {seed}: greedy {} > optimal {opt}", m.pairs.len());
            assert!(2 * m.pairs.len() >= opt, "seed {seed}: greedy {} < half of {opt}", m.pairs.len());
        }
    }
}

#[test]
fn recall_never_increases_with_the_threshold() {
    let sweep: Vec<f64> = (1..20).map(|i| i as f64 / 20.0).collect();
    for seed in 0..300u64 {
        let mut rng = RngStream::derive(seed, &[0x7263]);
        let (gt, det) = gen_boxes(&mut rng, seed % 3 == 0);
        let mut last = f64::INFINITY;
        for &t in &sweep {
            let r = recall(&gt, &det, t);
            assert!((0.0..=1.0).contains(&r), "seed {seed}");
            assert!(
                r <= last + 1e-15,
                "seed {seed}: recall rose from {last} to {r} at threshold {t}"
            );
            last = r;
        }
    }
}

#[test]
fn higher_scored_detection_picks_first() {
    let gt = vec![BBox::new(50.0, 50.0, 20.0, 20.0, 0)];
    // Both detections overlap the single box; the later, higher-scored one
    // must win it.
    let det = vec![
        BBox::with_score(52.0, 50.0, 20.0, 20.0, 0, 0.3),
        BBox::with_score(50.0, 50.0, 20.0, 20.0, 0, 0.9),
    ];
    let m = match_greedy(&gt, &det, 0.5);
    assert_eq!(m.pairs.len(), 1);
    assert_eq!(m.pairs[0].0, 0);
    assert_eq!(m.pairs[0].1, 1, "score order decides contention");
    assert_eq!(m.unmatched_det, vec![0]);
}
