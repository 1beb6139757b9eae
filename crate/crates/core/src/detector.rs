//! Simulated object detectors and recorded-detection replay.
//!
//! A detector is a stochastic emitter: each ground-truth box in a tile is
//! reported with a probability that rises logistically with object size
//! relative to the detector's characteristic size, jittered in position and
//! extent, and scored near its emission probability. Tiles also sprout
//! Poisson-distributed false positives. The coarse tier has a larger
//! characteristic size than the fine tier, so the fine tier sees every
//! object at least as reliably; it is also more expensive per tile.
//!
//! Jitter draws are clamped to two standard deviations, which bounds how
//! far a reported box can drift. With `loc_noise <= 0.05` the IoU between a
//! report and its source never falls below ~0.66, so [`expected_recall`]
//! (the mean emission probability) is an exact analytic oracle for recall
//! at the default 0.5 reward IoU.

use crate::error::{Error, Result};
use crate::math;
use crate::rng::RngStream;
use crate::scene::{BBox, Rect};
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Tier {
    Coarse,
    Fine,
}

impl Tier {
    pub fn name(&self) -> &'static str {
        match self {
            Tier::Coarse => "coarse",
            Tier::Fine => "fine",
        }
    }

    /// Stable tag for RNG stream derivation.
    pub fn tag(&self) -> u64 {
        match self {
            Tier::Coarse => 1,
            Tier::Fine => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorConfig {
    pub tier: Tier,
    /// Object size (geometric mean of extent) detected with probability 0.5.
    pub char_size: f64,
    /// Slope of the logistic detectability curve.
    pub steepness: f64,
    /// Jitter scale as a fraction of object extent.
    pub loc_noise: f64,
    /// Expected false positives per tile.
    pub fp_rate: f64,
    /// Log-uniform side-length range for false positives.
    pub fp_size_range: (f64, f64),
    /// Classes false positives are drawn from, uniformly.
    pub fp_classes: Vec<u32>,
    /// Standard deviation of the additive score noise.
    pub score_noise: f64,
    /// Modeled inference cost for one subpatch-sized tile.
    pub unit_cost_ms: f64,
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.char_size > 0.0) {
            return Err(Error::Config(format!("char_size {} must be positive", self.char_size)));
        }
        if !(self.steepness > 0.0) {
            return Err(Error::Config(format!("steepness {} must be positive", self.steepness)));
        }
        if !(0.0..0.5).contains(&self.loc_noise) {
            return Err(Error::Config(format!(
                "loc_noise {} outside [0, 0.5); larger jitter could invert boxes",
                self.loc_noise
            )));
        }
        if !(self.fp_rate >= 0.0) {
            return Err(Error::Config(format!("fp_rate {} must be >= 0", self.fp_rate)));
        }
        let (lo, hi) = self.fp_size_range;
        if !(lo > 0.0 && hi >= lo) {
            return Err(Error::Config(format!("fp_size_range ({lo}, {hi}) must satisfy 0 < lo <= hi")));
        }
        if self.fp_rate > 0.0 && self.fp_classes.is_empty() {
            return Err(Error::Config("fp_classes empty while fp_rate > 0".into()));
        }
        if !(self.score_noise >= 0.0) {
            return Err(Error::Config(format!("score_noise {} must be >= 0", self.score_noise)));
        }
        if !(self.unit_cost_ms >= 0.0) {
            return Err(Error::Config(format!("unit_cost_ms {} must be >= 0", self.unit_cost_ms)));
        }
        Ok(())
    }
}

/// The coarse/fine detector pair a cascade chooses between.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorPair {
    pub coarse: DetectorConfig,
    pub fine: DetectorConfig,
}

/// The stock detector pair: a cheap tier that reliably sees objects from
/// ~45 px up and a 5x-costlier tier good down to ~6 px, with mild
/// localization jitter, score noise, and sparse false positives.
impl Default for DetectorPair {
    fn default() -> Self {
        let coarse = DetectorConfig {
            tier: Tier::Coarse,
            char_size: 45.0,
            steepness: 3.0,
            loc_noise: 0.03,
            fp_rate: 0.15,
            fp_size_range: (8.0, 160.0),
            fp_classes: alloc::vec![0, 1],
            score_noise: 0.05,
            unit_cost_ms: 10.0,
        };
        let fine = DetectorConfig {
            tier: Tier::Fine,
            char_size: 6.0,
            steepness: 3.0,
            fp_rate: 0.05,
            unit_cost_ms: 50.0,
            ..coarse.clone()
        };
        DetectorPair { coarse, fine }
    }
}

impl DetectorPair {
    /// Validates both tiers plus the cross-tier ordering guarantees:
    /// the fine tier must detect every object size at least as readily as
    /// the coarse tier, which requires `fine.char_size < coarse.char_size`,
    /// `fine.steepness <= coarse.steepness`, and
    /// `fine.steepness / fine.char_size >= coarse.steepness / coarse.char_size`.
    pub fn validate(&self) -> Result<()> {
        self.coarse.validate()?;
        self.fine.validate()?;
        if self.coarse.tier != Tier::Coarse || self.fine.tier != Tier::Fine {
            return Err(Error::Config("detector pair tiers are mislabeled".into()));
        }
        if !(self.coarse.char_size > self.fine.char_size) {
            return Err(Error::Config(format!(
                "coarse char_size {} must exceed fine char_size {}",
                self.coarse.char_size, self.fine.char_size
            )));
        }
        if self.fine.steepness > self.coarse.steepness {
            return Err(Error::Config(format!(
                "fine steepness {} must not exceed coarse steepness {}",
                self.fine.steepness, self.coarse.steepness
            )));
        }
        if self.fine.steepness * self.coarse.char_size
            < self.coarse.steepness * self.fine.char_size
        {
            return Err(Error::Config(
                "steepness/char_size ratios would let the coarse tier outperform \
                 the fine tier on large objects"
                    .into(),
            ));
        }
        Ok(())
    }

    pub fn get(&self, tier: Tier) -> &DetectorConfig {
        match tier {
            Tier::Coarse => &self.coarse,
            Tier::Fine => &self.fine,
        }
    }
}

/// Detections produced for one tile.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionSet {
    pub patch_index: usize,
    pub subpatch_index: Option<usize>,
    pub tier: Tier,
    pub boxes: Vec<BBox>,
}

/// Probability that the detector reports this object: logistic in the ratio
/// of object size (geometric mean of width and height) to characteristic size.
pub fn detection_probability(config: &DetectorConfig, b: &BBox) -> f64 {
    let size = math::sqrt(b.w * b.h);
    math::sigmoid(config.steepness * (size / config.char_size - 1.0))
}

/// Runs the simulated detector on one tile.
///
/// Draw order is part of the determinism contract: for each ground-truth box
/// in list order, one emission draw, then (if emitted) four clamped jitter
/// draws and one score draw; then the false-positive count, then per false
/// positive its position, size, class, and score.
pub fn detect(
    config: &DetectorConfig,
    gt_in_tile: &[BBox],
    tile: &Rect,
    patch_index: usize,
    subpatch_index: Option<usize>,
    rng: &mut RngStream,
) -> DetectionSet {
    let mut boxes = Vec::new();
    for gt in gt_in_tile {
        let p = detection_probability(config, gt);
        if !rng.bernoulli(p) {
            continue;
        }
        let dx = rng.gaussian_clamped(config.loc_noise * gt.w);
        let dy = rng.gaussian_clamped(config.loc_noise * gt.h);
        let dw = rng.gaussian_clamped(config.loc_noise * gt.w);
        let dh = rng.gaussian_clamped(config.loc_noise * gt.h);
        let score = (p + rng.gaussian() * config.score_noise).clamp(0.0, 1.0);
        boxes.push(BBox::with_score(
            gt.cx + dx,
            gt.cy + dy,
            gt.w + dw,
            gt.h + dh,
            gt.class_id,
            score,
        ));
    }
    let n_fp = rng.poisson(config.fp_rate);
    for _ in 0..n_fp {
        let cx = rng.uniform(tile.x0, tile.x1);
        let cy = rng.uniform(tile.y0, tile.y1);
        let (lo, hi) = config.fp_size_range;
        let side = rng.log_uniform(lo, hi);
        let class = config.fp_classes[rng.index(config.fp_classes.len())];
        let score = rng.uniform(0.1, 0.5);
        boxes.push(BBox::with_score(cx, cy, side, side, class, score));
    }
    DetectionSet { patch_index, subpatch_index, tier: config.tier, boxes }
}

/// Analytic expected recall for a tile: the mean emission probability over
/// its ground truth (1.0 for an empty tile).
///
/// Exact only while jitter cannot push a reported box below the reward IoU
/// threshold; with 2-sigma-clamped jitter that holds for the default 0.5
/// threshold whenever `loc_noise <= 0.05`, which is enforced here.
pub fn expected_recall(config: &DetectorConfig, gt_in_tile: &[BBox]) -> Result<f64> {
    if config.loc_noise > 0.05 {
        return Err(Error::Config(format!(
            "loc_noise {} too large for the analytic recall oracle (max 0.05)",
            config.loc_noise
        )));
    }
    if gt_in_tile.is_empty() {
        return Ok(1.0);
    }
    let sum: f64 = gt_in_tile.iter().map(|b| detection_probability(config, b)).sum();
    Ok(sum / gt_in_tile.len() as f64)
}

/// Recorded detector outputs keyed by (scene, patch, subpatch, tier).
/// Evaluating against an archive replays detections verbatim, with no
/// randomness involved.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReplayArchive {
    entries: BTreeMap<(String, usize, Option<usize>, Tier), Vec<BBox>>,
}

impl ReplayArchive {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(
        &mut self,
        scene_id: &str,
        patch_index: usize,
        subpatch_index: Option<usize>,
        tier: Tier,
        boxes: Vec<BBox>,
    ) {
        self.entries.insert((scene_id.into(), patch_index, subpatch_index, tier), boxes);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(
        &self,
    ) -> impl Iterator<Item = (&(String, usize, Option<usize>, Tier), &Vec<BBox>)> {
        self.entries.iter()
    }

    /// Looks up the recorded detections for a tile; missing entries are an
    /// error naming the full key, never an empty detection list.
    pub fn replay_detect(
        &self,
        scene_id: &str,
        patch_index: usize,
        subpatch_index: Option<usize>,
        tier: Tier,
    ) -> Result<DetectionSet> {
        let key = (String::from(scene_id), patch_index, subpatch_index, tier);
        match self.entries.get(&key) {
            Some(boxes) => Ok(DetectionSet {
                patch_index,
                subpatch_index,
                tier,
                boxes: boxes.clone(),
            }),
            None => Err(Error::Lookup(format!(
                "no replay entry for scene '{scene_id}' patch {patch_index} \
                 subpatch {subpatch_index:?} tier {}",
                tier.name()
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics;

    pub(crate) fn test_config(tier: Tier, char_size: f64) -> DetectorConfig {
        DetectorConfig {
            tier,
            char_size,
            steepness: 3.0,
            loc_noise: 0.03,
            fp_rate: 0.0,
            fp_size_range: (8.0, 160.0),
            fp_classes: alloc::vec![0, 1],
            score_noise: 0.05,
            unit_cost_ms: if tier == Tier::Coarse { 10.0 } else { 50.0 },
        }
    }

    fn tile() -> Rect {
        Rect { x0: 0.0, y0: 0.0, x1: 320.0, y1: 320.0 }
    }

    #[test]
    fn characteristic_size_detects_at_half_probability() {
        let cfg = test_config(Tier::Coarse, 24.0);
        let b = BBox::new(100.0, 100.0, 24.0, 24.0, 0);
        assert_eq!(detection_probability(&cfg, &b), 0.5);
        // Geometric mean matters, not either side alone.
        let b = BBox::new(100.0, 100.0, 48.0, 12.0, 0);
        assert_eq!(detection_probability(&cfg, &b), 0.5);
    }

    #[test]
    fn detection_probability_is_monotone_in_size() {
        let cfg = test_config(Tier::Fine, 12.0);
        let mut last = 0.0;
        for s in 1..200 {
            let b = BBox::new(0.0, 0.0, s as f64, s as f64, 0);
            let p = detection_probability(&cfg, &b);
            assert!(p >= last);
            last = p;
        }
    }

    #[test]
    fn detect_is_deterministic_per_stream() {
        let cfg = test_config(Tier::Fine, 12.0);
        let gt = alloc::vec![
            BBox::new(50.0, 60.0, 20.0, 20.0, 0),
            BBox::new(200.0, 100.0, 14.0, 18.0, 1),
        ];
        let a = detect(&cfg, &gt, &tile(), 3, Some(1), &mut RngStream::derive(9, &[1, 2]));
        let b = detect(&cfg, &gt, &tile(), 3, Some(1), &mut RngStream::derive(9, &[1, 2]));
        assert_eq!(a, b);
        let c = detect(&cfg, &gt, &tile(), 3, Some(1), &mut RngStream::derive(9, &[1, 3]));
        assert!(a != c || a.boxes.is_empty());
    }

    #[test]
    fn expected_recall_averages_emission_probabilities() {
        // Two objects at p = 0.9 and p = 0.3 give 0.6; sizes are solved from
        // the logistic inverse: size = char * (1 + ln(p/(1-p)) / steepness).
        let cfg = test_config(Tier::Coarse, 30.0);
        let size_for = |p: f64| 30.0 * (1.0 + (p / (1.0 - p)).ln() / 3.0);
        let gt = alloc::vec![
            BBox::new(0.0, 0.0, size_for(0.9), size_for(0.9), 0),
            BBox::new(0.0, 0.0, size_for(0.3), size_for(0.3), 0),
        ];
        let r = expected_recall(&cfg, &gt).unwrap();
        assert!((r - 0.6).abs() < 1e-12, "{r}");
    }

    #[test]
    fn expected_recall_of_empty_tile_is_one() {
        let cfg = test_config(Tier::Coarse, 30.0);
        assert_eq!(expected_recall(&cfg, &[]).unwrap(), 1.0);
    }

    #[test]
    fn expected_recall_rejects_large_jitter() {
        let mut cfg = test_config(Tier::Coarse, 30.0);
        cfg.loc_noise = 0.1;
        assert!(matches!(expected_recall(&cfg, &[]), Err(Error::Config(_))));
    }

    #[test]
    fn sampled_recall_matches_analytic_recall() {
        let cfg = test_config(Tier::Fine, 12.0);
        let gt = alloc::vec![BBox::new(160.0, 160.0, 16.0, 16.0, 0)];
        let p = detection_probability(&cfg, &gt[0]);
        let trials = 10_000;
        let mut hits = 0;
        for t in 0..trials {
            let mut rng = RngStream::derive(77, &[t]);
            let out = detect(&cfg, &gt, &tile(), 0, None, &mut rng);
            if metrics::recall(&gt, &out.boxes, 0.5) == 1.0 {
                hits += 1;
            }
        }
        let emp = hits as f64 / trials as f64;
        assert!((emp - p).abs() < 0.02, "empirical {emp} vs analytic {p}");
    }

    #[test]
    fn jittered_reports_never_fall_below_the_reward_iou() {
        let mut cfg = test_config(Tier::Fine, 1.0);
        cfg.loc_noise = 0.05; // the oracle's limit
        let mut min_iou = 1.0;
        for t in 0..10_000u64 {
            let gt = alloc::vec![BBox::new(160.0, 160.0, 20.0, 44.0, 0)];
            let mut rng = RngStream::derive(13, &[t]);
            let out = detect(&cfg, &gt, &tile(), 0, None, &mut rng);
            for b in &out.boxes {
                min_iou = f64::min(min_iou, metrics::iou(&gt[0], b));
            }
        }
        assert!(min_iou >= 0.5, "worst IoU {min_iou}");
    }

    #[test]
    fn fine_tier_always_at_least_as_sensitive() {
        let pair = DetectorPair {
            coarse: test_config(Tier::Coarse, 45.0),
            fine: test_config(Tier::Fine, 6.0),
        };
        pair.validate().unwrap();
        let mut rng = RngStream::new(5);
        for _ in 0..1000 {
            let s = rng.log_uniform(1.0, 500.0);
            let b = BBox::new(0.0, 0.0, s, s, 0);
            let pf = detection_probability(&pair.fine, &b);
            let pc = detection_probability(&pair.coarse, &b);
            assert!(pf >= pc, "size {s}: fine {pf} < coarse {pc}");
        }
    }

    #[test]
    fn pair_validation_rejects_inverted_tiers() {
        let mut pair = DetectorPair {
            coarse: test_config(Tier::Coarse, 10.0),
            fine: test_config(Tier::Fine, 45.0),
        };
        assert!(pair.validate().is_err());
        pair.coarse.char_size = 45.0;
        pair.fine.char_size = 6.0;
        pair.fine.steepness = 10.0; // steeper fine curve loses on small sizes
        assert!(pair.validate().is_err());
        pair.fine.steepness = 0.2; // too shallow: coarse wins on large sizes
        assert!(pair.validate().is_err());
        pair.fine.steepness = 3.0;
        pair.validate().unwrap();
    }

    #[test]
    fn false_positives_stay_in_tile_with_bounded_scores() {
        let mut cfg = test_config(Tier::Coarse, 30.0);
        cfg.fp_rate = 2.0;
        let t = tile();
        let mut total = 0usize;
        for i in 0..5_000u64 {
            let mut rng = RngStream::derive(3, &[i]);
            let out = detect(&cfg, &[], &t, 0, None, &mut rng);
            total += out.boxes.len();
            for b in &out.boxes {
                assert!(t.contains(b.cx, b.cy));
                let s = b.score.unwrap();
                assert!((0.1..=0.5).contains(&s));
                let (lo, hi) = cfg.fp_size_range;
                assert!(b.w >= lo && b.w <= hi);
                assert!(cfg.fp_classes.contains(&b.class_id));
            }
        }
        let mean = total as f64 / 5_000.0;
        assert!((mean - 2.0).abs() < 0.1, "mean fp count {mean}");
    }

    #[test]
    fn replay_returns_recorded_boxes_and_rejects_unknown_keys() {
        let mut archive = ReplayArchive::new();
        let boxes = alloc::vec![BBox::with_score(10.0, 10.0, 5.0, 5.0, 0, 0.8)];
        archive.insert("scene_a", 2, Some(1), Tier::Fine, boxes.clone());
        let got = archive.replay_detect("scene_a", 2, Some(1), Tier::Fine).unwrap();
        assert_eq!(got.boxes, boxes);
        assert_eq!(got.tier, Tier::Fine);
        let err = archive.replay_detect("scene_a", 2, Some(1), Tier::Coarse).unwrap_err();
        assert!(matches!(err, Error::Lookup(_)), "{err}");
        let err = archive.replay_detect("scene_b", 2, Some(1), Tier::Fine).unwrap_err();
        assert!(format!("{err}").contains("scene_b"));
    }
}
