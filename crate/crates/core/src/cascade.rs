//! Inference-time cascade, fixed baseline policies, and evaluation.
//!
//! At inference the patch policy reads the scene raster and greedily picks
//! patches; inside each picked patch the subpatch policy picks subpatches,
//! which are acquired at the fine tier while everything else runs coarse.
//! Detections from all tiles are merged with cross-tile non-maximum
//! suppression and scored against ground truth. Runtime is modeled, not
//! measured: per-subpatch detector costs plus per-network overheads, and a
//! policy only pays for networks it actually ran.
//!
//! Fixed baselines share the machinery: sliding windows (all-coarse /
//! all-fine), flat per-subpatch random zooming, single-level variants of
//! the cascade, and a threshold rule on mean coarse-probe scores. The
//! probe-based rule pays for its probes: subpatches it re-acquires fine
//! still charge the coarse pass that triggered them.
//!
//! Detector draws derive from `(EVAL, scene, patch, sub+1, tier)` under the
//! evaluation seed; the random baseline's bits from `(POLICY, scene)`.

use crate::detector::{detect, DetectionSet, DetectorPair, ReplayArchive, Tier};
use crate::error::{Error, Result};
use crate::metrics::{average_precision, MetricConfig};
use crate::policy::{greedy_actions, ActionVector, PolicyModel};
use crate::rng::{hash_str, RngStream};
use crate::scene::{
    assign_boxes, crop_observation, rasterize, BBox, BoxAssignment, GridLayout,
    RasterObservation, Scene,
};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

const DOMAIN_EVAL: u64 = 0x45;
const DOMAIN_POLICY: u64 = 0x50;

/// IoU at which two same-class detections count as duplicates when merging.
pub const NMS_IOU: f64 = 0.5;

/// How policies observe scenes: raster resolution and per-class paint
/// intensity. The patch policy sees the whole-scene raster; the subpatch
/// policy sees one patch's aligned crop of it.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSpec {
    /// Side of the square whole-scene raster.
    pub cpnet_side: usize,
    pub class_intensity: Vec<(u32, f64)>,
}

impl Default for ObservationSpec {
    fn default() -> Self {
        ObservationSpec { cpnet_side: 64, class_intensity: vec![(0, 1.0), (1, 0.4)] }
    }
}

impl ObservationSpec {
    pub fn validate(&self, grid: &GridLayout) -> Result<()> {
        if self.cpnet_side == 0 {
            return Err(Error::Config("raster side must be positive".into()));
        }
        if !self.cpnet_side.is_multiple_of(grid.patches_per_side as usize) {
            return Err(Error::Config(format!(
                "raster side {} does not split across {} patches per side",
                self.cpnet_side, grid.patches_per_side
            )));
        }
        Ok(())
    }

    /// Side of one patch's crop of the scene raster.
    pub fn fpnet_side(&self, grid: &GridLayout) -> usize {
        self.cpnet_side / grid.patches_per_side as usize
    }

    pub fn scene_raster(&self, scene: &Scene) -> Result<RasterObservation> {
        rasterize(scene, self.cpnet_side, self.cpnet_side, &self.class_intensity)
    }
}

/// Modeled per-scene runtime: per-subpatch detector costs plus policy
/// network overheads.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostModel {
    /// Coarse inference per subpatch-sized tile.
    pub t_coarse_ms: f64,
    /// Fine inference per subpatch-sized tile.
    pub t_fine_ms: f64,
    /// Patch-policy overhead, once per scene where it runs.
    pub t_cpnet_ms: f64,
    /// Subpatch-policy overhead per patch it runs on.
    pub t_fpnet_ms: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel { t_coarse_ms: 10.0, t_fine_ms: 50.0, t_cpnet_ms: 30.0, t_fpnet_ms: 2.0 }
    }
}

impl CostModel {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("t_coarse_ms", self.t_coarse_ms),
            ("t_fine_ms", self.t_fine_ms),
            ("t_cpnet_ms", self.t_cpnet_ms),
            ("t_fpnet_ms", self.t_fpnet_ms),
        ] {
            if !(v >= 0.0) {
                return Err(Error::Config(format!("{name} {v} must be >= 0")));
            }
        }
        if self.t_fine_ms < self.t_coarse_ms {
            return Err(Error::Config(format!(
                "t_fine_ms {} below t_coarse_ms {}; zooming must never be cheaper",
                self.t_fine_ms, self.t_coarse_ms
            )));
        }
        Ok(())
    }

    /// The cascade's accounting identity:
    /// `t_cpnet + activated * t_fpnet + fine * t_fine + coarse * t_coarse`.
    pub fn cascade_runtime(
        &self,
        activated_patches: usize,
        fine_subpatches: usize,
        coarse_subpatches: usize,
    ) -> f64 {
        self.t_cpnet_ms
            + activated_patches as f64 * self.t_fpnet_ms
            + fine_subpatches as f64 * self.t_fine_ms
            + coarse_subpatches as f64 * self.t_coarse_ms
    }

    fn runtime(
        &self,
        cpnet_ran: bool,
        fpnet_invocations: usize,
        fine: usize,
        coarse: usize,
        wasted_probes: usize,
    ) -> f64 {
        let overhead = if cpnet_ran { self.t_cpnet_ms } else { 0.0 };
        overhead
            + fpnet_invocations as f64 * self.t_fpnet_ms
            + fine as f64 * self.t_fine_ms
            + (coarse + wasted_probes) as f64 * self.t_coarse_ms
    }
}

/// A policy to evaluate: the learned two-level cascade, its single-level
/// variants, or a fixed baseline.
#[derive(Debug, Clone)]
pub enum PolicySpec<'a> {
    /// Patch policy gates the subpatch policy.
    Cascade { cpnet: &'a PolicyModel, fpnet: &'a PolicyModel },
    /// Patch policy only; an activated patch acquires all subpatches fine.
    CpnetOnly { cpnet: &'a PolicyModel },
    /// Subpatch policy on every patch, with no patch-level gate.
    FpnetOnly { fpnet: &'a PolicyModel },
    /// Every subpatch zooms independently with this probability.
    Random { zoom_prob: f64 },
    /// Coarse-probe every subpatch; a patch whose mean probe score exceeds
    /// the patch threshold forwards its subpatches to the same rule at the
    /// subpatch threshold, and those winners are re-acquired fine.
    Entropy { patch_threshold: f64, subpatch_threshold: f64 },
    /// Every subpatch coarse.
    SlidingLr,
    /// Every subpatch fine.
    SlidingHr,
}

impl PolicySpec<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            PolicySpec::Cascade { .. } => "cascade",
            PolicySpec::CpnetOnly { .. } => "cpnet_only",
            PolicySpec::FpnetOnly { .. } => "fpnet_only",
            PolicySpec::Random { .. } => "random",
            PolicySpec::Entropy { .. } => "entropy",
            PolicySpec::SlidingLr => "sliding_lr",
            PolicySpec::SlidingHr => "sliding_hr",
        }
    }

    pub fn validate(&self, grid: &GridLayout, obs: &ObservationSpec) -> Result<()> {
        obs.validate(grid)?;
        match self {
            PolicySpec::Cascade { cpnet, fpnet } => {
                check_patch_model(cpnet, grid, obs)?;
                check_subpatch_model(fpnet, grid, obs)
            }
            PolicySpec::CpnetOnly { cpnet } => check_patch_model(cpnet, grid, obs),
            PolicySpec::FpnetOnly { fpnet } => check_subpatch_model(fpnet, grid, obs),
            PolicySpec::Random { zoom_prob } => {
                if !(0.0..=1.0).contains(zoom_prob) {
                    return Err(Error::Config(format!(
                        "zoom probability {zoom_prob} outside [0, 1]"
                    )));
                }
                Ok(())
            }
            PolicySpec::Entropy { patch_threshold, subpatch_threshold } => {
                for (name, t) in [
                    ("patch_threshold", patch_threshold),
                    ("subpatch_threshold", subpatch_threshold),
                ] {
                    if !(0.0..=1.0).contains(t) {
                        return Err(Error::Config(format!("{name} {t} outside [0, 1]")));
                    }
                }
                Ok(())
            }
            PolicySpec::SlidingLr | PolicySpec::SlidingHr => Ok(()),
        }
    }
}

fn check_patch_model(model: &PolicyModel, grid: &GridLayout, obs: &ObservationSpec) -> Result<()> {
    model.validate()?;
    let dim = obs.cpnet_side * obs.cpnet_side;
    if model.input_dim() != dim || model.output_dim() != grid.patch_count() {
        return Err(Error::Argument(format!(
            "patch model maps {} -> {} but this grid needs {} -> {}",
            model.input_dim(),
            model.output_dim(),
            dim,
            grid.patch_count()
        )));
    }
    Ok(())
}

fn check_subpatch_model(
    model: &PolicyModel,
    grid: &GridLayout,
    obs: &ObservationSpec,
) -> Result<()> {
    model.validate()?;
    let side = obs.fpnet_side(grid);
    if model.input_dim() != side * side || model.output_dim() != grid.subpatch_count() {
        return Err(Error::Argument(format!(
            "subpatch model maps {} -> {} but this grid needs {} -> {}",
            model.input_dim(),
            model.output_dim(),
            side * side,
            grid.subpatch_count()
        )));
    }
    Ok(())
}

/// Where detections come from: the seeded simulator or a recorded archive.
#[derive(Debug, Clone, Copy)]
pub enum DetectorSource<'a> {
    Simulated(&'a DetectorPair),
    Replay(&'a ReplayArchive),
}

impl DetectorSource<'_> {
    fn validate(&self) -> Result<()> {
        match self {
            DetectorSource::Simulated(pair) => pair.validate(),
            DetectorSource::Replay(_) => Ok(()),
        }
    }
}

/// Outcome of running one policy on one scene.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneRun {
    pub scene_id: String,
    /// Merged detections in scene coordinates.
    pub detections: Vec<BBox>,
    /// Patch-level gate where the policy has one; otherwise whether any of
    /// the patch's subpatches zoomed.
    pub patch_actions: ActionVector,
    /// Per patch, the subpatch-level zoom decisions.
    pub subpatch_actions: Vec<ActionVector>,
    pub cpnet_ran: bool,
    /// Patches the subpatch policy network ran on.
    pub fpnet_invocations: usize,
    /// Final fine-tier subpatches (the HR count).
    pub fine_subpatches: usize,
    /// Final coarse-tier subpatches.
    pub coarse_subpatches: usize,
    /// Coarse probes superseded by a fine re-acquisition (probe rule only).
    pub wasted_probe_subpatches: usize,
    pub runtime_ms: f64,
}

/// Cross-tile duplicate suppression. Detections are ranked by score
/// (descending; ties keep the earlier tile, then earlier box), and each is
/// kept unless an already-kept box of the same class overlaps it at
/// `nms_iou` or more. Running it twice changes nothing.
pub fn merge_detections(sets: &[DetectionSet], nms_iou: f64) -> Vec<BBox> {
    let mut flat: Vec<&BBox> = Vec::new();
    for set in sets {
        flat.extend(set.boxes.iter());
    }
    let mut order: Vec<usize> = (0..flat.len()).collect();
    order.sort_by(|&a, &b| {
        let sa = flat[a].score.unwrap_or(f64::NEG_INFINITY);
        let sb = flat[b].score.unwrap_or(f64::NEG_INFINITY);
        sb.partial_cmp(&sa).unwrap_or(core::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    let mut kept: Vec<BBox> = Vec::new();
    for idx in order {
        let candidate = flat[idx];
        let duplicate = kept.iter().any(|k| {
            k.class_id == candidate.class_id && crate::metrics::iou(k, candidate) >= nms_iou
        });
        if !duplicate {
            kept.push(candidate.clone());
        }
    }
    kept
}

/// Everything a policy needs about one scene, computed once.
struct SceneContext<'a> {
    scene: &'a Scene,
    grid: &'a GridLayout,
    raster: RasterObservation,
    assignment: BoxAssignment,
    scene_tag: u64,
}

impl<'a> SceneContext<'a> {
    fn build(scene: &'a Scene, grid: &'a GridLayout, obs: &ObservationSpec) -> Result<Self> {
        obs.validate(grid)?;
        let raster = obs.scene_raster(scene)?;
        let assignment = assign_boxes(scene, grid)?;
        Ok(SceneContext { scene, grid, raster, assignment, scene_tag: hash_str(&scene.id) })
    }

    fn subpatch_gt(&self, patch: usize, sub: usize) -> Vec<BBox> {
        self.assignment.per_subpatch[patch][sub]
            .iter()
            .map(|&i| self.scene.ground_truth[i].clone())
            .collect()
    }

    fn detect_subpatch(
        &self,
        source: &DetectorSource,
        tier: Tier,
        patch: usize,
        sub: usize,
        seed: u64,
    ) -> Result<DetectionSet> {
        match source {
            DetectorSource::Simulated(pair) => {
                let mut rng = RngStream::derive(
                    seed,
                    &[DOMAIN_EVAL, self.scene_tag, patch as u64, sub as u64 + 1, tier.tag()],
                );
                let gt = self.subpatch_gt(patch, sub);
                let tile = self.grid.subpatch_rect(patch, sub)?;
                Ok(detect(pair.get(tier), &gt, &tile, patch, Some(sub), &mut rng))
            }
            DetectorSource::Replay(archive) => {
                archive.replay_detect(&self.scene.id, patch, Some(sub), tier)
            }
        }
    }
}

/// Runs detectors for fixed per-subpatch decisions and assembles the run.
#[allow(clippy::too_many_arguments)]
fn assemble_run(
    ctx: &SceneContext,
    source: &DetectorSource,
    cost: &CostModel,
    seed: u64,
    patch_actions: ActionVector,
    subpatch_actions: Vec<ActionVector>,
    cpnet_ran: bool,
    fpnet_invocations: usize,
) -> Result<SceneRun> {
    let mut sets = Vec::new();
    let mut fine = 0;
    let mut coarse = 0;
    for (p, actions) in subpatch_actions.iter().enumerate() {
        for (s, &zoom) in actions.bits.iter().enumerate() {
            let tier = if zoom { Tier::Fine } else { Tier::Coarse };
            if zoom {
                fine += 1;
            } else {
                coarse += 1;
            }
            sets.push(ctx.detect_subpatch(source, tier, p, s, seed)?);
        }
    }
    let detections = merge_detections(&sets, NMS_IOU);
    Ok(SceneRun {
        scene_id: ctx.scene.id.clone(),
        detections,
        patch_actions,
        subpatch_actions,
        cpnet_ran,
        fpnet_invocations,
        fine_subpatches: fine,
        coarse_subpatches: coarse,
        wasted_probe_subpatches: 0,
        runtime_ms: cost.runtime(cpnet_ran, fpnet_invocations, fine, coarse, 0),
    })
}

fn any_zoom(subpatch_actions: &[ActionVector]) -> ActionVector {
    ActionVector { bits: subpatch_actions.iter().map(|a| a.ones() > 0).collect() }
}

/// The two-level cascade: greedy patch decisions on the scene raster, then
/// greedy subpatch decisions on each activated patch's crop. Activated
/// subpatches are acquired fine, everything else coarse.
#[allow(clippy::too_many_arguments)]
pub fn run_cascade(
    scene: &Scene,
    grid: &GridLayout,
    obs: &ObservationSpec,
    cpnet: &PolicyModel,
    fpnet: &PolicyModel,
    source: &DetectorSource,
    cost: &CostModel,
    seed: u64,
) -> Result<SceneRun> {
    check_patch_model(cpnet, grid, obs)?;
    check_subpatch_model(fpnet, grid, obs)?;
    let ctx = SceneContext::build(scene, grid, obs)?;
    let patch_actions = greedy_actions(cpnet.forward(&ctx.raster.pixels)?.probs());
    let mut subpatch_actions = Vec::with_capacity(grid.patch_count());
    let mut fpnet_invocations = 0;
    for p in 0..grid.patch_count() {
        if patch_actions.bits[p] {
            let crop = crop_observation(&ctx.raster, grid, p)?;
            subpatch_actions.push(greedy_actions(fpnet.forward(&crop.pixels)?.probs()));
            fpnet_invocations += 1;
        } else {
            subpatch_actions.push(ActionVector { bits: vec![false; grid.subpatch_count()] });
        }
    }
    assemble_run(
        &ctx,
        source,
        cost,
        seed,
        patch_actions,
        subpatch_actions,
        true,
        fpnet_invocations,
    )
}

/// Runs any policy on one scene. The learned cascade routes through
/// [`run_cascade`]; fixed baselines compute their decisions here and share
/// the same detector, merging, and cost plumbing.
pub fn run_policy(
    scene: &Scene,
    grid: &GridLayout,
    obs: &ObservationSpec,
    spec: &PolicySpec,
    source: &DetectorSource,
    cost: &CostModel,
    seed: u64,
) -> Result<SceneRun> {
    spec.validate(grid, obs)?;
    let n_patches = grid.patch_count();
    let n_subs = grid.subpatch_count();
    match spec {
        PolicySpec::Cascade { cpnet, fpnet } => {
            run_cascade(scene, grid, obs, cpnet, fpnet, source, cost, seed)
        }
        PolicySpec::CpnetOnly { cpnet } => {
            let ctx = SceneContext::build(scene, grid, obs)?;
            let patch_actions = greedy_actions(cpnet.forward(&ctx.raster.pixels)?.probs());
            let subpatch_actions: Vec<ActionVector> = patch_actions
                .bits
                .iter()
                .map(|&zoom| ActionVector { bits: vec![zoom; n_subs] })
                .collect();
            assemble_run(&ctx, source, cost, seed, patch_actions, subpatch_actions, true, 0)
        }
        PolicySpec::FpnetOnly { fpnet } => {
            let ctx = SceneContext::build(scene, grid, obs)?;
            let mut subpatch_actions = Vec::with_capacity(n_patches);
            for p in 0..n_patches {
                let crop = crop_observation(&ctx.raster, grid, p)?;
                subpatch_actions.push(greedy_actions(fpnet.forward(&crop.pixels)?.probs()));
            }
            let patch_actions = any_zoom(&subpatch_actions);
            assemble_run(
                &ctx,
                source,
                cost,
                seed,
                patch_actions,
                subpatch_actions,
                false,
                n_patches,
            )
        }
        PolicySpec::Random { zoom_prob } => {
            let ctx = SceneContext::build(scene, grid, obs)?;
            let mut rng = RngStream::derive(seed, &[DOMAIN_POLICY, ctx.scene_tag]);
            let subpatch_actions: Vec<ActionVector> = (0..n_patches)
                .map(|_| ActionVector {
                    bits: (0..n_subs).map(|_| rng.bernoulli(*zoom_prob)).collect(),
                })
                .collect();
            let patch_actions = any_zoom(&subpatch_actions);
            assemble_run(&ctx, source, cost, seed, patch_actions, subpatch_actions, false, 0)
        }
        PolicySpec::SlidingLr | PolicySpec::SlidingHr => {
            let zoom = matches!(spec, PolicySpec::SlidingHr);
            let ctx = SceneContext::build(scene, grid, obs)?;
            let subpatch_actions: Vec<ActionVector> =
                (0..n_patches).map(|_| ActionVector { bits: vec![zoom; n_subs] }).collect();
            let patch_actions = ActionVector { bits: vec![zoom; n_patches] };
            assemble_run(&ctx, source, cost, seed, patch_actions, subpatch_actions, false, 0)
        }
        PolicySpec::Entropy { patch_threshold, subpatch_threshold } => {
            run_probe_rule(scene, grid, obs, *patch_threshold, *subpatch_threshold, source, cost, seed)
        }
    }
}

fn mean_score(boxes: &[&BBox]) -> f64 {
    if boxes.is_empty() {
        return 0.0;
    }
    boxes.iter().map(|b| b.score.unwrap_or(0.0)).sum::<f64>() / boxes.len() as f64
}

/// The coarse-probe threshold baseline: probe every subpatch coarse; where
/// a patch's mean probe score clears the patch threshold, re-acquire its
/// high-scoring subpatches fine (replacing their probes). Probes are always
/// paid for, including the superseded ones.
#[allow(clippy::too_many_arguments)]
fn run_probe_rule(
    scene: &Scene,
    grid: &GridLayout,
    obs: &ObservationSpec,
    patch_threshold: f64,
    subpatch_threshold: f64,
    source: &DetectorSource,
    cost: &CostModel,
    seed: u64,
) -> Result<SceneRun> {
    let ctx = SceneContext::build(scene, grid, obs)?;
    let n_patches = grid.patch_count();
    let n_subs = grid.subpatch_count();
    let mut probes: Vec<Vec<DetectionSet>> = Vec::with_capacity(n_patches);
    for p in 0..n_patches {
        let mut per_patch = Vec::with_capacity(n_subs);
        for s in 0..n_subs {
            per_patch.push(ctx.detect_subpatch(source, Tier::Coarse, p, s, seed)?);
        }
        probes.push(per_patch);
    }

    let mut patch_bits = Vec::with_capacity(n_patches);
    let mut subpatch_actions = Vec::with_capacity(n_patches);
    let mut sets = Vec::new();
    let mut fine = 0;
    let mut wasted = 0;
    for (p, patch_probes) in probes.iter().enumerate() {
        let pooled: Vec<&BBox> = patch_probes.iter().flat_map(|set| set.boxes.iter()).collect();
        let patch_score = mean_score(&pooled);
        let forwarded = patch_score > patch_threshold;
        patch_bits.push(forwarded);
        let mut bits = vec![false; n_subs];
        for (s, probe) in patch_probes.iter().enumerate() {
            let sub_score = mean_score(&probe.boxes.iter().collect::<Vec<_>>());
            let zoom = forwarded && sub_score > subpatch_threshold;
            bits[s] = zoom;
            if zoom {
                fine += 1;
                wasted += 1;
                sets.push(ctx.detect_subpatch(source, Tier::Fine, p, s, seed)?);
            } else {
                sets.push(probe.clone());
            }
        }
        subpatch_actions.push(ActionVector { bits });
    }
    let coarse = n_patches * n_subs - fine;
    let detections = merge_detections(&sets, NMS_IOU);
    Ok(SceneRun {
        scene_id: ctx.scene.id.clone(),
        detections,
        patch_actions: ActionVector { bits: patch_bits },
        subpatch_actions,
        cpnet_ran: false,
        fpnet_invocations: 0,
        fine_subpatches: fine,
        coarse_subpatches: coarse,
        wasted_probe_subpatches: wasted,
        runtime_ms: cost.runtime(false, 0, fine, coarse, wasted),
    })
}

/// Dataset-level evaluation summary for one policy.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub policy_name: String,
    pub ap_percent: f64,
    pub ar_percent: f64,
    pub runtime_ms_mean: f64,
    /// Fine-tier subpatches as a percentage of all subpatches.
    pub hr_ratio_percent: f64,
    pub scenes_evaluated: usize,
    /// Mean zoomed-subpatch fraction per patch cell, row-major.
    pub zoom_grid_stats: Vec<f64>,
}

/// Runs a policy over every scene and aggregates the report. Per-scene
/// detector and policy draws derive from (seed, scene id), so the dataset
/// order does not affect any scene's outcome.
#[allow(clippy::too_many_arguments)]
pub fn evaluate(
    spec: &PolicySpec,
    dataset: &[Scene],
    grid: &GridLayout,
    obs: &ObservationSpec,
    source: &DetectorSource,
    cost: &CostModel,
    metric: &MetricConfig,
    seed: u64,
) -> Result<EvalReport> {
    source.validate()?;
    cost.validate()?;
    let mut runs = Vec::with_capacity(dataset.len());
    for scene in dataset {
        runs.push(run_policy(scene, grid, obs, spec, source, cost, seed)?);
    }
    report_from_runs(spec.name(), &runs, dataset, grid, metric)
}

/// Aggregates per-scene runs (however they were produced) into a report.
pub fn report_from_runs(
    policy_name: &str,
    runs: &[SceneRun],
    dataset: &[Scene],
    grid: &GridLayout,
    metric: &MetricConfig,
) -> Result<EvalReport> {
    if dataset.is_empty() {
        return Err(Error::Argument("evaluation needs at least one scene".into()));
    }
    if runs.len() != dataset.len() {
        return Err(Error::Argument(format!(
            "{} runs for {} scenes",
            runs.len(),
            dataset.len()
        )));
    }
    for (run, scene) in runs.iter().zip(dataset.iter()) {
        if run.scene_id != scene.id {
            return Err(Error::Argument(format!(
                "run for scene '{}' paired with scene '{}'",
                run.scene_id, scene.id
            )));
        }
    }
    let gt_by_scene: Vec<Vec<BBox>> = dataset.iter().map(|s| s.ground_truth.clone()).collect();
    let det_by_scene: Vec<Vec<BBox>> = runs.iter().map(|r| r.detections.clone()).collect();
    let ap_ar = average_precision(&gt_by_scene, &det_by_scene, metric)?;

    let n = runs.len() as f64;
    let runtime_ms_mean = runs.iter().map(|r| r.runtime_ms).sum::<f64>() / n;
    let fine: usize = runs.iter().map(|r| r.fine_subpatches).sum();
    let total: usize = runs.iter().map(|r| r.fine_subpatches + r.coarse_subpatches).sum();
    let hr_ratio_percent = if total == 0 { 0.0 } else { 100.0 * fine as f64 / total as f64 };

    let mut zoom_grid_stats = vec![0.0; grid.patch_count()];
    for run in runs {
        if run.subpatch_actions.len() != grid.patch_count() {
            return Err(Error::Argument(format!(
                "run for scene '{}' has {} patches, grid has {}",
                run.scene_id,
                run.subpatch_actions.len(),
                grid.patch_count()
            )));
        }
        for (p, actions) in run.subpatch_actions.iter().enumerate() {
            zoom_grid_stats[p] += actions.zoom_fraction();
        }
    }
    for v in &mut zoom_grid_stats {
        *v /= n;
    }

    Ok(EvalReport {
        policy_name: String::from(policy_name),
        ap_percent: ap_ar.ap_percent,
        ar_percent: ap_ar.ar_percent,
        runtime_ms_mean,
        hr_ratio_percent,
        scenes_evaluated: runs.len(),
        zoom_grid_stats,
    })
}

/// One bin of the zoom-probability profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileBin {
    /// Inclusive lower edge (object count, or normalized mean object area).
    pub lower: f64,
    /// Exclusive upper edge (the last bin includes its upper edge).
    pub upper: f64,
    pub mean_zoom_probability: f64,
    pub patches: usize,
}

/// Mean raw zoom probability per patch, binned by how many objects the
/// patch holds and by their mean area (as a fraction of patch area).
#[derive(Debug, Clone, PartialEq)]
pub struct ZoomProfile {
    pub by_count: Vec<ProfileBin>,
    /// Patches without objects are absent here, not counted as size zero.
    pub by_size: Vec<ProfileBin>,
}

/// Profiles what the patch policy pays attention to: for every patch of
/// every scene, its raw (pre-threshold) zoom probability, grouped into
/// `bins` equal-width bins by object count and by mean normalized object
/// area. Empty bins are omitted.
pub fn zoom_probability_profile(
    model: &PolicyModel,
    dataset: &[Scene],
    grid: &GridLayout,
    obs: &ObservationSpec,
    bins: usize,
) -> Result<ZoomProfile> {
    if bins == 0 {
        return Err(Error::Argument("profile needs at least one bin".into()));
    }
    if dataset.is_empty() {
        return Err(Error::Argument("profile needs at least one scene".into()));
    }
    check_patch_model(model, grid, obs)?;
    let patch_area = grid.patch_size as f64 * grid.patch_size as f64;
    // (object count, mean normalized area if any objects, zoom probability)
    let mut rows: Vec<(usize, Option<f64>, f64)> = Vec::new();
    for scene in dataset {
        let raster = obs.scene_raster(scene)?;
        let assignment = assign_boxes(scene, grid)?;
        let probs = model.forward(&raster.pixels)?.probs().to_vec();
        for (indices, prob) in assignment.per_patch.iter().zip(probs) {
            let mean_area = if indices.is_empty() {
                None
            } else {
                let total: f64 =
                    indices.iter().map(|&i| scene.ground_truth[i].area()).sum();
                Some(total / indices.len() as f64 / patch_area)
            };
            rows.push((indices.len(), mean_area, prob));
        }
    }

    let max_count = rows.iter().map(|r| r.0).max().unwrap_or(0);
    let by_count = bin_rows(
        rows.iter().map(|r| (r.0 as f64, r.2)),
        0.0,
        (max_count + 1) as f64,
        bins,
    );
    let sized: Vec<(f64, f64)> =
        rows.iter().filter_map(|r| r.1.map(|area| (area, r.2))).collect();
    let hi = sized.iter().map(|r| r.0).fold(0.0, f64::max);
    let by_size = if hi > 0.0 {
        bin_rows(sized.iter().copied(), 0.0, hi, bins)
    } else {
        Vec::new()
    };
    Ok(ZoomProfile { by_count, by_size })
}

/// Equal-width binning over [lo, hi); values at hi land in the last bin.
fn bin_rows(
    rows: impl Iterator<Item = (f64, f64)>,
    lo: f64,
    hi: f64,
    bins: usize,
) -> Vec<ProfileBin> {
    let width = (hi - lo) / bins as f64;
    let mut sums = vec![0.0; bins];
    let mut counts = vec![0usize; bins];
    for (value, prob) in rows {
        let idx = if width > 0.0 {
            (((value - lo) / width) as usize).min(bins - 1)
        } else {
            0
        };
        sums[idx] += prob;
        counts[idx] += 1;
    }
    (0..bins)
        .filter(|&i| counts[i] > 0)
        .map(|i| ProfileBin {
            lower: lo + i as f64 * width,
            upper: lo + (i + 1) as f64 * width,
            mean_zoom_probability: sums[i] / counts[i] as f64,
            patches: counts[i],
        })
        .collect()
}
