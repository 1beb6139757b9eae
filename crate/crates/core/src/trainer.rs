//! REINFORCE training with a self-critical greedy baseline and Adam.
//!
//! A training sample is one observation (the scene raster for the patch
//! stage, a patch crop for the subpatch stage) plus its decision tiles. Each
//! step samples actions from the temperature-scaled probabilities, scores
//! them against the greedy action's reward, and accumulates the gradient of
//! `-(R(a) - R(greedy)) * log pi(a)`; Adam descends the batch mean, which
//! ascends expected reward. Sampled and greedy rewards read one shared
//! per-(tile, tier) recall table per step, so the advantage compares
//! decisions rather than detector luck.
//!
//! Rewards come from seeded detector runs by default; the expected-recall
//! mode replaces them with the analytic mean emission probability, which
//! the exhaustive diagnostics (`mc_check`, oracle comparisons) require.
//!
//! Stream derivation tags, all hung off `Hyperparams::seed`:
//! shuffle `(SHUFFLE, epoch)`; action draws `(ACTION, epoch, step, slot)`;
//! detector draws `(DETECT, epoch, step, scene, patch, sub+1, tier)`.

use crate::cascade::ObservationSpec;
use crate::detector::{self, DetectorConfig, DetectorPair};
use crate::error::{Error, Result};
use crate::math;
use crate::metrics;
use crate::policy::{
    greedy_actions, log_likelihood, sample_actions, temperature_scale, ActionVector, Gradients,
    Hyperparams, PolicyModel,
};
use crate::reward::{oracle_policy, reward_with_variant, PatchOutcome, RewardVariant};
use crate::rng::{hash_str, RngStream};
use crate::scene::{assign_boxes, crop_observation, BBox, GridLayout, Rect, Scene};
use alloc::format;
use alloc::vec::Vec;

const DOMAIN_SHUFFLE: u64 = 0x5a;
const DOMAIN_ACTION: u64 = 0x41;
const DOMAIN_DETECT: u64 = 0x44;
const DOMAIN_MC: u64 = 0x4d;

/// Which policy level a run trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    /// Patch-level policy over the whole-scene raster.
    Cpnet,
    /// Subpatch-level policy over single-patch crops.
    Fpnet,
}

impl Stage {
    pub fn name(&self) -> &'static str {
        match self {
            Stage::Cpnet => "cpnet",
            Stage::Fpnet => "fpnet",
        }
    }

    /// Decision slots per sample at this stage.
    pub fn slots(&self, grid: &GridLayout) -> usize {
        match self {
            Stage::Cpnet => grid.patch_count(),
            Stage::Fpnet => grid.subpatch_count(),
        }
    }

    /// Flattened observation size at this stage.
    pub fn input_dim(&self, grid: &GridLayout, obs: &ObservationSpec) -> usize {
        match self {
            Stage::Cpnet => obs.cpnet_side * obs.cpnet_side,
            Stage::Fpnet => {
                let side = obs.cpnet_side / grid.patches_per_side as usize;
                side * side
            }
        }
    }
}

/// Where tile recalls come from during reward computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RewardMode {
    /// Run the seeded detector and measure recall on its output.
    Sampled,
    /// Use the analytic mean emission probability per tile.
    Expected,
}

/// Adam moment decay rates and denominator guard.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl AdamParams {
    pub fn validate(&self) -> Result<()> {
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("{name} {b} outside [0, 1)")));
            }
        }
        if !(self.eps > 0.0) {
            return Err(Error::Config(format!("adam eps {} must be positive", self.eps)));
        }
        Ok(())
    }
}

/// First/second moment estimates plus running decay powers for bias
/// correction.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Gradients,
    v: Gradients,
    t: u64,
    beta1_t: f64,
    beta2_t: f64,
}

impl AdamState {
    pub fn new(model: &PolicyModel) -> Self {
        AdamState {
            m: Gradients::zeros_like(model),
            v: Gradients::zeros_like(model),
            t: 0,
            beta1_t: 1.0,
            beta2_t: 1.0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// One descent step on `grads` (a loss gradient).
    pub fn apply(
        &mut self,
        model: &mut PolicyModel,
        grads: &Gradients,
        learning_rate: f64,
        params: &AdamParams,
    ) {
        self.t += 1;
        self.beta1_t *= params.beta1;
        self.beta2_t *= params.beta2;
        let m_corr = 1.0 / (1.0 - self.beta1_t);
        let v_corr = 1.0 / (1.0 - self.beta2_t);
        let update = |theta: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            for i in 0..theta.len() {
                m[i] = params.beta1 * m[i] + (1.0 - params.beta1) * g[i];
                v[i] = params.beta2 * v[i] + (1.0 - params.beta2) * g[i] * g[i];
                let m_hat = m[i] * m_corr;
                let v_hat = v[i] * v_corr;
                theta[i] -= learning_rate * m_hat / (math::sqrt(v_hat) + params.eps);
            }
        };
        for l in 0..model.weights.len() {
            update(
                &mut model.weights[l],
                &grads.weights[l],
                &mut self.m.weights[l],
                &mut self.v.weights[l],
            );
            update(
                &mut model.biases[l],
                &grads.biases[l],
                &mut self.m.biases[l],
                &mut self.v.biases[l],
            );
        }
    }
}

/// Full training configuration for one stage.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub hyper: Hyperparams,
    pub stage: Stage,
    pub reward_variant: RewardVariant,
    pub reward_mode: RewardMode,
    pub adam: AdamParams,
    /// Record every n-th step of each epoch (the final step always logs).
    pub log_every: usize,
    /// IoU threshold at which sampled detections count toward recall.
    pub reward_iou: f64,
}

impl TrainConfig {
    pub fn new(stage: Stage) -> Self {
        TrainConfig {
            hyper: Hyperparams::default(),
            stage,
            reward_variant: RewardVariant::Combined,
            reward_mode: RewardMode::Sampled,
            adam: AdamParams::default(),
            log_every: 1,
            reward_iou: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        self.adam.validate()?;
        if self.log_every == 0 {
            return Err(Error::Config("log_every must be at least 1".into()));
        }
        if !(self.reward_iou > 0.0 && self.reward_iou <= 1.0) {
            return Err(Error::Config(format!(
                "reward_iou {} outside (0, 1]",
                self.reward_iou
            )));
        }
        Ok(())
    }
}

/// One logged training step: batch means plus the loss-gradient norm.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainLogRecord {
    pub epoch: usize,
    /// Step within the epoch.
    pub step: usize,
    pub mean_sampled_reward: f64,
    pub mean_baseline_reward: f64,
    pub mean_advantage: f64,
    pub mean_zoom_fraction: f64,
    pub gradient_norm: f64,
}

/// Ground truth and geometry of one decision tile.
#[derive(Debug, Clone, PartialEq)]
pub struct TileGt {
    pub patch: usize,
    pub subpatch: Option<usize>,
    pub rect: Rect,
    /// Ground-truth boxes assigned to this tile.
    pub gt: Vec<BBox>,
}

/// One training sample: a flattened observation and its decision tiles.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample {
    /// Stable hash of the source scene id, used in detector stream tags.
    pub scene_tag: u64,
    /// Patch this sample covers; `None` when the sample is a whole scene.
    pub patch_index: Option<usize>,
    pub input: Vec<f64>,
    pub tiles: Vec<TileGt>,
}

/// Builds the per-stage training samples for a dataset: one sample per
/// scene for the patch stage, one per (scene, patch) for the subpatch
/// stage — every patch trains the subpatch policy, independent of any
/// patch-level decision.
pub fn build_samples(
    dataset: &[Scene],
    grid: &GridLayout,
    obs: &ObservationSpec,
    stage: Stage,
) -> Result<Vec<TrainSample>> {
    obs.validate(grid)?;
    let mut samples = Vec::new();
    for scene in dataset {
        let raster = obs.scene_raster(scene)?;
        let assignment = assign_boxes(scene, grid)?;
        let scene_tag = hash_str(&scene.id);
        match stage {
            Stage::Cpnet => {
                let mut tiles = Vec::with_capacity(grid.patch_count());
                for p in 0..grid.patch_count() {
                    tiles.push(TileGt {
                        patch: p,
                        subpatch: None,
                        rect: grid.patch_rect(p)?,
                        gt: assignment.per_patch[p]
                            .iter()
                            .map(|&i| scene.ground_truth[i].clone())
                            .collect(),
                    });
                }
                samples.push(TrainSample {
                    scene_tag,
                    patch_index: None,
                    input: raster.pixels,
                    tiles,
                });
            }
            Stage::Fpnet => {
                for p in 0..grid.patch_count() {
                    let crop = crop_observation(&raster, grid, p)?;
                    let mut tiles = Vec::with_capacity(grid.subpatch_count());
                    for s in 0..grid.subpatch_count() {
                        tiles.push(TileGt {
                            patch: p,
                            subpatch: Some(s),
                            rect: grid.subpatch_rect(p, s)?,
                            gt: assignment.per_subpatch[p][s]
                                .iter()
                                .map(|&i| scene.ground_truth[i].clone())
                                .collect(),
                        });
                    }
                    samples.push(TrainSample {
                        scene_tag,
                        patch_index: Some(p),
                        input: crop.pixels.clone(),
                        tiles,
                    });
                }
            }
        }
    }
    Ok(samples)
}

#[allow(clippy::too_many_arguments)]
fn tier_recall(
    config: &DetectorConfig,
    tile: &TileGt,
    mode: RewardMode,
    reward_iou: f64,
    seed: u64,
    epoch: usize,
    step: usize,
    scene_tag: u64,
) -> Result<f64> {
    match mode {
        RewardMode::Expected => detector::expected_recall(config, &tile.gt),
        RewardMode::Sampled => {
            let sub_tag = tile.subpatch.map_or(0, |s| s as u64 + 1);
            let mut rng = RngStream::derive(
                seed,
                &[
                    DOMAIN_DETECT,
                    epoch as u64,
                    step as u64,
                    scene_tag,
                    tile.patch as u64,
                    sub_tag,
                    config.tier.tag(),
                ],
            );
            let det =
                detector::detect(config, &tile.gt, &tile.rect, tile.patch, tile.subpatch, &mut rng);
            Ok(metrics::recall(&tile.gt, &det.boxes, reward_iou))
        }
    }
}

/// Both tiers' recalls for every tile of one sample. One seeded detector
/// draw per (tile, tier), so any action vector's reward can be read from
/// the same table — the sampled and greedy rollouts share detector noise.
pub fn rollout_outcomes(
    sample: &TrainSample,
    detectors: &DetectorPair,
    mode: RewardMode,
    reward_iou: f64,
    seed: u64,
    epoch: usize,
    step: usize,
) -> Result<Vec<PatchOutcome>> {
    let mut outcomes = Vec::with_capacity(sample.tiles.len());
    for tile in &sample.tiles {
        let recall_fine = tier_recall(
            &detectors.fine,
            tile,
            mode,
            reward_iou,
            seed,
            epoch,
            step,
            sample.scene_tag,
        )?;
        let recall_coarse = tier_recall(
            &detectors.coarse,
            tile,
            mode,
            reward_iou,
            seed,
            epoch,
            step,
            sample.scene_tag,
        )?;
        outcomes.push(PatchOutcome { recall_fine, recall_coarse, n_objects: tile.gt.len() });
    }
    Ok(outcomes)
}

/// One optimizer step over a batch. Samples actions, computes self-critical
/// advantages, accumulates the mean loss gradient, and applies Adam. Fails
/// without touching the model if any gradient component is non-finite.
pub fn train_step(
    model: &mut PolicyModel,
    batch: &[&TrainSample],
    config: &TrainConfig,
    detectors: &DetectorPair,
    adam: &mut AdamState,
    epoch: usize,
    step: usize,
) -> Result<TrainLogRecord> {
    if batch.is_empty() {
        return Err(Error::Argument("empty training batch".into()));
    }
    let alpha = config.hyper.alpha;
    let seed = config.hyper.seed;
    let mut grads = Gradients::zeros_like(model);
    let mut sum_sampled = 0.0;
    let mut sum_baseline = 0.0;
    let mut sum_advantage = 0.0;
    let mut sum_zoom = 0.0;
    for (slot, sample) in batch.iter().enumerate() {
        let pass = model.forward(&sample.input)?;
        let scaled = temperature_scale(pass.probs(), alpha);
        let mut action_rng = RngStream::derive(
            seed,
            &[DOMAIN_ACTION, epoch as u64, step as u64, slot as u64],
        );
        let action = sample_actions(&scaled, &mut action_rng);
        let baseline = greedy_actions(pass.probs());
        let outcomes = rollout_outcomes(
            sample,
            detectors,
            config.reward_mode,
            config.reward_iou,
            seed,
            epoch,
            step,
        )?;
        let sampled =
            reward_with_variant(&outcomes, &action, &config.hyper, config.reward_variant)?;
        let greedy =
            reward_with_variant(&outcomes, &baseline, &config.hyper, config.reward_variant)?;
        let advantage = sampled.total - greedy.total;
        grads.add(&model.backward(&pass, &action, -advantage, alpha)?);
        sum_sampled += sampled.total;
        sum_baseline += greedy.total;
        sum_advantage += advantage;
        sum_zoom += action.zoom_fraction();
    }
    let n = batch.len() as f64;
    grads.scale(1.0 / n);
    if !grads.is_finite() {
        return Err(Error::NonFinite {
            epoch,
            step,
            detail: "non-finite policy gradient; model left at its last good state".into(),
        });
    }
    let gradient_norm = grads.norm();
    adam.apply(model, &grads, config.hyper.learning_rate, &config.adam);
    Ok(TrainLogRecord {
        epoch,
        step,
        mean_sampled_reward: sum_sampled / n,
        mean_baseline_reward: sum_baseline / n,
        mean_advantage: sum_advantage / n,
        mean_zoom_fraction: sum_zoom / n,
        gradient_norm,
    })
}

/// Trains the model in place over shuffled mini-batches. On error the model
/// keeps its last successfully updated parameters, so callers can persist a
/// usable checkpoint. Bit-reproducible given (config, dataset).
pub fn train(
    model: &mut PolicyModel,
    dataset: &[Scene],
    grid: &GridLayout,
    obs: &ObservationSpec,
    config: &TrainConfig,
    detectors: &DetectorPair,
) -> Result<Vec<TrainLogRecord>> {
    train_with_hook(model, dataset, grid, obs, config, detectors, |_, _| {})
}

/// [`train`] with a per-epoch callback (checkpoint writing and the like),
/// invoked after each completed epoch with (epoch index, current model).
pub fn train_with_hook<F: FnMut(usize, &PolicyModel)>(
    model: &mut PolicyModel,
    dataset: &[Scene],
    grid: &GridLayout,
    obs: &ObservationSpec,
    config: &TrainConfig,
    detectors: &DetectorPair,
    mut epoch_hook: F,
) -> Result<Vec<TrainLogRecord>> {
    config.validate()?;
    detectors.validate()?;
    model.validate()?;
    if dataset.is_empty() {
        return Err(Error::Argument("training needs at least one scene".into()));
    }
    let expect_in = config.stage.input_dim(grid, obs);
    let expect_out = config.stage.slots(grid);
    if model.input_dim() != expect_in || model.output_dim() != expect_out {
        return Err(Error::Config(format!(
            "model maps {} -> {} but the {} stage needs {} -> {}",
            model.input_dim(),
            model.output_dim(),
            config.stage.name(),
            expect_in,
            expect_out
        )));
    }
    let samples = build_samples(dataset, grid, obs, config.stage)?;
    let steps_per_epoch = samples.len().div_ceil(config.hyper.batch_size);
    let mut records = Vec::new();
    let mut adam = AdamState::new(model);
    for epoch in 0..config.hyper.epochs {
        let mut order: Vec<usize> = (0..samples.len()).collect();
        RngStream::derive(config.hyper.seed, &[DOMAIN_SHUFFLE, epoch as u64])
            .shuffle(&mut order);
        for (step, chunk) in order.chunks(config.hyper.batch_size).enumerate() {
            let batch: Vec<&TrainSample> = chunk.iter().map(|&i| &samples[i]).collect();
            let record = train_step(model, &batch, config, detectors, &mut adam, epoch, step)?;
            let last = epoch + 1 == config.hyper.epochs && step + 1 == steps_per_epoch;
            if (step + 1).is_multiple_of(config.log_every) || last {
                records.push(record);
            }
        }
        epoch_hook(epoch, model);
    }
    Ok(records)
}

fn per_sample_expected_outcomes(
    dataset: &[Scene],
    grid: &GridLayout,
    obs: &ObservationSpec,
    config: &TrainConfig,
    detectors: &DetectorPair,
) -> Result<(Vec<TrainSample>, Vec<Vec<PatchOutcome>>)> {
    let samples = build_samples(dataset, grid, obs, config.stage)?;
    let mut outcomes = Vec::with_capacity(samples.len());
    for sample in &samples {
        outcomes.push(rollout_outcomes(
            sample,
            detectors,
            RewardMode::Expected,
            config.reward_iou,
            0,
            0,
            0,
        )?);
    }
    Ok((samples, outcomes))
}

/// Mean expected-recall reward of the model's greedy actions over a
/// dataset. This is the deployment-time value of the policy: raw
/// probabilities thresholded at 0.5, rewards from the analytic recall
/// oracle.
pub fn mean_greedy_expected_reward(
    model: &PolicyModel,
    dataset: &[Scene],
    grid: &GridLayout,
    obs: &ObservationSpec,
    config: &TrainConfig,
    detectors: &DetectorPair,
) -> Result<f64> {
    let (samples, outcomes) = per_sample_expected_outcomes(dataset, grid, obs, config, detectors)?;
    let mut total = 0.0;
    for (sample, outcome) in samples.iter().zip(outcomes.iter()) {
        let pass = model.forward(&sample.input)?;
        let action = greedy_actions(pass.probs());
        total +=
            reward_with_variant(outcome, &action, &config.hyper, config.reward_variant)?.total;
    }
    Ok(total / samples.len() as f64)
}

/// Mean expected-recall reward of the exact per-tile argmax over the same
/// samples — the ceiling any policy at this stage can reach.
pub fn mean_oracle_expected_reward(
    dataset: &[Scene],
    grid: &GridLayout,
    obs: &ObservationSpec,
    config: &TrainConfig,
    detectors: &DetectorPair,
) -> Result<f64> {
    let (samples, outcomes) = per_sample_expected_outcomes(dataset, grid, obs, config, detectors)?;
    let mut total = 0.0;
    for outcome in &outcomes {
        let action = oracle_policy(outcome, &config.hyper, config.reward_variant)?;
        total +=
            reward_with_variant(outcome, &action, &config.hyper, config.reward_variant)?.total;
    }
    Ok(total / samples.len() as f64)
}

/// Exact mean reward of the policy that zooms every tile independently with
/// probability `zoom_prob`. Separability gives it in closed form:
/// `E[R] = zoom_prob * sum(gains) + (sigma + lambda) * (1 - zoom_prob * P) / P`.
pub fn mean_random_expected_reward(
    zoom_prob: f64,
    dataset: &[Scene],
    grid: &GridLayout,
    obs: &ObservationSpec,
    config: &TrainConfig,
    detectors: &DetectorPair,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&zoom_prob) {
        return Err(Error::Argument(format!("zoom probability {zoom_prob} outside [0, 1]")));
    }
    let (samples, outcomes) = per_sample_expected_outcomes(dataset, grid, obs, config, detectors)?;
    let mut total = 0.0;
    for outcome in &outcomes {
        let p = outcome.len() as f64;
        let gains: f64 =
            outcome.iter().map(|o| config.reward_variant.gain(o, config.hyper.beta)).sum();
        total += zoom_prob * gains
            + (config.hyper.sigma + config.hyper.lambda) * (1.0 - zoom_prob * p) / p;
    }
    Ok(total / samples.len() as f64)
}

/// Maximum relative disagreement between analytic and finite-difference
/// gradients, over every parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub params_checked: usize,
}

fn scaled_objective(
    model: &PolicyModel,
    input: &[f64],
    action: &ActionVector,
    scale: f64,
    alpha: f64,
) -> Result<f64> {
    let pass = model.forward(input)?;
    let scaled = temperature_scale(pass.probs(), alpha);
    Ok(scale * log_likelihood(&scaled, action)?)
}

/// Compares `backward` against central finite differences (step 1e-5) of
/// `scale * log_likelihood(temperature_scale(forward(input), alpha), action)`
/// for every weight and bias. Relative error uses a 1e-4 floor in the
/// denominator so that near-zero gradient pairs compare absolutely.
pub fn grad_check(
    model: &PolicyModel,
    input: &[f64],
    action: &ActionVector,
    scale: f64,
    alpha: f64,
) -> Result<GradCheckReport> {
    let pass = model.forward(input)?;
    let analytic = model.backward(&pass, action, scale, alpha)?;
    let mut scratch = model.clone();
    let h = 1e-5;
    let mut max_rel = 0.0f64;
    let mut checked = 0;
    for l in 0..model.n_layers() {
        for (is_bias, count) in [(false, model.weights[l].len()), (true, model.biases[l].len())] {
            for k in 0..count {
                let orig = if is_bias { scratch.biases[l][k] } else { scratch.weights[l][k] };
                let slot = |m: &mut PolicyModel, v: f64| {
                    if is_bias {
                        m.biases[l][k] = v;
                    } else {
                        m.weights[l][k] = v;
                    }
                };
                slot(&mut scratch, orig + h);
                let plus = scaled_objective(&scratch, input, action, scale, alpha)?;
                slot(&mut scratch, orig - h);
                let minus = scaled_objective(&scratch, input, action, scale, alpha)?;
                slot(&mut scratch, orig);
                let fd = (plus - minus) / (2.0 * h);
                let a = if is_bias { analytic.biases[l][k] } else { analytic.weights[l][k] };
                let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-4);
                max_rel = max_rel.max(rel);
                checked += 1;
            }
        }
    }
    Ok(GradCheckReport { max_rel_error: max_rel, params_checked: checked })
}

/// Monte-Carlo estimate of expected reward versus the exhaustive
/// expectation, with the exact standard error of the estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McCheckReport {
    pub empirical_mean: f64,
    pub exact_expectation: f64,
    pub abs_gap: f64,
    /// Exact standard error of the n-sample mean under the policy.
    pub std_error: f64,
    pub n_samples: usize,
}

/// Validates the Monte-Carlo reward estimator against the exhaustive sum
/// `sum over a of pi(a) * R(a)` for one sample. Needs `P <= 12` (the exact
/// side enumerates `2^P` actions) and the expected-recall reward mode, so
/// both sides price actions identically.
pub fn mc_check(
    model: &PolicyModel,
    sample: &TrainSample,
    config: &TrainConfig,
    detectors: &DetectorPair,
    n_samples: usize,
    seed: u64,
) -> Result<McCheckReport> {
    let p = model.output_dim();
    if p > 12 {
        return Err(Error::Argument(format!(
            "{p} decision slots would need {} exhaustive actions; limit is 2^12",
            1u64 << p
        )));
    }
    if n_samples == 0 {
        return Err(Error::Argument("n_samples must be positive".into()));
    }
    if sample.tiles.len() != p {
        return Err(Error::Argument(format!(
            "sample has {} tiles, model has {p} outputs",
            sample.tiles.len()
        )));
    }
    if config.reward_mode != RewardMode::Expected {
        return Err(Error::Argument(
            "the estimator check needs the expected-recall reward mode".into(),
        ));
    }
    let pass = model.forward(&sample.input)?;
    let scaled = temperature_scale(pass.probs(), config.hyper.alpha);
    let outcomes =
        rollout_outcomes(sample, detectors, RewardMode::Expected, config.reward_iou, 0, 0, 0)?;

    let mut rewards = Vec::with_capacity(1usize << p);
    let mut exact = 0.0;
    let mut exact_sq = 0.0;
    for mask in 0..(1usize << p) {
        let bits: Vec<bool> = (0..p).map(|i| mask >> i & 1 == 1).collect();
        let action = ActionVector { bits };
        let r = reward_with_variant(&outcomes, &action, &config.hyper, config.reward_variant)?
            .total;
        let mut prob = 1.0;
        for (i, s) in scaled.iter().enumerate() {
            prob *= if mask >> i & 1 == 1 { *s } else { 1.0 - *s };
        }
        exact += prob * r;
        exact_sq += prob * r * r;
        rewards.push(r);
    }
    let variance = (exact_sq - exact * exact).max(0.0);
    let std_error = math::sqrt(variance / n_samples as f64);

    let mut rng = RngStream::derive(seed, &[DOMAIN_MC]);
    let mut acc = 0.0;
    for _ in 0..n_samples {
        let action = sample_actions(&scaled, &mut rng);
        let mut mask = 0usize;
        for (i, &bit) in action.bits.iter().enumerate() {
            mask |= (bit as usize) << i;
        }
        acc += rewards[mask];
    }
    let empirical_mean = acc / n_samples as f64;
    Ok(McCheckReport {
        empirical_mean,
        exact_expectation: exact,
        abs_gap: (empirical_mean - exact).abs(),
        std_error,
        n_samples,
    })
}
