//! Rewards trading detection quality against acquisition cost.
//!
//! The accuracy term pays, for each zoomed tile, the fine-over-coarse
//! recall improvement (minus a margin `beta`) weighted by the tile's object
//! count, so dense tiles dominate the signal. The cost term pays for
//! restraint: it is positive when nothing zooms and decreases linearly as
//! zooms are added. An ablation variant drops the coarse recall from the
//! comparison, paying for any positive fine recall instead.
//!
//! Both variants are separable across tiles, which makes the optimal
//! action exact and cheap: zoom a tile iff its weighted gain exceeds the
//! per-tile cost share. `oracle_policy` computes that argmax directly.

use crate::error::{Error, Result};
use crate::policy::{ActionVector, Hyperparams};
use alloc::format;
use alloc::vec::Vec;

/// Recall of each detector tier over one tile, plus its object count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchOutcome {
    pub recall_fine: f64,
    pub recall_coarse: f64,
    pub n_objects: usize,
}

impl PatchOutcome {
    fn validate(&self) -> Result<()> {
        for (name, v) in [("recall_fine", self.recall_fine), ("recall_coarse", self.recall_coarse)]
        {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Argument(format!("{name} {v} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Which accuracy formulation drives training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RewardVariant {
    /// Fine-minus-coarse recall gain per zoomed tile.
    Combined,
    /// Fine recall alone per zoomed tile (no coarse comparison).
    Ablation,
}

impl RewardVariant {
    pub fn name(&self) -> &'static str {
        match self {
            RewardVariant::Combined => "combined",
            RewardVariant::Ablation => "ablation",
        }
    }

    /// Weighted recall gain of zooming one tile under this variant.
    pub fn gain(&self, o: &PatchOutcome, beta: f64) -> f64 {
        let per_object = match self {
            RewardVariant::Combined => o.recall_fine - o.recall_coarse - beta,
            RewardVariant::Ablation => o.recall_fine - beta,
        };
        per_object * o.n_objects as f64
    }
}

/// A reward and its decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardBreakdown {
    pub r_acc: f64,
    pub r_cost: f64,
    pub total: f64,
    /// Accuracy contribution of each tile (zero where not zoomed).
    pub per_patch_terms: Vec<f64>,
}

fn check_lengths(outcomes: &[PatchOutcome], actions: &ActionVector) -> Result<()> {
    if outcomes.len() != actions.len() {
        return Err(Error::Argument(format!(
            "{} tile outcomes vs {} action bits",
            outcomes.len(),
            actions.len()
        )));
    }
    if outcomes.is_empty() {
        return Err(Error::Argument("reward needs at least one tile".into()));
    }
    for o in outcomes {
        o.validate()?;
    }
    Ok(())
}

/// Accuracy reward: sum of per-tile weighted recall gains over zoomed tiles.
/// Returns the total and the per-tile terms.
pub fn accuracy_reward(
    outcomes: &[PatchOutcome],
    actions: &ActionVector,
    beta: f64,
) -> Result<(f64, Vec<f64>)> {
    variant_accuracy(outcomes, actions, beta, RewardVariant::Combined)
}

fn variant_accuracy(
    outcomes: &[PatchOutcome],
    actions: &ActionVector,
    beta: f64,
    variant: RewardVariant,
) -> Result<(f64, Vec<f64>)> {
    check_lengths(outcomes, actions)?;
    if !(beta >= 0.0) {
        return Err(Error::Argument(format!("beta {beta} must be >= 0")));
    }
    let mut terms = Vec::with_capacity(outcomes.len());
    let mut total = 0.0;
    for (o, &bit) in outcomes.iter().zip(actions.bits.iter()) {
        let term = if bit { variant.gain(o, beta) } else { 0.0 };
        terms.push(term);
        total += term;
    }
    Ok((total, terms))
}

/// Cost reward: `(sigma + lambda) * (1 - zoom_count) / slots`. Positive only
/// when nothing zooms; strictly decreasing in the number of zooms.
pub fn cost_reward(actions: &ActionVector, sigma: f64, lambda: f64, slots: usize) -> Result<f64> {
    if slots == 0 || actions.len() != slots {
        return Err(Error::Argument(format!(
            "cost reward over {slots} slots with {} action bits",
            actions.len()
        )));
    }
    if !(sigma >= 0.0) || !(lambda >= 0.0) {
        return Err(Error::Argument("sigma and lambda must be >= 0".into()));
    }
    Ok((sigma + lambda) * (1.0 - actions.ones() as f64) / slots as f64)
}

/// Accuracy plus cost under the fine-minus-coarse formulation.
pub fn combined_reward(
    outcomes: &[PatchOutcome],
    actions: &ActionVector,
    hyper: &Hyperparams,
) -> Result<RewardBreakdown> {
    reward_with_variant(outcomes, actions, hyper, RewardVariant::Combined)
}

/// Accuracy plus cost with the coarse detector removed from the comparison.
pub fn ablation_reward(
    outcomes: &[PatchOutcome],
    actions: &ActionVector,
    hyper: &Hyperparams,
) -> Result<RewardBreakdown> {
    reward_with_variant(outcomes, actions, hyper, RewardVariant::Ablation)
}

/// Reward under an explicitly chosen variant.
pub fn reward_with_variant(
    outcomes: &[PatchOutcome],
    actions: &ActionVector,
    hyper: &Hyperparams,
    variant: RewardVariant,
) -> Result<RewardBreakdown> {
    let (r_acc, per_patch_terms) = variant_accuracy(outcomes, actions, hyper.beta, variant)?;
    let r_cost = cost_reward(actions, hyper.sigma, hyper.lambda, outcomes.len())?;
    Ok(RewardBreakdown { r_acc, r_cost, total: r_acc + r_cost, per_patch_terms })
}

/// Exact reward-optimal action: zoom a tile iff its weighted gain strictly
/// exceeds the per-tile cost share, so ties keep the cheaper low-resolution
/// choice. Optimality follows from the reward being separable per tile.
pub fn oracle_policy(
    outcomes: &[PatchOutcome],
    hyper: &Hyperparams,
    variant: RewardVariant,
) -> Result<ActionVector> {
    if outcomes.is_empty() {
        return Err(Error::Argument("oracle needs at least one tile".into()));
    }
    for o in outcomes {
        o.validate()?;
    }
    let threshold = hyper.cost_threshold(outcomes.len());
    let bits = outcomes.iter().map(|o| variant.gain(o, hyper.beta) > threshold).collect();
    Ok(ActionVector { bits })
}
