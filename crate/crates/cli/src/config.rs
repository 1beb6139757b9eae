//! Run configuration: one TOML file with nested sections, overridden by
//! `--set key=value` pairs (dotted keys) and then by dedicated flags, in
//! that order. Every default equals the stock value the library ships, so
//! an empty config reproduces the benchmark setup. The fully resolved
//! config is echoed into every output artifact.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use zoomcascade_core::scene::build_grid;
use zoomcascade_core::synth::ClassSpec;
use zoomcascade_core::trainer::{RewardMode, Stage, TrainConfig};
use zoomcascade_core::{
    CostModel, DetectorConfig, DetectorPair, GridLayout, Hyperparams, MetricConfig,
    ObservationSpec, RewardVariant, SynthConfig, Tier,
};

use crate::{CliError, Result};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Global seed; resolution order is flag, then this key, then the
    /// ZOOMCASCADE_SEED environment variable, then 7.
    pub seed: Option<u64>,
    pub paths: PathsSection,
    pub grid: GridSection,
    pub obs: ObsSection,
    pub reward: RewardSection,
    pub train: TrainSection,
    pub detector: DetectorSection,
    pub cost: CostSection,
    pub metric: MetricSection,
    pub synth: SynthSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    pub scenes_dir: PathBuf,
    pub cpnet_model: PathBuf,
    pub fpnet_model: PathBuf,
    pub report_dir: PathBuf,
}

impl Default for PathsSection {
    fn default() -> Self {
        PathsSection {
            scenes_dir: "scenes".into(),
            cpnet_model: "cpnet.json".into(),
            fpnet_model: "fpnet.json".into(),
            report_dir: "reports".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub scene_side: u32,
    pub patch_size: u32,
    pub subpatch_size: u32,
    pub subpatch_overlap: u32,
}

impl Default for GridSection {
    fn default() -> Self {
        // 4x4 patches of 2x2 overlapping subpatches on the 2400 px scene.
        GridSection { scene_side: 2400, patch_size: 600, subpatch_size: 320, subpatch_overlap: 40 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObsSection {
    pub cpnet_side: usize,
    pub class_intensity: Vec<(u32, f64)>,
}

impl Default for ObsSection {
    fn default() -> Self {
        let obs = ObservationSpec::default();
        ObsSection { cpnet_side: obs.cpnet_side, class_intensity: obs.class_intensity }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardSection {
    pub alpha: f64,
    pub beta: f64,
    pub sigma: f64,
    pub lambda: f64,
    /// "combined" (fine minus coarse recall gain) or "ablation" (fine
    /// recall alone).
    pub variant: String,
    /// IoU at which a sampled detection counts toward tile recall.
    pub match_iou: f64,
}

impl Default for RewardSection {
    fn default() -> Self {
        let h = Hyperparams::default();
        RewardSection {
            alpha: h.alpha,
            beta: h.beta,
            sigma: h.sigma,
            lambda: h.lambda,
            variant: "combined".into(),
            match_iou: TrainConfig::new(Stage::Cpnet).reward_iou,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Record every n-th step of each epoch (the final step always logs).
    pub log_every: usize,
    /// "sampled" (detector draws) or "expected" (closed-form recall).
    pub reward_mode: String,
}

impl Default for TrainSection {
    fn default() -> Self {
        let h = Hyperparams::default();
        TrainSection {
            learning_rate: h.learning_rate,
            batch_size: h.batch_size,
            epochs: h.epochs,
            log_every: TrainConfig::new(Stage::Cpnet).log_every,
            reward_mode: "sampled".into(),
        }
    }
}

/// Deserializes via [`DetectorSectionPatch`] so that a partially specified
/// tier table falls back to that tier's own stock values, never to the
/// other tier's.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(from = "DetectorSectionPatch")]
pub struct DetectorSection {
    pub coarse: DetectorTierSection,
    pub fine: DetectorTierSection,
}

impl Default for DetectorSection {
    fn default() -> Self {
        let pair = DetectorPair::default();
        DetectorSection {
            coarse: DetectorTierSection::from_core(&pair.coarse),
            fine: DetectorTierSection::from_core(&pair.fine),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorSectionPatch {
    coarse: DetectorTierPatch,
    fine: DetectorTierPatch,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorTierPatch {
    char_size: Option<f64>,
    steepness: Option<f64>,
    loc_noise: Option<f64>,
    fp_rate: Option<f64>,
    fp_size_range: Option<(f64, f64)>,
    fp_classes: Option<Vec<u32>>,
    score_noise: Option<f64>,
    unit_cost_ms: Option<f64>,
}

impl DetectorTierPatch {
    fn apply(self, tier: &mut DetectorTierSection) {
        let DetectorTierPatch {
            char_size,
            steepness,
            loc_noise,
            fp_rate,
            fp_size_range,
            fp_classes,
            score_noise,
            unit_cost_ms,
        } = self;
        if let Some(v) = char_size {
            tier.char_size = v;
        }
        if let Some(v) = steepness {
            tier.steepness = v;
        }
        if let Some(v) = loc_noise {
            tier.loc_noise = v;
        }
        if let Some(v) = fp_rate {
            tier.fp_rate = v;
        }
        if let Some(v) = fp_size_range {
            tier.fp_size_range = v;
        }
        if let Some(v) = fp_classes {
            tier.fp_classes = v;
        }
        if let Some(v) = score_noise {
            tier.score_noise = v;
        }
        if let Some(v) = unit_cost_ms {
            tier.unit_cost_ms = v;
        }
    }
}

impl From<DetectorSectionPatch> for DetectorSection {
    fn from(patch: DetectorSectionPatch) -> Self {
        let mut section = DetectorSection::default();
        patch.coarse.apply(&mut section.coarse);
        patch.fine.apply(&mut section.fine);
        section
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DetectorTierSection {
    pub char_size: f64,
    pub steepness: f64,
    pub loc_noise: f64,
    pub fp_rate: f64,
    pub fp_size_range: (f64, f64),
    pub fp_classes: Vec<u32>,
    pub score_noise: f64,
    pub unit_cost_ms: f64,
}

impl DetectorTierSection {
    fn from_core(cfg: &DetectorConfig) -> Self {
        DetectorTierSection {
            char_size: cfg.char_size,
            steepness: cfg.steepness,
            loc_noise: cfg.loc_noise,
            fp_rate: cfg.fp_rate,
            fp_size_range: cfg.fp_size_range,
            fp_classes: cfg.fp_classes.clone(),
            score_noise: cfg.score_noise,
            unit_cost_ms: cfg.unit_cost_ms,
        }
    }

    fn to_core(&self, tier: Tier) -> DetectorConfig {
        DetectorConfig {
            tier,
            char_size: self.char_size,
            steepness: self.steepness,
            loc_noise: self.loc_noise,
            fp_rate: self.fp_rate,
            fp_size_range: self.fp_size_range,
            fp_classes: self.fp_classes.clone(),
            score_noise: self.score_noise,
            unit_cost_ms: self.unit_cost_ms,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostSection {
    pub t_coarse_ms: f64,
    pub t_fine_ms: f64,
    pub t_cpnet_ms: f64,
    pub t_fpnet_ms: f64,
}

impl Default for CostSection {
    fn default() -> Self {
        let c = CostModel::default();
        CostSection {
            t_coarse_ms: c.t_coarse_ms,
            t_fine_ms: c.t_fine_ms,
            t_cpnet_ms: c.t_cpnet_ms,
            t_fpnet_ms: c.t_fpnet_ms,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricSection {
    pub iou_thresholds: Vec<f64>,
}

impl Default for MetricSection {
    fn default() -> Self {
        MetricSection { iou_thresholds: MetricConfig::default().iou_thresholds }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub count: usize,
    pub cluster_rate: f64,
    pub objects_per_cluster: (u32, u32),
    pub cluster_spread: f64,
    pub aspect_range: (f64, f64),
    pub classes: Vec<ClassSpecSection>,
}

impl Default for SynthSection {
    fn default() -> Self {
        let s = SynthConfig::default();
        SynthSection {
            count: s.n_scenes,
            cluster_rate: s.cluster_rate,
            objects_per_cluster: s.objects_per_cluster,
            cluster_spread: s.cluster_spread,
            aspect_range: s.aspect_range,
            classes: s.classes.iter().map(ClassSpecSection::from_core).collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassSpecSection {
    pub class_id: u32,
    pub size_log_mean: f64,
    pub size_log_std: f64,
    pub mix: f64,
}

impl ClassSpecSection {
    fn from_core(spec: &ClassSpec) -> Self {
        ClassSpecSection {
            class_id: spec.class_id,
            size_log_mean: spec.size_log_mean,
            size_log_std: spec.size_log_std,
            mix: spec.mix,
        }
    }

    fn to_core(&self) -> ClassSpec {
        ClassSpec {
            class_id: self.class_id,
            size_log_mean: self.size_log_mean,
            size_log_std: self.size_log_std,
            mix: self.mix,
        }
    }
}

/// Splits a `--set` argument into its dotted key and parsed TOML value.
/// Values that do not parse as a TOML scalar or array are taken as strings,
/// so `--set reward.variant=ablation` needs no quoting.
pub fn parse_set(raw: &str) -> Result<(String, toml::Value)> {
    let (key, text) = raw
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("--set {raw:?} is not of the form key=value")))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(|part| part.is_empty()) {
        return Err(CliError::Usage(format!("--set key {key:?} is not a dotted path")));
    }
    let value = match format!("v = {text}").parse::<toml::Table>() {
        Ok(mut table) => table.remove("v").expect("parsed assignment has the key"),
        Err(_) => toml::Value::String(text.to_string()),
    };
    Ok((key.to_string(), value))
}

/// Writes `value` at a dotted path, creating intermediate tables. Refuses
/// to descend through an existing non-table value.
fn insert_dotted(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts = key.split('.').peekable();
    let mut current = table;
    while let Some(part) = parts.next() {
        if parts.peek().is_none() {
            current.insert(part.to_string(), value);
            return Ok(());
        }
        let entry = current
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        current = entry.as_table_mut().ok_or_else(|| {
            CliError::Usage(format!("--set key {key:?}: {part:?} is not a table"))
        })?;
    }
    unreachable!("split always yields at least one part")
}

impl RunConfig {
    /// Loads the config file (when given), applies `--set` pairs in order,
    /// and deserializes. Unknown keys anywhere are an error.
    pub fn load(path: Option<&Path>, sets: &[String]) -> Result<RunConfig> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| crate::io_context(p, e))?;
                text.parse::<toml::Table>()
                    .map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for raw in sets {
            let (key, value) = parse_set(raw)?;
            insert_dotted(&mut table, &key, value)?;
        }
        toml::Value::Table(table)
            .try_into()
            .map_err(|e| CliError::Usage(format!("config: {e}")))
    }

    /// Seed precedence: explicit flag, config key, ZOOMCASCADE_SEED, 7.
    pub fn resolve_seed(&self, flag: Option<u64>) -> Result<u64> {
        if let Some(seed) = flag {
            return Ok(seed);
        }
        if let Some(seed) = self.seed {
            return Ok(seed);
        }
        match std::env::var("ZOOMCASCADE_SEED") {
            Ok(raw) => raw.trim().parse().map_err(|_| {
                CliError::Usage(format!("ZOOMCASCADE_SEED {raw:?} is not a non-negative integer"))
            }),
            Err(std::env::VarError::NotPresent) => Ok(7),
            Err(e) => Err(CliError::Usage(format!("ZOOMCASCADE_SEED: {e}"))),
        }
    }

    /// The resolved config as embedded into output artifacts.
    pub fn echo(&self, seed: u64) -> serde_json::Value {
        let mut resolved = self.clone();
        resolved.seed = Some(seed);
        serde_json::to_value(&resolved).expect("config serializes")
    }

    pub fn grid(&self) -> Result<GridLayout> {
        Ok(build_grid(
            self.grid.scene_side,
            self.grid.patch_size,
            self.grid.subpatch_size,
            self.grid.subpatch_overlap,
        )?)
    }

    pub fn observation(&self) -> ObservationSpec {
        ObservationSpec {
            cpnet_side: self.obs.cpnet_side,
            class_intensity: self.obs.class_intensity.clone(),
        }
    }

    pub fn hyper(&self, seed: u64) -> Hyperparams {
        Hyperparams {
            alpha: self.reward.alpha,
            beta: self.reward.beta,
            sigma: self.reward.sigma,
            lambda: self.reward.lambda,
            learning_rate: self.train.learning_rate,
            batch_size: self.train.batch_size,
            epochs: self.train.epochs,
            seed,
        }
    }

    pub fn train_config(&self, stage: Stage, seed: u64) -> Result<TrainConfig> {
        let reward_variant = match self.reward.variant.as_str() {
            "combined" => RewardVariant::Combined,
            "ablation" => RewardVariant::Ablation,
            other => {
                return Err(CliError::Usage(format!(
                    "reward.variant {other:?} is neither \"combined\" nor \"ablation\""
                )))
            }
        };
        let reward_mode = match self.train.reward_mode.as_str() {
            "sampled" => RewardMode::Sampled,
            "expected" => RewardMode::Expected,
            other => {
                return Err(CliError::Usage(format!(
                    "train.reward_mode {other:?} is neither \"sampled\" nor \"expected\""
                )))
            }
        };
        Ok(TrainConfig {
            hyper: self.hyper(seed),
            stage,
            reward_variant,
            reward_mode,
            log_every: self.train.log_every,
            reward_iou: self.reward.match_iou,
            ..TrainConfig::new(stage)
        })
    }

    pub fn detectors(&self) -> DetectorPair {
        DetectorPair {
            coarse: self.detector.coarse.to_core(Tier::Coarse),
            fine: self.detector.fine.to_core(Tier::Fine),
        }
    }

    pub fn cost(&self) -> CostModel {
        CostModel {
            t_coarse_ms: self.cost.t_coarse_ms,
            t_fine_ms: self.cost.t_fine_ms,
            t_cpnet_ms: self.cost.t_cpnet_ms,
            t_fpnet_ms: self.cost.t_fpnet_ms,
        }
    }

    pub fn metric(&self) -> MetricConfig {
        MetricConfig {
            iou_thresholds: self.metric.iou_thresholds.clone(),
            reward_iou: self.reward.match_iou,
        }
    }

    pub fn synth(&self, seed: u64, count: Option<usize>) -> SynthConfig {
        SynthConfig {
            n_scenes: count.unwrap_or(self.synth.count),
            scene_side: self.grid.scene_side,
            cluster_rate: self.synth.cluster_rate,
            objects_per_cluster: self.synth.objects_per_cluster,
            cluster_spread: self.synth.cluster_spread,
            aspect_range: self.synth.aspect_range,
            classes: self.synth.classes.iter().map(ClassSpecSection::to_core).collect(),
            seed,
        }
    }
}

pub fn parse_stage(name: &str) -> Result<Stage> {
    match name {
        "cpnet" => Ok(Stage::Cpnet),
        "fpnet" => Ok(Stage::Fpnet),
        other => Err(CliError::Usage(format!(
            "stage {other:?} is neither \"cpnet\" nor \"fpnet\""
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_and_match_library() {
        let cfg = RunConfig::load(None, &[]).unwrap();
        assert_eq!(cfg.resolve_seed(Some(11)).unwrap(), 11);
        let grid = cfg.grid().unwrap();
        assert_eq!(grid.patch_count(), 16);
        assert_eq!(grid.subpatch_count(), 4);
        assert_eq!(cfg.hyper(7), Hyperparams::default());
        assert_eq!(cfg.detectors(), DetectorPair::default());
        assert_eq!(cfg.cost(), CostModel::default());
        assert_eq!(cfg.metric(), MetricConfig::default());
        let synth = cfg.synth(7, None);
        assert_eq!(synth, SynthConfig { seed: 7, ..SynthConfig::default() });
        let tc = cfg.train_config(Stage::Cpnet, 7).unwrap();
        assert_eq!(tc, TrainConfig::new(Stage::Cpnet));
    }

    #[test]
    fn set_pairs_override_in_order() {
        let sets = vec![
            "reward.beta=0.1".to_string(),
            "reward.beta=0.2".to_string(),
            "train.epochs=3".to_string(),
            "reward.variant=ablation".to_string(),
            "metric.iou_thresholds=[0.5]".to_string(),
        ];
        let cfg = RunConfig::load(None, &sets).unwrap();
        assert_eq!(cfg.reward.beta, 0.2);
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.reward.variant, "ablation");
        assert_eq!(cfg.metric.iou_thresholds, vec![0.5]);
    }

    #[test]
    fn unknown_keys_and_malformed_sets_are_usage_errors() {
        assert!(RunConfig::load(None, &["reward.betta=0.1".into()]).is_err());
        assert!(RunConfig::load(None, &["nonsense".into()]).is_err());
        assert!(RunConfig::load(None, &["reward..beta=0.1".into()]).is_err());
        // A scalar in the path cannot become a table.
        assert!(RunConfig::load(None, &["reward.beta=0.1".into(), "reward.beta.x=1".into()])
            .is_err());
    }

    #[test]
    fn partial_detector_tier_keeps_its_own_defaults() {
        let cfg = RunConfig::load(None, &["detector.fine.char_size=5.0".into()]).unwrap();
        let pair = cfg.detectors();
        let stock = DetectorPair::default();
        assert_eq!(pair.fine.char_size, 5.0);
        assert_eq!(pair.fine.unit_cost_ms, stock.fine.unit_cost_ms);
        assert_eq!(pair.coarse, stock.coarse);
    }

    #[test]
    fn echo_pins_the_seed() {
        let cfg = RunConfig::load(None, &[]).unwrap();
        let echo = cfg.echo(42);
        assert_eq!(echo["seed"], serde_json::json!(42));
        assert_eq!(echo["reward"]["alpha"], serde_json::json!(0.8));
    }
}
