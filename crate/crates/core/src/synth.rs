//! Synthetic scene generation.
//!
//! Objects arrive in spatial clusters: a Poisson number of clusters per
//! scene, each with a uniform object count scattered normally around the
//! cluster center. Each cluster draws one object class; sizes are
//! log-normal per class and aspect ratios uniform, so a class reads as a
//! population of similar-scale boxes rather than a fixed stamp. All draws
//! come from a per-scene stream derived from the dataset seed, so scene i
//! is the same no matter how many scenes are generated around it.

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::scene::{BBox, Scene};
use alloc::format;
use alloc::vec::Vec;

/// Stream domain tag for scene synthesis.
const DOMAIN_SYNTH: u64 = 0x53;

#[derive(Debug, Clone, PartialEq)]
pub struct ClassSpec {
    pub class_id: u32,
    /// Mean of ln(size); size is the geometric mean of box extent.
    pub size_log_mean: f64,
    pub size_log_std: f64,
    /// Relative sampling weight; weights are normalized over classes.
    pub mix: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_scenes: usize,
    pub scene_side: u32,
    /// Expected clusters per scene.
    pub cluster_rate: f64,
    /// Inclusive range of objects per cluster.
    pub objects_per_cluster: (u32, u32),
    /// Standard deviation of object offsets from the cluster center.
    pub cluster_spread: f64,
    /// Inclusive aspect-ratio range (width/height before size scaling).
    pub aspect_range: (f64, f64),
    pub classes: Vec<ClassSpec>,
    pub seed: u64,
}

/// The stock benchmark world: clusters of small, hard-to-detect objects
/// (class 0) with a minority of large easy ones (class 1), on the standard
/// 2400-pixel scene. Callers usually override `n_scenes` and `seed`.
impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_scenes: 1,
            scene_side: 2400,
            cluster_rate: 3.0,
            objects_per_cluster: (2, 8),
            cluster_spread: 90.0,
            aspect_range: (0.7, 1.4),
            classes: alloc::vec![
                ClassSpec {
                    class_id: 0,
                    size_log_mean: crate::math::ln(12.0),
                    size_log_std: 0.25,
                    mix: 0.7,
                },
                ClassSpec {
                    class_id: 1,
                    size_log_mean: crate::math::ln(120.0),
                    size_log_std: 0.25,
                    mix: 0.3,
                },
            ],
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.scene_side == 0 {
            return Err(Error::Config("scene side must be positive".into()));
        }
        if !(self.cluster_rate >= 0.0) {
            return Err(Error::Config(format!(
                "cluster_rate {} must be >= 0",
                self.cluster_rate
            )));
        }
        let (lo, hi) = self.objects_per_cluster;
        if lo == 0 || hi < lo {
            return Err(Error::Config(format!(
                "objects_per_cluster ({lo}, {hi}) must satisfy 1 <= lo <= hi"
            )));
        }
        if !(self.cluster_spread >= 0.0) {
            return Err(Error::Config("cluster_spread must be >= 0".into()));
        }
        let (alo, ahi) = self.aspect_range;
        if !(alo > 0.0 && ahi >= alo) {
            return Err(Error::Config(format!(
                "aspect_range ({alo}, {ahi}) must satisfy 0 < lo <= hi"
            )));
        }
        if self.classes.is_empty() {
            return Err(Error::Config("at least one object class is required".into()));
        }
        for c in &self.classes {
            if !(c.mix > 0.0) {
                return Err(Error::Config(format!("class {} mix must be positive", c.class_id)));
            }
            if !(c.size_log_std >= 0.0) {
                return Err(Error::Config(format!(
                    "class {} size_log_std must be >= 0",
                    c.class_id
                )));
            }
        }
        Ok(())
    }
}

/// Generates the configured number of scenes.
///
/// Per-scene draw order: cluster count; then per cluster its center (x, y),
/// class, and object count; then per object two position offsets, one size
/// draw, and one aspect draw. Centroids are clamped into the scene.
pub fn generate(config: &SynthConfig) -> Result<Vec<Scene>> {
    config.validate()?;
    let side = config.scene_side as f64;
    let mix_total: f64 = config.classes.iter().map(|c| c.mix).sum();
    let mut scenes = Vec::with_capacity(config.n_scenes);
    for i in 0..config.n_scenes {
        let mut rng = RngStream::derive(config.seed, &[DOMAIN_SYNTH, i as u64]);
        let mut boxes = Vec::new();
        let n_clusters = rng.poisson(config.cluster_rate);
        for _ in 0..n_clusters {
            let ccx = rng.uniform(0.0, side);
            let ccy = rng.uniform(0.0, side);
            let class = pick_class(&config.classes, mix_total, &mut rng);
            let count =
                rng.uniform_incl(config.objects_per_cluster.0 as u64, config.objects_per_cluster.1 as u64);
            for _ in 0..count {
                let cx = (ccx + rng.gaussian() * config.cluster_spread).clamp(0.0, side);
                let cy = (ccy + rng.gaussian() * config.cluster_spread).clamp(0.0, side);
                let size = crate::math::exp(class.size_log_mean + rng.gaussian() * class.size_log_std);
                let aspect = rng.uniform(config.aspect_range.0, config.aspect_range.1);
                let w = size * crate::math::sqrt(aspect);
                let h = size / crate::math::sqrt(aspect);
                boxes.push(BBox::new(cx, cy, w, h, class.class_id));
            }
        }
        scenes.push(Scene {
            id: format!("s{}_{i:05}", config.seed),
            width: config.scene_side,
            height: config.scene_side,
            ground_truth: boxes,
        });
    }
    Ok(scenes)
}

fn pick_class<'a>(
    classes: &'a [ClassSpec],
    mix_total: f64,
    rng: &mut RngStream,
) -> &'a ClassSpec {
    let mut u = rng.next_f64() * mix_total;
    for c in classes {
        u -= c.mix;
        if u < 0.0 {
            return c;
        }
    }
    // Only reachable through accumulated rounding; the last class wins.
    classes.last().expect("classes validated non-empty")
}
