//! On-disk artifact formats. Everything is UTF-8 and written with stable
//! field order and shortest-round-trip floats, so a given configuration and
//! seed produce byte-identical files. Every artifact embeds the resolved
//! configuration it was produced under (scene sets carry it in their
//! manifest).

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use zoomcascade_core::cascade::{EvalReport, ZoomProfile};
use zoomcascade_core::detector::ReplayArchive;
use zoomcascade_core::policy::Activation;
use zoomcascade_core::trainer::TrainLogRecord;
use zoomcascade_core::{ActionVector, BBox, GridLayout, PolicyModel, Scene, Tier};

use crate::{io_context, CliError, Result};

pub fn write_json_file<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| io_context(path, e))
}

pub fn read_json_file<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| io_context(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

// ---------------------------------------------------------------- scenes

#[derive(Debug, Serialize, Deserialize)]
pub struct SceneFile {
    pub id: String,
    pub width: u32,
    pub height: u32,
    pub objects: Vec<ObjectRec>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ObjectRec {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
    pub class: u32,
}

/// Scene-set directory index: the config the set was generated under plus
/// the scene file names in generation order.
#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub config: serde_json::Value,
    pub scenes: Vec<String>,
}

impl SceneFile {
    fn from_core(scene: &Scene) -> Self {
        SceneFile {
            id: scene.id.clone(),
            width: scene.width,
            height: scene.height,
            objects: scene
                .ground_truth
                .iter()
                .map(|b| ObjectRec { cx: b.cx, cy: b.cy, w: b.w, h: b.h, class: b.class_id })
                .collect(),
        }
    }

    fn into_core(self) -> Scene {
        Scene {
            id: self.id,
            width: self.width,
            height: self.height,
            ground_truth: self
                .objects
                .into_iter()
                .map(|o| BBox { cx: o.cx, cy: o.cy, w: o.w, h: o.h, class_id: o.class, score: None })
                .collect(),
        }
    }
}

/// Writes one file per scene plus `manifest.json`, and returns the manifest
/// path. The directory is created if needed.
pub fn write_scene_set(dir: &Path, scenes: &[Scene], config: serde_json::Value) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| io_context(dir, e))?;
    let mut names = Vec::with_capacity(scenes.len());
    for scene in scenes {
        let name = format!("{}.json", scene.id);
        write_json_file(&dir.join(&name), &SceneFile::from_core(scene))?;
        names.push(name);
    }
    let manifest = dir.join("manifest.json");
    write_json_file(&manifest, &Manifest { config, scenes: names })?;
    Ok(manifest)
}

/// Reads a scene set back in manifest order.
pub fn load_scene_set(dir: &Path) -> Result<Vec<Scene>> {
    let manifest: Manifest = read_json_file(&dir.join("manifest.json"))?;
    let mut scenes = Vec::with_capacity(manifest.scenes.len());
    for name in &manifest.scenes {
        let path = dir.join(name);
        let file: SceneFile = read_json_file(&path)?;
        let scene = file.into_core();
        scene.validate(1).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        scenes.push(scene);
    }
    Ok(scenes)
}

// ----------------------------------------------------------------- models

#[derive(Debug, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    /// Which policy stage the model was trained for ("cpnet" or "fpnet").
    pub stage: String,
    pub layer_dims: Vec<usize>,
    pub activation: String,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub config: serde_json::Value,
}

pub fn write_model(
    path: &Path,
    model: &PolicyModel,
    stage: &str,
    config: serde_json::Value,
) -> Result<()> {
    write_json_file(
        path,
        &ModelFile {
            format_version: 1,
            stage: stage.to_string(),
            layer_dims: model.layer_dims.clone(),
            activation: model.activation.name().to_string(),
            weights: model.weights.clone(),
            biases: model.biases.clone(),
            config,
        },
    )
}

pub fn read_model(path: &Path) -> Result<(PolicyModel, String)> {
    let file: ModelFile = read_json_file(path)?;
    if file.format_version != 1 {
        return Err(CliError::Usage(format!(
            "{}: unsupported model format version {}",
            path.display(),
            file.format_version
        )));
    }
    let activation = Activation::parse(&file.activation).ok_or_else(|| {
        CliError::Usage(format!(
            "{}: unsupported activation {:?}",
            path.display(),
            file.activation
        ))
    })?;
    let model = PolicyModel {
        layer_dims: file.layer_dims,
        weights: file.weights,
        biases: file.biases,
        activation,
    };
    model.validate().map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    Ok((model, file.stage))
}

// ----------------------------------------------------------------- replay

#[derive(Debug, Serialize, Deserialize)]
pub struct ReplayFile {
    pub entries: Vec<ReplayEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ReplayEntry {
    pub scene: String,
    pub patch: usize,
    pub subpatch: Option<usize>,
    pub tier: String,
    pub boxes: Vec<DetectionRec>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DetectionRec {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
    pub class: u32,
    pub score: Option<f64>,
}

fn tier_name(tier: Tier) -> &'static str {
    match tier {
        Tier::Coarse => "coarse",
        Tier::Fine => "fine",
    }
}

fn parse_tier(name: &str) -> Result<Tier> {
    match name {
        "coarse" => Ok(Tier::Coarse),
        "fine" => Ok(Tier::Fine),
        other => Err(CliError::Usage(format!(
            "tier {other:?} is neither \"coarse\" nor \"fine\""
        ))),
    }
}

pub fn write_replay(path: &Path, archive: &ReplayArchive) -> Result<()> {
    let entries = archive
        .iter()
        .map(|((scene, patch, subpatch, tier), boxes)| ReplayEntry {
            scene: scene.clone(),
            patch: *patch,
            subpatch: *subpatch,
            tier: tier_name(*tier).to_string(),
            boxes: boxes
                .iter()
                .map(|b| DetectionRec {
                    cx: b.cx,
                    cy: b.cy,
                    w: b.w,
                    h: b.h,
                    class: b.class_id,
                    score: b.score,
                })
                .collect(),
        })
        .collect();
    write_json_file(path, &ReplayFile { entries })
}

pub fn read_replay(path: &Path) -> Result<ReplayArchive> {
    let file: ReplayFile = read_json_file(path)?;
    let mut archive = ReplayArchive::new();
    for entry in file.entries {
        let tier = parse_tier(&entry.tier)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let boxes = entry
            .boxes
            .into_iter()
            .map(|d| BBox { cx: d.cx, cy: d.cy, w: d.w, h: d.h, class_id: d.class, score: d.score })
            .collect();
        archive.insert(&entry.scene, entry.patch, entry.subpatch, tier, boxes);
    }
    Ok(archive)
}

// ---------------------------------------------------------------- reports

#[derive(Debug, Serialize, Deserialize)]
pub struct ReportFile {
    pub config: serde_json::Value,
    pub report: ReportBody,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ReportBody {
    pub policy: String,
    pub ap_percent: f64,
    pub ar_percent: f64,
    pub runtime_ms_mean: f64,
    pub hr_ratio_percent: f64,
    pub scenes_evaluated: usize,
    pub zoom_grid_stats: Vec<f64>,
}

impl ReportBody {
    pub fn from_core(report: &EvalReport) -> Self {
        ReportBody {
            policy: report.policy_name.clone(),
            ap_percent: report.ap_percent,
            ar_percent: report.ar_percent,
            runtime_ms_mean: report.runtime_ms_mean,
            hr_ratio_percent: report.hr_ratio_percent,
            scenes_evaluated: report.scenes_evaluated,
            zoom_grid_stats: report.zoom_grid_stats.clone(),
        }
    }
}

pub fn write_report(path: &Path, config: serde_json::Value, report: &EvalReport) -> Result<()> {
    write_json_file(path, &ReportFile { config, report: ReportBody::from_core(report) })
}

// -------------------------------------------------------------- train log

/// JSON-lines training log: a `{"config": ...}` header line, then one
/// object per logged step.
pub fn write_train_log(
    path: &Path,
    config: serde_json::Value,
    records: &[TrainLogRecord],
) -> Result<()> {
    #[derive(Serialize)]
    struct Header<'a> {
        config: &'a serde_json::Value,
    }
    #[derive(Serialize)]
    struct Line {
        epoch: usize,
        step: usize,
        mean_sampled_reward: f64,
        mean_baseline_reward: f64,
        mean_advantage: f64,
        mean_zoom_fraction: f64,
        gradient_norm: f64,
    }
    let mut text = serde_json::to_string(&Header { config: &config })?;
    text.push('\n');
    for r in records {
        text.push_str(&serde_json::to_string(&Line {
            epoch: r.epoch,
            step: r.step,
            mean_sampled_reward: r.mean_sampled_reward,
            mean_baseline_reward: r.mean_baseline_reward,
            mean_advantage: r.mean_advantage,
            mean_zoom_fraction: r.mean_zoom_fraction,
            gradient_norm: r.gradient_norm,
        })?);
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| io_context(path, e))
}

// ------------------------------------------------------------- zoom grid

/// Greyscale render of one scene's final acquisition decisions: one cell
/// per subpatch (row-major across the whole scene), white for fine, grey
/// for coarse. Binary PGM with the config echoed in a header comment.
pub fn write_zoom_grid_pgm(
    path: &Path,
    grid: &GridLayout,
    subpatch_actions: &[ActionVector],
    config: &serde_json::Value,
) -> Result<()> {
    const CELL: usize = 16;
    const COARSE: u8 = 128;
    const FINE: u8 = 255;
    let pps = grid.patches_per_side as usize;
    let sps = grid.subpatches_per_side() as usize;
    if subpatch_actions.len() != grid.patch_count() {
        return Err(CliError::Usage(format!(
            "decision grid has {} patches; the layout has {}",
            subpatch_actions.len(),
            grid.patch_count()
        )));
    }
    let side_cells = pps * sps;
    let side_px = side_cells * CELL;
    let mut pixels = vec![COARSE; side_px * side_px];
    for (patch, actions) in subpatch_actions.iter().enumerate() {
        for (sub, &fine) in actions.bits.iter().enumerate() {
            if !fine {
                continue;
            }
            let cell_row = (patch / pps) * sps + sub / sps;
            let cell_col = (patch % pps) * sps + sub % sps;
            for dy in 0..CELL {
                let row_start = (cell_row * CELL + dy) * side_px + cell_col * CELL;
                pixels[row_start..row_start + CELL].fill(FINE);
            }
        }
    }
    let mut out = Vec::with_capacity(pixels.len() + 128);
    let header = format!(
        "P5\n# config: {}\n{side_px} {side_px}\n255\n",
        serde_json::to_string(config)?
    );
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(&pixels);
    let mut file = std::fs::File::create(path).map_err(|e| io_context(path, e))?;
    file.write_all(&out).map_err(|e| io_context(path, e))
}

// ---------------------------------------------------------------- profile

/// Zoom-attention profile as CSV: per bin, the patch population and its
/// mean raw zoom probability, keyed by object count or normalized object
/// size. The config rides in a leading comment line.
pub fn write_profile_csv(
    path: &Path,
    profile: &ZoomProfile,
    config: &serde_json::Value,
) -> Result<()> {
    let mut text = format!("# config: {}\n", serde_json::to_string(config)?);
    text.push_str("kind,lower,upper,mean_zoom_probability,patches\n");
    for (kind, bins) in [("count", &profile.by_count), ("size", &profile.by_size)] {
        for bin in bins {
            text.push_str(&format!(
                "{kind},{},{},{},{}\n",
                bin.lower, bin.upper, bin.mean_zoom_probability, bin.patches
            ));
        }
    }
    std::fs::write(path, text).map_err(|e| io_context(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use zoomcascade_core::synth;
    use zoomcascade_core::SynthConfig;

    #[test]
    fn scene_set_round_trips_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let scenes =
            synth::generate(&SynthConfig { n_scenes: 3, ..SynthConfig::default() }).unwrap();
        let manifest = write_scene_set(dir.path(), &scenes, serde_json::json!({"seed": 7})).unwrap();
        assert!(manifest.ends_with("manifest.json"));
        let back = load_scene_set(dir.path()).unwrap();
        assert_eq!(back, scenes);
    }

    #[test]
    fn model_round_trips_bit_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let model = PolicyModel::init(&[7, 5, 3], 123).unwrap();
        let path = dir.path().join("m.json");
        write_model(&path, &model, "cpnet", serde_json::json!({})).unwrap();
        let (back, stage) = read_model(&path).unwrap();
        assert_eq!(back, model);
        assert_eq!(stage, "cpnet");
    }

    #[test]
    fn model_rejects_bad_version_and_activation() {
        let dir = tempfile::tempdir().unwrap();
        let model = PolicyModel::init(&[4, 2], 1).unwrap();
        let path = dir.path().join("m.json");
        write_model(&path, &model, "cpnet", serde_json::json!({})).unwrap();
        let mut file: ModelFile = read_json_file(&path).unwrap();
        file.format_version = 2;
        write_json_file(&path, &file).unwrap();
        assert!(read_model(&path).is_err());
        file.format_version = 1;
        file.activation = "gelu".into();
        write_json_file(&path, &file).unwrap();
        assert!(read_model(&path).is_err());
    }

    #[test]
    fn replay_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let mut archive = ReplayArchive::new();
        let boxed = vec![BBox { cx: 5.0, cy: 6.0, w: 3.0, h: 4.0, class_id: 1, score: Some(0.7) }];
        archive.insert("s7_00000", 2, Some(1), Tier::Fine, boxed.clone());
        archive.insert("s7_00000", 2, None, Tier::Coarse, vec![]);
        let path = dir.path().join("r.json");
        write_replay(&path, &archive).unwrap();
        let back = read_replay(&path).unwrap();
        assert_eq!(
            back.replay_detect("s7_00000", 2, Some(1), Tier::Fine).unwrap().boxes,
            boxed
        );
        assert!(back.replay_detect("s7_00000", 2, None, Tier::Coarse).unwrap().boxes.is_empty());
        assert!(back.replay_detect("s7_00000", 0, None, Tier::Coarse).is_err());
    }

    #[test]
    fn pgm_header_and_cells() {
        let dir = tempfile::tempdir().unwrap();
        let grid = build_test_grid();
        // Patch 0 zooms subpatch 3 (bottom-right of top-left patch).
        let mut actions = vec![ActionVector { bits: vec![false; 4] }; 4];
        actions[0].bits[3] = true;
        let path = dir.path().join("g.pgm");
        write_zoom_grid_pgm(&path, &grid, &actions, &serde_json::json!({"seed": 7})).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let header_end = bytes.windows(4).position(|w| w == b"255\n").unwrap() + 4;
        let header = std::str::from_utf8(&bytes[..header_end]).unwrap();
        assert!(header.starts_with("P5\n# config: {\"seed\":7}\n64 64\n255\n"));
        let pixels = &bytes[header_end..];
        assert_eq!(pixels.len(), 64 * 64);
        // Cell (row 1, col 1) of 4x4 cells at 16 px is fine; cell (0, 0) is coarse.
        assert_eq!(pixels[0], 128);
        assert_eq!(pixels[(16 + 8) * 64 + 16 + 8], 255);
        assert_eq!(pixels.iter().filter(|&&p| p == 255).count(), 16 * 16);
    }

    fn build_test_grid() -> GridLayout {
        zoomcascade_core::scene::build_grid(300, 150, 80, 10).unwrap()
    }
}
