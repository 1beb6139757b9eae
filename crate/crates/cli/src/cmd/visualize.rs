//! Decision rendering: the cascade's final acquisition grid for one scene
//! as a PGM image, plus the patch policy's zoom-probability profile over
//! the whole scene set as CSV.

use std::path::Path;

use zoomcascade_core::cascade::{run_policy, zoom_probability_profile, DetectorSource};
use zoomcascade_core::PolicySpec;

use crate::config::RunConfig;
use crate::{formats, CliError, Result};

pub struct VisualizeArgs<'a> {
    pub scene: &'a str,
    pub scenes: Option<&'a Path>,
    pub cpnet: Option<&'a Path>,
    pub fpnet: Option<&'a Path>,
    pub out_grid: &'a Path,
    pub out_profile: &'a Path,
    pub bins: usize,
}

pub fn run(cfg: &RunConfig, seed: u64, args: &VisualizeArgs) -> Result<()> {
    let grid = cfg.grid()?;
    let obs = cfg.observation();
    let cost = cfg.cost();
    let scenes_dir = args.scenes.unwrap_or(&cfg.paths.scenes_dir);
    let scenes = formats::load_scene_set(scenes_dir)?;
    let scene = scenes.iter().find(|s| s.id == args.scene).ok_or_else(|| {
        CliError::Usage(format!(
            "scene {:?} is not in {}",
            args.scene,
            scenes_dir.display()
        ))
    })?;

    let (cpnet, _) = formats::read_model(args.cpnet.unwrap_or(&cfg.paths.cpnet_model))?;
    let (fpnet, _) = formats::read_model(args.fpnet.unwrap_or(&cfg.paths.fpnet_model))?;
    let spec = PolicySpec::Cascade { cpnet: &cpnet, fpnet: &fpnet };
    let pair = cfg.detectors();
    let source = DetectorSource::Simulated(&pair);
    let run = run_policy(scene, &grid, &obs, &spec, &source, &cost, seed)?;

    let echo = cfg.echo(seed);
    formats::write_zoom_grid_pgm(args.out_grid, &grid, &run.subpatch_actions, &echo)?;
    let profile = zoom_probability_profile(&cpnet, &scenes, &grid, &obs, args.bins)?;
    formats::write_profile_csv(args.out_profile, &profile, &echo)?;
    println!(
        "scene {} zoomed {}/{} subpatches; grid {}; profile {}",
        scene.id,
        run.fine_subpatches,
        grid.total_subpatches(),
        args.out_grid.display(),
        args.out_profile.display()
    );
    Ok(())
}
