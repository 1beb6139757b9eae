//! Synthetic scene-set generation.

use std::path::Path;

use zoomcascade_core::synth;

use crate::config::RunConfig;
use crate::{formats, Result};

pub fn run(cfg: &RunConfig, seed: u64, out: Option<&Path>, count: Option<usize>) -> Result<()> {
    let synth_config = cfg.synth(seed, count);
    let scenes = synth::generate(&synth_config)?;
    let dir = out.unwrap_or(&cfg.paths.scenes_dir);
    let manifest = formats::write_scene_set(dir, &scenes, cfg.echo(seed))?;
    println!("wrote {} scenes, manifest {}", scenes.len(), manifest.display());
    Ok(())
}
