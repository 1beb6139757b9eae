//! Policy training. On a numeric failure the model's last good state is
//! written as a checkpoint next to the requested output and the process
//! exits 3; the requested output itself is only written on success.

use std::path::{Path, PathBuf};

use zoomcascade_core::policy::default_layer_dims;
use zoomcascade_core::trainer::{train_with_hook, Stage};
use zoomcascade_core::{Error, PolicyModel};

use crate::config::{parse_stage, RunConfig};
use crate::{formats, CliError, Result};

pub struct TrainArgs<'a> {
    pub stage: &'a str,
    pub scenes: Option<&'a Path>,
    pub out: Option<&'a Path>,
    pub log: Option<&'a Path>,
}

fn checkpoint_path(out: &Path) -> PathBuf {
    out.with_extension("checkpoint.json")
}

pub fn run(cfg: &RunConfig, seed: u64, args: &TrainArgs) -> Result<()> {
    let stage = parse_stage(args.stage)?;
    let grid = cfg.grid()?;
    let obs = cfg.observation();
    let scenes = formats::load_scene_set(args.scenes.unwrap_or(&cfg.paths.scenes_dir))?;
    let train_config = cfg.train_config(stage, seed)?;
    let detectors = cfg.detectors();

    let dims = default_layer_dims(stage.input_dim(&grid, &obs), stage.slots(&grid));
    let mut model = PolicyModel::init(&dims, seed)?;

    let out = args.out.unwrap_or(match stage {
        Stage::Cpnet => &cfg.paths.cpnet_model,
        Stage::Fpnet => &cfg.paths.fpnet_model,
    });
    let total_epochs = train_config.hyper.epochs;
    let result = train_with_hook(&mut model, &scenes, &grid, &obs, &train_config, &detectors, {
        |epoch, _model| {
            if (epoch + 1) % 20 == 0 || epoch + 1 == total_epochs {
                eprintln!("epoch {}/{total_epochs}", epoch + 1);
            }
        }
    });

    match result {
        Ok(records) => {
            formats::write_model(out, &model, stage.name(), cfg.echo(seed))?;
            if let Some(log) = args.log {
                formats::write_train_log(log, cfg.echo(seed), &records)?;
            }
            match records.last() {
                Some(last) => println!(
                    "trained {} for {total_epochs} epochs; final mean sampled reward {:.6}; model {}",
                    stage.name(),
                    last.mean_sampled_reward,
                    out.display()
                ),
                None => println!(
                    "trained {} for 0 epochs; model {} equals its initialization",
                    stage.name(),
                    out.display()
                ),
            }
            Ok(())
        }
        // The update that produced the non-finite gradient was never
        // applied, so the in-memory model is the last good state.
        Err(err @ Error::NonFinite { .. }) => {
            let checkpoint = checkpoint_path(out);
            formats::write_model(&checkpoint, &model, stage.name(), cfg.echo(seed))?;
            Err(CliError::Numeric {
                message: format!("{err}; last good model written to {}", checkpoint.display()),
                checkpoint: Some(checkpoint),
            })
        }
        Err(err) => Err(err.into()),
    }
}
