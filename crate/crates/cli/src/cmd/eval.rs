//! Policy evaluation over a scene set. Per-scene work is independent (all
//! randomness is derived from the seed and the scene id), so `--threads`
//! changes wall time, never results.

use std::path::Path;

use rayon::prelude::*;
use zoomcascade_core::cascade::{report_from_runs, run_policy, DetectorSource, SceneRun};
use zoomcascade_core::detector::ReplayArchive;
use zoomcascade_core::{PolicyModel, PolicySpec};

use crate::config::RunConfig;
use crate::{formats, CliError, Result};

pub struct EvalArgs<'a> {
    pub policy: &'a str,
    pub scenes: Option<&'a Path>,
    pub cpnet: Option<&'a Path>,
    pub fpnet: Option<&'a Path>,
    pub zoom_prob: f64,
    pub patch_threshold: f64,
    pub subpatch_threshold: f64,
    pub out: Option<&'a Path>,
    pub detector: &'a str,
    pub replay_archive: Option<&'a Path>,
    pub threads: usize,
}

#[derive(Clone, Copy, PartialEq)]
enum PolicyKind {
    Cascade,
    CpnetOnly,
    FpnetOnly,
    Random,
    Entropy,
    SlidingL,
    SlidingH,
}

fn parse_policy(name: &str) -> Result<PolicyKind> {
    match name.replace('-', "_").as_str() {
        "cascade" => Ok(PolicyKind::Cascade),
        "cpnet_only" => Ok(PolicyKind::CpnetOnly),
        "fpnet_only" => Ok(PolicyKind::FpnetOnly),
        "random" => Ok(PolicyKind::Random),
        "entropy" => Ok(PolicyKind::Entropy),
        "sliding_l" | "sliding_lr" => Ok(PolicyKind::SlidingL),
        "sliding_h" | "sliding_hr" => Ok(PolicyKind::SlidingH),
        other => Err(CliError::Usage(format!(
            "unknown policy {other:?}; expected cascade, cpnet-only, fpnet-only, random, \
             entropy, sliding-l, or sliding-h"
        ))),
    }
}

fn load_stage_model(path: &Path, want: &str) -> Result<PolicyModel> {
    let (model, stage) = formats::read_model(path)?;
    if stage != want {
        return Err(CliError::Usage(format!(
            "{}: holds a {stage:?} model; this policy needs a {want:?} model",
            path.display()
        )));
    }
    Ok(model)
}

pub fn run(cfg: &RunConfig, seed: u64, args: &EvalArgs) -> Result<()> {
    let kind = parse_policy(args.policy)?;
    let grid = cfg.grid()?;
    let obs = cfg.observation();
    let cost = cfg.cost();
    let metric = cfg.metric();
    let scenes = formats::load_scene_set(args.scenes.unwrap_or(&cfg.paths.scenes_dir))?;

    let cpnet = matches!(kind, PolicyKind::Cascade | PolicyKind::CpnetOnly)
        .then(|| load_stage_model(args.cpnet.unwrap_or(&cfg.paths.cpnet_model), "cpnet"))
        .transpose()?;
    let fpnet = matches!(kind, PolicyKind::Cascade | PolicyKind::FpnetOnly)
        .then(|| load_stage_model(args.fpnet.unwrap_or(&cfg.paths.fpnet_model), "fpnet"))
        .transpose()?;
    let spec = match kind {
        PolicyKind::Cascade => PolicySpec::Cascade {
            cpnet: cpnet.as_ref().expect("loaded above"),
            fpnet: fpnet.as_ref().expect("loaded above"),
        },
        PolicyKind::CpnetOnly => {
            PolicySpec::CpnetOnly { cpnet: cpnet.as_ref().expect("loaded above") }
        }
        PolicyKind::FpnetOnly => {
            PolicySpec::FpnetOnly { fpnet: fpnet.as_ref().expect("loaded above") }
        }
        PolicyKind::Random => PolicySpec::Random { zoom_prob: args.zoom_prob },
        PolicyKind::Entropy => PolicySpec::Entropy {
            patch_threshold: args.patch_threshold,
            subpatch_threshold: args.subpatch_threshold,
        },
        PolicyKind::SlidingL => PolicySpec::SlidingLr,
        PolicyKind::SlidingH => PolicySpec::SlidingHr,
    };

    let pair = cfg.detectors();
    let archive: Option<ReplayArchive> = match args.detector {
        "simulated" => None,
        "replay" => {
            let path = args.replay_archive.ok_or_else(|| {
                CliError::Usage("--detector replay needs --replay-archive".into())
            })?;
            Some(formats::read_replay(path)?)
        }
        other => {
            return Err(CliError::Usage(format!(
                "detector {other:?} is neither \"simulated\" nor \"replay\""
            )))
        }
    };
    let source = match &archive {
        Some(a) => DetectorSource::Replay(a),
        None => DetectorSource::Simulated(&pair),
    };

    let runs: Vec<SceneRun> = if args.threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(args.threads)
            .build()
            .map_err(|e| CliError::Usage(format!("--threads: {e}")))?;
        pool.install(|| {
            scenes
                .par_iter()
                .map(|scene| run_policy(scene, &grid, &obs, &spec, &source, &cost, seed))
                .collect::<zoomcascade_core::Result<Vec<_>>>()
        })?
    } else {
        scenes
            .iter()
            .map(|scene| run_policy(scene, &grid, &obs, &spec, &source, &cost, seed))
            .collect::<zoomcascade_core::Result<Vec<_>>>()?
    };
    let report = report_from_runs(spec.name(), &runs, &scenes, &grid, &metric)?;

    let echo = cfg.echo(seed);
    let out = match args.out {
        Some(path) => path.to_path_buf(),
        None => {
            let dir = &cfg.paths.report_dir;
            std::fs::create_dir_all(dir).map_err(|e| crate::io_context(dir, e))?;
            dir.join(format!("{}.json", report.policy_name))
        }
    };
    formats::write_report(&out, echo, &report)?;
    println!(
        "{} AP {:.2} AR {:.2} runtime {:.1} ms HR {:.1}% ({} scenes; report {})",
        report.policy_name,
        report.ap_percent,
        report.ar_percent,
        report.runtime_ms_mean,
        report.hr_ratio_percent,
        report.scenes_evaluated,
        out.display()
    );
    Ok(())
}
