//! Binary entry point: the argument surface, flag-to-config plumbing, and
//! exit-code mapping (0 ok, 1 failed diagnostic, 2 usage or input error,
//! 3 numeric failure).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use zoomcascade::cmd;
use zoomcascade::config::RunConfig;

#[derive(Parser)]
#[command(
    name = "zoomcascade",
    version,
    about = "Cost-aware adaptive-resolution detection: data, training, evaluation, diagnostics"
)]
struct Cli {
    /// TOML config file; --set pairs and dedicated flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Dotted-key config override, e.g. --set reward.beta=0.1 (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Seed; precedence is this flag, the config key, ZOOMCASCADE_SEED, 7.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for evaluation. Results do not depend on this.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene set with a manifest.
    GenScenes {
        /// Output directory (default: paths.scenes_dir).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Number of scenes (default: synth.count).
        #[arg(long)]
        count: Option<usize>,
    },
    /// Train one policy stage on a scene set.
    Train {
        /// "cpnet" (patch level) or "fpnet" (subpatch level).
        #[arg(long)]
        stage: String,
        /// Scene-set directory (default: paths.scenes_dir).
        #[arg(long)]
        scenes: Option<PathBuf>,
        /// Model output (default: paths.cpnet_model / paths.fpnet_model).
        #[arg(long)]
        out: Option<PathBuf>,
        /// JSON-lines training log.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Shorthand for --set train.epochs=N.
        #[arg(long)]
        epochs: Option<usize>,
        /// Shorthand for --set train.batch_size=N.
        #[arg(long)]
        batch_size: Option<usize>,
        /// Shorthand for --set train.learning_rate=X.
        #[arg(long)]
        learning_rate: Option<f64>,
    },
    /// Evaluate a policy over a scene set and write a report.
    Eval {
        /// cascade, cpnet-only, fpnet-only, random, entropy, sliding-l, sliding-h.
        #[arg(long)]
        policy: String,
        /// Scene-set directory (default: paths.scenes_dir).
        #[arg(long)]
        scenes: Option<PathBuf>,
        #[arg(long)]
        cpnet: Option<PathBuf>,
        #[arg(long)]
        fpnet: Option<PathBuf>,
        /// Per-subpatch zoom probability for the random policy.
        #[arg(long, default_value_t = 0.5)]
        zoom_prob: f64,
        /// Patch gate for the probe-score policy.
        #[arg(long, default_value_t = 0.5)]
        patch_threshold: f64,
        /// Subpatch gate for the probe-score policy.
        #[arg(long, default_value_t = 0.5)]
        subpatch_threshold: f64,
        /// Report path (default: paths.report_dir/<policy>.json).
        #[arg(long)]
        out: Option<PathBuf>,
        /// "simulated" or "replay".
        #[arg(long, default_value = "simulated")]
        detector: String,
        /// Recorded detections for --detector replay.
        #[arg(long)]
        replay_archive: Option<PathBuf>,
    },
    /// Numeric self-check ("grad" or "mc"); prints a JSON verdict.
    Diagnose {
        which: String,
        /// Sample budget for the estimator check.
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        /// Fault injection; the check must then fail (negative control).
        #[arg(long, hide = true)]
        corrupt: bool,
    },
    /// Render one scene's acquisition decisions plus the attention profile.
    Visualize {
        /// Scene id within the scene set.
        #[arg(long)]
        scene: String,
        /// Scene-set directory (default: paths.scenes_dir).
        #[arg(long)]
        scenes: Option<PathBuf>,
        #[arg(long)]
        cpnet: Option<PathBuf>,
        #[arg(long)]
        fpnet: Option<PathBuf>,
        #[arg(long, default_value = "zoom_grid.pgm")]
        out_grid: PathBuf,
        #[arg(long, default_value = "zoom_profile.csv")]
        out_profile: PathBuf,
        /// Profile bins per axis.
        #[arg(long, default_value_t = 6)]
        bins: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

fn dispatch(cli: &Cli) -> zoomcascade::Result<()> {
    let mut sets = cli.sets.clone();
    // Dedicated flags are sugar for --set pairs, appended after the user's
    // own pairs so they win over both the file and earlier overrides.
    if let Command::Train { epochs, batch_size, learning_rate, .. } = &cli.command {
        if let Some(v) = epochs {
            sets.push(format!("train.epochs={v}"));
        }
        if let Some(v) = batch_size {
            sets.push(format!("train.batch_size={v}"));
        }
        if let Some(v) = learning_rate {
            sets.push(format!("train.learning_rate={v:e}"));
        }
    }
    let cfg = RunConfig::load(cli.config.as_deref(), &sets)?;
    let seed = cfg.resolve_seed(cli.seed)?;

    match &cli.command {
        Command::GenScenes { out, count } => {
            cmd::gen_scenes::run(&cfg, seed, out.as_deref(), *count)
        }
        Command::Train { stage, scenes, out, log, .. } => cmd::train::run(
            &cfg,
            seed,
            &cmd::train::TrainArgs {
                stage,
                scenes: scenes.as_deref(),
                out: out.as_deref(),
                log: log.as_deref(),
            },
        ),
        Command::Eval {
            policy,
            scenes,
            cpnet,
            fpnet,
            zoom_prob,
            patch_threshold,
            subpatch_threshold,
            out,
            detector,
            replay_archive,
        } => cmd::eval::run(
            &cfg,
            seed,
            &cmd::eval::EvalArgs {
                policy,
                scenes: scenes.as_deref(),
                cpnet: cpnet.as_deref(),
                fpnet: fpnet.as_deref(),
                zoom_prob: *zoom_prob,
                patch_threshold: *patch_threshold,
                subpatch_threshold: *subpatch_threshold,
                out: out.as_deref(),
                detector,
                replay_archive: replay_archive.as_deref(),
                threads: cli.threads,
            },
        ),
        Command::Diagnose { which, samples, corrupt } => {
            cmd::diagnose::run(which, seed, *samples, *corrupt)
        }
        Command::Visualize { scene, scenes, cpnet, fpnet, out_grid, out_profile, bins } => {
            cmd::visualize::run(
                &cfg,
                seed,
                &cmd::visualize::VisualizeArgs {
                    scene,
                    scenes: scenes.as_deref(),
                    cpnet: cpnet.as_deref(),
                    fpnet: fpnet.as_deref(),
                    out_grid,
                    out_profile,
                    bins: *bins,
                },
            )
        }
    }
}
