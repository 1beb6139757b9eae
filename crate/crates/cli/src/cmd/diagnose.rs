//! Numeric self-checks with machine-readable JSON verdicts. Both checks
//! run on fixed small probe problems (the estimator check enumerates every
//! action, so its probe world must stay at a handful of decision slots);
//! only the seed, the sample budget, and the fault-injection flag vary.
//! A violated bound exits 1.

use zoomcascade_core::policy::default_layer_dims;
use zoomcascade_core::scene::build_grid;
use zoomcascade_core::trainer::{
    build_samples, grad_check, mc_check, RewardMode, Stage, TrainConfig,
};
use zoomcascade_core::{ActionVector, BBox, DetectorPair, ObservationSpec, PolicyModel, RngStream, Scene};

use crate::{CliError, Result};

const GRAD_BOUND: f64 = 1e-4;
const GRAD_CASES: usize = 20;

pub fn run(which: &str, seed: u64, samples: usize, corrupt: bool) -> Result<()> {
    match which {
        "grad" => grad(seed, corrupt),
        "mc" => mc(seed, samples, corrupt),
        other => Err(CliError::Usage(format!(
            "unknown diagnostic {other:?}; expected \"grad\" or \"mc\""
        ))),
    }
}

/// Analytic gradients against central finite differences over a spread of
/// small random models, with and without the sampling temperature. The
/// fault injection swaps in a gradient taken at the wrong temperature,
/// which the comparison must flag.
fn grad(seed: u64, corrupt: bool) -> Result<()> {
    let dim_pool: [&[usize]; 4] = [&[6, 8, 3], &[10, 16, 8, 4], &[5, 4, 2], &[12, 6, 5]];
    let mut rng = RngStream::derive(seed, &[0x6772_6164]);
    let mut worst = 0.0f64;
    let mut params_checked = 0usize;
    for case in 0..GRAD_CASES {
        let dims = dim_pool[case % dim_pool.len()];
        let model = PolicyModel::init(dims, rng.next_u64())?;
        let input: Vec<f64> = (0..dims[0]).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let action = ActionVector {
            bits: (0..dims[dims.len() - 1]).map(|_| rng.bernoulli(0.5)).collect(),
        };
        let mut scale = rng.uniform(-3.0, 3.0);
        if scale.abs() < 0.25 {
            scale = if scale < 0.0 { -0.25 } else { 0.25 };
        }
        let alpha = if case % 2 == 0 { 0.8 } else { 1.0 };
        let report = grad_check(&model, &input, &action, scale, alpha)?;
        worst = worst.max(report.max_rel_error);
        params_checked += report.params_checked;
    }

    if corrupt {
        worst = worst.max(corrupted_gradient_error()?);
    }

    let pass = worst <= GRAD_BOUND;
    let verdict = serde_json::json!({
        "check": "grad",
        "cases": GRAD_CASES,
        "params_checked": params_checked,
        "max_rel_error": worst,
        "bound": GRAD_BOUND,
        "corrupted": corrupt,
        "pass": pass,
    });
    println!("{verdict}");
    if pass {
        Ok(())
    } else {
        Err(CliError::Diagnostic(format!(
            "gradient check failed: max relative error {worst:e} exceeds {GRAD_BOUND:e}"
        )))
    }
}

/// Worst component-relative disagreement between the gradient at the true
/// temperature and one taken with the temperature disabled.
fn corrupted_gradient_error() -> Result<f64> {
    let model = PolicyModel::init(&[6, 8, 3], 1234)?;
    let input: Vec<f64> = (0..6).map(|i| (i as f64 / 3.0) - 0.8).collect();
    let action = ActionVector { bits: vec![true, false, true] };
    let pass = model.forward(&input)?;
    let good = model.backward(&pass, &action, 1.5, 0.8)?;
    let bad = model.backward(&pass, &action, 1.5, 1.0)?;
    let mut rel = 0.0f64;
    let pairs = good
        .weights
        .iter()
        .zip(&bad.weights)
        .chain(good.biases.iter().zip(&bad.biases));
    for (g, b) in pairs {
        for (a, c) in g.iter().zip(b) {
            if a == c {
                continue;
            }
            rel = rel.max((a - c).abs() / a.abs().max(c.abs()).max(1e-8));
        }
    }
    Ok(rel)
}

/// Sampled mean reward against the exhaustive exact expectation on a
/// four-slot probe world. The fault injection biases the empirical mean by
/// a full reward unit, far outside any plausible confidence band.
fn mc(seed: u64, samples: usize, corrupt: bool) -> Result<()> {
    let grid = build_grid(300, 150, 80, 10)?;
    let obs = ObservationSpec::default();
    let config = TrainConfig {
        reward_mode: RewardMode::Expected,
        ..TrainConfig::new(Stage::Cpnet)
    };
    let detectors = DetectorPair::default();
    let scene = probe_scene();
    let sample_set = build_samples(&[scene], &grid, &obs, Stage::Cpnet)?;
    let dims = default_layer_dims(Stage::Cpnet.input_dim(&grid, &obs), grid.patch_count());
    let model = PolicyModel::init(&dims, seed)?;
    let report = mc_check(&model, &sample_set[0], &config, &detectors, samples, seed)?;

    let empirical =
        if corrupt { report.empirical_mean + 1.0 } else { report.empirical_mean };
    let gap = (empirical - report.exact_expectation).abs();
    let bound = 3.0 * report.std_error;
    let pass = gap <= bound;
    let verdict = serde_json::json!({
        "check": "mc",
        "n_samples": report.n_samples,
        "empirical_mean": empirical,
        "exact_expectation": report.exact_expectation,
        "abs_gap": gap,
        "std_error": report.std_error,
        "bound": bound,
        "corrupted": corrupt,
        "pass": pass,
    });
    println!("{verdict}");
    if pass {
        Ok(())
    } else {
        Err(CliError::Diagnostic(format!(
            "estimator check failed: gap {gap:e} exceeds 3 standard errors ({bound:e})"
        )))
    }
}

/// Five objects over a 2x2 patch grid: a cluster of small boxes, one
/// medium, one large, and one empty patch.
fn probe_scene() -> Scene {
    let gt = |cx: f64, cy: f64, w: f64, h: f64, class_id: u32| BBox {
        cx,
        cy,
        w,
        h,
        class_id,
        score: None,
    };
    Scene {
        id: "probe".into(),
        width: 300,
        height: 300,
        ground_truth: vec![
            gt(40.0, 40.0, 10.0, 10.0, 0),
            gt(70.0, 55.0, 12.0, 9.0, 0),
            gt(100.0, 90.0, 8.0, 11.0, 0),
            gt(220.0, 60.0, 40.0, 30.0, 0),
            gt(210.0, 220.0, 120.0, 90.0, 1),
        ],
    }
}
