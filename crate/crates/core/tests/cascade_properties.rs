//! Whole-pipeline invariants swept over random policies, models, and
//! worlds: duplicate suppression is idempotent and class-aware, every
//! policy's tier counts and runtime obey the accounting identity, and the
//! aggregate reports stay internally consistent.

use zoomcascade_core::cascade::{
    evaluate, merge_detections, run_policy, zoom_probability_profile, CostModel, DetectorSource,
    ObservationSpec, PolicySpec, NMS_IOU,
};
use zoomcascade_core::detector::{DetectionSet, DetectorPair, Tier};
use zoomcascade_core::metrics::{iou, MetricConfig};
use zoomcascade_core::policy::{default_layer_dims, PolicyModel};
use zoomcascade_core::rng::RngStream;
use zoomcascade_core::scene::{build_grid, BBox, GridLayout, Scene};
use zoomcascade_core::synth::{generate, SynthConfig};
use zoomcascade_core::trainer::Stage;

fn small_grid() -> GridLayout {
    // 2x2 patches of 300, each 2x2 subpatches of 160 with 20 overlap.
    build_grid(600, 300, 160, 20).unwrap()
}

fn small_dataset(n_scenes: usize, seed: u64) -> Vec<Scene> {
    generate(&SynthConfig { n_scenes, scene_side: 600, cluster_rate: 2.0, seed, ..SynthConfig::default() })
        .unwrap()
}

fn random_sets(rng: &mut RngStream) -> Vec<DetectionSet> {
    let n_sets = 2 + rng.index(4);
    (0..n_sets)
        .map(|s| {
            let boxes = (0..rng.index(7))
                .map(|_| {
                    BBox::with_score(
                        rng.uniform(20.0, 120.0),
                        rng.uniform(20.0, 120.0),
                        rng.uniform(8.0, 40.0),
                        rng.uniform(8.0, 40.0),
                        rng.index(2) as u32,
                        rng.uniform_incl(1, 10) as f64 / 10.0, // deliberate ties
                    )
                })
                .collect();
            DetectionSet {
                patch_index: s,
                subpatch_index: if s % 2 == 0 { None } else { Some(s) },
                tier: if s % 2 == 0 { Tier::Coarse } else { Tier::Fine },
                boxes,
            }
        })
        .collect()
}

#[test]
fn duplicate_suppression_is_idempotent_and_complete() {
    for seed in 0..200u64 {
        let mut rng = RngStream::derive(seed, &[0x6e6d73]);
        let sets = random_sets(&mut rng);
        let total: usize = sets.iter().map(|s| s.boxes.len()).sum();
        let kept = merge_detections(&sets, NMS_IOU);
        assert!(kept.len() <= total, "seed {seed}");

        // Scores are emitted in non-increasing order.
        for w in kept.windows(2) {
            assert!(
                w[0].score.unwrap_or(f64::NEG_INFINITY) >= w[1].score.unwrap_or(f64::NEG_INFINITY),
                "seed {seed}: output not score-sorted"
            );
        }
        // No two survivors of the same class overlap at the merge threshold.
        for (i, a) in kept.iter().enumerate() {
            for b in kept.iter().skip(i + 1) {
                if a.class_id == b.class_id {
                    assert!(iou(a, b) < NMS_IOU, "seed {seed}: duplicate survived");
                }
            }
        }
        // Every suppressed box has a surviving same-class overlapper.
        for set in &sets {
            for b in &set.boxes {
                let survived = kept.iter().any(|k| k == b);
                let covered = kept
                    .iter()
                    .any(|k| k.class_id == b.class_id && iou(k, b) >= NMS_IOU);
                assert!(survived || covered, "seed {seed}: box dropped without cause");
            }
        }
        // A second pass changes nothing.
        let wrapped = [DetectionSet {
            patch_index: 0,
            subpatch_index: None,
            tier: Tier::Fine,
            boxes: kept.clone(),
        }];
        assert_eq!(merge_detections(&wrapped, NMS_IOU), kept, "seed {seed}");
    }
}

#[test]
fn every_policy_obeys_the_cost_accounting_identity() {
    let grid = small_grid();
    let obs = ObservationSpec::default();
    let cost = CostModel::default();
    let detectors = DetectorPair::default();
    let source = DetectorSource::Simulated(&detectors);
    let dataset = small_dataset(3, 31);
    let cpnet_dims = default_layer_dims(Stage::Cpnet.input_dim(&grid, &obs), grid.patch_count());
    let fpnet_dims =
        default_layer_dims(Stage::Fpnet.input_dim(&grid, &obs), grid.subpatch_count());

    for model_seed in 0..4u64 {
        let cpnet = PolicyModel::init(&cpnet_dims, 100 + model_seed).unwrap();
        let fpnet = PolicyModel::init(&fpnet_dims, 200 + model_seed).unwrap();
        let specs = [
            PolicySpec::Cascade { cpnet: &cpnet, fpnet: &fpnet },
            PolicySpec::CpnetOnly { cpnet: &cpnet },
            PolicySpec::FpnetOnly { fpnet: &fpnet },
            PolicySpec::Random { zoom_prob: 0.3 },
            PolicySpec::Entropy { patch_threshold: 0.4, subpatch_threshold: 0.5 },
            PolicySpec::SlidingLr,
            PolicySpec::SlidingHr,
        ];
        for spec in &specs {
            for scene in &dataset {
                let run = run_policy(scene, &grid, &obs, spec, &source, &cost, model_seed).unwrap();

                assert_eq!(
                    run.fine_subpatches + run.coarse_subpatches,
                    grid.total_subpatches(),
                    "{}: tier counts must cover the scene",
                    spec.name()
                );
                let expect = (if run.cpnet_ran { cost.t_cpnet_ms } else { 0.0 })
                    + run.fpnet_invocations as f64 * cost.t_fpnet_ms
                    + run.fine_subpatches as f64 * cost.t_fine_ms
                    + (run.coarse_subpatches + run.wasted_probe_subpatches) as f64
                        * cost.t_coarse_ms;
                assert_eq!(run.runtime_ms, expect, "{}: runtime identity", spec.name());

                assert_eq!(run.patch_actions.len(), grid.patch_count());
                assert_eq!(run.subpatch_actions.len(), grid.patch_count());
                for sub in &run.subpatch_actions {
                    assert_eq!(sub.len(), grid.subpatch_count());
                }
                let fine_from_actions: usize =
                    run.subpatch_actions.iter().map(|a| a.ones()).sum();
                assert_eq!(fine_from_actions, run.fine_subpatches, "{}", spec.name());

                // Policies without a patch-level gate report a patch as
                // zoomed exactly when one of its subpatches is.
                if matches!(
                    spec,
                    PolicySpec::FpnetOnly { .. }
                        | PolicySpec::Random { .. }
                        | PolicySpec::SlidingLr
                        | PolicySpec::SlidingHr
                ) {
                    for (p, &bit) in run.patch_actions.bits.iter().enumerate() {
                        assert_eq!(
                            bit,
                            run.subpatch_actions[p].ones() > 0,
                            "{}: patch flag out of sync",
                            spec.name()
                        );
                    }
                }
                // Gated policies never zoom inside a closed patch.
                if matches!(spec, PolicySpec::Cascade { .. } | PolicySpec::CpnetOnly { .. }) {
                    for (p, &bit) in run.patch_actions.bits.iter().enumerate() {
                        if !bit {
                            assert_eq!(run.subpatch_actions[p].ones(), 0, "{}", spec.name());
                        }
                    }
                }

                // Bitwise reproducible.
                let again =
                    run_policy(scene, &grid, &obs, spec, &source, &cost, model_seed).unwrap();
                assert_eq!(run, again, "{}: rerun diverged", spec.name());
            }
        }
    }
}

#[test]
fn unit_cost_increments_move_the_runtime_by_exactly_one_unit() {
    let cost = CostModel::default();
    let base = cost.cascade_runtime(3, 20, 44);
    assert_eq!(cost.cascade_runtime(4, 20, 44) - base, cost.t_fpnet_ms);
    assert_eq!(cost.cascade_runtime(3, 21, 44) - base, cost.t_fine_ms);
    assert_eq!(cost.cascade_runtime(3, 20, 45) - base, cost.t_coarse_ms);
    assert_eq!(
        cost.cascade_runtime(0, 0, 0),
        cost.t_cpnet_ms,
        "empty cascade still pays the gate"
    );
}

#[test]
fn sliding_window_reports_bracket_the_operating_range() {
    let grid = small_grid();
    let obs = ObservationSpec::default();
    let cost = CostModel::default();
    let detectors = DetectorPair::default();
    let source = DetectorSource::Simulated(&detectors);
    let dataset = small_dataset(3, 77);
    let metric = MetricConfig::default();

    let hr = evaluate(&PolicySpec::SlidingHr, &dataset, &grid, &obs, &source, &cost, &metric, 5)
        .unwrap();
    let lr = evaluate(&PolicySpec::SlidingLr, &dataset, &grid, &obs, &source, &cost, &metric, 5)
        .unwrap();

    assert_eq!(hr.policy_name, "sliding_hr");
    assert_eq!(lr.policy_name, "sliding_lr");
    assert_eq!(hr.scenes_evaluated, 3);
    // 16 subpatches, no network overheads: 16 * 50 ms and 16 * 10 ms.
    assert_eq!(hr.runtime_ms_mean, 800.0);
    assert_eq!(lr.runtime_ms_mean, 160.0);
    assert_eq!(hr.hr_ratio_percent, 100.0);
    assert_eq!(lr.hr_ratio_percent, 0.0);
    assert_eq!(hr.zoom_grid_stats, vec![1.0; grid.patch_count()]);
    assert_eq!(lr.zoom_grid_stats, vec![0.0; grid.patch_count()]);
    assert!(
        hr.ar_percent > lr.ar_percent,
        "fine tier must out-recall coarse: {} vs {}",
        hr.ar_percent,
        lr.ar_percent
    );
    assert!(
        hr.ap_percent > lr.ap_percent,
        "fine tier must out-score coarse: {} vs {}",
        hr.ap_percent,
        lr.ap_percent
    );
}

#[test]
fn zoom_profile_partitions_the_dataset_patches() {
    let grid = small_grid();
    let obs = ObservationSpec::default();
    let dataset = small_dataset(4, 13);
    let dims = default_layer_dims(Stage::Cpnet.input_dim(&grid, &obs), grid.patch_count());
    let model = PolicyModel::init(&dims, 3).unwrap();

    let profile = zoom_probability_profile(&model, &dataset, &grid, &obs, 4).unwrap();
    let n_patches = dataset.len() * grid.patch_count();
    let count_total: usize = profile.by_count.iter().map(|b| b.patches).sum();
    let size_total: usize = profile.by_size.iter().map(|b| b.patches).sum();
    assert_eq!(count_total, n_patches, "count bins must cover every patch");
    assert!(size_total <= n_patches, "size bins exclude empty patches");
    for bin in profile.by_count.iter().chain(profile.by_size.iter()) {
        assert!(bin.patches > 0, "empty bins are omitted");
        assert!((0.0..=1.0).contains(&bin.mean_zoom_probability));
        assert!(bin.lower <= bin.upper);
    }
    assert!(zoom_probability_profile(&model, &dataset, &grid, &obs, 0).is_err());
    assert!(zoom_probability_profile(&model, &[], &grid, &obs, 4).is_err());
}
