use super::*;
use crate::estimators::effect_on;
use crate::simulation::{simulate_modified, simulate_null, N_BASELINE};
use crate::tree::test_support::{build, leaf, split};
use proptest::prelude::*;

#[test]
fn percentile_interval_uses_order_statistics() {
    let draws: Vec<f64> = (1..=100).rev().map(f64::from).collect();
    let iv = percentile_interval(&draws, 0.9).unwrap();
    assert_eq!((iv.lower, iv.upper), (5.0, 95.0));
    let iv = percentile_interval(&draws, 0.95).unwrap();
    // ceil(2.5) = 3rd and ceil(97.5) = 98th smallest
    assert_eq!((iv.lower, iv.upper), (3.0, 98.0));
    assert!(percentile_interval(&[], 0.95).is_none());
}

#[test]
fn single_draw_and_constant_draws_give_degenerate_intervals() {
    let iv = percentile_interval(&[0.7], 0.95).unwrap();
    assert_eq!((iv.lower, iv.upper), (0.7, 0.7));
    let iv = percentile_interval(&[2.5; 40], 0.95).unwrap();
    assert_eq!(iv.upper - iv.lower, 0.0);
}

proptest! {
    #[test]
    fn wider_level_contains_narrower(draws in prop::collection::vec(-10.0f64..10.0, 1..300)) {
        let narrow = percentile_interval(&draws, 0.95).unwrap();
        let wide = percentile_interval(&draws, 0.99).unwrap();
        prop_assert!(wide.lower <= narrow.lower && narrow.upper <= wide.upper);
        prop_assert!(draws.contains(&narrow.lower) && draws.contains(&narrow.upper));
    }
}

fn fast_config(bootstrap_samples: usize) -> SdldConfig {
    SdldConfig {
        bootstrap_samples,
        ..SdldConfig::default()
    }
}

#[test]
fn one_resample_interval_is_that_resample() {
    let d = simulate_modified(1500, 3);
    let tree = build(leaf(), N_BASELINE);
    let cfg = TreeConfig::default();
    let b = bootstrap_ci(&d, &tree, 1, 0.95, 11, &cfg).unwrap();
    let draw = b.draws[0][0].unwrap();
    let iv = b.leaves[0].interval.unwrap();
    assert_eq!((iv.lower, iv.upper), (draw, draw));
    assert_eq!(b.leaves[0].effective_b, 1);
    assert_eq!(b, bootstrap_ci(&d, &tree, 1, 0.95, 11, &cfg).unwrap());
    assert!(bootstrap_ci(&d, &tree, 0, 0.95, 11, &cfg).is_err());
    assert!(bootstrap_ci(&d, &tree, 5, 1.0, 11, &cfg).is_err());
}

#[test]
fn empty_leaf_is_reported_not_fatal() {
    let d = simulate_modified(1500, 4);
    let tree = build(split(0, 100.0, 5.0, leaf(), leaf()), N_BASELINE);
    let cfg = TreeConfig::default();
    let leaves = honest_estimates(&d, &tree, &cfg).unwrap();
    assert!(leaves[0].effect.is_some() && leaves[0].error.is_none());
    assert_eq!(leaves[1].n, 0);
    assert!(leaves[1].effect.is_none());
    assert!(leaves[1]
        .error
        .as_deref()
        .unwrap()
        .contains("no estimable subjects"));
    let b = bootstrap_ci(&d, &tree, 3, 0.9, 1, &cfg).unwrap();
    assert_eq!(b.leaves[1].effective_b, 0);
    assert!(b.leaves[1].interval.is_none());
}

#[test]
fn discovery_on_modified_data_is_honest_and_deterministic() {
    let d = simulate_modified(8000, 21);
    let cfg = fast_config(20);
    let report = run_sdld(&d, &cfg).unwrap();

    // partition: disjoint, complete, in the configured proportions
    let mut all: Vec<usize> = report.partition.iter().flatten().copied().collect();
    all.sort_unstable();
    assert_eq!(all, (0..d.len()).collect::<Vec<_>>());
    assert_eq!(report.part_sizes, [3840, 960, 3200]);

    let share: f64 = report.leaves.iter().map(|l| l.share).sum();
    assert!((share - 1.0).abs() < 1e-9);
    assert_eq!(report.leaves.iter().map(|l| l.n).sum::<usize>(), 3200);

    assert_eq!(report.leaves.len(), 2, "{}", report.to_json());
    let root = &report.tree.root;
    assert_eq!(root.covariate, Some(1));
    assert!((root.cutpoint.unwrap() - 0.5).abs() < 0.2);
    let low = report.leaves[0].effect.as_ref().unwrap();
    let high = report.leaves[1].effect.as_ref().unwrap();
    // honest estimates are unbiased for the leaf truths; allow 4 standard errors
    assert!(
        (low.delta - 1.0).abs() < 4.0 * low.variance.sqrt(),
        "{low:?}"
    );
    assert!(
        (high.delta + 3.0).abs() < 4.0 * high.variance.sqrt(),
        "{high:?}"
    );
    for leaf in &report.leaves {
        let iv = leaf.interval.unwrap();
        assert!(iv.lower <= iv.upper);
        assert_eq!(leaf.effective_b, 20);
    }

    // rerun gives identical artifacts
    let again = run_sdld(&d, &cfg).unwrap();
    assert_eq!(report.to_json(), again.to_json());
    let csv = |r: &SubgroupReport| {
        let mut v = Vec::new();
        r.write_csv(&mut v, &[]).unwrap();
        r.write_draws_csv(&mut v, &[]).unwrap();
        r.write_partition_csv(&d, &mut v).unwrap();
        v
    };
    assert_eq!(csv(&report), csv(&again));
    let back = SubgroupReport::from_json(&report.to_json()).unwrap();
    assert_eq!(back.leaves, report.leaves);

    // the estimation part has no say in the structure
    let mut scrambled = d.clone();
    for &i in &report.partition[2] {
        if let Some(y) = scrambled.subjects[i].outcome.as_mut() {
            *y = -*y * 3.0 + 7.0;
        }
    }
    let other = run_sdld(&scrambled, &fast_config(0)).unwrap();
    assert_eq!(other.tree, report.tree);
}

#[test]
fn null_data_reports_the_estimation_part_effect() {
    let d = simulate_null(6000, 5);
    let report = run_sdld(&d, &fast_config(0)).unwrap();
    assert_eq!(report.leaves.len(), 1);
    let leaf = &report.leaves[0];
    assert_eq!(leaf.share, 1.0);
    assert!(leaf.interval.is_none());

    let est = d.subset(&report.partition[2]);
    let cfg = TreeConfig::default();
    let (t, c) = cfg.regimes(1).unwrap();
    let all: Vec<usize> = (0..est.len()).collect();
    let direct = effect_on(&est, &all, &t, &c, &cfg.estimator)
        .unwrap()
        .effect;
    assert_eq!(leaf.effect.as_ref().unwrap(), &direct);
}

#[test]
fn invalid_configurations_are_rejected() {
    let d = simulate_modified(100, 1);
    let bad = [
        SdldConfig {
            fractions: [0.5, 0.5, 0.0],
            ..SdldConfig::default()
        },
        SdldConfig {
            level: 1.5,
            ..SdldConfig::default()
        },
        SdldConfig {
            lambda: -1.0,
            ..SdldConfig::default()
        },
    ];
    for cfg in bad {
        assert!(matches!(
            run_sdld(&d, &cfg),
            Err(InferenceError::InvalidConfig(_))
        ));
    }
}
