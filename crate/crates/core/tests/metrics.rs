mod common;

use common::oracles;
use proptest::prelude::*;
use tgrn_core::bench::metrics::{auprc, precision_at_k, regression_metrics, Direction};
use tgrn_core::bench::{aggregate_report, mean_std, EvalReport, RunRecord, StepRecord, Task};

fn scored_labels() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (2usize..=64).prop_flat_map(|n| {
        (
            prop::collection::vec((0u8..8).prop_map(|v| v as f64 / 7.0), n),
            prop::collection::vec(any::<bool>(), n),
        )
            .prop_filter("needs both classes", |(_, l)| l.iter().any(|&b| b) && l.iter().any(|&b| !b))
    })
}

fn paired(lo: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (lo..=64).prop_flat_map(|n| {
        (
            prop::collection::vec((-20i32..20).prop_map(|v| v as f64 / 4.0), n),
            prop::collection::vec(-5.0f64..5.0, n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn auprc_matches_group_oracle((scores, labels) in scored_labels()) {
        let got = auprc(&scores, &labels).unwrap();
        prop_assert!((got - oracles::auprc(&scores, &labels)).abs() < 1e-9);
    }

    #[test]
    fn auprc_invariant_under_monotone_transforms((scores, labels) in scored_labels()) {
        let moved: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() - 2.0).collect();
        prop_assert_eq!(auprc(&scores, &labels).unwrap(), auprc(&moved, &labels).unwrap());
    }

    #[test]
    fn regression_matches_direct_formulas((pred, target) in paired(3)) {
        let m = regression_metrics(&pred, &target).unwrap();
        prop_assert!((m.mae - oracles::mae(&pred, &target)).abs() < 1e-9);
        let p = oracles::pearson(&pred, &target);
        if p.is_finite() {
            prop_assert!((m.pcc - p).abs() < 1e-9);
            prop_assert!((m.spearman - oracles::spearman(&pred, &target)).abs() < 1e-9);
        } else {
            prop_assert!(m.pcc.is_nan());
        }
    }

    #[test]
    fn precision_matches_membership_oracle((pred, target) in paired(1), k in 1usize..80) {
        for (dir, largest) in [(Direction::Up, true), (Direction::Down, false), (Direction::Top, true)] {
            let got = precision_at_k(&pred, &target, k, dir).unwrap();
            prop_assert!((got - oracles::precision_at_k(&pred, &target, k, largest)).abs() < 1e-12);
        }
    }

    #[test]
    fn precision_of_a_vector_against_itself_is_one((pred, _) in paired(1), k in 1usize..80) {
        prop_assert_eq!(precision_at_k(&pred, &pred, k, Direction::Up).unwrap(), 1.0);
        prop_assert_eq!(precision_at_k(&pred, &pred, k, Direction::Down).unwrap(), 1.0);
    }
}

#[test]
fn spearman_with_ties_matches_rank_oracle() {
    let (p, t) = ([1.0, 2.0, 2.0, 3.0], [1.0, 2.0, 3.0, 4.0]);
    let m = regression_metrics(&p, &t).unwrap();
    assert!((m.spearman - oracles::spearman(&p, &t)).abs() < 1e-12);
}

#[test]
fn sample_std_of_two_values() {
    let (m, s) = mean_std(&[0.9, 1.0]).unwrap();
    assert!((m - 0.95).abs() < 1e-15);
    assert!((s - 0.005f64.sqrt()).abs() < 1e-15);
    assert!((s - 0.0707).abs() < 1e-4);
}

fn fragment(hash: &str, seed: u64, value: f64) -> EvalReport {
    let mut metrics = std::collections::BTreeMap::new();
    metrics.insert("auprc".to_string(), Some(value));
    let run = RunRecord {
        model: "gcn".into(),
        task: Task::Link,
        seed,
        steps: vec![StepRecord { step: 1, t: 2, metrics, diverged: false }],
        centrality_predictions: Vec::new(),
    };
    EvalReport::new(serde_json::json!({}), hash.into(), vec![run])
}

#[test]
fn aggregation_over_seeds() {
    let same: Vec<_> = (0..5).map(|s| fragment("h", s, 0.8)).collect();
    let agg = aggregate_report(same).unwrap();
    assert_eq!(agg.aggregate("gcn", Task::Link, "auprc").unwrap().std, Some(0.0));
    let two = aggregate_report(vec![fragment("h", 0, 0.9), fragment("h", 1, 1.0)]).unwrap();
    let a = two.aggregate("gcn", Task::Link, "auprc").unwrap();
    assert!((a.mean.unwrap() - 0.95).abs() < 1e-12);
    assert!((a.std.unwrap() - 0.005f64.sqrt()).abs() < 1e-12);
    assert!(aggregate_report(vec![fragment("h", 0, 0.9), fragment("other", 1, 1.0)]).is_err());
}

#[test]
fn thousand_random_instances_match_oracles() {
    let (worst, n) = oracles::metric_oracle_sweep(1000, 3);
    assert!(n >= 7000);
    assert!(worst < 1e-9, "max diff {worst}");
}
