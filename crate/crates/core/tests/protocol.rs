use tgrn_core::bench::{live_update_run, live_update_run_with_epochs, run_bench, BenchConfig, EvalReport, Task};
use tgrn_core::models::{EdgeBank, Family};
use tgrn_core::synthetic::{fully_recurrent_graph, planted_rotation_graph, RotationParams};
use tgrn_core::tgraph::{build_temporal_graph, Snapshot, TemporalGraph};

fn quick() -> BenchConfig {
    let mut cfg = BenchConfig::default();
    cfg.warmup_epochs = 3;
    cfg.finetune_epochs = 1;
    cfg.model.hidden = 8;
    cfg.seeds = vec![0];
    cfg
}

#[test]
fn step_counts_follow_snapshot_count() {
    let cfg = quick();
    for (t, want) in [(3, 1), (6, 4), (32, 30)] {
        let tg = fully_recurrent_graph(30, t, 60, 1).unwrap();
        let run = live_update_run(&tg, Family::EdgeBank, Task::Link, &cfg, 0).unwrap();
        assert_eq!(run.steps.len(), want);
        assert_eq!(cfg.n_steps(t), want);
    }
    let tg = fully_recurrent_graph(30, 32, 60, 1).unwrap();
    let run = live_update_run(&tg, Family::Gcn, Task::Centrality, &cfg, 0).unwrap();
    assert_eq!(run.steps.len(), 30);
    assert_eq!(run.steps.first().unwrap().t, 2);
    assert_eq!(run.steps.last().unwrap().t, 31);
    let short = fully_recurrent_graph(30, 2, 60, 1).unwrap();
    assert!(live_update_run(&short, Family::EdgeBank, Task::Link, &cfg, 0).is_err());
}

#[test]
fn edgebank_remembers_everything() {
    let mut bank = EdgeBank::new();
    bank.update([(0, 1), (2, 3)]);
    bank.update([(4, 5)]);
    assert_eq!(bank.predict(&[(0, 1), (1, 0), (4, 5)]), vec![1.0, 0.0, 1.0]);

    let tg = fully_recurrent_graph(100, 6, 400, 2).unwrap();
    let run = live_update_run(&tg, Family::EdgeBank, Task::Link, &quick(), 0).unwrap();
    for s in &run.steps {
        assert!(s.metrics["auprc"].unwrap() >= 0.99);
    }
}

/// Same edges as the rotation graph but constant node features, so input
/// scaling does not depend on which snapshot comes first.
fn rotation_with_flat_features() -> TemporalGraph {
    let tg = planted_rotation_graph(&RotationParams::default(), 5).unwrap();
    let x = tg.snapshot(1).node_features().clone();
    let snaps = tg
        .snapshots()
        .iter()
        .map(|s| Snapshot::new(s.t(), s.edges().to_vec(), x.clone(), tg.n_genes()).unwrap())
        .collect();
    build_temporal_graph(tg.vocab().clone(), snaps).unwrap()
}

#[test]
fn static_encoders_ignore_history_and_temporal_ones_do_not() {
    let tg = rotation_with_flat_features();
    let shuffled = tg.reordered(&[3, 1, 2, 4, 5, 6, 7, 8, 9, 10]).unwrap();
    let mut cfg = quick();
    cfg.t_warm = 4;
    let metrics = |g: &TemporalGraph, fam: Family| {
        let (run, _) = live_update_run_with_epochs(g, fam, Task::Link, &cfg, 3, 0, 0).unwrap();
        run.steps.into_iter().map(|s| s.metrics["auprc"]).collect::<Vec<_>>()
    };
    for fam in [Family::Linear, Family::Mlp, Family::Gcn, Family::Gat, Family::ChebNet] {
        assert_eq!(metrics(&tg, fam), metrics(&shuffled, fam), "{fam}");
    }
    for fam in [Family::GcrnGru, Family::Roland] {
        assert_ne!(metrics(&tg, fam), metrics(&shuffled, fam), "{fam}");
    }
}

#[test]
fn reports_are_reproducible() {
    let tg = planted_rotation_graph(&RotationParams { n_snapshots: 5, ..Default::default() }, 1).unwrap();
    let mut cfg = quick();
    cfg.models = vec![Family::EdgeBank, Family::Gcn, Family::GcrnGru];
    cfg.seeds = vec![0, 1];
    let a = run_bench(&tg, &cfg, false).unwrap().report.to_json();
    let b = run_bench(&tg, &cfg, false).unwrap().report.to_json();
    assert_eq!(a, b);
    let back = EvalReport::from_json(&a).unwrap();
    assert_eq!(back.to_json(), a);
    cfg.seeds = vec![0, 2];
    let c = run_bench(&tg, &cfg, false).unwrap().report.to_json();
    assert_ne!(a, c);
}

#[test]
fn divergence_is_recorded_not_fatal() {
    let tg = fully_recurrent_graph(20, 4, 40, 3).unwrap();
    let mut cfg = quick();
    cfg.adam.lr = 1e300;
    let run = live_update_run(&tg, Family::Gcn, Task::Expression, &cfg, 0).unwrap();
    assert_eq!(run.steps.len(), 2);
    assert!(run.steps.iter().any(|s| s.diverged));
}
