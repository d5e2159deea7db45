mod common;

use std::path::Path;

use ndarray::Array2;
use proptest::prelude::*;
use tgrn_core::bench::expression_targets;
use tgrn_core::ingest::{
    load_expression, parse_grn_edgelists, write_matrix_market, ExpressionFormat, ExpressionMatrix,
};
use tgrn_core::tgraph::{
    build_temporal_graph, load_bundle, out_degree_centrality, recurrence_stats, save_bundle, Edge,
    GeneVocab, GraphError, Snapshot, TemporalGraph,
};

fn snap(t: usize, n: usize, edges: &[(usize, usize)]) -> Snapshot {
    let x = Array2::from_shape_fn((n, 5), |(i, j)| (t * 10 + i) as f64 + j as f64 * 0.5);
    Snapshot::new(t, edges.iter().map(|&(s, d)| Edge::new(s, d, 1.0)).collect(), x, n).unwrap()
}

#[test]
fn construction_fixtures() {
    let tg = build_temporal_graph(
        GeneVocab::numbered(3).unwrap(),
        vec![snap(1, 3, &[(0, 1)]), snap(2, 3, &[(0, 1), (1, 2)])],
    )
    .unwrap();
    assert_eq!(tg.len(), 2);
    assert_eq!(tg.snapshot(1).active_mask(), &[true, true, false]);
    assert_eq!(tg.snapshot(2).active_mask(), &[true, true, true]);
    let looped = Snapshot::new(1, vec![Edge::new(1, 1, 1.0)], Array2::zeros((3, 5)), 3);
    assert!(matches!(looped, Err(GraphError::SelfLoop { .. })));
}

#[test]
fn recurrence_fixtures() {
    let vocab = GeneVocab::numbered(3).unwrap();
    let tg = build_temporal_graph(
        vocab.clone(),
        vec![snap(1, 3, &[(0, 1), (1, 2)]), snap(2, 3, &[(0, 1), (2, 0)])],
    )
    .unwrap();
    let r = recurrence_stats(&tg).unwrap();
    assert_eq!(r.per_snapshot.len(), 1);
    assert_eq!((r.per_snapshot[0].recurrent_fraction, r.per_snapshot[0].new_fraction), (0.5, 0.5));
    assert_eq!(r.average, 0.5);
    let e = [(0, 1), (1, 2), (2, 0)];
    let same = build_temporal_graph(vocab, (1..=3).map(|t| snap(t, 3, &e)).collect()).unwrap();
    let r = recurrence_stats(&same).unwrap();
    assert!(r.per_snapshot.iter().all(|x| x.recurrent_fraction == 1.0 && x.new_fraction == 0.0));
    assert_eq!(r.average, 1.0);
}

#[test]
fn centrality_fixtures() {
    let star = snap(1, 4, &[(0, 1), (0, 2), (0, 3)]);
    assert_eq!(out_degree_centrality(&star, 4).unwrap(), vec![1.0, 0.0, 0.0, 0.0]);
    let empty = snap(1, 5, &[]);
    assert_eq!(out_degree_centrality(&empty, 5).unwrap(), vec![0.0; 5]);
    let two = snap(1, 5, &[(2, 0), (2, 4)]);
    assert_eq!(out_degree_centrality(&two, 5).unwrap()[2], 0.5);
}

#[test]
fn expression_delta_fixture() {
    let mut a = snap(1, 4, &[(0, 1), (1, 2)]);
    let mut b = snap(2, 4, &[(1, 2), (2, 3)]);
    let xa = Array2::from_shape_fn((4, 5), |(i, _)| [1.0, 2.5, 4.0, 0.0][i]);
    let xb = Array2::from_shape_fn((4, 5), |(i, _)| [3.0, 2.0, 4.75, 9.0][i]);
    a = Snapshot::new(1, a.edges().to_vec(), xa, 4).unwrap();
    b = Snapshot::new(2, b.edges().to_vec(), xb, 4).unwrap();
    let (genes, delta) = expression_targets(&a, &b);
    assert_eq!(genes, vec![1, 2]);
    assert_eq!(delta, vec![-0.5, 0.75]);
}

fn graph_strategy() -> impl Strategy<Value = TemporalGraph> {
    (2usize..=50, 1usize..=6).prop_flat_map(|(n, t)| {
        let snaps = prop::collection::vec(
            (
                prop::collection::btree_set((0..n, 0..n), 0..(2 * n)),
                prop::collection::vec(0.0f64..1e4, n * 5),
                prop::collection::vec(0.0f64..50.0, 2 * n),
            ),
            t,
        );
        snaps.prop_map(move |raw| {
            let snapshots = raw
                .into_iter()
                .enumerate()
                .map(|(i, (pairs, feats, conf))| {
                    let edges = pairs
                        .into_iter()
                        .filter(|(a, b)| a != b)
                        .enumerate()
                        .map(|(k, (a, b))| Edge::new(a, b, conf[k % conf.len()]))
                        .collect();
                    Snapshot::new(i + 1, edges, Array2::from_shape_vec((n, 5), feats).unwrap(), n).unwrap()
                })
                .collect();
            build_temporal_graph(GeneVocab::numbered(n).unwrap(), snapshots).unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn bundles_round_trip(tg in graph_strategy()) {
        let dir = tempfile::tempdir().unwrap();
        save_bundle(&tg, dir.path()).unwrap();
        prop_assert_eq!(load_bundle(dir.path()).unwrap(), tg);
    }

    #[test]
    fn graph_invariants(tg in graph_strategy()) {
        let n = tg.n_genes();
        for s in tg.snapshots() {
            let mut deg = vec![0usize; n];
            for e in s.edges() {
                deg[e.src] += 1;
                deg[e.dst] += 1;
            }
            for i in 0..n {
                prop_assert_eq!(s.active_mask()[i], deg[i] > 0);
            }
            let c = out_degree_centrality(s, n).unwrap();
            let total: f64 = c.iter().sum();
            prop_assert!((total - s.edges().len() as f64 / (n - 1) as f64).abs() < 1e-12);
        }
        if tg.len() >= 3 {
            let (first, last) = (1, tg.len());
            let mut sums = vec![0.0; n];
            let common: Vec<usize> = (0..n)
                .filter(|&g| (first..=last).all(|t| tg.snapshot(t).active_mask()[g]))
                .collect();
            for t in first..last {
                let (genes, delta) = expression_targets(tg.snapshot(t), tg.snapshot(t + 1));
                for (g, d) in genes.into_iter().zip(delta) {
                    sums[g] += d;
                }
            }
            for g in common {
                let want = tg.snapshot(last).mean_expression()[g] - tg.snapshot(first).mean_expression()[g];
                prop_assert!((sums[g] - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn disjoint_snapshots_have_no_recurrence(n in 4usize..20, t in 2usize..6) {
        let snaps: Vec<Snapshot> = (1..=t)
            .map(|k| snap(k, n * t, &[(k - 1, n * t - k)]))
            .collect();
        let tg = build_temporal_graph(GeneVocab::numbered(n * t).unwrap(), snaps).unwrap();
        prop_assert!(recurrence_stats(&tg).unwrap().per_snapshot.iter().all(|e| e.recurrent_fraction == 0.0));
    }

    #[test]
    fn edge_import_ignores_row_order(rows in prop::collection::vec((1usize..4, 0usize..6, 0usize..6, 0.0f64..9.0), 1..30), seed in any::<u64>()) {
        let vocab = GeneVocab::numbered(6).unwrap();
        let line = |&(t, s, d, c): &(usize, usize, usize, f64)| format!("{t}\tg{s}\tg{d}\t{c}\n");
        let text: String = rows.iter().map(line).collect();
        let mut shuffled = rows.clone();
        use rand::seq::SliceRandom;
        shuffled.shuffle(&mut <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed));
        let text2: String = shuffled.iter().map(line).collect();
        let a = parse_grn_edgelists(&text, Path::new("a.tsv"), &vocab);
        let b = parse_grn_edgelists(&text2, Path::new("b.tsv"), &vocab);
        match (a, b) {
            (Ok(a), Ok(b)) => prop_assert_eq!(a, b),
            (Err(_), Err(_)) => {}
            _ => prop_assert!(false, "only one ordering failed"),
        }
    }

    #[test]
    fn dense_and_sparse_files_agree(vals in prop::collection::vec(prop::option::weighted(0.4, 0.0f64..100.0), 12)) {
        let dense = Array2::from_shape_vec((4, 3), vals.into_iter().map(|v| v.unwrap_or(0.0)).collect()).unwrap();
        let genes = GeneVocab::new(vec!["Klf1".into(), "Spi1".into(), "Gata1".into(), "Tal1".into()]).unwrap();
        let cells = vec!["a".to_string(), "b".into(), "c".into()];
        let e = ExpressionMatrix::from_dense(genes, cells, &dense).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_matrix_market(&e, dir.path()).unwrap();
        let csv_path = dir.path().join("dense.csv");
        let mut body = String::from("gene,a,b,c\n");
        for (g, sym) in e.genes().symbols().iter().enumerate() {
            let row: Vec<String> = dense.row(g).iter().map(|v| format!("{v:e}")).collect();
            body.push_str(&format!("{sym},{}\n", row.join(",")));
        }
        std::fs::write(&csv_path, body).unwrap();
        let from_mtx = load_expression(&dir.path().join("matrix.mtx"), ExpressionFormat::MatrixMarket).unwrap();
        let from_csv = load_expression(&csv_path, ExpressionFormat::DenseCsv).unwrap();
        prop_assert_eq!(from_mtx.to_dense(), from_csv.to_dense());
        prop_assert_eq!(from_csv.to_dense(), dense);
    }
}

#[test]
fn formula_fixture_table() {
    for (name, err) in common::fixtures::formula_fixture_errors() {
        assert!(err < 1e-12, "{name}: {err}");
    }
}
