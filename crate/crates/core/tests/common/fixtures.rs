//! Hand-computed values for the graph and feature formulas. Each entry is
//! the largest absolute deviation of the implementation from the fixture.

use ndarray::Array2;
use tgrn_core::bench::expression_targets;
use tgrn_core::grn::node_features;
use tgrn_core::ingest::ExpressionMatrix;
use tgrn_core::tgraph::{build_temporal_graph, out_degree_centrality, recurrence_stats, Edge, GeneVocab, Snapshot};

fn snap(t: usize, n: usize, edges: &[(usize, usize)], x: Option<Array2<f64>>) -> Snapshot {
    let x = x.unwrap_or_else(|| Array2::from_elem((n, 5), 1.0));
    Snapshot::new(t, edges.iter().map(|&(s, d)| Edge::new(s, d, 1.0)).collect(), x, n).unwrap()
}

fn max_dev(got: &[f64], want: &[f64]) -> f64 {
    assert_eq!(got.len(), want.len());
    got.iter().zip(want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

pub fn formula_fixture_errors() -> Vec<(&'static str, f64)> {
    let mut out = Vec::new();

    let star = snap(1, 4, &[(0, 1), (0, 2), (0, 3)], None);
    out.push(("centrality/star", max_dev(&out_degree_centrality(&star, 4).unwrap(), &[1.0, 0.0, 0.0, 0.0])));
    let empty = snap(1, 5, &[], None);
    out.push(("centrality/empty", max_dev(&out_degree_centrality(&empty, 5).unwrap(), &[0.0; 5])));

    let dense = Array2::from_shape_vec((3, 3), vec![0.0, 2.0, 4.0, 0.0, 0.0, 0.0, 1.0, 1.0, 7.0]).unwrap();
    let expr = ExpressionMatrix::from_dense(
        GeneVocab::numbered(3).unwrap(),
        (0..3).map(|c| format!("c{c}")).collect(),
        &dense,
    )
    .unwrap();
    let f = node_features(&expr).unwrap();
    let std0 = (8.0f64 / 3.0).sqrt();
    let std2 = ((1.0f64 - 3.0).powi(2) * 2.0 + (7.0f64 - 3.0).powi(2)).sqrt() / 3f64.sqrt();
    out.push(("node_features/gene0", max_dev(&f.row(0).to_vec(), &[2.0, 2.0, std0, 2.0 / 3.0, 6.0])));
    out.push(("node_features/silent", max_dev(&f.row(1).to_vec(), &[0.0; 5])));
    out.push(("node_features/gene2", max_dev(&f.row(2).to_vec(), &[3.0, 1.0, std2, 1.0, 9.0])));

    let vocab = GeneVocab::numbered(3).unwrap();
    let tg = build_temporal_graph(
        vocab.clone(),
        vec![snap(1, 3, &[(0, 1), (1, 2)], None), snap(2, 3, &[(0, 1), (2, 0)], None)],
    )
    .unwrap();
    let r = recurrence_stats(&tg).unwrap();
    out.push((
        "recurrence/half",
        max_dev(&[r.per_snapshot[0].recurrent_fraction, r.per_snapshot[0].new_fraction, r.average], &[0.5, 0.5, 0.5]),
    ));
    let e = [(0, 1), (1, 2), (2, 0)];
    let same = build_temporal_graph(vocab, (1..=3).map(|t| snap(t, 3, &e, None)).collect()).unwrap();
    let r = recurrence_stats(&same).unwrap();
    out.push(("recurrence/identical", (r.average - 1.0).abs()));

    let xa = Array2::from_shape_fn((4, 5), |(i, _)| [1.0, 2.5, 4.0, 0.0][i]);
    let xb = Array2::from_shape_fn((4, 5), |(i, _)| [3.0, 2.0, 4.75, 9.0][i]);
    let a = snap(1, 4, &[(0, 1), (1, 2)], Some(xa));
    let b = snap(2, 4, &[(1, 2), (2, 3)], Some(xb));
    let (genes, delta) = expression_targets(&a, &b);
    let dev = if genes == [1, 2] { max_dev(&delta, &[-0.5, 0.75]) } else { f64::INFINITY };
    out.push(("expression_delta/evaluable", dev));
    out
}
