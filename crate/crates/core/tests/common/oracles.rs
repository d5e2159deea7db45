//! Brute-force reference implementations of the ranking and regression
//! metrics.

/// Average precision with pessimistic ties, summed group by group over
/// distinct score values.
pub fn auprc(scores: &[f64], labels: &[bool]) -> f64 {
    let positives = labels.iter().filter(|&&l| l).count() as f64;
    let mut distinct: Vec<f64> = scores.to_vec();
    distinct.sort_by(|a, b| b.total_cmp(a));
    distinct.dedup();
    let mut ap = 0.0;
    for s in distinct {
        let above_pos = (0..scores.len()).filter(|&i| scores[i] > s && labels[i]).count() as f64;
        let above = (0..scores.len()).filter(|&i| scores[i] > s).count() as f64;
        let tie_pos = (0..scores.len()).filter(|&i| scores[i] == s && labels[i]).count();
        let tie_neg = (0..scores.len()).filter(|&i| scores[i] == s && !labels[i]).count() as f64;
        for j in 1..=tie_pos {
            ap += (above_pos + j as f64) / (above + tie_neg + j as f64);
        }
    }
    ap / positives
}

/// Ranks from pairwise counts: `1 + #less + (#equal - 1) / 2`.
pub fn ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|&x| {
            let less = v.iter().filter(|&&y| y < x).count() as f64;
            let equal = v.iter().filter(|&&y| y == x).count() as f64;
            1.0 + less + (equal - 1.0) / 2.0
        })
        .collect()
}

/// Raw-moment Pearson formula.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let sa: f64 = a.iter().sum();
    let sb: f64 = b.iter().sum();
    let ma = sa / n;
    let mb = sb / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    pearson(&ranks(a), &ranks(b))
}

pub fn mae(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

/// Membership test for the top-`k` set: fewer than `k` elements beat `i`,
/// with ties going to the smaller index.
fn in_top(values: &[f64], i: usize, k: usize, largest: bool) -> bool {
    let beats = |j: usize| {
        let (x, y) = (values[j], values[i]);
        let better = if largest { x > y } else { x < y };
        better || (x == y && j < i)
    };
    (0..values.len()).filter(|&j| j != i && beats(j)).count() < k
}

pub fn precision_at_k(pred: &[f64], target: &[f64], k: usize, largest: bool) -> f64 {
    let k = k.min(pred.len());
    let hits = (0..pred.len())
        .filter(|&i| in_top(pred, i, k, largest) && in_top(target, i, k, largest))
        .count();
    hits as f64 / k as f64
}

/// Compares every metric against its oracle on `instances` random inputs
/// of length at most 64 with frequent ties. Returns the largest absolute
/// difference and the number of comparisons made.
pub fn metric_oracle_sweep(instances: usize, seed: u64) -> (f64, usize) {
    use rand::{Rng, SeedableRng};
    use tgrn_core::bench::metrics::{self as m, Direction};

    let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut count = 0;
    let mut diff = |a: f64, b: f64| {
        count += 1;
        let d = if a.is_nan() && b.is_nan() { 0.0 } else { (a - b).abs() };
        worst = worst.max(if d.is_nan() { f64::INFINITY } else { d });
    };
    for _ in 0..instances {
        let n = r.gen_range(2..=64);
        let levels = r.gen_range(2..12);
        let scores: Vec<f64> = (0..n).map(|_| r.gen_range(0..levels) as f64 / levels as f64).collect();
        let mut labels: Vec<bool> = (0..n).map(|_| r.gen_bool(0.4)).collect();
        labels[0] = true;
        labels[1] = false;
        diff(m::auprc(&scores, &labels).unwrap(), auprc(&scores, &labels));

        let pred: Vec<f64> = (0..n).map(|_| (r.gen_range(-20..20) as f64) / 4.0).collect();
        let target: Vec<f64> = (0..n).map(|_| r.gen_range(-5.0..5.0)).collect();
        let got = m::regression_metrics(&pred, &target).unwrap();
        diff(got.mae, mae(&pred, &target));
        diff(got.pcc, pearson(&pred, &target));
        diff(got.spearman, spearman(&pred, &target));

        let k = r.gen_range(1..80);
        for (dir, largest) in [(Direction::Up, true), (Direction::Down, false), (Direction::Top, true)] {
            diff(m::precision_at_k(&pred, &target, k, dir).unwrap(), precision_at_k(&pred, &target, k, largest));
        }
    }
    (worst, count)
}
