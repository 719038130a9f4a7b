//! Reference computations written independently of the library code.

use std::collections::HashMap;

/// `H(X|Y) = H(X, Y) − H(Y)` in bits, from raw pair counts.
pub fn conditional_entropy_via_joint(x: &[usize], y: &[usize]) -> f64 {
    let n = x.len() as f64;
    let mut joint: HashMap<(usize, usize), usize> = HashMap::new();
    let mut marg: HashMap<usize, usize> = HashMap::new();
    for (&a, &b) in x.iter().zip(y) {
        *joint.entry((a, b)).or_default() += 1;
        *marg.entry(b).or_default() += 1;
    }
    let h = |counts: Vec<usize>| -> f64 {
        counts
            .into_iter()
            .map(|c| {
                let p = c as f64 / n;
                -p * p.log2()
            })
            .sum()
    };
    h(joint.into_values().collect()) - h(marg.into_values().collect())
}

/// Binary entropy in bits.
pub fn h2(p: f64) -> f64 {
    -(p * p.log2() + (1.0 - p) * (1.0 - p).log2())
}

/// Pearson chi-square statistic of observed counts against equal expected counts.
pub fn chi_square_uniform(counts: &[usize]) -> f64 {
    let total: usize = counts.iter().sum();
    let expected = total as f64 / counts.len() as f64;
    counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum()
}

/// Upper 0.1% critical values of chi-square for 1..=10 degrees of freedom.
pub const CHI2_999: [f64; 10] = [10.828, 13.816, 16.266, 18.467, 20.515, 22.458, 24.322, 26.124, 27.877, 29.588];

/// Within-cluster sum of squares of an assignment, centroids recomputed from scratch.
pub fn wcss(points: &[Vec<f64>], labels: &[usize], k: usize) -> f64 {
    let dim = points[0].len();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in points.iter().zip(labels) {
        counts[l] += 1;
        for d in 0..dim {
            sums[l][d] += p[d];
        }
    }
    points
        .iter()
        .zip(labels)
        .map(|(p, &l)| {
            (0..dim)
                .map(|d| {
                    let c = sums[l][d] / counts[l] as f64;
                    (p[d] - c).powi(2)
                })
                .sum::<f64>()
        })
        .sum()
}

/// True when two labelings define the same partition.
pub fn same_partition(a: &[usize], b: &[usize]) -> bool {
    let mut fwd: HashMap<usize, usize> = HashMap::new();
    let mut back: HashMap<usize, usize> = HashMap::new();
    a.iter().zip(b).all(|(&x, &y)| *fwd.entry(x).or_insert(y) == y && *back.entry(y).or_insert(x) == x)
}

/// Gaussian blobs with centers spaced `spacing` apart on a line.
pub fn blobs(k: usize, per: usize, dim: usize, spacing: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    use rand::Rng;
    let mut rng = cohere::seeded_rng(seed);
    let mut pts = Vec::new();
    let mut labels = Vec::new();
    for c in 0..k {
        for _ in 0..per {
            let mut p: Vec<f64> = (0..dim).map(|_| rng.random_range(-0.5..0.5)).collect();
            p[0] += spacing * c as f64;
            pts.push(p);
            labels.push(c);
        }
    }
    (pts, labels)
}
