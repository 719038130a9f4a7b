use rand::Rng;

use crate::{seeded_rng, Error, Result};

/// Cluster index per item.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterAssignment {
    labels: Vec<usize>,
    k: usize,
}

impl ClusterAssignment {
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self> {
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::InvalidArgument(format!("cluster label {bad} is outside 0..{k}")));
        }
        Ok(Self { labels, k })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Joint counts of true class `x` and cluster `y`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyTable {
    /// `counts[x][y]`.
    counts: Vec<Vec<usize>>,
    cluster_totals: Vec<usize>,
    total: usize,
}

impl ContingencyTable {
    /// Table sized to the largest label seen on each axis.
    pub fn new(classes: &[usize], clusters: &[usize]) -> Result<Self> {
        if classes.len() != clusters.len() {
            return Err(Error::DimensionMismatch {
                left: classes.len(),
                right: clusters.len(),
            });
        }
        if classes.is_empty() {
            return Err(Error::InvalidArgument("conditional entropy needs at least one item".into()));
        }
        let nx = classes.iter().max().unwrap() + 1;
        let ny = clusters.iter().max().unwrap() + 1;
        let mut counts = vec![vec![0usize; ny]; nx];
        let mut cluster_totals = vec![0usize; ny];
        for (&x, &y) in classes.iter().zip(clusters) {
            counts[x][y] += 1;
            cluster_totals[y] += 1;
        }
        Ok(Self {
            counts,
            cluster_totals,
            total: classes.len(),
        })
    }

    pub fn count(&self, class: usize, cluster: usize) -> usize {
        self.counts
            .get(class)
            .and_then(|row| row.get(cluster))
            .copied()
            .unwrap_or(0)
    }

    pub fn cluster_totals(&self) -> &[usize] {
        &self.cluster_totals
    }

    pub fn class_totals(&self) -> Vec<usize> {
        self.counts.iter().map(|row| row.iter().sum()).collect()
    }

    pub fn total(&self) -> usize {
        self.total
    }

    /// `H(X|Y)` in bits.
    ///
    /// Each cluster's contribution is summed over classes in class order; the
    /// per-cluster terms are then added in ascending order of value, so the
    /// result is bit-identical under any relabeling of clusters.
    pub fn conditional_entropy(&self) -> f64 {
        let n = self.total as f64;
        let mut terms: Vec<f64> = self
            .cluster_totals
            .iter()
            .enumerate()
            .filter(|(_, &ny)| ny > 0)
            .map(|(y, &ny)| {
                self.counts
                    .iter()
                    .map(|row| row[y])
                    .filter(|&nxy| nxy > 0)
                    .map(|nxy| (nxy as f64 / n) * (ny as f64 / nxy as f64).log2())
                    .sum::<f64>()
            })
            .collect();
        terms.sort_by(f64::total_cmp);
        terms.iter().sum()
    }
}

/// `H(X|Y)` in bits of true classes given cluster labels.
pub fn conditional_entropy(true_labels: &[usize], assignment: &[usize]) -> Result<f64> {
    Ok(ContingencyTable::new(true_labels, assignment)?.conditional_entropy())
}

/// `2^ce`: the number of equally likely classes that would leave the same
/// remaining uncertainty.
pub fn uncertainty_reduction(ce: f64) -> f64 {
    ce.exp2()
}

/// Uniformly random cluster labels, the chance baseline.
pub fn random_assignment(items: usize, k: usize, seed: u64) -> Result<ClusterAssignment> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be ≥ 1".into()));
    }
    let mut rng = seeded_rng(seed);
    ClusterAssignment::new((0..items).map(|_| rng.random_range(0..k)).collect(), k)
}
