//! Normalized spectral clustering with a Gaussian affinity.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::kmeans::{check_points, kmeans};
use super::ClusterAssignment;
use crate::{Error, Result};

/// How the Gaussian kernel width is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SigmaMode {
    /// Median of all pairwise distances.
    #[default]
    Median,
    Fixed(f64),
}

impl fmt::Display for SigmaMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SigmaMode::Median => f.write_str("median"),
            SigmaMode::Fixed(s) => write!(f, "{s}"),
        }
    }
}

impl FromStr for SigmaMode {
    type Err = Error;

    /// `median` or a positive number.
    fn from_str(s: &str) -> Result<Self> {
        if s == "median" {
            return Ok(SigmaMode::Median);
        }
        match s.parse::<f64>() {
            Ok(v) if v > 0.0 && v.is_finite() => Ok(SigmaMode::Fixed(v)),
            _ => Err(Error::InvalidArgument(format!(
                "sigma must be \"median\" or a positive number, got {s:?}"
            ))),
        }
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Median of the `n(n−1)/2` pairwise Euclidean distances (lower median for
/// an even count).
pub fn median_pairwise_distance(points: &[Vec<f64>]) -> f64 {
    let mut d: Vec<f64> = (0..points.len())
        .flat_map(|i| (i + 1..points.len()).map(move |j| (i, j)))
        .map(|(i, j)| sq_dist(&points[i], &points[j]))
        .collect();
    if d.is_empty() {
        return 0.0;
    }
    let mid = (d.len() - 1) / 2;
    let (_, m, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    m.sqrt()
}

fn resolve_sigma(points: &[Vec<f64>], mode: SigmaMode) -> Result<f64> {
    let sigma = match mode {
        SigmaMode::Median => median_pairwise_distance(points),
        SigmaMode::Fixed(s) => s,
    };
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "kernel width must be positive (got {sigma}); are all points identical?"
        )));
    }
    Ok(sigma)
}

/// `A_ij = exp(−‖e_i − e_j‖² / 2σ²)` with a zero diagonal.
pub fn affinity_matrix(points: &[Vec<f64>], sigma: f64) -> DMatrix<f64> {
    let n = points.len();
    let denom = 2.0 * sigma * sigma;
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let v = (-sq_dist(&points[i], &points[j]) / denom).exp();
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    a
}

/// `D^{-1/2} A D^{-1/2}`. An item with zero degree is an error.
pub fn normalized_affinity(a: &DMatrix<f64>, sigma: f64) -> Result<DMatrix<f64>> {
    let inv_sqrt: Vec<f64> = a
        .row_iter()
        .enumerate()
        .map(|(i, row)| {
            let deg = row.sum();
            if deg > 0.0 {
                Ok(1.0 / deg.sqrt())
            } else {
                Err(Error::IsolatedItem { index: i, sigma })
            }
        })
        .collect::<Result<_>>()?;
    let n = a.nrows();
    Ok(DMatrix::from_fn(n, n, |i, j| a[(i, j)] * inv_sqrt[i] * inv_sqrt[j]))
}

/// Row-normalized top-`k` eigenvector coordinates of the normalized affinity.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralEmbedding {
    pub rows: Vec<Vec<f64>>,
    /// The `k` largest eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    pub sigma: f64,
}

/// Builds the spectral coordinates once so repeated clusterings can reuse them.
///
/// A row whose eigenvector coordinates are all zero is left at zero.
pub fn spectral_embedding(points: &[Vec<f64>], k: usize, sigma: SigmaMode) -> Result<SpectralEmbedding> {
    check_points(points, k)?;
    let sigma = resolve_sigma(points, sigma)?;
    let m = normalized_affinity(&affinity_matrix(points, sigma), sigma)?;
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    order.truncate(k);

    let rows = (0..points.len())
        .map(|i| {
            let row: Vec<f64> = order.iter().map(|&c| eig.eigenvectors[(i, c)]).collect();
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.iter().map(|v| v / norm).collect()
            } else {
                row
            }
        })
        .collect();
    Ok(SpectralEmbedding {
        rows,
        eigenvalues: order.iter().map(|&c| eig.eigenvalues[c]).collect(),
        sigma,
    })
}

/// K-means on precomputed spectral coordinates.
pub fn cluster_spectral_embedding(
    embedding: &SpectralEmbedding,
    k: usize,
    max_iters: usize,
    seed: u64,
) -> Result<ClusterAssignment> {
    kmeans(&embedding.rows, k, max_iters, seed)
}

/// Ng–Jordan–Weiss spectral clustering.
pub fn spectral_cluster(points: &[Vec<f64>], k: usize, sigma: SigmaMode, seed: u64) -> Result<ClusterAssignment> {
    let embedding = spectral_embedding(points, k, sigma)?;
    cluster_spectral_embedding(&embedding, k, super::DEFAULT_MAX_ITERS, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigma_parsing() {
        assert_eq!("median".parse::<SigmaMode>().unwrap(), SigmaMode::Median);
        assert_eq!("0.5".parse::<SigmaMode>().unwrap(), SigmaMode::Fixed(0.5));
        assert!("0".parse::<SigmaMode>().is_err());
        assert!("wide".parse::<SigmaMode>().is_err());
    }

    #[test]
    fn median_distance() {
        let pts = vec![vec![0.0], vec![1.0], vec![3.0]];
        // Distances 1, 2, 3.
        assert_eq!(median_pairwise_distance(&pts), 2.0);
    }

    #[test]
    fn isolated_item_is_reported() {
        let pts = vec![vec![0.0], vec![0.1], vec![1000.0]];
        let err = spectral_embedding(&pts, 2, SigmaMode::Fixed(0.1)).unwrap_err();
        assert!(matches!(err, Error::IsolatedItem { index: 2, .. }), "{err}");
    }

    #[test]
    fn identical_points_have_no_kernel_width() {
        let pts = vec![vec![1.0, 1.0]; 4];
        assert!(spectral_embedding(&pts, 2, SigmaMode::Median).is_err());
    }

    #[test]
    fn leading_eigenvalue_is_one() {
        let pts: Vec<Vec<f64>> = (0..12).map(|i| vec![(i as f64).sin(), (i as f64 * 0.7).cos()]).collect();
        let e = spectral_embedding(&pts, 3, SigmaMode::Median).unwrap();
        assert!((e.eigenvalues[0] - 1.0).abs() < 1e-10);
        assert!(e.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
    }
}
