//! Unsupervised discovery evaluation: embed labeled frames, cluster them
//! with K-means or spectral clustering, and score the clusters by the
//! conditional entropy of the true classes, repeated over seeds.

mod dump;
mod entropy;
mod kmeans;
mod spectral;

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use dump::EmbeddingDump;
pub use entropy::{conditional_entropy, random_assignment, uncertainty_reduction, ClusterAssignment, ContingencyTable};
pub use kmeans::{kmeans, kmeans_run, KmeansResult};
pub use spectral::{
    affinity_matrix, cluster_spectral_embedding, median_pairwise_distance, normalized_affinity, spectral_cluster,
    spectral_embedding, SigmaMode, SpectralEmbedding,
};

use crate::encoder::{batch_forward, EncoderParams, Tap};
use crate::videoset::FrameCorpus;
use crate::{seeded_rng, Error, Result};

/// Lloyd iteration cap used by the evaluation protocol.
pub const DEFAULT_MAX_ITERS: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    #[default]
    Kmeans,
    Spectral,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Kmeans => "kmeans",
            Algorithm::Spectral => "spectral",
        })
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kmeans" => Ok(Algorithm::Kmeans),
            "spectral" => Ok(Algorithm::Spectral),
            _ => Err(Error::InvalidArgument(format!(
                "unknown algorithm {s:?}; expected kmeans or spectral"
            ))),
        }
    }
}

/// Whether entropy is scored over frames or over whole videos.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    #[default]
    Frame,
    /// Each video takes the most frequent cluster among its frames
    /// (ties to the lowest cluster index) and its most frequent class.
    VideoMajority,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscoveryConfig {
    pub algorithm: Algorithm,
    pub k: usize,
    pub repeats: usize,
    pub seed: u64,
    pub tap: Tap,
    pub sigma: SigmaMode,
    pub max_iters: usize,
    pub granularity: Granularity,
    /// Cluster only this many frames, chosen once by seed.
    pub subsample: Option<usize>,
}

impl Default for DiscoveryConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Kmeans,
            k: 5,
            repeats: 10,
            seed: 0,
            tap: Tap::Penultimate,
            sigma: SigmaMode::Median,
            max_iters: DEFAULT_MAX_ITERS,
            granularity: Granularity::Frame,
            subsample: None,
        }
    }
}

/// Conditional-entropy statistics over clustering repeats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryReport {
    pub algorithm: Algorithm,
    pub k: usize,
    pub repeats: usize,
    pub items: usize,
    pub classes: usize,
    /// Mean conditional entropy in bits.
    pub ce_mean: f64,
    /// Population standard deviation over repeats, in bits.
    pub ce_std: f64,
    /// `2^ce_mean`.
    pub effective_classes: f64,
    /// Upper bound `log2(classes)`.
    pub ce_max: f64,
    pub ce_runs: Vec<f64>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn majority(values: impl Iterator<Item = usize>, size: usize) -> usize {
    let mut counts = vec![0usize; size];
    for v in values {
        counts[v] += 1;
    }
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

/// Clusters `points` `repeats` times with seeds `seed + run` and scores each
/// run against `labels`.
///
/// `groups`, when given, maps each point to a video and scoring happens per
/// video by majority vote.
pub fn evaluate_embeddings(
    points: &[Vec<f64>],
    labels: &[usize],
    groups: Option<&[usize]>,
    cfg: &DiscoveryConfig,
) -> Result<DiscoveryReport> {
    if points.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            left: points.len(),
            right: labels.len(),
        });
    }
    if cfg.repeats == 0 {
        return Err(Error::InvalidArgument("repeats must be ≥ 1".into()));
    }
    if points.is_empty() {
        return Err(Error::InvalidArgument("nothing to cluster".into()));
    }
    let classes = labels.iter().max().unwrap() + 1;

    let spectral = match cfg.algorithm {
        Algorithm::Spectral => Some(spectral_embedding(points, cfg.k, cfg.sigma)?),
        Algorithm::Kmeans => None,
    };
    let runs: Vec<ClusterAssignment> = (0..cfg.repeats as u64)
        .into_par_iter()
        .map(|run| {
            let seed = cfg.seed.wrapping_add(run);
            match &spectral {
                Some(e) => cluster_spectral_embedding(e, cfg.k, cfg.max_iters, seed),
                None => kmeans(points, cfg.k, cfg.max_iters, seed),
            }
        })
        .collect::<Result<_>>()?;

    let (truth, items) = match groups {
        None => (labels.to_vec(), points.len()),
        Some(g) => {
            if g.len() != points.len() {
                return Err(Error::DimensionMismatch {
                    left: points.len(),
                    right: g.len(),
                });
            }
            let videos = g.iter().max().unwrap() + 1;
            let truth: Vec<usize> = (0..videos)
                .map(|v| majority(g.iter().zip(labels).filter(|(gv, _)| **gv == v).map(|(_, l)| *l), classes))
                .collect();
            (truth, videos)
        }
    };
    let ce_runs = runs
        .iter()
        .map(|a| match groups {
            None => conditional_entropy(&truth, a.labels()),
            Some(g) => {
                let per_video: Vec<usize> = (0..items)
                    .map(|v| {
                        majority(
                            g.iter().zip(a.labels()).filter(|(gv, _)| **gv == v).map(|(_, c)| *c),
                            cfg.k,
                        )
                    })
                    .collect();
                conditional_entropy(&truth, &per_video)
            }
        })
        .collect::<Result<Vec<f64>>>()?;

    let (ce_mean, ce_std) = mean_std(&ce_runs);
    Ok(DiscoveryReport {
        algorithm: cfg.algorithm,
        k: cfg.k,
        repeats: cfg.repeats,
        items,
        classes,
        ce_mean,
        ce_std,
        effective_classes: uncertainty_reduction(ce_mean),
        ce_max: (classes as f64).log2(),
        ce_runs,
    })
}

/// Embeds every frame of `corpus` (in corpus order) at `tap`.
pub fn embed_corpus(params: &EncoderParams, corpus: &FrameCorpus, tap: Tap) -> Result<Vec<Vec<f64>>> {
    let refs = corpus.frame_refs();
    let frames: Vec<_> = refs.iter().map(|&r| corpus.frame(r)).collect();
    Ok(batch_forward(params, &frames, tap)?.into_iter().map(|e| e.0).collect())
}

/// The full discovery protocol on a labeled test corpus.
pub fn evaluate_discovery(params: &EncoderParams, corpus: &FrameCorpus, cfg: &DiscoveryConfig) -> Result<DiscoveryReport> {
    let table = corpus
        .labels()
        .ok_or_else(|| Error::MissingLabels("the test corpus has no label table".into()))?;
    let labels = table.flat();
    let groups: Vec<usize> = corpus
        .frame_refs()
        .iter()
        .map(|r| r.video)
        .collect();
    let points = embed_corpus(params, corpus, cfg.tap)?;
    evaluate_points(points, labels, groups, cfg)
}

/// Applies the configured subsampling and granularity, then clusters.
pub fn evaluate_points(
    points: Vec<Vec<f64>>,
    labels: Vec<usize>,
    groups: Vec<usize>,
    cfg: &DiscoveryConfig,
) -> Result<DiscoveryReport> {
    match (cfg.subsample, cfg.granularity) {
        (Some(_), Granularity::VideoMajority) => Err(Error::InvalidArgument(
            "subsampling applies to frame-level evaluation only".into(),
        )),
        (Some(m), Granularity::Frame) if m < points.len() => {
            let mut idx: Vec<usize> = (0..points.len()).collect();
            let mut rng = seeded_rng(cfg.seed);
            rng.set_stream(3);
            idx.shuffle(&mut rng);
            idx.truncate(m);
            idx.sort_unstable();
            let pts: Vec<Vec<f64>> = idx.iter().map(|&i| points[i].clone()).collect();
            let lab: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
            evaluate_embeddings(&pts, &lab, None, cfg)
        }
        (_, Granularity::Frame) => evaluate_embeddings(&points, &labels, None, cfg),
        (None, Granularity::VideoMajority) => evaluate_embeddings(&points, &labels, Some(&groups), cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs() -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut pts = Vec::new();
        let mut labels = Vec::new();
        for (c, center) in [[0.0, 0.0], [10.0, 10.0], [-10.0, 10.0]].iter().enumerate() {
            for i in 0..8 {
                let t = i as f64;
                pts.push(vec![center[0] + 0.1 * t.sin(), center[1] + 0.1 * t.cos()]);
                labels.push(c);
            }
        }
        (pts, labels)
    }

    #[test]
    fn single_repeat_has_zero_std() {
        let (pts, labels) = blobs();
        let cfg = DiscoveryConfig {
            k: 3,
            repeats: 1,
            ..DiscoveryConfig::default()
        };
        let r = evaluate_embeddings(&pts, &labels, None, &cfg).unwrap();
        assert_eq!(r.ce_std, 0.0);
        assert_eq!(r.ce_runs.len(), 1);
    }

    #[test]
    fn separable_blobs_both_algorithms() {
        let (pts, labels) = blobs();
        for algorithm in [Algorithm::Kmeans, Algorithm::Spectral] {
            let cfg = DiscoveryConfig {
                algorithm,
                k: 3,
                repeats: 3,
                ..DiscoveryConfig::default()
            };
            let r = evaluate_embeddings(&pts, &labels, None, &cfg).unwrap();
            assert_eq!(r.ce_mean, 0.0, "{algorithm}");
            assert_eq!(r.effective_classes, 1.0);
        }
    }

    #[test]
    fn video_majority() {
        let (pts, labels) = blobs();
        let groups: Vec<usize> = (0..pts.len()).map(|i| i / 4).collect();
        let cfg = DiscoveryConfig {
            k: 3,
            repeats: 2,
            granularity: Granularity::VideoMajority,
            ..DiscoveryConfig::default()
        };
        let r = evaluate_points(pts, labels, groups, &cfg).unwrap();
        assert_eq!(r.items, 6);
        assert_eq!(r.ce_mean, 0.0);
    }

    #[test]
    fn subsample_limits_items() {
        let (pts, labels) = blobs();
        let groups = vec![0; pts.len()];
        let cfg = DiscoveryConfig {
            k: 3,
            repeats: 2,
            subsample: Some(12),
            ..DiscoveryConfig::default()
        };
        assert_eq!(evaluate_points(pts, labels, groups, &cfg).unwrap().items, 12);
    }

    #[test]
    fn algorithm_names() {
        assert_eq!("spectral".parse::<Algorithm>().unwrap(), Algorithm::Spectral);
        assert!("dbscan".parse::<Algorithm>().is_err());
        assert_eq!(Algorithm::Kmeans.to_string(), "kmeans");
    }
}
