//! Training tuple samplers.
//!
//! All samplers draw with replacement and are pure functions of the corpus
//! frames, the parameters and the RNG state. None of them reads labels.

use rand::seq::SliceRandom;
use rand::Rng;

use super::{FrameCorpus, FrameRef};
use crate::{Error, Result};

/// A pair of frames with its neighbor label `Y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PairSample {
    pub anchor: FrameRef,
    pub other: FrameRef,
    /// `true` for a temporal-neighbor pair (`Y = 1`).
    pub positive: bool,
}

/// Anchor, temporal neighbor, same-video non-neighbor and a negative frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct QuadSample {
    pub anchor: FrameRef,
    pub neighbor: FrameRef,
    pub nonneighbor: FrameRef,
    pub negative: FrameRef,
}

/// Temporal sampling parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SamplerParams {
    /// Neighbor window `w`: positives are `Δ ∈ 1..=w` frames apart.
    pub window: usize,
    /// Non-neighbor offset `n`.
    pub offset: usize,
    /// Minimum index gap between anchor and negative inside a concatenated
    /// long video. Ignored for ordinary corpora.
    pub mu_min_gap: usize,
}

impl SamplerParams {
    /// Uses the default long-video gap of `2 * offset`.
    pub fn new(window: usize, offset: usize) -> Self {
        Self {
            window,
            offset,
            mu_min_gap: 2 * offset,
        }
    }

    fn check_window(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::InvalidArgument("window w must be ≥ 1".into()));
        }
        Ok(())
    }
}

fn check_fraction(positive_fraction: f64) -> Result<()> {
    if !(positive_fraction > 0.0 && positive_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "positive fraction must lie in (0, 1), got {positive_fraction}"
        )));
    }
    Ok(())
}

/// Draws a temporal-neighbor pair `(t, t + Δ)` with `Δ` uniform in `1..=w`
/// (clipped to the video length).
fn positive_pair<R: Rng + ?Sized>(corpus: &FrameCorpus, window: usize, rng: &mut R) -> PairSample {
    let video = rng.random_range(0..corpus.num_videos());
    let len = corpus.videos()[video].len();
    let delta = rng.random_range(1..=window.min(len - 1));
    let t = rng.random_range(0..len - delta);
    PairSample {
        anchor: FrameRef::new(video, t),
        other: FrameRef::new(video, t + delta),
        positive: true,
    }
}

fn uniform_frame<R: Rng + ?Sized>(corpus: &FrameCorpus, video: usize, rng: &mut R) -> FrameRef {
    FrameRef::new(video, rng.random_range(0..corpus.videos()[video].len()))
}

/// Uniform video index different from `exclude`.
fn other_video<R: Rng + ?Sized>(n: usize, exclude: usize, rng: &mut R) -> usize {
    let v = rng.random_range(0..n - 1);
    if v >= exclude {
        v + 1
    } else {
        v
    }
}

/// Uniform index in `[0, len)` at distance ≥ `gap` from `anchor`.
fn gapped_index<R: Rng + ?Sized>(len: usize, anchor: usize, gap: usize, rng: &mut R) -> Option<usize> {
    if gap == 0 {
        return Some(rng.random_range(0..len));
    }
    // [0, anchor - gap] and [anchor + gap, len)
    let left = (anchor + 1).saturating_sub(gap);
    let right_start = anchor.saturating_add(gap);
    let right = len.saturating_sub(right_start);
    let total = left + right;
    if total == 0 {
        return None;
    }
    let k = rng.random_range(0..total);
    Some(if k < left { k } else { right_start + (k - left) })
}

fn split_counts(count: usize, positive_fraction: f64) -> (usize, usize) {
    let positives = ((count as f64) * positive_fraction).round() as usize;
    (positives.min(count), count - positives.min(count))
}

/// Siamese pairs: positives are temporal neighbors, negatives pair frames
/// from two distinct videos (or, in a long concatenated video, frames at
/// least `mu_min_gap` apart). The result is shuffled.
pub fn sample_pairs<R: Rng + ?Sized>(
    corpus: &FrameCorpus,
    params: &SamplerParams,
    count: usize,
    positive_fraction: f64,
    rng: &mut R,
) -> Result<Vec<PairSample>> {
    params.check_window()?;
    check_fraction(positive_fraction)?;
    let (positives, negatives) = split_counts(count, positive_fraction);
    let mu = corpus.mu_layout().is_some();
    if negatives > 0 && !mu && corpus.num_videos() < 2 {
        return Err(Error::Sampling(
            "cross-video negatives need at least 2 videos".into(),
        ));
    }

    let mut out = Vec::with_capacity(count);
    for _ in 0..positives {
        out.push(positive_pair(corpus, params.window, rng));
    }
    let n = corpus.num_videos();
    for _ in 0..negatives {
        let sample = if mu {
            let len = corpus.videos()[0].len();
            let anchor = rng.random_range(0..len);
            let other = gapped_index(len, anchor, params.mu_min_gap, rng).ok_or_else(|| {
                Error::Sampling(format!(
                    "long video of {len} frames has no negative {} frames from the anchor",
                    params.mu_min_gap
                ))
            })?;
            PairSample {
                anchor: FrameRef::new(0, anchor),
                other: FrameRef::new(0, other),
                positive: false,
            }
        } else {
            let a = rng.random_range(0..n);
            let b = other_video(n, a, rng);
            PairSample {
                anchor: uniform_frame(corpus, a, rng),
                other: uniform_frame(corpus, b, rng),
                positive: false,
            }
        };
        out.push(sample);
    }
    out.shuffle(rng);
    Ok(out)
}

/// SFA baseline pairs: positives as in [`sample_pairs`], negatives are
/// non-neighbors of the *same* video (`|Δ| > w`).
pub fn sample_sfa_pairs<R: Rng + ?Sized>(
    corpus: &FrameCorpus,
    params: &SamplerParams,
    count: usize,
    positive_fraction: f64,
    rng: &mut R,
) -> Result<Vec<PairSample>> {
    params.check_window()?;
    check_fraction(positive_fraction)?;
    let (positives, negatives) = split_counts(count, positive_fraction);
    let eligible: Vec<usize> = corpus
        .videos()
        .iter()
        .enumerate()
        .filter(|(_, v)| v.len() > params.window + 1)
        .map(|(i, _)| i)
        .collect();
    if negatives > 0 && eligible.is_empty() {
        return Err(Error::Sampling(format!(
            "no video is longer than w + 1 = {} frames",
            params.window + 1
        )));
    }

    let mut out = Vec::with_capacity(count);
    for _ in 0..positives {
        out.push(positive_pair(corpus, params.window, rng));
    }
    for _ in 0..negatives {
        let video = eligible[rng.random_range(0..eligible.len())];
        let len = corpus.videos()[video].len();
        // Frame 0 always has a non-neighbor in an eligible video, so this terminates.
        let (anchor, other) = loop {
            let anchor = rng.random_range(0..len);
            if let Some(other) = gapped_index(len, anchor, params.window + 1, rng) {
                break (anchor, other);
            }
        };
        out.push(PairSample {
            anchor: FrameRef::new(video, anchor),
            other: FrameRef::new(video, other),
            positive: false,
        });
    }
    out.shuffle(rng);
    Ok(out)
}

/// Quadruplets `(t, t + Δ, t + n, negative)` with `Δ` uniform in `1..=w`.
///
/// Anchors are restricted to positions where `t + n` exists. The negative
/// comes from a different video, or in a long concatenated video from an
/// index at least `mu_min_gap` away from the anchor.
pub fn sample_quads<R: Rng + ?Sized>(
    corpus: &FrameCorpus,
    params: &SamplerParams,
    count: usize,
    rng: &mut R,
) -> Result<Vec<QuadSample>> {
    params.check_window()?;
    if params.offset <= params.window {
        return Err(Error::InvalidArgument(format!(
            "non-neighbor offset n = {} must exceed the window w = {}",
            params.offset, params.window
        )));
    }
    let mu = corpus.mu_layout().is_some();
    if !mu && corpus.num_videos() < 2 {
        return Err(Error::Sampling(
            "quadruplet negatives need at least 2 videos (or a long concatenated video)".into(),
        ));
    }
    let admissible: Vec<usize> = corpus
        .videos()
        .iter()
        .enumerate()
        .filter(|(_, v)| v.len() > params.offset)
        .map(|(i, _)| i)
        .collect();
    if admissible.is_empty() {
        return Err(Error::Sampling(format!(
            "no admissible anchor: every video is shorter than n + 1 = {} frames",
            params.offset + 1
        )));
    }

    let n = corpus.num_videos();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let video = admissible[rng.random_range(0..admissible.len())];
        let len = corpus.videos()[video].len();
        let t = rng.random_range(0..len - params.offset);
        let delta = rng.random_range(1..=params.window);
        let negative = if mu {
            let idx = gapped_index(len, t, params.mu_min_gap, rng).ok_or_else(|| {
                Error::Sampling(format!(
                    "long video of {len} frames has no negative {} frames from anchor {t}",
                    params.mu_min_gap
                ))
            })?;
            FrameRef::new(video, idx)
        } else {
            uniform_frame(corpus, other_video(n, video, rng), rng)
        };
        out.push(QuadSample {
            anchor: FrameRef::new(video, t),
            neighbor: FrameRef::new(video, t + delta),
            nonneighbor: FrameRef::new(video, t + params.offset),
            negative,
        });
    }
    Ok(out)
}
