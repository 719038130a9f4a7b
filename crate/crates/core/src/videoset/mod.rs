//! Corpus data model, on-disk ingestion, synthetic corpora and tuple sampling.
//!
//! Ground-truth labels live in a separate [`LabelTable`] that only evaluation
//! code reads. Every read goes through [`FrameCorpus::labels`], which bumps an
//! access counter so tests can audit that training never touched them.

mod frame_io;
mod manifest;
mod sampling;
mod synthetic;

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::seq::SliceRandom;

use crate::{seeded_rng, Error, Result};

pub use frame_io::{decode_frame, encode_cfr, encode_pnm, FrameFormat};
pub use manifest::{load_corpus, write_corpus, Manifest, ManifestVideo};
pub use sampling::{
    sample_pairs, sample_quads, sample_sfa_pairs, PairSample, QuadSample, SamplerParams,
};
pub use synthetic::{class_generator, generate_synthetic, ClassGenerator, ShapeKind, SyntheticConfig};

/// Channel-major frame geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct FrameShape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl FrameShape {
    pub const fn new(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
        }
    }

    /// Number of scalar values in a frame of this shape.
    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl fmt::Display for FrameShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.channels, self.height, self.width)
    }
}

impl FromStr for FrameShape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let dims: Vec<usize> = s
            .split('x')
            .map(|d| d.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::malformed("frame shape", format!("{s:?}: {e}")))?;
        match dims[..] {
            [c, h, w] if c > 0 && h > 0 && w > 0 => Ok(FrameShape::new(c, h, w)),
            _ => Err(Error::malformed(
                "frame shape",
                format!("{s:?}: expected CxHxW with positive dimensions"),
            )),
        }
    }
}

/// One video frame, values in `[0, 1]`, stored channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    shape: FrameShape,
    pixels: Vec<f32>,
}

impl Frame {
    pub fn new(shape: FrameShape, pixels: Vec<f32>) -> Result<Self> {
        if pixels.len() != shape.len() || shape.is_empty() {
            return Err(Error::InconsistentShape {
                expected: shape.to_string(),
                found: format!("{} values", pixels.len()),
                context: "frame pixel buffer".into(),
            });
        }
        if let Some(v) = pixels.iter().find(|v| !(v.is_finite() && (0.0..=1.0).contains(*v))) {
            return Err(Error::malformed(
                "frame",
                format!("pixel value {v} outside [0, 1]"),
            ));
        }
        Ok(Self { shape, pixels })
    }

    pub fn shape(&self) -> FrameShape {
        self.shape
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    /// Euclidean distance in pixel space.
    pub fn distance(&self, other: &Frame) -> f64 {
        self.pixels
            .iter()
            .zip(&other.pixels)
            .map(|(a, b)| {
                let d = f64::from(*a) - f64::from(*b);
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }
}

/// An ordered frame sequence. Labels are not stored here; see [`LabelTable`].
#[derive(Debug, Clone, PartialEq)]
pub struct Video {
    pub id: String,
    frames: Vec<Frame>,
}

impl Video {
    pub fn new(id: impl Into<String>, frames: Vec<Frame>) -> Result<Self> {
        let id = id.into();
        if frames.len() < 2 {
            return Err(Error::VideoTooShort {
                id,
                len: frames.len(),
            });
        }
        Ok(Self { id, frames })
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Address of one frame inside a corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FrameRef {
    pub video: usize,
    pub frame: usize,
}

impl FrameRef {
    pub const fn new(video: usize, frame: usize) -> Self {
        Self { video, frame }
    }
}

/// Evaluation-only ground truth: one class index per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelTable {
    class_names: Vec<String>,
    per_frame: Vec<Vec<usize>>,
}

impl LabelTable {
    /// `per_frame[v][t]` indexes into `class_names`.
    pub fn new(class_names: Vec<String>, per_frame: Vec<Vec<usize>>) -> Result<Self> {
        if let Some(&bad) = per_frame
            .iter()
            .flatten()
            .find(|&&c| c >= class_names.len())
        {
            return Err(Error::InvalidArgument(format!(
                "label index {bad} out of range for {} classes",
                class_names.len()
            )));
        }
        Ok(Self {
            class_names,
            per_frame,
        })
    }

    /// Builds a table from one optional class name per video. Returns `None`
    /// when no video carries a label; errors when only some do.
    pub fn from_video_labels(labels: &[Option<String>], lengths: &[usize]) -> Result<Option<Self>> {
        if labels.iter().all(Option::is_none) {
            return Ok(None);
        }
        let mut names: Vec<String> = Vec::new();
        let mut per_frame = Vec::with_capacity(labels.len());
        for (i, (label, &len)) in labels.iter().zip(lengths).enumerate() {
            let name = label.as_ref().ok_or_else(|| {
                Error::MissingLabels(format!("video #{i} is unlabeled while others are labeled"))
            })?;
            let idx = match names.iter().position(|n| n == name) {
                Some(idx) => idx,
                None => {
                    names.push(name.clone());
                    names.len() - 1
                }
            };
            per_frame.push(vec![idx; len]);
        }
        Ok(Some(Self {
            class_names: names,
            per_frame,
        }))
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn label(&self, at: FrameRef) -> usize {
        self.per_frame[at.video][at.frame]
    }

    pub fn video_labels(&self, video: usize) -> &[usize] {
        &self.per_frame[video]
    }

    /// Labels of every frame, videos in corpus order.
    pub fn flat(&self) -> Vec<usize> {
        self.per_frame.iter().flatten().copied().collect()
    }

    /// The label shared by every frame of `video`, if uniform.
    pub fn uniform_video_label(&self, video: usize) -> Option<usize> {
        let labels = &self.per_frame[video];
        let first = *labels.first()?;
        labels.iter().all(|&l| l == first).then_some(first)
    }
}

/// Where each source video landed inside a concatenated long video.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MuSegment {
    pub source_id: String,
    pub start: usize,
    pub len: usize,
}

/// Boundary table retained by [`concat_mu`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MuLayout {
    pub segments: Vec<MuSegment>,
}

/// An ordered collection of videos sharing one frame shape.
#[derive(Debug)]
pub struct FrameCorpus {
    videos: Vec<Video>,
    frame_shape: FrameShape,
    labels: Option<LabelTable>,
    mu: Option<MuLayout>,
    label_reads: AtomicUsize,
}

impl Clone for FrameCorpus {
    fn clone(&self) -> Self {
        Self {
            videos: self.videos.clone(),
            frame_shape: self.frame_shape,
            labels: self.labels.clone(),
            mu: self.mu.clone(),
            label_reads: AtomicUsize::new(0),
        }
    }
}

impl PartialEq for FrameCorpus {
    fn eq(&self, other: &Self) -> bool {
        self.videos == other.videos
            && self.frame_shape == other.frame_shape
            && self.labels == other.labels
            && self.mu == other.mu
    }
}

impl FrameCorpus {
    pub fn new(videos: Vec<Video>, labels: Option<LabelTable>) -> Result<Self> {
        let first = videos
            .first()
            .ok_or_else(|| Error::InvalidArgument("corpus has no videos".into()))?;
        let frame_shape = first.frames[0].shape();
        for video in &videos {
            for (t, frame) in video.frames.iter().enumerate() {
                if frame.shape() != frame_shape {
                    return Err(Error::InconsistentShape {
                        expected: frame_shape.to_string(),
                        found: frame.shape().to_string(),
                        context: format!("video {} frame {t}", video.id),
                    });
                }
            }
        }
        if let Some(table) = &labels {
            let aligned = table.per_frame.len() == videos.len()
                && table
                    .per_frame
                    .iter()
                    .zip(&videos)
                    .all(|(l, v)| l.len() == v.len());
            if !aligned {
                return Err(Error::InvalidArgument(
                    "label table is not aligned with the corpus frames".into(),
                ));
            }
        }
        Ok(Self {
            videos,
            frame_shape,
            labels,
            mu: None,
            label_reads: AtomicUsize::new(0),
        })
    }

    pub fn videos(&self) -> &[Video] {
        &self.videos
    }

    pub fn num_videos(&self) -> usize {
        self.videos.len()
    }

    pub fn num_frames(&self) -> usize {
        self.videos.iter().map(Video::len).sum()
    }

    pub fn frame_shape(&self) -> FrameShape {
        self.frame_shape
    }

    pub fn frame(&self, at: FrameRef) -> &Frame {
        &self.videos[at.video].frames[at.frame]
    }

    /// Every frame reference, videos in order.
    pub fn frame_refs(&self) -> Vec<FrameRef> {
        self.videos
            .iter()
            .enumerate()
            .flat_map(|(v, video)| (0..video.len()).map(move |t| FrameRef::new(v, t)))
            .collect()
    }

    pub fn mu_layout(&self) -> Option<&MuLayout> {
        self.mu.as_ref()
    }

    pub fn has_labels(&self) -> bool {
        self.labels.is_some()
    }

    /// Ground-truth labels for evaluation. Each call is counted.
    pub fn labels(&self) -> Option<&LabelTable> {
        self.label_reads.fetch_add(1, Ordering::Relaxed);
        self.labels.as_ref()
    }

    /// Label access for serialization, outside the audit count.
    pub(crate) fn labels_unaudited(&self) -> Option<&LabelTable> {
        self.labels.as_ref()
    }

    /// How many times [`labels`](Self::labels) has been called on this instance.
    pub fn label_reads(&self) -> usize {
        self.label_reads.load(Ordering::Relaxed)
    }

    /// Returns the corpus with a different label table (same frames).
    pub fn with_labels(mut self, labels: Option<LabelTable>) -> Result<Self> {
        let mu = self.mu.take();
        let mut out = FrameCorpus::new(self.videos, labels)?;
        out.mu = mu;
        Ok(out)
    }
}

/// Concatenates every video, in a seed-determined random order, into one long
/// video. Per-frame labels and a boundary table are kept.
pub fn concat_mu(corpus: &FrameCorpus, seed: u64) -> Result<FrameCorpus> {
    if corpus.num_videos() < 2 {
        return Err(Error::InvalidArgument(format!(
            "long-video concatenation needs at least 2 videos, corpus has {}",
            corpus.num_videos()
        )));
    }
    let mut order: Vec<usize> = (0..corpus.num_videos()).collect();
    order.shuffle(&mut seeded_rng(seed));

    let mut frames = Vec::with_capacity(corpus.num_frames());
    let mut segments = Vec::with_capacity(order.len());
    for &v in &order {
        let video = &corpus.videos[v];
        segments.push(MuSegment {
            source_id: video.id.clone(),
            start: frames.len(),
            len: video.len(),
        });
        frames.extend(video.frames.iter().cloned());
    }
    let labels = corpus
        .labels
        .as_ref()
        .map(|table| {
            let per_frame = order
                .iter()
                .flat_map(|&v| table.per_frame[v].iter().copied())
                .collect();
            LabelTable::new(table.class_names.clone(), vec![per_frame])
        })
        .transpose()?;

    let mut out = FrameCorpus::new(vec![Video::new("mu", frames)?], labels)?;
    out.mu = Some(MuLayout { segments });
    Ok(out)
}
