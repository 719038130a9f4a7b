//! JSON corpus manifests.
//!
//! ```json
//! { "videos": [ { "id": "v0", "label": "walk", "frames": ["v0/0000.cfr", "v0/0001.cfr"] } ] }
//! ```
//!
//! Frame paths are resolved relative to the manifest's directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{decode_frame, encode_cfr, encode_pnm, FrameCorpus, FrameFormat, LabelTable, Video};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub videos: Vec<ManifestVideo>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestVideo {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub frames: Vec<PathBuf>,
}

impl Manifest {
    /// Parses and structurally validates a manifest.
    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let manifest: Manifest = serde_json::from_slice(bytes)
            .map_err(|e| Error::malformed("manifest", e.to_string()))?;
        if manifest.videos.is_empty() {
            return Err(Error::malformed("manifest", "no videos listed"));
        }
        let mut seen = std::collections::HashSet::new();
        for video in &manifest.videos {
            if !seen.insert(video.id.as_str()) {
                return Err(Error::malformed(
                    "manifest",
                    format!("duplicate video id {:?}", video.id),
                ));
            }
            if video.frames.len() < 2 {
                return Err(Error::VideoTooShort {
                    id: video.id.clone(),
                    len: video.frames.len(),
                });
            }
        }
        Ok(manifest)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}

/// Reads a manifest and every frame it references.
pub fn load_corpus(manifest_path: impl AsRef<Path>) -> Result<FrameCorpus> {
    let manifest_path = manifest_path.as_ref();
    let bytes = fs::read(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest = Manifest::from_json(&bytes)?;
    let root = manifest_path.parent().unwrap_or_else(|| Path::new("."));

    let mut videos = Vec::with_capacity(manifest.videos.len());
    let mut labels = Vec::with_capacity(manifest.videos.len());
    let mut lengths = Vec::with_capacity(manifest.videos.len());
    for entry in &manifest.videos {
        let mut frames = Vec::with_capacity(entry.frames.len());
        for rel in &entry.frames {
            let path = root.join(rel);
            let data = match fs::read(&path) {
                Ok(data) => data,
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                    return Err(Error::MissingFrame(path))
                }
                Err(e) => return Err(Error::io(path, e)),
            };
            let frame = decode_frame(&data).map_err(|e| match e {
                Error::Malformed { what, reason } => Error::Malformed {
                    what,
                    reason: format!("{}: {reason}", path.display()),
                },
                other => other,
            })?;
            frames.push(frame);
        }
        lengths.push(frames.len());
        labels.push(entry.label.clone());
        videos.push(Video::new(entry.id.clone(), frames)?);
    }
    let labels = LabelTable::from_video_labels(&labels, &lengths)?;
    FrameCorpus::new(videos, labels)
}

/// Writes every frame under `dir` plus `dir/manifest.json`; returns the manifest path.
///
/// Videos whose frames carry mixed labels (long concatenated videos) are
/// written unlabeled.
pub fn write_corpus(corpus: &FrameCorpus, dir: impl AsRef<Path>, format: FrameFormat) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let table = corpus.labels_unaudited();
    let ext = format.extension(corpus.frame_shape().channels);

    let mut entries = Vec::with_capacity(corpus.num_videos());
    for (v, video) in corpus.videos().iter().enumerate() {
        let sub = format!("{v:04}_{}", sanitize(&video.id));
        let video_dir = dir.join(&sub);
        fs::create_dir_all(&video_dir).map_err(|e| Error::io(&video_dir, e))?;
        let mut frames = Vec::with_capacity(video.len());
        for (t, frame) in video.frames().iter().enumerate() {
            let name = format!("{t:05}.{ext}");
            let bytes = match format {
                FrameFormat::Cfr => encode_cfr(frame),
                FrameFormat::Pnm => encode_pnm(frame)?,
            };
            let path = video_dir.join(&name);
            fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
            frames.push(PathBuf::from(&sub).join(name));
        }
        let label = table
            .and_then(|t| t.uniform_video_label(v).map(|l| t.class_names()[l].clone()));
        entries.push(ManifestVideo {
            id: video.id.clone(),
            label,
            frames,
        });
    }
    let path = dir.join("manifest.json");
    let manifest = Manifest { videos: entries };
    fs::write(&path, manifest.to_json()).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}
