use std::cell::Cell;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{load_features, read_json, write_json};
use crate::error::{Error, Result};
use crate::types::{FeatureSequence, VideoLabel};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

thread_local! {
    static GT_READS: Cell<usize> = const { Cell::new(0) };
}

/// Number of ground-truth reads made on this thread through
/// [`VideoEntry::ground_truth`]. Training must leave it unchanged.
pub fn gt_access_count() -> usize {
    GT_READS.with(Cell::get)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Half-open frame range `[start, end)` of one anomalous event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameInterval {
    pub start: usize,
    pub end: usize,
}

fn default_fps() -> f64 {
    30.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoEntry {
    pub video_id: String,
    /// Relative to the manifest's directory unless absolute.
    pub feature_path: PathBuf,
    pub label: VideoLabel,
    pub total_frames: usize,
    pub frames_per_snippet: usize,
    #[serde(default = "default_fps")]
    pub fps: f64,
    pub split: Split,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    ground_truth_intervals: Vec<FrameInterval>,
}

impl VideoEntry {
    pub fn new(
        video_id: impl Into<String>,
        feature_path: impl Into<PathBuf>,
        label: VideoLabel,
        total_frames: usize,
        frames_per_snippet: usize,
        split: Split,
    ) -> Self {
        Self {
            video_id: video_id.into(),
            feature_path: feature_path.into(),
            label,
            total_frames,
            frames_per_snippet,
            fps: default_fps(),
            split,
            ground_truth_intervals: Vec::new(),
        }
    }

    pub fn with_ground_truth(mut self, intervals: Vec<FrameInterval>) -> Self {
        self.ground_truth_intervals = intervals;
        self
    }

    /// Snippet count `T` implied by the frame count.
    pub fn num_snippets(&self) -> usize {
        self.total_frames.div_ceil(self.frames_per_snippet)
    }

    pub fn has_ground_truth(&self) -> bool {
        !self.ground_truth_intervals.is_empty()
    }

    /// Annotated event intervals. Every call is counted (see
    /// [`gt_access_count`]).
    pub fn ground_truth(&self) -> &[FrameInterval] {
        GT_READS.with(|c| c.set(c.get() + 1));
        &self.ground_truth_intervals
    }

    /// Per-frame anomaly flags from the ground-truth intervals.
    pub fn frame_labels(&self) -> Vec<bool> {
        let mut labels = vec![false; self.total_frames];
        for iv in self.ground_truth() {
            labels[iv.start..iv.end].iter_mut().for_each(|l| *l = true);
        }
        labels
    }

    fn validate(&self) -> Result<()> {
        let id = &self.video_id;
        if self.total_frames == 0 || self.frames_per_snippet == 0 {
            return Err(Error::Validation(format!("{id}: frame counts must be positive")));
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(Error::Validation(format!("{id}: fps must be positive")));
        }
        let iv = &self.ground_truth_intervals;
        if !iv.is_empty() && !self.label.is_abnormal() {
            return Err(Error::Validation(format!("{id}: normal video has anomaly intervals")));
        }
        for (k, i) in iv.iter().enumerate() {
            if i.start >= i.end || i.end > self.total_frames {
                return Err(Error::Validation(format!(
                    "{id}: interval [{}, {}) outside [0, {})",
                    i.start, i.end, self.total_frames
                )));
            }
            if k > 0 && iv[k - 1].end > i.start {
                return Err(Error::Validation(format!(
                    "{id}: intervals overlap or are unsorted at [{}, {})",
                    i.start, i.end
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub videos: Vec<VideoEntry>,
}

impl DatasetManifest {
    pub fn new(videos: Vec<VideoEntry>) -> Result<Self> {
        let m = Self {
            schema_version: MANIFEST_SCHEMA_VERSION,
            videos,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(Error::Validation(format!(
                "unsupported manifest schema_version {}",
                self.schema_version
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for v in &self.videos {
            if !seen.insert(v.video_id.as_str()) {
                return Err(Error::Validation(format!("duplicate video id {}", v.video_id)));
            }
            v.validate()?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let m: Self = read_json(path)?;
        m.validate()?;
        Ok(m)
    }

    pub fn store(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn get(&self, video_id: &str) -> Option<&VideoEntry> {
        self.videos.iter().find(|v| v.video_id == video_id)
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &VideoEntry> {
        self.videos.iter().filter(move |v| v.split == split)
    }

    /// Loads and validates the feature file of `entry`; relative paths are
    /// resolved against `base_dir`.
    pub fn load_features(&self, base_dir: &Path, entry: &VideoEntry) -> Result<FeatureSequence> {
        let path = if entry.feature_path.is_absolute() {
            entry.feature_path.clone()
        } else {
            base_dir.join(&entry.feature_path)
        };
        let (rows, dim, data) = load_features(&path)?;
        if rows != entry.num_snippets() {
            return Err(Error::Validation(format!(
                "{}: feature file has {rows} snippets, manifest implies {}",
                entry.video_id,
                entry.num_snippets()
            )));
        }
        FeatureSequence::new(&entry.video_id, data, dim, entry.frames_per_snippet, entry.total_frames)
    }
}
