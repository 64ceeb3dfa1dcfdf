//! Glance annotation files, glance sampling from ground truth, position
//! perturbation and supervision splits.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{read_json, write_json, DatasetManifest, Split};
use crate::error::{Error, Result};
use crate::types::{GlanceSet, RngSeed};

pub const GLANCE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GlanceRecord {
    /// Signed so that malformed negative frames surface as validation
    /// errors naming the video rather than as parse failures.
    pub frame: i64,
    #[serde(default)]
    pub wall_clock_annotated_at: Option<String>,
    #[serde(default)]
    pub annotator: Option<String>,
}

impl GlanceRecord {
    pub fn new(frame: usize, annotator: Option<String>, at: Option<String>) -> Self {
        Self {
            frame: frame as i64,
            wall_clock_annotated_at: at,
            annotator,
        }
    }
}

/// Glances of one video.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoGlances {
    pub video_id: String,
    pub glances: Vec<GlanceRecord>,
    pub schema_version: u32,
}

impl VideoGlances {
    pub fn new(video_id: impl Into<String>) -> Self {
        Self {
            video_id: video_id.into(),
            glances: Vec::new(),
            schema_version: GLANCE_SCHEMA_VERSION,
        }
    }

    /// Checks every frame against `total_frames` and returns the sorted,
    /// deduplicated glance set.
    pub fn to_glance_set(&self, frames_per_snippet: usize, total_frames: usize) -> Result<GlanceSet> {
        let mut frames = Vec::with_capacity(self.glances.len());
        for g in &self.glances {
            if g.frame < 0 || g.frame as u64 >= total_frames as u64 {
                return Err(Error::Validation(format!(
                    "video {}: glance frame {} outside [0, {total_frames})",
                    self.video_id, g.frame
                )));
            }
            frames.push(g.frame as usize);
        }
        frames.sort_unstable();
        frames.dedup();
        GlanceSet::new(&self.video_id, frames, frames_per_snippet, total_frames)
    }
}

/// All glance annotations of a dataset, ordered by video id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GlanceFile {
    pub schema_version: u32,
    pub videos: Vec<VideoGlances>,
}

impl Default for GlanceFile {
    fn default() -> Self {
        Self {
            schema_version: GLANCE_SCHEMA_VERSION,
            videos: Vec::new(),
        }
    }
}

impl GlanceFile {
    pub fn load(path: &Path) -> Result<Self> {
        let f: Self = read_json(path)?;
        if f.schema_version != GLANCE_SCHEMA_VERSION {
            return Err(Error::Validation(format!(
                "unsupported glance schema_version {}",
                f.schema_version
            )));
        }
        Ok(f)
    }

    pub fn store(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn get(&self, video_id: &str) -> Option<&VideoGlances> {
        self.videos.iter().find(|v| v.video_id == video_id)
    }

    /// Entry for `video_id`, created empty if missing; keeps id order.
    pub fn entry_mut(&mut self, video_id: &str) -> &mut VideoGlances {
        let pos = match self.videos.binary_search_by(|v| v.video_id.as_str().cmp(video_id)) {
            Ok(p) => p,
            Err(p) => {
                self.videos.insert(p, VideoGlances::new(video_id));
                p
            }
        };
        &mut self.videos[pos]
    }

    /// Validates against the manifest and returns the glance sets of every
    /// annotated video. Normal videos may only carry empty lists.
    pub fn validate(&self, manifest: &DatasetManifest) -> Result<BTreeMap<String, GlanceSet>> {
        let mut out = BTreeMap::new();
        for vg in &self.videos {
            let entry = manifest.get(&vg.video_id).ok_or_else(|| {
                Error::Validation(format!("glances for unknown video {}", vg.video_id))
            })?;
            let set = vg.to_glance_set(entry.frames_per_snippet, entry.total_frames)?;
            if !entry.label.is_abnormal() && !set.is_empty() {
                return Err(Error::Validation(format!(
                    "normal video {} carries glances",
                    vg.video_id
                )));
            }
            out.insert(vg.video_id.clone(), set);
        }
        Ok(out)
    }
}

/// One glance per ground-truth interval, uniform over the interval's frames,
/// for every abnormal training video.
pub fn sample_glances(manifest: &DatasetManifest, seed: RngSeed) -> Result<GlanceFile> {
    let mut file = GlanceFile::default();
    for (idx, entry) in manifest.videos.iter().enumerate() {
        if entry.split != Split::Train || !entry.label.is_abnormal() {
            continue;
        }
        let mut rng = seed.derive(idx as u64).stream(crate::STREAM_GLANCE);
        let mut frames = Vec::new();
        for iv in entry.ground_truth() {
            if iv.start >= iv.end {
                return Err(Error::Generation(format!(
                    "{}: empty interval [{}, {})",
                    entry.video_id, iv.start, iv.end
                )));
            }
            frames.push(rng.random_range(iv.start..iv.end));
        }
        frames.sort_unstable();
        let vg = file.entry_mut(&entry.video_id);
        vg.glances = frames
            .into_iter()
            .map(|f| GlanceRecord::new(f, Some("synthetic".into()), None))
            .collect();
    }
    Ok(file)
}

/// Shifts each glance by a uniform integer in `[-max_shift, max_shift]`
/// frames, clamped into the video, then re-sorts and deduplicates.
pub fn perturb_glances(
    glances: &GlanceSet,
    max_shift: usize,
    frames_per_snippet: usize,
    total_frames: usize,
    seed: RngSeed,
) -> Result<GlanceSet> {
    if max_shift == 0 {
        return Ok(glances.clone());
    }
    let mut rng = seed.stream(crate::STREAM_PERTURB);
    let m = max_shift as i64;
    let last = total_frames as i64 - 1;
    let mut frames: Vec<usize> = glances
        .frames()
        .iter()
        .map(|&f| (f as i64 + rng.random_range(-m..=m)).clamp(0, last) as usize)
        .collect();
    frames.sort_unstable();
    frames.dedup();
    GlanceSet::new(glances.video_id(), frames, frames_per_snippet, total_frames)
}

/// Disjoint `(weak, glance)` partitions of `ids` holding `weak_frac` and
/// `glance_frac` of them (rounded); the remainder is left out.
pub fn split_supervision(
    ids: &[String],
    weak_frac: f64,
    glance_frac: f64,
    seed: RngSeed,
) -> Result<(Vec<String>, Vec<String>)> {
    let valid = |f: f64| (0.0..=1.0).contains(&f);
    if !valid(weak_frac) || !valid(glance_frac) || weak_frac + glance_frac > 1.0 + 1e-9 {
        return Err(Error::Config(format!(
            "supervision fractions {weak_frac} + {glance_frac} must lie in [0, 1]"
        )));
    }
    let n = ids.len();
    let n_glance = ((glance_frac * n as f64).round() as usize).min(n);
    let n_weak = ((weak_frac * n as f64).round() as usize).min(n - n_glance);
    let mut shuffled = ids.to_vec();
    shuffled.sort();
    shuffled.shuffle(&mut seed.stream(crate::STREAM_SPLIT));
    let glance = shuffled[..n_glance].to_vec();
    let weak = shuffled[n_glance..n_glance + n_weak].to_vec();
    Ok((weak, glance))
}
