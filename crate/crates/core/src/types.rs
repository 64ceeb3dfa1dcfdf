//! Shared domain types: snippet feature sequences, glance sets, kernels and
//! score tracks, plus the seeded randomness every stochastic step draws from.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Snippet index of a frame under floor division.
pub fn frame_to_snippet(frame: usize, frames_per_snippet: usize) -> usize {
    frame / frames_per_snippet
}

/// Expands a snippet-level track to frame level by repetition, truncated to
/// `total_frames`.
pub fn snippet_to_frame_scores(
    track: &ScoreTrack,
    frames_per_snippet: usize,
    total_frames: usize,
) -> Result<Vec<f64>> {
    check_frame_span(track.len(), frames_per_snippet, total_frames)?;
    Ok(track
        .as_slice()
        .iter()
        .flat_map(|&s| std::iter::repeat_n(s, frames_per_snippet))
        .take(total_frames)
        .collect())
}

/// `total_frames` must fall in the last snippet: `(T-1)*fps < total <= T*fps`.
pub(crate) fn check_frame_span(
    num_snippets: usize,
    frames_per_snippet: usize,
    total_frames: usize,
) -> Result<()> {
    if frames_per_snippet == 0 {
        return Err(Error::Invariant("frames_per_snippet must be positive".into()));
    }
    if num_snippets == 0 || total_frames == 0 {
        return Err(Error::Invariant("empty sequence".into()));
    }
    let upper = num_snippets * frames_per_snippet;
    let lower = (num_snippets - 1) * frames_per_snippet;
    if total_frames > upper || total_frames <= lower {
        return Err(Error::Invariant(format!(
            "total_frames {total_frames} inconsistent with {num_snippets} snippets of \
             {frames_per_snippet} frames (expected {}..={upper})",
            lower + 1
        )));
    }
    Ok(())
}

/// Binary video-level anomaly flag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum VideoLabel {
    Normal,
    Abnormal,
}

impl VideoLabel {
    pub fn as_f64(self) -> f64 {
        match self {
            VideoLabel::Normal => 0.0,
            VideoLabel::Abnormal => 1.0,
        }
    }

    pub fn is_abnormal(self) -> bool {
        self == VideoLabel::Abnormal
    }
}

impl TryFrom<u8> for VideoLabel {
    type Error = String;

    fn try_from(y: u8) -> std::result::Result<Self, String> {
        match y {
            0 => Ok(VideoLabel::Normal),
            1 => Ok(VideoLabel::Abnormal),
            other => Err(format!("video label must be 0 or 1, got {other}")),
        }
    }
}

impl From<VideoLabel> for u8 {
    fn from(label: VideoLabel) -> u8 {
        match label {
            VideoLabel::Normal => 0,
            VideoLabel::Abnormal => 1,
        }
    }
}

/// Per-video matrix of `T` snippet features of width `D`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    video_id: String,
    features: Vec<f32>,
    num_snippets: usize,
    dim: usize,
    frames_per_snippet: usize,
    total_frames: usize,
}

impl FeatureSequence {
    pub fn new(
        video_id: impl Into<String>,
        features: Vec<f32>,
        dim: usize,
        frames_per_snippet: usize,
        total_frames: usize,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Invariant("feature dimension must be positive".into()));
        }
        if features.is_empty() || !features.len().is_multiple_of(dim) {
            return Err(Error::Shape(format!(
                "{} feature values do not form rows of width {dim}",
                features.len()
            )));
        }
        if let Some(i) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::Invariant(format!(
                "non-finite feature at flat index {i}"
            )));
        }
        let num_snippets = features.len() / dim;
        check_frame_span(num_snippets, frames_per_snippet, total_frames)?;
        Ok(Self {
            video_id: video_id.into(),
            features,
            num_snippets,
            dim,
            frames_per_snippet,
            total_frames,
        })
    }

    /// A sequence whose frames are its snippets (used after resampling).
    pub fn from_snippets(video_id: impl Into<String>, features: Vec<f32>, dim: usize) -> Result<Self> {
        let t = features.len().checked_div(dim).unwrap_or(0);
        Self::new(video_id, features, dim, 1, t.max(1))
    }

    pub fn video_id(&self) -> &str {
        &self.video_id
    }

    /// Number of snippets `T`.
    pub fn len(&self) -> usize {
        self.num_snippets
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn frames_per_snippet(&self) -> usize {
        self.frames_per_snippet
    }

    pub fn total_frames(&self) -> usize {
        self.total_frames
    }

    pub fn row(&self, t: usize) -> &[f32] {
        &self.features[t * self.dim..(t + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.features
    }
}

/// Single-frame annotations of one video, kept both in frames (as annotated)
/// and as deduplicated snippet indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GlanceSet {
    video_id: String,
    frames: Vec<usize>,
    snippets: Vec<usize>,
}

impl GlanceSet {
    /// `frames` must be strictly increasing and below `total_frames`.
    pub fn new(
        video_id: impl Into<String>,
        frames: Vec<usize>,
        frames_per_snippet: usize,
        total_frames: usize,
    ) -> Result<Self> {
        let video_id = video_id.into();
        if frames_per_snippet == 0 {
            return Err(Error::Invariant("frames_per_snippet must be positive".into()));
        }
        if let Some(w) = frames.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::Invariant(format!(
                "glance frames of {video_id} not strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        if let Some(&f) = frames.iter().find(|&&f| f >= total_frames) {
            return Err(Error::Validation(format!(
                "glance frame {f} of {video_id} is beyond the last frame ({total_frames} frames)"
            )));
        }
        let mut snippets: Vec<usize> = frames
            .iter()
            .map(|&f| frame_to_snippet(f, frames_per_snippet))
            .collect();
        let before = snippets.len();
        snippets.dedup();
        if snippets.len() != before {
            log::warn!(
                "{video_id}: {} glance(s) share a snippet and were merged",
                before - snippets.len()
            );
        }
        Ok(Self {
            video_id,
            frames,
            snippets,
        })
    }

    pub fn empty(video_id: impl Into<String>) -> Self {
        Self {
            video_id: video_id.into(),
            frames: Vec::new(),
            snippets: Vec::new(),
        }
    }

    pub fn video_id(&self) -> &str {
        &self.video_id
    }

    pub fn frames(&self) -> &[usize] {
        &self.frames
    }

    pub fn snippets(&self) -> &[usize] {
        &self.snippets
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Checks the non-empty iff abnormal rule.
    pub fn check_label(&self, label: VideoLabel) -> Result<()> {
        match (label, self.is_empty()) {
            (VideoLabel::Abnormal, true) => Err(Error::Validation(format!(
                "abnormal video {} has no glances",
                self.video_id
            ))),
            (VideoLabel::Normal, false) => Err(Error::Validation(format!(
                "normal video {} carries glances",
                self.video_id
            ))),
            _ => Ok(()),
        }
    }
}

/// Temporal anomaly kernel: centre snippet, severity and context radius
/// (radius in normalized time, video length = 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianKernel {
    pub mu: usize,
    pub severity: f64,
    pub radius: f64,
}

impl GaussianKernel {
    pub fn new(mu: usize, severity: f64, radius: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&severity) {
            return Err(Error::Invariant(format!("severity {severity} outside [0, 1]")));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::Invariant(format!("radius {radius} must be positive")));
        }
        Ok(Self {
            mu,
            severity,
            radius,
        })
    }
}

/// Per-snippet scores in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ScoreTrack(Vec<f64>);

impl ScoreTrack {
    pub fn new(scores: Vec<f64>) -> Result<Self> {
        if let Some((i, s)) = scores
            .iter()
            .enumerate()
            .find(|(_, s)| !(0.0..=1.0).contains(*s))
        {
            return Err(Error::Invariant(format!("score {s} at snippet {i} outside [0, 1]")));
        }
        Ok(Self(scores))
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for ScoreTrack {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        ScoreTrack::new(v)
    }
}

impl From<ScoreTrack> for Vec<f64> {
    fn from(t: ScoreTrack) -> Vec<f64> {
        t.0
    }
}

impl std::ops::Index<usize> for ScoreTrack {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Root seed. Independent streams are derived per purpose so that adding a
/// consumer does not shift the draws of the others.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RngSeed(pub u64);

impl RngSeed {
    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }

    /// Rng for a named purpose, e.g. `seed.stream(STREAM_INIT)`.
    pub fn stream(self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.0);
        rng.set_stream(stream);
        rng
    }

    pub fn derive(self, salt: u64) -> RngSeed {
        // splitmix64 finalizer
        let mut z = self.0 ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        RngSeed(z ^ (z >> 31))
    }
}
