//! Synthetic stand-in for pre-extracted snippet features.
//!
//! Every snippet is isotropic noise plus a per-video scene offset plus a
//! slowly drifting AR(1) term. Abnormal videos additionally carry a
//! video-wide context offset along a fixed direction, and their anomalous
//! snippets a trapezoidal mean shift along a second direction. The context
//! offset makes "this looks like an abnormal video" separable from "this
//! snippet is anomalous", which is what video-level labels cannot tell apart.

use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{store_features, DatasetManifest, FrameInterval, Split, VideoEntry};
use crate::error::{Error, Result};
use crate::types::{FeatureSequence, RngSeed, VideoLabel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub num_normal: usize,
    pub num_abnormal: usize,
    pub test_normal: usize,
    pub test_abnormal: usize,
    /// Inclusive snippet-count range.
    pub min_snippets: usize,
    pub max_snippets: usize,
    pub dim: usize,
    pub frames_per_snippet: usize,
    pub fps: f64,
    /// Inclusive range of anomalous events per abnormal video.
    pub min_events: usize,
    pub max_events: usize,
    /// Inclusive event length range, in snippets.
    pub min_event_len: usize,
    pub max_event_len: usize,
    /// Snippets over which an event's shift ramps up and down.
    pub ramp: usize,
    /// Mean-shift magnitude of anomalous snippets.
    pub shift: f64,
    /// Per-video relative spread of the anomaly shift.
    pub shift_spread: f64,
    /// Context offset of abnormal videos, as a multiple of `shift`.
    pub context_ratio: f64,
    /// Per-video relative spread of the context offset.
    pub context_spread: f64,
    pub scene_sd: f64,
    pub drift_sd: f64,
    /// Lag-one autocorrelation of the drift term.
    pub drift_corr: f64,
    pub noise_sd: f64,
    pub seed: RngSeed,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_normal: 30,
            num_abnormal: 30,
            test_normal: 20,
            test_abnormal: 20,
            min_snippets: 192,
            max_snippets: 320,
            dim: 16,
            frames_per_snippet: 16,
            fps: 30.0,
            min_events: 1,
            max_events: 3,
            min_event_len: 16,
            max_event_len: 56,
            ramp: 4,
            shift: 1.5,
            shift_spread: 0.5,
            context_ratio: 1.0,
            context_spread: 0.8,
            scene_sd: 0.5,
            drift_sd: 0.5,
            drift_corr: 0.95,
            noise_sd: 0.5,
            seed: RngSeed(0),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let range = |lo: usize, hi: usize, what: &str| {
            if lo > hi {
                Err(Error::Config(format!("{what}: min {lo} exceeds max {hi}")))
            } else {
                Ok(())
            }
        };
        range(self.min_snippets, self.max_snippets, "snippets")?;
        range(self.min_events, self.max_events, "events")?;
        range(self.min_event_len, self.max_event_len, "event length")?;
        if self.min_snippets == 0 || self.dim < 2 || self.frames_per_snippet == 0 {
            return Err(Error::Config(
                "snippet count, frames per snippet must be positive and dim at least 2".into(),
            ));
        }
        if self.min_events == 0 || self.min_event_len == 0 {
            return Err(Error::Config("abnormal videos need at least one non-empty event".into()));
        }
        for (name, v) in [
            ("shift", self.shift),
            ("shift_spread", self.shift_spread),
            ("context_ratio", self.context_ratio),
            ("context_spread", self.context_spread),
            ("scene_sd", self.scene_sd),
            ("drift_sd", self.drift_sd),
            ("noise_sd", self.noise_sd),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be a finite non-negative number")));
            }
        }
        if !(0.0..1.0).contains(&self.drift_corr) || self.shift_spread > 1.0 || self.context_spread > 1.0 {
            return Err(Error::Config("drift_corr must lie in [0, 1) and spreads in [0, 1]".into()));
        }
        if self.fps.is_nan() || self.fps <= 0.0 {
            return Err(Error::Config("fps must be positive".into()));
        }
        Ok(())
    }
}

/// Generated manifest plus the feature matrices, aligned with
/// `manifest.videos`.
#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub manifest: DatasetManifest,
    pub features: Vec<FeatureSequence>,
}

impl SyntheticDataset {
    /// Writes `manifest.json` and `features/<id>.gvf` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        for (entry, f) in self.manifest.videos.iter().zip(&self.features) {
            store_features(&dir.join(&entry.feature_path), f.len(), f.dim(), f.as_slice())?;
        }
        self.manifest.store(&dir.join("manifest.json"))
    }

    pub fn features_of(&self, video_id: &str) -> Option<&FeatureSequence> {
        self.manifest
            .videos
            .iter()
            .position(|v| v.video_id == video_id)
            .map(|i| &self.features[i])
    }
}

fn unit_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= n);
    v
}

/// Unit directions for the anomaly shift and the abnormal-video context,
/// orthogonal to each other.
fn directions(seed: RngSeed, dim: usize) -> (Vec<f64>, Vec<f64>) {
    let mut rng = seed.stream(crate::STREAM_SYNTH_DIRS);
    let anomaly = unit_vector(&mut rng, dim);
    let mut context = unit_vector(&mut rng, dim);
    let proj: f64 = context.iter().zip(&anomaly).map(|(c, a)| c * a).sum();
    context.iter_mut().zip(&anomaly).for_each(|(c, a)| *c -= proj * a);
    let n = context.iter().map(|x| x * x).sum::<f64>().sqrt();
    context.iter_mut().for_each(|x| *x /= n);
    (anomaly, context)
}

/// Non-overlapping snippet intervals `[start, end)` with at least one free
/// snippet between events.
fn place_events(rng: &mut ChaCha8Rng, len: usize, cfg: &SynthConfig, video_id: &str) -> Result<Vec<(usize, usize)>> {
    let count = rng.random_range(cfg.min_events..=cfg.max_events);
    for _ in 0..64 {
        let lens: Vec<usize> = (0..count)
            .map(|_| rng.random_range(cfg.min_event_len..=cfg.max_event_len))
            .collect();
        let needed = lens.iter().sum::<usize>() + count - 1;
        if needed > len {
            continue;
        }
        let free = len - needed;
        let mut cuts: Vec<usize> = (0..count).map(|_| rng.random_range(0..=free)).collect();
        cuts.sort_unstable();
        let mut out = Vec::with_capacity(count);
        let mut cursor = 0;
        let mut used = 0;
        for (k, (&l, &cut)) in lens.iter().zip(&cuts).enumerate() {
            cursor += cut - used + usize::from(k > 0);
            used = cut;
            out.push((cursor, cursor + l));
            cursor += l;
        }
        return Ok(out);
    }
    Err(Error::Generation(format!(
        "{video_id}: cannot fit {count} events of {}..={} snippets into {len} snippets",
        cfg.min_event_len, cfg.max_event_len
    )))
}

/// Trapezoidal event profile: ramps over `ramp` snippets at both edges.
fn profile(t: usize, start: usize, end: usize, ramp: usize) -> f64 {
    let r = (ramp + 1) as f64;
    let up = (t - start + 1) as f64 / r;
    let down = (end - t) as f64 / r;
    up.min(down).min(1.0)
}

struct VideoSpec<'a> {
    id: String,
    label: VideoLabel,
    split: Split,
    dirs: &'a (Vec<f64>, Vec<f64>),
}

fn generate_video(cfg: &SynthConfig, spec: VideoSpec<'_>, seed: RngSeed) -> Result<(VideoEntry, FeatureSequence)> {
    let mut rng = seed.stream(crate::STREAM_SYNTH_VIDEO);
    let d = cfg.dim;
    let fps = cfg.frames_per_snippet;
    let len = rng.random_range(cfg.min_snippets..=cfg.max_snippets);
    let total_frames = (len - 1) * fps + rng.random_range(1..=fps);
    let (anomaly_dir, context_dir) = spec.dirs;

    let scene: Vec<f64> = (0..d).map(|_| cfg.scene_sd * rng.sample::<f64, _>(StandardNormal)).collect();
    let events = if spec.label.is_abnormal() {
        place_events(&mut rng, len, cfg, &spec.id)?
    } else {
        Vec::new()
    };
    let spread = |rng: &mut ChaCha8Rng, s: f64| if s > 0.0 { rng.random_range(1.0 - s..=1.0 + s) } else { 1.0 };
    let (amp, ctx) = if spec.label.is_abnormal() {
        (
            cfg.shift * spread(&mut rng, cfg.shift_spread),
            cfg.context_ratio * cfg.shift * spread(&mut rng, cfg.context_spread),
        )
    } else {
        (0.0, 0.0)
    };

    let innov = cfg.drift_sd * (1.0 - cfg.drift_corr * cfg.drift_corr).sqrt();
    let mut drift: Vec<f64> = (0..d).map(|_| cfg.drift_sd * rng.sample::<f64, _>(StandardNormal)).collect();
    let mut data = Vec::with_capacity(len * d);
    for t in 0..len {
        if t > 0 {
            for x in &mut drift {
                *x = cfg.drift_corr * *x + innov * rng.sample::<f64, _>(StandardNormal);
            }
        }
        let event = events
            .iter()
            .find(|&&(s, e)| t >= s && t < e)
            .map_or(0.0, |&(s, e)| profile(t, s, e, cfg.ramp));
        for j in 0..d {
            let noise: f64 = cfg.noise_sd * rng.sample::<f64, _>(StandardNormal);
            let v = noise + scene[j] + drift[j] + ctx * context_dir[j] + amp * event * anomaly_dir[j];
            data.push(v as f32);
        }
    }

    let intervals = events
        .iter()
        .map(|&(s, e)| FrameInterval {
            start: s * fps,
            end: (e * fps).min(total_frames),
        })
        .collect();
    let mut entry = VideoEntry::new(
        &spec.id,
        format!("features/{}.gvf", spec.id),
        spec.label,
        total_frames,
        fps,
        spec.split,
    )
    .with_ground_truth(intervals);
    entry.fps = cfg.fps;
    let features = FeatureSequence::new(&spec.id, data, d, fps, total_frames)?;
    Ok((entry, features))
}

pub fn generate_synthetic(cfg: &SynthConfig) -> Result<SyntheticDataset> {
    cfg.validate()?;
    let dirs = directions(cfg.seed, cfg.dim);
    let groups = [
        (Split::Train, VideoLabel::Normal, cfg.num_normal),
        (Split::Train, VideoLabel::Abnormal, cfg.num_abnormal),
        (Split::Test, VideoLabel::Normal, cfg.test_normal),
        (Split::Test, VideoLabel::Abnormal, cfg.test_abnormal),
    ];
    let mut entries = Vec::new();
    let mut features = Vec::new();
    let mut index = 0u64;
    for (split, label, count) in groups {
        for i in 0..count {
            let id = format!(
                "{}_{}_{i:03}",
                match split {
                    Split::Train => "train",
                    Split::Test => "test",
                },
                if label.is_abnormal() { "abnormal" } else { "normal" },
            );
            let spec = VideoSpec {
                id,
                label,
                split,
                dirs: &dirs,
            };
            let (e, f) = generate_video(cfg, spec, cfg.seed.derive(index))?;
            entries.push(e);
            features.push(f);
            index += 1;
        }
    }
    Ok(SyntheticDataset {
        manifest: DatasetManifest::new(entries)?,
        features,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> SynthConfig {
        SynthConfig {
            num_normal: 3,
            num_abnormal: 3,
            test_normal: 2,
            test_abnormal: 2,
            min_snippets: 40,
            max_snippets: 60,
            min_event_len: 4,
            max_event_len: 10,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn no_abnormal_videos() {
        let cfg = SynthConfig {
            num_abnormal: 0,
            test_abnormal: 0,
            ..tiny()
        };
        let ds = generate_synthetic(&cfg).unwrap();
        assert!(ds.manifest.videos.iter().all(|v| !v.label.is_abnormal() && !v.has_ground_truth()));
    }

    #[test]
    fn abnormal_videos_have_valid_events() {
        let ds = generate_synthetic(&tiny()).unwrap();
        for (e, f) in ds.manifest.videos.iter().zip(&ds.features) {
            assert_eq!(e.num_snippets(), f.len());
            assert_eq!(e.label.is_abnormal(), e.has_ground_truth());
            for iv in e.ground_truth() {
                assert!(iv.start < iv.end && iv.end <= e.total_frames);
                assert_eq!(iv.start % 16, 0);
            }
        }
    }

    #[test]
    fn deterministic_bytes() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        generate_synthetic(&tiny()).unwrap().write(a.path()).unwrap();
        generate_synthetic(&tiny()).unwrap().write(b.path()).unwrap();
        let ma = std::fs::read(a.path().join("manifest.json")).unwrap();
        assert_eq!(ma, std::fs::read(b.path().join("manifest.json")).unwrap());
        let fa = std::fs::read(a.path().join("features/train_abnormal_001.gvf")).unwrap();
        assert_eq!(fa, std::fs::read(b.path().join("features/train_abnormal_001.gvf")).unwrap());

        let other = SynthConfig {
            seed: RngSeed(1),
            ..tiny()
        };
        let c = generate_synthetic(&other).unwrap();
        assert_ne!(c.features[0], generate_synthetic(&tiny()).unwrap().features[0]);
    }

    #[test]
    fn infeasible_packing_is_an_error() {
        let cfg = SynthConfig {
            min_snippets: 10,
            max_snippets: 10,
            min_events: 3,
            max_events: 3,
            min_event_len: 5,
            max_event_len: 5,
            ..tiny()
        };
        assert!(matches!(generate_synthetic(&cfg), Err(Error::Generation(_))));
    }

    #[test]
    fn events_are_separated() {
        let mut rng = RngSeed(2).rng();
        let cfg = SynthConfig {
            min_events: 3,
            max_events: 3,
            min_event_len: 3,
            max_event_len: 3,
            ..tiny()
        };
        for _ in 0..200 {
            let ev = place_events(&mut rng, 11, &cfg, "v").unwrap();
            assert_eq!(ev.len(), 3);
            assert!(ev.windows(2).all(|w| w[0].1 < w[1].0));
            assert!(ev.last().unwrap().1 <= 11);
        }
    }

    #[test]
    fn trapezoid_profile() {
        assert_eq!(profile(10, 10, 30, 4), 0.2);
        assert_eq!(profile(20, 10, 30, 4), 1.0);
        assert_eq!(profile(29, 10, 30, 4), 0.2);
        assert_eq!(profile(5, 5, 6, 0), 1.0);
    }
}
