//! Pairwise normal/abnormal training with per-iteration pseudo-label refresh.
//!
//! For every abnormal video in a batch the current scores drive kernel
//! mining, the mined kernels are splatted into a dense target, and that
//! target supervises the same forward pass. Normal videos only see the
//! video-level MIL loss.

mod adam;
mod resample;

pub use adam::{adam_step, AdamState, BETA1, BETA2, EPSILON};
pub use resample::{resample, Resampled};

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::{DatasetManifest, Split};
use crate::error::{Error, Result};
use crate::mining::{mine, MiningConfig};
use crate::scorer::{Checkpoint, LossBreakdown, LossTerms, ScorerConfig, ScorerModel, TopK};
use crate::splatting::{init_kernels, render, update_kernels, KernelFamily};
use crate::types::{FeatureSequence, GlanceSet, RngSeed, ScoreTrack, VideoLabel};

/// Which parts of the pseudo-label pipeline are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PseudoLabelConfig {
    /// Expand glances with kernel mining.
    pub mining: bool,
    /// Mine against `alpha * A[g]` rather than the fixed `alpha`.
    pub dynamic_threshold: bool,
    /// Splat kernels into soft targets instead of 0/1 indicators.
    pub gaussian: bool,
}

impl Default for PseudoLabelConfig {
    fn default() -> Self {
        Self {
            mining: true,
            dynamic_threshold: true,
            gaussian: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Snippets per resampled video.
    pub resample_len: usize,
    pub batch_pairs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub alpha: f64,
    pub r_g: f64,
    pub kernel_family: KernelFamily,
    pub seed: RngSeed,
    pub top_k: TopK,
    pub hidden1: usize,
    pub hidden2: usize,
    pub kernel_width: usize,
    pub pseudo_labels: PseudoLabelConfig,
    /// Ignore glances and train abnormal videos with the MIL loss only.
    pub weak_only: bool,
}

impl Default for TrainConfig {
    /// Desk-scale defaults sized for the synthetic benchmark.
    fn default() -> Self {
        Self {
            resample_len: 200,
            batch_pairs: 8,
            lr: 1e-3,
            weight_decay: 5e-4,
            epochs: 50,
            alpha: 0.9,
            r_g: 0.1,
            kernel_family: KernelFamily::Normal,
            seed: RngSeed(0),
            top_k: TopK::Auto,
            hidden1: 512,
            hidden2: 128,
            kernel_width: 1,
            pseudo_labels: PseudoLabelConfig::default(),
            weak_only: false,
        }
    }
}

impl TrainConfig {
    /// Full-scale optimizer settings (batch 64, learning rate 1e-4).
    pub fn paper_scale() -> Self {
        Self {
            batch_pairs: 64,
            lr: 1e-4,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.resample_len == 0 || self.batch_pairs == 0 || self.epochs == 0 {
            return Err(Error::Config(
                "resample_len, batch_pairs and epochs must be positive".into(),
            ));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) || !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config("lr and weight_decay must be finite and non-negative".into()));
        }
        if !(self.r_g > 0.0 && self.r_g.is_finite()) {
            return Err(Error::Config(format!("r_g must be positive, got {}", self.r_g)));
        }
        self.mining().validate()?;
        self.top_k.resolve(self.resample_len)?;
        Ok(())
    }

    pub fn mining(&self) -> MiningConfig {
        MiningConfig {
            alpha: self.alpha,
            dynamic: self.pseudo_labels.dynamic_threshold,
        }
    }

    pub fn scorer(&self, input_dim: usize) -> ScorerConfig {
        ScorerConfig {
            input_dim,
            hidden1: self.hidden1,
            hidden2: self.hidden2,
            kernel_width: self.kernel_width,
        }
    }
}

/// A training video. `glances == None` marks an abnormal video trained with
/// the video-level label only.
#[derive(Debug, Clone)]
pub struct TrainVideo {
    pub features: FeatureSequence,
    pub label: VideoLabel,
    pub glances: Option<GlanceSet>,
}

#[derive(Debug, Clone, Default)]
pub struct TrainSet {
    pub videos: Vec<TrainVideo>,
}

impl TrainSet {
    /// Training split of `manifest`, with glances wherever `glances` has a
    /// non-empty set for an abnormal video. Never reads ground truth.
    pub fn from_manifest(
        manifest: &DatasetManifest,
        base_dir: &Path,
        glances: &BTreeMap<String, GlanceSet>,
    ) -> Result<Self> {
        let mut videos = Vec::new();
        for entry in manifest.split(Split::Train) {
            let features = manifest.load_features(base_dir, entry)?;
            videos.push(TrainVideo {
                glances: glances
                    .get(&entry.video_id)
                    .filter(|g| entry.label.is_abnormal() && !g.is_empty())
                    .cloned(),
                features,
                label: entry.label,
            });
        }
        Ok(Self { videos })
    }

    pub fn input_dim(&self) -> Result<usize> {
        let d = self
            .videos
            .first()
            .map(|v| v.features.dim())
            .ok_or_else(|| Error::Config("empty training set".into()))?;
        if let Some(v) = self.videos.iter().find(|v| v.features.dim() != d) {
            return Err(Error::Shape(format!(
                "{} has dimension {}, expected {d}",
                v.features.video_id(),
                v.features.dim()
            )));
        }
        Ok(d)
    }

    fn indices(&self, label: VideoLabel) -> Vec<usize> {
        (0..self.videos.len()).filter(|&i| self.videos[i].label == label).collect()
    }
}

/// Per-epoch averages plus pseudo-label instrumentation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EpochStats {
    pub losses: LossBreakdown,
    pub pairs: usize,
    /// Mined snippets summed over all pseudo-labelled abnormal videos.
    pub mined: usize,
    /// Mined snippets that are not glance snippets.
    pub mined_beyond_glances: usize,
}

/// One line of the JSON-lines training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub l_mil: f64,
    pub l_abn: f64,
    pub l_nor: f64,
    pub l_total: f64,
    pub wall_ms: u64,
}

/// Pseudo-label target for one resampled abnormal video, plus the mined set.
pub fn pseudo_labels(
    scores: &ScoreTrack,
    glances: &GlanceSet,
    config: &TrainConfig,
) -> Result<(ScoreTrack, Vec<usize>)> {
    let len = scores.len();
    let init = init_kernels(glances, len, config.r_g, config.kernel_family)?;
    let (kernels, mined) = if config.pseudo_labels.mining {
        let mined = mine(scores, glances, &config.mining())?;
        (update_kernels(&init, &mined, glances), mined)
    } else {
        (init, Vec::new())
    };
    let target = if config.pseudo_labels.gaussian {
        render(&kernels)?
    } else {
        kernels.indicator()
    };
    Ok((target, mined))
}

pub struct Trainer {
    config: TrainConfig,
    model: ScorerModel,
    adam: AdamState,
    rng: ChaCha8Rng,
    epoch: usize,
}

impl Trainer {
    pub fn new(config: TrainConfig, input_dim: usize) -> Result<Self> {
        config.validate()?;
        let model = ScorerModel::init(config.scorer(input_dim), config.seed)?;
        Ok(Self::with_model(config, model))
    }

    /// Starts from an existing model.
    pub fn with_model(config: TrainConfig, model: ScorerModel) -> Self {
        let adam = AdamState::new(model.num_params());
        let rng = config.seed.stream(crate::STREAM_TRAIN);
        Self {
            config,
            model,
            adam,
            rng,
            epoch: 0,
        }
    }

    pub fn model(&self) -> &ScorerModel {
        &self.model
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn into_model(self) -> ScorerModel {
        self.model
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let config = serde_json::to_value(&self.config).expect("config serializes");
        Checkpoint::new(self.model.clone(), self.config.seed, config)
    }

    /// Normal/abnormal index pairs for one epoch: both lists are shuffled,
    /// and the shorter one is reshuffled and repeated to match the longer.
    fn pairs(&mut self, data: &TrainSet) -> Result<Vec<(usize, usize)>> {
        let normals = data.indices(VideoLabel::Normal);
        let abnormals = data.indices(VideoLabel::Abnormal);
        if normals.is_empty() || abnormals.is_empty() {
            return Err(Error::Config(format!(
                "training needs both classes ({} normal, {} abnormal videos)",
                normals.len(),
                abnormals.len()
            )));
        }
        let n = normals.len().max(abnormals.len());
        let cycle = |pool: &[usize], rng: &mut ChaCha8Rng| {
            let mut out = Vec::with_capacity(n);
            while out.len() < n {
                let mut p = pool.to_vec();
                p.shuffle(rng);
                out.extend(p);
            }
            out.truncate(n);
            out
        };
        let a = cycle(&abnormals, &mut self.rng);
        let b = cycle(&normals, &mut self.rng);
        Ok(a.into_iter().zip(b).collect())
    }

    pub fn train_epoch(&mut self, data: &TrainSet) -> Result<EpochStats> {
        let pairs = self.pairs(data)?;
        let cfg = self.config.clone();
        let mut stats = EpochStats::default();
        let mut grad = vec![0.0; self.model.num_params()];

        for batch in pairs.chunks(cfg.batch_pairs) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / batch.len() as f64;
            for &(ai, ni) in batch {
                let abnormal = &data.videos[ai];
                let normal = &data.videos[ni];
                let empty = GlanceSet::empty(abnormal.features.video_id());
                let glances = match (&abnormal.glances, cfg.weak_only) {
                    (Some(g), false) => Some(g),
                    _ => None,
                };
                let ra = resample(&abnormal.features, glances.unwrap_or(&empty), cfg.resample_len, &mut self.rng)?;
                let rn = resample(
                    &normal.features,
                    &GlanceSet::empty(normal.features.video_id()),
                    cfg.resample_len,
                    &mut self.rng,
                )?;

                let target = match glances {
                    Some(_) => {
                        let scores = self.model.forward(&ra.features)?;
                        let (target, mined) = pseudo_labels(&scores, &ra.glances, &cfg)?;
                        stats.mined += mined.len();
                        stats.mined_beyond_glances +=
                            mined.iter().filter(|t| !ra.glances.snippets().contains(t)).count();
                        Some(target)
                    }
                    None => None,
                };

                let la = self.model.backward_into(
                    &ra.features,
                    VideoLabel::Abnormal,
                    target.as_ref(),
                    cfg.top_k,
                    LossTerms::ALL,
                    scale,
                    &mut grad,
                )?;
                let ln = self.model.backward_into(
                    &rn.features,
                    VideoLabel::Normal,
                    None,
                    cfg.top_k,
                    LossTerms::ALL,
                    scale,
                    &mut grad,
                )?;
                stats.losses.add(&la);
                stats.losses.add(&ln);
                stats.pairs += 1;
            }
            adam_step(self.model.params_mut(), &grad, &mut self.adam, cfg.lr, cfg.weight_decay)?;
        }
        stats.losses = stats.losses.scaled(1.0 / stats.pairs as f64);
        self.epoch += 1;
        Ok(stats)
    }

    /// Runs `config.epochs` epochs, reporting each one to `on_epoch`.
    pub fn fit(&mut self, data: &TrainSet, mut on_epoch: impl FnMut(&EpochRecord, &EpochStats)) -> Result<Vec<EpochStats>> {
        let mut history = Vec::with_capacity(self.config.epochs);
        for _ in 0..self.config.epochs {
            let start = Instant::now();
            let stats = self.train_epoch(data)?;
            let l = stats.losses;
            let record = EpochRecord {
                epoch: self.epoch,
                l_mil: l.l_mil,
                l_abn: l.l_abn,
                l_nor: l.l_nor,
                l_total: l.l_total,
                wall_ms: start.elapsed().as_millis() as u64,
            };
            log::debug!("epoch {} total {:.4}", record.epoch, record.l_total);
            on_epoch(&record, &stats);
            history.push(stats);
        }
        Ok(history)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn video(id: &str, label: VideoLabel, len: usize) -> TrainVideo {
        let data = (0..len * 2).map(|i| (i % 7) as f32 / 7.0).collect();
        TrainVideo {
            features: FeatureSequence::from_snippets(id, data, 2).unwrap(),
            label,
            glances: None,
        }
    }

    fn small_config() -> TrainConfig {
        TrainConfig {
            resample_len: 8,
            hidden1: 4,
            hidden2: 3,
            batch_pairs: 2,
            epochs: 2,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn pairs_always_match_abnormal_with_normal() {
        let mut videos: Vec<TrainVideo> = (0..5).map(|i| video(&format!("n{i}"), VideoLabel::Normal, 10)).collect();
        videos.extend((0..2).map(|i| video(&format!("a{i}"), VideoLabel::Abnormal, 10)));
        let data = TrainSet { videos };
        let mut trainer = Trainer::new(small_config(), 2).unwrap();
        for _ in 0..5 {
            let pairs = trainer.pairs(&data).unwrap();
            assert_eq!(pairs.len(), 5);
            for (a, n) in &pairs {
                assert_eq!(data.videos[*a].label, VideoLabel::Abnormal);
                assert_eq!(data.videos[*n].label, VideoLabel::Normal);
            }
            let mut normals: Vec<usize> = pairs.iter().map(|p| p.1).collect();
            normals.sort_unstable();
            assert_eq!(normals, vec![0, 1, 2, 3, 4]);
        }
    }

    #[test]
    fn one_class_is_rejected() {
        let data = TrainSet {
            videos: vec![video("n", VideoLabel::Normal, 10)],
        };
        let mut trainer = Trainer::new(small_config(), 2).unwrap();
        assert!(matches!(trainer.train_epoch(&data), Err(Error::Config(_))));
    }

    #[test]
    fn pseudo_label_variants() {
        let scores = ScoreTrack::new(vec![0.2, 0.5, 0.95, 0.90, 0.85, 0.3]).unwrap();
        let g = GlanceSet::new("v", vec![2], 1, 6).unwrap();
        let mut cfg = TrainConfig::default();

        let (full, mined) = pseudo_labels(&scores, &g, &cfg).unwrap();
        assert_eq!(mined, vec![2, 3]);
        assert_eq!(full[2], 1.0);
        assert!(full[0] > 0.0 && full[0] < 1.0);

        cfg.pseudo_labels.gaussian = false;
        let (binary, _) = pseudo_labels(&scores, &g, &cfg).unwrap();
        assert_eq!(binary.as_slice(), &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0]);

        cfg.pseudo_labels.mining = false;
        let (glance_only, mined) = pseudo_labels(&scores, &g, &cfg).unwrap();
        assert!(mined.is_empty());
        assert_eq!(glance_only.as_slice(), &[0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);

        cfg.pseudo_labels = PseudoLabelConfig {
            mining: true,
            dynamic_threshold: false,
            gaussian: false,
        };
        cfg.alpha = 0.88;
        let (_, mined) = pseudo_labels(&scores, &g, &cfg).unwrap();
        assert_eq!(mined, vec![2, 3]);
    }
}
