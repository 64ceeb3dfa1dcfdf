//! Synthetic ablation harness: generate a dataset per seed, simulate glance
//! annotation, train one configuration and evaluate it on the test split.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataio::{generate_synthetic, perturb_glances, sample_glances, split_supervision, Split, SynthConfig};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, EvalReport, LabeledVideo};
use crate::splatting::KernelFamily;
use crate::trainer::{PseudoLabelConfig, TrainConfig, TrainSet, TrainVideo, Trainer};
use crate::types::{GlanceSet, RngSeed, VideoLabel};

/// One configuration to train and evaluate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub train: TrainConfig,
    /// Maximum glance displacement, in snippets.
    pub glance_jitter: usize,
    /// Fractions of abnormal training videos supervised by video labels only
    /// and by glances; the rest are left out of training.
    pub weak_fraction: f64,
    pub glance_fraction: f64,
}

impl RunSpec {
    pub fn new(train: TrainConfig) -> Self {
        Self {
            train,
            glance_jitter: 0,
            weak_fraction: 0.0,
            glance_fraction: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub synth: SynthConfig,
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            synth: SynthConfig::default(),
            train: bench_train_config(),
            seeds: vec![0, 1, 2],
        }
    }
}

/// Training settings used by the synthetic studies: a narrower encoder and a
/// short schedule so that a full study fits on one core in minutes.
pub fn bench_train_config() -> TrainConfig {
    TrainConfig {
        hidden1: 64,
        hidden2: 32,
        kernel_width: 3,
        epochs: 30,
        ..TrainConfig::default()
    }
}

/// Trains `spec` on the synthetic dataset of `seed` and evaluates it.
pub fn run(synth: &SynthConfig, spec: &RunSpec, seed: u64) -> Result<EvalReport> {
    let synth = SynthConfig {
        seed: RngSeed(seed),
        ..synth.clone()
    };
    let ds = generate_synthetic(&synth)?;
    let annotations = sample_glances(&ds.manifest, RngSeed(seed))?.validate(&ds.manifest)?;

    let abnormal_ids: Vec<String> = ds
        .manifest
        .split(Split::Train)
        .filter(|e| e.label.is_abnormal())
        .map(|e| e.video_id.clone())
        .collect();
    let (weak, glance) = split_supervision(&abnormal_ids, spec.weak_fraction, spec.glance_fraction, RngSeed(seed))?;

    let mut train = TrainSet::default();
    let mut test = Vec::new();
    for (i, (entry, features)) in ds.manifest.videos.iter().zip(&ds.features).enumerate() {
        match entry.split {
            Split::Test => test.push((features, entry.label, entry.frame_labels())),
            Split::Train if !entry.label.is_abnormal() => train.videos.push(TrainVideo {
                features: features.clone(),
                label: VideoLabel::Normal,
                glances: None,
            }),
            Split::Train => {
                let glances = if glance.contains(&entry.video_id) {
                    let g = annotations
                        .get(&entry.video_id)
                        .cloned()
                        .unwrap_or_else(|| GlanceSet::empty(&entry.video_id));
                    Some(perturb_glances(
                        &g,
                        spec.glance_jitter * entry.frames_per_snippet,
                        entry.frames_per_snippet,
                        entry.total_frames,
                        RngSeed(seed).derive(i as u64),
                    )?)
                } else if weak.contains(&entry.video_id) {
                    None
                } else {
                    continue;
                };
                train.videos.push(TrainVideo {
                    features: features.clone(),
                    label: VideoLabel::Abnormal,
                    glances,
                });
            }
        }
    }

    let train_cfg = TrainConfig {
        seed: RngSeed(seed),
        ..spec.train.clone()
    };
    let mut trainer = Trainer::new(train_cfg, train.input_dim()?)?;
    trainer.fit(&train, |_, _| {})?;

    let labeled: Vec<LabeledVideo<'_>> = test
        .iter()
        .map(|(f, y, l)| LabeledVideo {
            features: f,
            label: *y,
            frame_labels: l,
        })
        .collect();
    evaluate(trainer.model(), &labeled)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Study {
    Components,
    Alpha,
    Rg,
    Perturb,
    Ratio,
    Family,
}

impl std::str::FromStr for Study {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "components" => Study::Components,
            "alpha" => Study::Alpha,
            "rg" | "r_g" => Study::Rg,
            "perturb" => Study::Perturb,
            "ratio" => Study::Ratio,
            "family" => Study::Family,
            other => return Err(Error::Config(format!("unknown study `{other}`"))),
        })
    }
}

/// Named run specifications making up a study, in display order.
pub fn study_settings(study: Study, base: &TrainConfig) -> Vec<(String, RunSpec)> {
    let with = |f: &dyn Fn(&mut TrainConfig)| {
        let mut t = base.clone();
        f(&mut t);
        RunSpec::new(t)
    };
    let labels = |mining, dynamic_threshold, gaussian| PseudoLabelConfig {
        mining,
        dynamic_threshold,
        gaussian,
    };
    match study {
        Study::Components => vec![
            ("baseline".into(), with(&|t| t.weak_only = true)),
            ("mining".into(), with(&|t| t.pseudo_labels = labels(true, false, false))),
            ("gaussian".into(), with(&|t| t.pseudo_labels = labels(false, false, true))),
            ("mining+dynamic".into(), with(&|t| t.pseudo_labels = labels(true, true, false))),
            ("mining+gaussian".into(), with(&|t| t.pseudo_labels = labels(true, false, true))),
            ("full".into(), with(&|t| t.pseudo_labels = labels(true, true, true))),
        ],
        Study::Alpha => [0.5, 0.7, 0.8, 0.9, 0.95, 1.0]
            .into_iter()
            .map(|a| (format!("alpha={a}"), with(&|t| t.alpha = a)))
            .collect(),
        Study::Rg => [0.025, 0.05, 0.1, 0.2, 0.4]
            .into_iter()
            .map(|r| (format!("r_g={r}"), with(&|t| t.r_g = r)))
            .collect(),
        Study::Perturb => [0usize, 5, 25]
            .into_iter()
            .map(|j| {
                let mut spec = RunSpec::new(base.clone());
                spec.glance_jitter = j;
                (format!("jitter={j}"), spec)
            })
            .collect(),
        Study::Ratio => {
            let rows: [(&str, f64, f64); 11] = [
                ("weak 100%", 1.0, 0.0),
                ("weak 25%", 0.25, 0.0),
                ("weak 50%", 0.5, 0.0),
                ("weak 75%", 0.75, 0.0),
                ("glance 25%", 0.0, 0.25),
                ("glance 50%", 0.0, 0.5),
                ("glance 75%", 0.0, 0.75),
                ("glance 100%", 0.0, 1.0),
                ("mixed 75/25", 0.75, 0.25),
                ("mixed 50/50", 0.5, 0.5),
                ("mixed 25/75", 0.25, 0.75),
            ];
            rows.into_iter()
                .map(|(name, w, g)| {
                    let mut spec = RunSpec::new(base.clone());
                    spec.weak_fraction = w;
                    spec.glance_fraction = g;
                    (name.to_string(), spec)
                })
                .collect()
        }
        Study::Family => KernelFamily::ALL
            .into_iter()
            .map(|f| (f.to_string(), with(&|t| t.kernel_family = f)))
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricSummary {
    pub auc: f64,
    pub ap: f64,
    pub auc_abnormal: f64,
    pub ap_abnormal: f64,
}

impl MetricSummary {
    fn of(r: &EvalReport) -> Self {
        Self {
            auc: r.auc,
            ap: r.ap,
            auc_abnormal: r.auc_abnormal,
            ap_abnormal: r.ap_abnormal,
        }
    }

    fn zip(a: Self, b: Self, f: impl Fn(f64, f64) -> f64) -> Self {
        Self {
            auc: f(a.auc, b.auc),
            ap: f(a.ap, b.ap),
            auc_abnormal: f(a.auc_abnormal, b.auc_abnormal),
            ap_abnormal: f(a.ap_abnormal, b.ap_abnormal),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingResult {
    pub setting: String,
    pub seeds: Vec<u64>,
    pub runs: Vec<MetricSummary>,
    pub mean: MetricSummary,
    /// Sample standard deviation (zero for a single seed).
    pub sd: MetricSummary,
}

impl SettingResult {
    pub fn from_runs(setting: String, seeds: Vec<u64>, runs: Vec<MetricSummary>) -> Self {
        let n = runs.len() as f64;
        let sum = runs
            .iter()
            .fold(MetricSummary::default(), |acc, r| MetricSummary::zip(acc, *r, |x, y| x + y));
        let mean = MetricSummary::zip(sum, sum, |x, _| x / n);
        let sq = runs.iter().fold(MetricSummary::default(), |acc, r| {
            MetricSummary::zip(acc, MetricSummary::zip(*r, mean, |x, m| (x - m) * (x - m)), |x, y| x + y)
        });
        let sd = if runs.len() > 1 {
            MetricSummary::zip(sq, sq, |x, _| (x / (n - 1.0)).sqrt())
        } else {
            MetricSummary::default()
        };
        Self {
            setting,
            seeds,
            runs,
            mean,
            sd,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub study: Study,
    pub settings: Vec<SettingResult>,
}

impl StudyResult {
    pub fn get(&self, setting: &str) -> Option<&SettingResult> {
        self.settings.iter().find(|s| s.setting == setting)
    }

    /// One row per setting and seed.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("study,setting,seed,auc,ap,auc_abnormal,ap_abnormal\n");
        let study = serde_json::to_value(self.study).unwrap();
        for s in &self.settings {
            for (seed, r) in s.seeds.iter().zip(&s.runs) {
                out.push_str(&format!(
                    "{},{},{seed},{:.6},{:.6},{:.6},{:.6}\n",
                    study.as_str().unwrap(),
                    s.setting,
                    r.auc,
                    r.ap,
                    r.auc_abnormal,
                    r.ap_abnormal
                ));
            }
        }
        out
    }

    /// Human-readable mean ± sd table, metrics in percent.
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:<18} {:>14} {:>14} {:>14} {:>14}\n",
            "setting", "AUC", "AP", "AUC_A", "AP_A"
        );
        for s in &self.settings {
            let cell = |m: f64, sd: f64| format!("{:.2}±{:.2}", 100.0 * m, 100.0 * sd);
            out.push_str(&format!(
                "{:<18} {:>14} {:>14} {:>14} {:>14}\n",
                s.setting,
                cell(s.mean.auc, s.sd.auc),
                cell(s.mean.ap, s.sd.ap),
                cell(s.mean.auc_abnormal, s.sd.auc_abnormal),
                cell(s.mean.ap_abnormal, s.sd.ap_abnormal)
            ));
        }
        out
    }
}

/// Runs every setting of `study` across the configured seeds.
pub fn run_study(study: Study, config: &BenchConfig) -> Result<StudyResult> {
    run_settings(study, study_settings(study, &config.train), config)
}

pub fn run_settings(study: Study, settings: Vec<(String, RunSpec)>, config: &BenchConfig) -> Result<StudyResult> {
    let mut out = Vec::with_capacity(settings.len());
    for (name, spec) in settings {
        let mut runs = Vec::with_capacity(config.seeds.len());
        for &seed in &config.seeds {
            let report = run(&config.synth, &spec, seed)?;
            log::info!("{name} seed {seed}: AUC {:.4} AP {:.4}", report.auc, report.ap);
            runs.push(MetricSummary::of(&report));
        }
        out.push(SettingResult::from_runs(name, config.seeds.clone(), runs));
    }
    Ok(StudyResult { study, settings: out })
}

/// Summaries keyed by setting, for callers that only need means.
pub fn means(result: &StudyResult) -> BTreeMap<String, MetricSummary> {
    result
        .settings
        .iter()
        .map(|s| (s.setting.clone(), s.mean))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_statistics() {
        let r = |v: f64| MetricSummary {
            auc: v,
            ap: v,
            auc_abnormal: v,
            ap_abnormal: v,
        };
        let s = SettingResult::from_runs("x".into(), vec![0, 1, 2], vec![r(0.2), r(0.4), r(0.6)]);
        assert!((s.mean.ap - 0.4).abs() < 1e-12);
        assert!((s.sd.ap - 0.2).abs() < 1e-12);
        let one = SettingResult::from_runs("y".into(), vec![0], vec![r(0.5)]);
        assert_eq!(one.sd.auc, 0.0);
    }

    #[test]
    fn study_shapes() {
        let base = bench_train_config();
        assert_eq!(study_settings(Study::Components, &base).len(), 6);
        assert_eq!(study_settings(Study::Family, &base).len(), 3);
        assert_eq!(study_settings(Study::Ratio, &base).len(), 11);
        let p = study_settings(Study::Perturb, &base);
        assert_eq!(p.iter().map(|(_, s)| s.glance_jitter).collect::<Vec<_>>(), vec![0, 5, 25]);
        assert!("bogus".parse::<Study>().is_err());
    }

    #[test]
    fn csv_has_one_row_per_run() {
        let r = MetricSummary::default();
        let res = StudyResult {
            study: Study::Alpha,
            settings: vec![SettingResult::from_runs("alpha=0.9".into(), vec![0, 1], vec![r, r])],
        };
        let csv = res.to_csv();
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.lines().nth(1).unwrap().starts_with("alpha,alpha=0.9,0,"));
        assert!(res.to_table().contains("alpha=0.9"));
    }
}
