//! Independent reference implementations and random instance generators
//! shared by the integration and acceptance tests.

#![allow(dead_code)]

use std::collections::BTreeSet;

use glancevad::scorer::{LossTerms, ScorerConfig, ScorerModel, TopK};
use glancevad::splatting::KernelFamily;
use glancevad::types::{FeatureSequence, GaussianKernel, GlanceSet, RngSeed, ScoreTrack, VideoLabel};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Line-by-line transcription of the mining algorithm with explicit
/// sentinels: the walk from glance `g_i` visits `g_i, g_i - 1, ...` down to
/// but excluding `g_{i-1}` (or index 0 inclusive for the first glance), then
/// `g_i, g_i + 1, ...` up to but excluding `g_{i+1}` (or `T - 1` inclusive).
pub fn mine_literal(a: &[f64], g: &[usize], alpha: f64, dynamic: bool) -> BTreeSet<usize> {
    let t_len = a.len() as i64;
    let mut out = BTreeSet::new();
    for i in 0..g.len() {
        let gi = g[i] as i64;
        let thr = if dynamic { alpha * a[g[i]] } else { alpha };
        let lo = if i == 0 { -1 } else { g[i - 1] as i64 };
        let hi = if i + 1 == g.len() { t_len } else { g[i + 1] as i64 };
        let mut t = gi;
        while t > lo {
            if a[t as usize] > thr {
                out.insert(t as usize);
            } else {
                break;
            }
            t -= 1;
        }
        let mut t = gi;
        while t < hi {
            if a[t as usize] > thr {
                out.insert(t as usize);
            } else {
                break;
            }
            t += 1;
        }
    }
    out
}

pub fn falloff(family: KernelFamily, d: f64, r: f64) -> f64 {
    match family {
        KernelFamily::Normal => (-(d * d) / (2.0 * r * r)).exp(),
        KernelFamily::Cauchy => r * r / (d * d + r * r),
        KernelFamily::Laplace => (-d / r).exp(),
    }
}

/// Direct double loop over snippets and kernels.
pub fn render_brute(kernels: &[GaussianKernel], family: KernelFamily) -> Vec<f64> {
    let n = kernels.len() as f64;
    (0..kernels.len())
        .map(|t| {
            let s: f64 = kernels
                .iter()
                .map(|k| k.severity * falloff(family, (t as f64 - k.mu as f64).abs() / n, k.radius))
                .sum();
            if s > 1.0 {
                1.0
            } else {
                s
            }
        })
        .collect()
}

/// Pairwise comparison over every positive/negative pair.
pub fn auc_brute(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let mut twice_wins: u64 = 0;
    let (mut p, mut n) = (0u64, 0u64);
    for (i, &li) in labels.iter().enumerate() {
        if li {
            p += 1;
        } else {
            n += 1;
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj {
                continue;
            }
            if scores[i] > scores[j] {
                twice_wins += 2;
            } else if scores[i] == scores[j] {
                twice_wins += 1;
            }
        }
    }
    if p == 0 || n == 0 {
        return None;
    }
    Some(twice_wins as f64 / (2 * p * n) as f64)
}

/// For every distinct threshold in descending order, recount the predicted
/// positives from scratch and accumulate recall gain times precision.
pub fn ap_brute(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let total_pos = labels.iter().filter(|&&l| l).count();
    if total_pos == 0 {
        return None;
    }
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();
    let mut ap = 0.0;
    let mut prev_tp = 0usize;
    for &thr in &thresholds {
        let (mut tp, mut fp) = (0usize, 0usize);
        for (s, &l) in scores.iter().zip(labels) {
            if *s >= thr {
                if l {
                    tp += 1;
                } else {
                    fp += 1;
                }
            }
        }
        let gained = tp - prev_tp;
        if gained > 0 {
            ap += (gained as f64 / total_pos as f64) * (tp as f64 / (tp + fp) as f64);
        }
        prev_tp = tp;
    }
    Some(ap)
}

/// Random scores on a coarse grid so that ties are common.
pub fn tied_scores(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let levels = rng.random_range(2..=12);
    (0..n).map(|_| rng.random_range(0..levels) as f64 / levels as f64).collect()
}

pub fn random_glances(rng: &mut ChaCha8Rng, len: usize) -> GlanceSet {
    let count = rng.random_range(1..=len.min(4));
    let mut s: BTreeSet<usize> = BTreeSet::new();
    while s.len() < count {
        s.insert(rng.random_range(0..len));
    }
    GlanceSet::new("v", s.into_iter().collect(), 1, len).unwrap()
}

pub fn random_track(rng: &mut ChaCha8Rng, len: usize) -> ScoreTrack {
    // Mix smooth plateaus with exact ties and zeros.
    let mut a = Vec::with_capacity(len);
    for _ in 0..len {
        let v = match rng.random_range(0..10) {
            0 => 0.0,
            1 => 1.0,
            2 if !a.is_empty() => *a.last().unwrap(),
            _ => rng.random::<f64>(),
        };
        a.push(v);
    }
    ScoreTrack::new(a).unwrap()
}

pub fn random_kernels(rng: &mut ChaCha8Rng, len: usize) -> Vec<GaussianKernel> {
    (0..len)
        .map(|mu| {
            let severity = match rng.random_range(0..4) {
                0 => 0.0,
                1 => 1.0,
                _ => rng.random::<f64>(),
            };
            GaussianKernel::new(mu, severity, rng.random_range(0.01..0.5)).unwrap()
        })
        .collect()
}

/// A small scorer with random weights and one random input.
pub struct GradInstance {
    pub model: ScorerModel,
    pub features: FeatureSequence,
    pub target: ScoreTrack,
}

pub fn grad_instance(seed: u64) -> GradInstance {
    let mut rng = RngSeed(seed).rng();
    let len = rng.random_range(2..=8);
    let dim = rng.random_range(1..=5);
    let mut config = ScorerConfig::new(dim);
    config.hidden1 = rng.random_range(2..=6);
    config.hidden2 = rng.random_range(2..=4);
    config.kernel_width = if rng.random::<bool>() { 3 } else { 1 };
    let model = ScorerModel::init(config, RngSeed(seed)).unwrap();
    let data: Vec<f32> = (0..len * dim).map(|_| rng.random_range(-2.0f32..2.0)).collect();
    let features = FeatureSequence::from_snippets("v", data, dim).unwrap();
    let target = ScoreTrack::new((0..len).map(|_| rng.random::<f64>()).collect()).unwrap();
    GradInstance {
        model,
        features,
        target,
    }
}

/// Largest relative error, over parameters, between the analytic gradient
/// and a central finite difference of step `h`, for the loss selected by
/// `terms` on a video with `label`.
pub fn max_grad_error(inst: &GradInstance, label: VideoLabel, terms: LossTerms, h: f64) -> f64 {
    let rendered = (label == VideoLabel::Abnormal).then_some(&inst.target);
    let (_, analytic) = inst
        .model
        .backward(&inst.features, label, rendered, TopK::Auto, terms)
        .unwrap();
    let total = |m: &ScorerModel| {
        m.loss(&inst.features, label, rendered, TopK::Auto, terms)
            .unwrap()
            .l_total
    };
    let mut worst: f64 = 0.0;
    for (i, &a) in analytic.iter().enumerate() {
        let mut plus = inst.model.clone();
        plus.params_mut()[i] += h;
        let mut minus = inst.model.clone();
        minus.params_mut()[i] -= h;
        let numeric = (total(&plus) - total(&minus)) / (2.0 * h);
        let scale = a.abs().max(numeric.abs());
        // Below this magnitude the finite difference itself is noise.
        let err = if scale < 1e-7 {
            0.0
        } else {
            (a - numeric).abs() / scale
        };
        worst = worst.max(err);
    }
    worst
}
