//! Frame-level ROC AUC and average precision, pooled over videos, plus the
//! abnormal-video-only variants.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scorer::ScorerModel;
use crate::types::{snippet_to_frame_scores, FeatureSequence, VideoLabel};

fn check_inputs(scores: &[f64], labels: &[bool]) -> Result<(u64, u64)> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(Error::Numeric(format!("NaN score at index {i}")));
    }
    let pos = labels.iter().filter(|&&l| l).count() as u64;
    Ok((pos, labels.len() as u64 - pos))
}

/// Runs of equal score after sorting by `order`, as `(positives, negatives)`.
fn tie_groups(scores: &[f64], labels: &[bool], descending: bool) -> Vec<(u64, u64)> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    if descending {
        idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    } else {
        idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    }
    let mut groups: Vec<(u64, u64)> = Vec::new();
    let mut prev: Option<f64> = None;
    for i in idx {
        if prev != Some(scores[i]) {
            groups.push((0, 0));
            prev = Some(scores[i]);
        }
        let g = groups.last_mut().unwrap();
        if labels[i] {
            g.0 += 1;
        } else {
            g.1 += 1;
        }
    }
    groups
}

/// Probability that a random positive outranks a random negative, ties
/// counted one half.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, neg) = check_inputs(scores, labels)?;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric(format!(
            "ROC AUC needs both classes ({pos} positive, {neg} negative)"
        )));
    }
    // Twice the Mann-Whitney U statistic, kept integral.
    let mut twice_u: u128 = 0;
    let mut neg_below: u128 = 0;
    for (p, n) in tie_groups(scores, labels, false) {
        twice_u += p as u128 * (2 * neg_below + n as u128);
        neg_below += n as u128;
    }
    Ok(twice_u as f64 / (2 * pos as u128 * neg as u128) as f64)
}

/// Step-wise area under the precision-recall curve,
/// `sum_k (R_k - R_{k-1}) * P_k` over descending thresholds.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, _) = check_inputs(scores, labels)?;
    if pos == 0 {
        return Err(Error::UndefinedMetric("average precision needs a positive".into()));
    }
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut ap = 0.0;
    for (p, n) in tie_groups(scores, labels, true) {
        tp += p;
        fp += n;
        if p > 0 {
            ap += (p as f64 / pos as f64) * (tp as f64 / (tp + fp) as f64);
        }
    }
    Ok(ap)
}

/// ROC points `(fpr, tpr)` from the origin, one per distinct threshold.
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<Vec<(f64, f64)>> {
    let (pos, neg) = check_inputs(scores, labels)?;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric("ROC curve needs both classes".into()));
    }
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut pts = vec![(0.0, 0.0)];
    for (p, n) in tie_groups(scores, labels, true) {
        tp += p;
        fp += n;
        pts.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    Ok(pts)
}

/// Precision-recall points `(recall, precision)`, one per distinct threshold.
pub fn pr_curve(scores: &[f64], labels: &[bool]) -> Result<Vec<(f64, f64)>> {
    let (pos, _) = check_inputs(scores, labels)?;
    if pos == 0 {
        return Err(Error::UndefinedMetric("PR curve needs a positive".into()));
    }
    let (mut tp, mut fp) = (0u64, 0u64);
    Ok(tie_groups(scores, labels, true)
        .into_iter()
        .map(|(p, n)| {
            tp += p;
            fp += n;
            (tp as f64 / pos as f64, tp as f64 / (tp + fp) as f64)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PopulationCounts {
    pub videos: usize,
    pub abnormal_videos: usize,
    pub frames: usize,
    pub anomalous_frames: usize,
    pub abnormal_video_frames: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub auc: f64,
    pub ap: f64,
    pub auc_abnormal: f64,
    pub ap_abnormal: f64,
    pub counts: PopulationCounts,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub config_hash: Option<String>,
}

/// Frame-level scores and ground truth of one test video.
#[derive(Debug, Clone)]
pub struct ScoredVideo {
    pub label: VideoLabel,
    pub frame_scores: Vec<f64>,
    pub frame_labels: Vec<bool>,
}

/// Pools frames of all videos for AUC/AP and frames of abnormal videos only
/// for the `_abnormal` variants.
pub fn evaluate_scores(videos: &[ScoredVideo]) -> Result<EvalReport> {
    let mut all = (Vec::new(), Vec::new());
    let mut abn = (Vec::new(), Vec::new());
    let mut counts = PopulationCounts::default();
    for v in videos {
        if v.frame_scores.len() != v.frame_labels.len() {
            return Err(Error::Shape(format!(
                "{} frame scores for {} frame labels",
                v.frame_scores.len(),
                v.frame_labels.len()
            )));
        }
        counts.videos += 1;
        counts.frames += v.frame_labels.len();
        counts.anomalous_frames += v.frame_labels.iter().filter(|&&l| l).count();
        all.0.extend_from_slice(&v.frame_scores);
        all.1.extend_from_slice(&v.frame_labels);
        if v.label.is_abnormal() {
            counts.abnormal_videos += 1;
            counts.abnormal_video_frames += v.frame_labels.len();
            abn.0.extend_from_slice(&v.frame_scores);
            abn.1.extend_from_slice(&v.frame_labels);
        }
    }
    Ok(EvalReport {
        auc: roc_auc(&all.0, &all.1)?,
        ap: average_precision(&all.0, &all.1)?,
        auc_abnormal: roc_auc(&abn.0, &abn.1)?,
        ap_abnormal: average_precision(&abn.0, &abn.1)?,
        counts,
        config_hash: None,
    })
}

/// A test video with frame-level ground truth.
#[derive(Debug, Clone, Copy)]
pub struct LabeledVideo<'a> {
    pub features: &'a FeatureSequence,
    pub label: VideoLabel,
    pub frame_labels: &'a [bool],
}

/// Scores every video on its full length, expands to frames and evaluates.
pub fn evaluate(model: &ScorerModel, videos: &[LabeledVideo<'_>]) -> Result<EvalReport> {
    let scored = videos
        .iter()
        .map(|v| {
            let track = model.forward(v.features)?;
            let frame_scores =
                snippet_to_frame_scores(&track, v.features.frames_per_snippet(), v.features.total_frames())?;
            Ok(ScoredVideo {
                label: v.label,
                frame_scores,
                frame_labels: v.frame_labels.to_vec(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    evaluate_scores(&scored)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(v: &[u8]) -> Vec<bool> {
        v.iter().map(|&x| x == 1).collect()
    }

    #[test]
    fn auc_examples() {
        assert_eq!(roc_auc(&[0.1, 0.2, 0.8, 0.9], &b(&[0, 0, 1, 1])).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.3; 5], &b(&[0, 1, 0, 1, 1])).unwrap(), 0.5);
        assert_eq!(roc_auc(&[0.1, 0.4, 0.35, 0.8], &b(&[0, 0, 1, 1])).unwrap(), 0.75);
        assert!(matches!(
            roc_auc(&[0.1, 0.2], &b(&[1, 1])),
            Err(Error::UndefinedMetric(_))
        ));
        assert!(roc_auc(&[0.1], &b(&[1, 0])).is_err());
        assert!(roc_auc(&[f64::NAN, 0.2], &b(&[1, 0])).is_err());
    }

    #[test]
    fn ap_examples() {
        assert_eq!(average_precision(&[0.9, 0.8, 0.1], &b(&[1, 1, 0])).unwrap(), 1.0);
        let ap = average_precision(&[0.9, 0.8, 0.7, 0.1], &b(&[0, 0, 0, 1])).unwrap();
        assert!((ap - 0.25).abs() < 1e-15);
        let ap = average_precision(&[0.9, 0.8, 0.7], &b(&[1, 0, 1])).unwrap();
        assert!((ap - 5.0 / 6.0).abs() < 1e-15);
        assert!(average_precision(&[0.5, 0.4], &b(&[0, 0])).is_err());
    }

    #[test]
    fn ap_groups_tied_scores() {
        // One threshold holding both frames: precision 1/2 at recall 1.
        assert_eq!(average_precision(&[0.5, 0.5], &b(&[1, 0])).unwrap(), 0.5);
    }

    #[test]
    fn curves_end_at_full_recall() {
        let s = [0.9, 0.3, 0.6, 0.6, 0.2];
        let l = b(&[1, 0, 1, 0, 0]);
        let roc = roc_curve(&s, &l).unwrap();
        assert_eq!(roc.first(), Some(&(0.0, 0.0)));
        assert_eq!(roc.last(), Some(&(1.0, 1.0)));
        let pr = pr_curve(&s, &l).unwrap();
        assert_eq!(pr.len(), 4);
        assert_eq!(pr.last().unwrap().0, 1.0);
    }

    fn video(label: VideoLabel, labels: &[u8], scores: &[f64]) -> ScoredVideo {
        ScoredVideo {
            label,
            frame_scores: scores.to_vec(),
            frame_labels: b(labels),
        }
    }

    #[test]
    fn oracle_and_anti_oracle() {
        let gt = [
            (VideoLabel::Abnormal, vec![0u8, 1, 1, 0]),
            (VideoLabel::Normal, vec![0u8, 0, 0]),
            (VideoLabel::Abnormal, vec![1u8, 0, 0]),
        ];
        let oracle: Vec<_> = gt
            .iter()
            .map(|(y, l)| video(*y, l, &l.iter().map(|&x| x as f64).collect::<Vec<_>>()))
            .collect();
        let r = evaluate_scores(&oracle).unwrap();
        assert_eq!((r.auc, r.ap, r.auc_abnormal, r.ap_abnormal), (1.0, 1.0, 1.0, 1.0));
        assert_eq!(r.counts.frames, 10);
        assert_eq!(r.counts.abnormal_video_frames, 7);
        assert_eq!(r.counts.anomalous_frames, 3);

        let anti: Vec<_> = gt
            .iter()
            .map(|(y, l)| video(*y, l, &l.iter().map(|&x| 1.0 - x as f64).collect::<Vec<_>>()))
            .collect();
        assert_eq!(evaluate_scores(&anti).unwrap().auc, 0.0);
    }
}
