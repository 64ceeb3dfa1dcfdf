use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{ScoreTrack, VideoLabel};

/// Clamp applied to every logarithm argument.
pub const LOG_EPS: f64 = 1e-7;

/// Number of snippets averaged by top-k pooling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopK {
    /// `max(1, floor(T / 16) + 1)`.
    #[default]
    Auto,
    Fixed(usize),
}

impl TopK {
    pub fn resolve(self, len: usize) -> Result<usize> {
        let k = match self {
            TopK::Auto => (len / 16 + 1).max(1),
            TopK::Fixed(k) => k,
        };
        if k == 0 || k > len {
            return Err(Error::Config(format!("top-k of {k} invalid for {len} snippets")));
        }
        Ok(k)
    }
}

/// Binary cross-entropy of prediction `p` against a (possibly soft) target.
pub fn bce(p: f64, target: f64) -> f64 {
    -(target * p.max(LOG_EPS).ln() + (1.0 - target) * (1.0 - p).max(LOG_EPS).ln())
}

/// d bce / d p, zero wherever the clamp is active.
pub(crate) fn bce_grad(p: f64, target: f64) -> f64 {
    let mut g = 0.0;
    if p > LOG_EPS {
        g -= target / p;
    }
    if 1.0 - p > LOG_EPS {
        g += (1.0 - target) / (1.0 - p);
    }
    g
}

/// Indices of the `k` largest scores; ties go to the lower index.
pub fn topk_indices(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// Mean of the `k` largest scores.
pub fn topk_pool(track: &ScoreTrack, k: usize) -> Result<f64> {
    if k == 0 || k > track.len() {
        return Err(Error::Config(format!(
            "top-k of {k} invalid for {} snippets",
            track.len()
        )));
    }
    let s = track.as_slice();
    Ok(topk_indices(s, k).iter().map(|&i| s[i]).sum::<f64>() / k as f64)
}

/// Video-level cross-entropy of the pooled prediction.
pub fn mil_loss(y_hat: f64, label: VideoLabel) -> f64 {
    bce(y_hat, label.as_f64())
}

/// Mean snippet-wise cross-entropy of `predicted` against rendered targets.
pub fn abn_loss(predicted: &ScoreTrack, rendered: &ScoreTrack) -> Result<f64> {
    if predicted.len() != rendered.len() {
        return Err(Error::Shape(format!(
            "predicted track has {} snippets, rendered target {}",
            predicted.len(),
            rendered.len()
        )));
    }
    let n = predicted.len() as f64;
    Ok(predicted
        .as_slice()
        .iter()
        .zip(rendered.as_slice())
        .map(|(&p, &q)| bce(p, q))
        .sum::<f64>()
        / n)
}

/// Per-term losses; `l_total` is their sum.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_mil: f64,
    pub l_abn: f64,
    pub l_nor: f64,
    pub l_total: f64,
}

impl LossBreakdown {
    pub fn new(l_mil: f64, l_abn: f64, l_nor: f64) -> Self {
        Self {
            l_mil,
            l_abn,
            l_nor,
            l_total: l_mil + l_abn + l_nor,
        }
    }

    pub fn add(&mut self, other: &LossBreakdown) {
        *self = Self::new(self.l_mil + other.l_mil, self.l_abn + other.l_abn, self.l_nor + other.l_nor);
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self::new(self.l_mil * s, self.l_abn * s, self.l_nor * s)
    }
}

/// Which loss terms contribute to a backward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LossTerms {
    pub mil: bool,
    pub abn: bool,
    pub nor: bool,
}

impl LossTerms {
    pub const ALL: LossTerms = LossTerms {
        mil: true,
        abn: true,
        nor: true,
    };
    pub const MIL: LossTerms = LossTerms {
        mil: true,
        abn: false,
        nor: false,
    };
    pub const ABN: LossTerms = LossTerms {
        mil: false,
        abn: true,
        nor: false,
    };
    pub const NOR: LossTerms = LossTerms {
        mil: false,
        abn: false,
        nor: true,
    };
}
