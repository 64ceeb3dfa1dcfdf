//! Gaussian kernel mining: grows pseudo-anomaly snippets outwards from each
//! glance while the current score stays above a fraction of the glance score.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{GlanceSet, ScoreTrack};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiningConfig {
    /// Anomaly ratio in `(0, 1]`.
    pub alpha: f64,
    /// Threshold relative to the glance score (`alpha * A[g]`) when set,
    /// otherwise the fixed threshold `alpha`.
    #[serde(default = "default_dynamic")]
    pub dynamic: bool,
}

fn default_dynamic() -> bool {
    true
}

impl MiningConfig {
    pub fn new(alpha: f64) -> Result<Self> {
        let config = Self { alpha, dynamic: true };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1], got {}", self.alpha)));
        }
        Ok(())
    }
}

impl Default for MiningConfig {
    fn default() -> Self {
        Self {
            alpha: 0.9,
            dynamic: true,
        }
    }
}

/// Pseudo-anomaly snippets around the glances, sorted ascending.
///
/// Each glance expands left until the previous glance (exclusive, or the
/// first snippet) and right until the next glance (exclusive, or the last
/// snippet), stopping at the first snippet that fails the threshold.
pub fn mine(scores: &ScoreTrack, glances: &GlanceSet, config: &MiningConfig) -> Result<Vec<usize>> {
    config.validate()?;
    let a = scores.as_slice();
    let len = a.len();
    let g = glances.snippets();
    if let Some(&bad) = g.iter().find(|&&s| s >= len) {
        return Err(Error::OutOfRange { index: bad, len });
    }

    let mut mined = BTreeSet::new();
    for (i, &gi) in g.iter().enumerate() {
        let threshold = if config.dynamic {
            config.alpha * a[gi]
        } else {
            config.alpha
        };
        let left_stop = if i == 0 { 0 } else { g[i - 1] + 1 };
        let right_stop = g.get(i + 1).map_or(len - 1, |&next| next - 1);

        mined.extend((left_stop..=gi).rev().take_while(|&t| a[t] > threshold));
        mined.extend((gi..=right_stop).take_while(|&t| a[t] > threshold));
    }
    Ok(mined.into_iter().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn track(v: &[f64]) -> ScoreTrack {
        ScoreTrack::new(v.to_vec()).unwrap()
    }

    fn glances(s: &[usize], len: usize) -> GlanceSet {
        GlanceSet::new("v", s.to_vec(), 1, len).unwrap()
    }

    #[test]
    fn hand_traced_example() {
        let a = track(&[0.2, 0.5, 0.95, 0.90, 0.85, 0.3]);
        let out = mine(&a, &glances(&[2], 6), &MiningConfig::new(0.9).unwrap()).unwrap();
        assert_eq!(out, vec![2, 3]);
    }

    #[test]
    fn constant_scores_saturate() {
        let a = track(&[0.4; 10]);
        let out = mine(&a, &glances(&[6], 10), &MiningConfig::new(0.9).unwrap()).unwrap();
        assert_eq!(out, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn zero_glance_score() {
        let a = track(&[0.0; 8]);
        assert!(mine(&a, &glances(&[3], 8), &MiningConfig::default()).unwrap().is_empty());
        // The walk starts at the glance itself, so a failing glance stops both walks.
        let a = track(&[0.5, 0.5, 0.0, 0.5]);
        assert!(mine(&a, &glances(&[2], 4), &MiningConfig::default()).unwrap().is_empty());
    }

    #[test]
    fn neighbouring_glances_bound_the_walk() {
        let a = track(&[0.9; 9]);
        let out = mine(&a, &glances(&[2, 6], 9), &MiningConfig::default()).unwrap();
        assert_eq!(out, (0..9).collect::<Vec<_>>());
        // Right walk of glance 2 stops before 6 even when 6 fails on its own.
        let a = track(&[0.1, 0.9, 0.9, 0.9, 0.9, 0.9, 0.0, 0.9, 0.9]);
        let out = mine(&a, &glances(&[2, 6], 9), &MiningConfig::default()).unwrap();
        assert_eq!(out, vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn alpha_one_mines_nothing() {
        let a = track(&[0.3, 0.7, 0.7, 0.2]);
        let cfg = MiningConfig::new(1.0).unwrap();
        assert!(mine(&a, &glances(&[1], 4), &cfg).unwrap().is_empty());
    }

    #[test]
    fn static_threshold_ignores_glance_score() {
        let a = track(&[0.2, 0.95, 0.3, 0.92, 0.96, 0.1]);
        let cfg = MiningConfig {
            alpha: 0.9,
            dynamic: false,
        };
        assert_eq!(mine(&a, &glances(&[4], 6), &cfg).unwrap(), vec![3, 4]);
    }

    #[test]
    fn empty_glances_and_errors() {
        let a = track(&[0.9; 4]);
        assert!(mine(&a, &GlanceSet::empty("n"), &MiningConfig::default()).unwrap().is_empty());
        assert!(mine(&a, &glances(&[5], 8), &MiningConfig::default()).is_err());
        assert!(MiningConfig::new(0.0).is_err());
        assert!(MiningConfig::new(1.5).is_err());
    }
}
