use rand::Rng;

use crate::error::Result;
use crate::types::{FeatureSequence, GlanceSet};

/// A video brought to a fixed snippet count for batching.
#[derive(Debug, Clone)]
pub struct Resampled {
    /// `N` rows, one frame per snippet.
    pub features: FeatureSequence,
    /// Glances re-indexed to resampled positions.
    pub glances: GlanceSet,
    /// Source snippet of every resampled position.
    pub indices: Vec<usize>,
}

/// Bin `j` of `[0, len)` split into `n` contiguous parts.
fn bin_bounds(j: usize, len: usize, n: usize) -> (usize, usize) {
    (j * len / n, (j + 1) * len / n)
}

/// Resamples to `n` snippets. Longer videos are cut into `n` contiguous bins
/// with one random snippet drawn per bin, except that a bin holding a glance
/// is represented by that glance. Shorter videos repeat snippets in order.
pub fn resample<R: Rng + ?Sized>(
    features: &FeatureSequence,
    glances: &GlanceSet,
    n: usize,
    rng: &mut R,
) -> Result<Resampled> {
    let len = features.len();
    let g = glances.snippets();
    let mut indices = Vec::with_capacity(n);
    let mut remapped = Vec::with_capacity(g.len());

    if len >= n {
        let mut gi = 0;
        for j in 0..n {
            let (lo, hi) = bin_bounds(j, len, n);
            while gi < g.len() && g[gi] < lo {
                gi += 1;
            }
            if gi < g.len() && g[gi] < hi {
                indices.push(g[gi]);
                remapped.push(j);
                // Further glances in the same bin collapse onto it.
                while gi < g.len() && g[gi] < hi {
                    gi += 1;
                }
            } else {
                indices.push(rng.random_range(lo..hi));
            }
        }
    } else {
        indices.extend((0..n).map(|j| j * len / n));
        remapped.extend(g.iter().map(|&s| (s * n).div_ceil(len)));
    }

    let dim = features.dim();
    let mut data = Vec::with_capacity(n * dim);
    for &i in &indices {
        data.extend_from_slice(features.row(i));
    }
    let features = FeatureSequence::from_snippets(features.video_id(), data, dim)?;
    let glances = GlanceSet::new(glances.video_id(), remapped, 1, n)?;
    Ok(Resampled {
        features,
        glances,
        indices,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::RngSeed;

    fn seq(len: usize) -> FeatureSequence {
        let data: Vec<f32> = (0..len).flat_map(|t| [t as f32, -(t as f32)]).collect();
        FeatureSequence::from_snippets("v", data, 2).unwrap()
    }

    fn glances(s: &[usize], len: usize) -> GlanceSet {
        GlanceSet::new("v", s.to_vec(), 1, len).unwrap()
    }

    #[test]
    fn equal_length_is_identity() {
        let r = resample(&seq(10), &glances(&[2, 7], 10), 10, &mut RngSeed(0).rng()).unwrap();
        assert_eq!(r.indices, (0..10).collect::<Vec<_>>());
        assert_eq!(r.glances.snippets(), &[2, 7]);
        assert_eq!(r.features.as_slice(), seq(10).as_slice());
    }

    #[test]
    fn glance_forces_its_bin() {
        for seed in 0..10 {
            let r = resample(&seq(400), &glances(&[100], 400), 200, &mut RngSeed(seed).rng()).unwrap();
            assert_eq!(r.glances.snippets(), &[50]);
            assert_eq!(r.indices[50], 100);
            for (j, &i) in r.indices.iter().enumerate() {
                assert!(i / 2 == j, "snippet {i} drawn for bin {j}");
            }
        }
    }

    #[test]
    fn short_video_is_repeat_padded() {
        let r = resample(&seq(3), &glances(&[1], 3), 6, &mut RngSeed(0).rng()).unwrap();
        assert_eq!(r.indices, vec![0, 0, 1, 1, 2, 2]);
        assert_eq!(r.glances.snippets(), &[2]);
        assert_eq!(r.indices[r.glances.snippets()[0]], 1);
    }

    #[test]
    fn glances_survive_uneven_bins() {
        let g = glances(&[0, 5, 6, 120, 256], 257);
        let r = resample(&seq(257), &g, 50, &mut RngSeed(4).rng()).unwrap();
        for &s in r.glances.snippets() {
            assert!(g.snippets().contains(&r.indices[s]));
        }
        // 5 and 6 share a bin.
        assert_eq!(r.glances.snippets().len(), 4);
        assert_eq!(r.features.len(), 50);
    }

    #[test]
    fn deterministic_per_seed() {
        let a = resample(&seq(97), &GlanceSet::empty("v"), 20, &mut RngSeed(8).rng()).unwrap();
        let b = resample(&seq(97), &GlanceSet::empty("v"), 20, &mut RngSeed(8).rng()).unwrap();
        assert_eq!(a.indices, b.indices);
    }
}
