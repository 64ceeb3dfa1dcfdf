//! Snippet-level anomaly scorer: a two-stage temporal encoder followed by a
//! logistic score head, with hand-written reverse-mode gradients.
//!
//! All parameters live in one flat `Vec<f64>`; [`ParamLayout`] maps layers
//! onto it so optimizers, checkpoints and finite-difference checks can treat
//! the model as a plain vector.

mod checkpoint;
mod loss;

pub use checkpoint::{load_checkpoint, store_checkpoint, Checkpoint, CheckpointHeader};
pub use loss::{
    abn_loss, bce, mil_loss, topk_indices, topk_pool, LossBreakdown, LossTerms, TopK, LOG_EPS,
};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{FeatureSequence, RngSeed, ScoreTrack, VideoLabel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScorerConfig {
    pub input_dim: usize,
    pub hidden1: usize,
    pub hidden2: usize,
    /// Temporal receptive field of each encoder stage (1 or 3).
    pub kernel_width: usize,
}

impl ScorerConfig {
    pub fn new(input_dim: usize) -> Self {
        Self {
            input_dim,
            hidden1: 512,
            hidden2: 128,
            kernel_width: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden1 == 0 || self.hidden2 == 0 {
            return Err(Error::Config("scorer widths must be positive".into()));
        }
        if self.kernel_width != 1 && self.kernel_width != 3 {
            return Err(Error::Config(format!(
                "kernel width must be 1 or 3, got {}",
                self.kernel_width
            )));
        }
        Ok(())
    }
}

/// Placement of one temporal convolution inside the flat parameter vector.
/// Weights are stored `[out][tap][in]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvShape {
    pub in_dim: usize,
    pub out_dim: usize,
    pub width: usize,
    pub weight_offset: usize,
    pub bias_offset: usize,
}

impl ConvShape {
    fn weight_len(&self) -> usize {
        self.out_dim * self.width * self.in_dim
    }

    fn half(&self) -> isize {
        (self.width / 2) as isize
    }

    /// `out[t] = b + sum_k W[k] x[t + k - half]`, zero padded.
    fn forward(&self, params: &[f64], x: &[f64], len: usize) -> Vec<f64> {
        let (din, dout) = (self.in_dim, self.out_dim);
        let w = &params[self.weight_offset..self.weight_offset + self.weight_len()];
        let b = &params[self.bias_offset..self.bias_offset + dout];
        let mut out = vec![0.0; len * dout];
        for t in 0..len {
            let row = &mut out[t * dout..(t + 1) * dout];
            row.copy_from_slice(b);
            for k in 0..self.width {
                let src = t as isize + k as isize - self.half();
                if src < 0 || src as usize >= len {
                    continue;
                }
                let xs = &x[src as usize * din..(src as usize + 1) * din];
                for (o, r) in row.iter_mut().enumerate() {
                    let wk = &w[(o * self.width + k) * din..(o * self.width + k + 1) * din];
                    *r += dot(wk, xs);
                }
            }
        }
        out
    }

    /// Accumulates parameter gradients and returns the input gradient.
    fn backward(&self, params: &[f64], x: &[f64], d_out: &[f64], len: usize, grad: &mut [f64]) -> Vec<f64> {
        let (din, dout) = (self.in_dim, self.out_dim);
        let w = &params[self.weight_offset..self.weight_offset + self.weight_len()];
        let mut d_x = vec![0.0; len * din];
        {
            let gb = &mut grad[self.bias_offset..self.bias_offset + dout];
            for t in 0..len {
                for (g, d) in gb.iter_mut().zip(&d_out[t * dout..(t + 1) * dout]) {
                    *g += d;
                }
            }
        }
        let gw_range = self.weight_offset..self.weight_offset + self.weight_len();
        for t in 0..len {
            for k in 0..self.width {
                let src = t as isize + k as isize - self.half();
                if src < 0 || src as usize >= len {
                    continue;
                }
                let src = src as usize;
                let xs = &x[src * din..(src + 1) * din];
                for o in 0..dout {
                    let d = d_out[t * dout + o];
                    if d == 0.0 {
                        continue;
                    }
                    let base = (o * self.width + k) * din;
                    let gw = &mut grad[gw_range.clone()][base..base + din];
                    axpy(d, xs, gw);
                    axpy(d, &w[base..base + din], &mut d_x[src * din..(src + 1) * din]);
                }
            }
        }
        d_x
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamLayout {
    pub layers: [ConvShape; 3],
    pub num_params: usize,
}

impl ParamLayout {
    pub fn new(config: &ScorerConfig) -> Self {
        let mut offset = 0;
        let mut conv = |in_dim, out_dim, width| {
            let weight_offset = offset;
            offset += out_dim * width * in_dim;
            let bias_offset = offset;
            offset += out_dim;
            ConvShape {
                in_dim,
                out_dim,
                width,
                weight_offset,
                bias_offset,
            }
        };
        let layers = [
            conv(config.input_dim, config.hidden1, config.kernel_width),
            conv(config.hidden1, config.hidden2, config.kernel_width),
            conv(config.hidden2, 1, 1),
        ];
        Self {
            layers,
            num_params: offset,
        }
    }

    /// `(name, dims)` for every tensor, in storage order.
    pub fn tensor_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let names = ["encoder1", "encoder2", "head"];
        self.layers
            .iter()
            .zip(names)
            .flat_map(|(l, n)| {
                [
                    (format!("{n}.weight"), vec![l.out_dim, l.width, l.in_dim]),
                    (format!("{n}.bias"), vec![l.out_dim]),
                ]
            })
            .collect()
    }
}

/// Intermediate activations kept for the backward pass.
struct ForwardCache {
    input: Vec<f64>,
    h1: Vec<f64>,
    h2: Vec<f64>,
    scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScorerModel {
    config: ScorerConfig,
    layout: ParamLayout,
    params: Vec<f64>,
}

impl ScorerModel {
    /// All parameters zero; every snippet scores exactly 0.5.
    pub fn zeros(config: ScorerConfig) -> Result<Self> {
        config.validate()?;
        let layout = ParamLayout::new(&config);
        let params = vec![0.0; layout.num_params];
        Ok(Self {
            config,
            layout,
            params,
        })
    }

    /// Uniform `±1/sqrt(fan_in)` initialization drawn from `seed`.
    pub fn init(config: ScorerConfig, seed: RngSeed) -> Result<Self> {
        let mut model = Self::zeros(config)?;
        let mut rng = seed.stream(crate::STREAM_INIT);
        for l in model.layout.layers {
            let bound = 1.0 / ((l.in_dim * l.width) as f64).sqrt();
            let end = l.bias_offset + l.out_dim;
            for p in &mut model.params[l.weight_offset..end] {
                *p = rng.random_range(-bound..bound);
            }
        }
        Ok(model)
    }

    pub fn from_params(config: ScorerConfig, params: Vec<f64>) -> Result<Self> {
        let mut model = Self::zeros(config)?;
        if params.len() != model.params.len() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                model.params.len(),
                params.len()
            )));
        }
        model.params = params;
        Ok(model)
    }

    pub fn config(&self) -> &ScorerConfig {
        &self.config
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    fn check_input(&self, features: &FeatureSequence) -> Result<()> {
        if features.dim() != self.config.input_dim {
            return Err(Error::Shape(format!(
                "{} has feature dimension {}, scorer expects {}",
                features.video_id(),
                features.dim(),
                self.config.input_dim
            )));
        }
        Ok(())
    }

    fn forward_cached(&self, features: &FeatureSequence) -> Result<ForwardCache> {
        self.check_input(features)?;
        let len = features.len();
        let [l1, l2, l3] = self.layout.layers;
        let input: Vec<f64> = features.as_slice().iter().map(|&v| f64::from(v)).collect();
        let mut h1 = l1.forward(&self.params, &input, len);
        h1.iter_mut().for_each(|v| *v = v.max(0.0));
        let mut h2 = l2.forward(&self.params, &h1, len);
        h2.iter_mut().for_each(|v| *v = v.max(0.0));
        let logits = l3.forward(&self.params, &h2, len);
        let scores: Vec<f64> = logits.into_iter().map(sigmoid).collect();
        if let Some(t) = scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite score at snippet {t} of {}",
                features.video_id()
            )));
        }
        Ok(ForwardCache {
            input,
            h1,
            h2,
            scores,
        })
    }

    /// Per-snippet anomaly scores.
    pub fn forward(&self, features: &FeatureSequence) -> Result<ScoreTrack> {
        ScoreTrack::new(self.forward_cached(features)?.scores)
    }

    /// Losses of one video and their gradients, added into `grad` after
    /// multiplying by `scale`.
    ///
    /// Abnormal videos contribute the MIL term and, when `rendered` is given,
    /// the dense pseudo-label term; normal videos contribute the normal MIL
    /// term. Top-k pooling routes gradient only through the selected snippets.
    #[allow(clippy::too_many_arguments)]
    pub fn backward_into(
        &self,
        features: &FeatureSequence,
        label: VideoLabel,
        rendered: Option<&ScoreTrack>,
        top_k: TopK,
        terms: LossTerms,
        scale: f64,
        grad: &mut [f64],
    ) -> Result<LossBreakdown> {
        if grad.len() != self.params.len() {
            return Err(Error::Shape(format!(
                "gradient buffer has {} entries, model {}",
                grad.len(),
                self.params.len()
            )));
        }
        let cache = self.forward_cached(features)?;
        let len = features.len();
        let scores = &cache.scores;
        let mut d_scores = vec![0.0; len];
        let (mut l_mil, mut l_abn, mut l_nor) = (0.0, 0.0, 0.0);

        let k = top_k.resolve(len)?;
        let pooled = |d_scores: &mut [f64], target: f64| {
            let idx = topk_indices(scores, k);
            let y_hat = idx.iter().map(|&i| scores[i]).sum::<f64>() / k as f64;
            let d_pool = loss::bce_grad(y_hat, target) / k as f64;
            for &i in &idx {
                d_scores[i] += d_pool;
            }
            bce(y_hat, target)
        };

        match label {
            VideoLabel::Abnormal => {
                if terms.mil {
                    l_mil = pooled(&mut d_scores, 1.0);
                }
                if let (true, Some(target)) = (terms.abn, rendered) {
                    if target.len() != len {
                        return Err(Error::Shape(format!(
                            "rendered target has {} snippets, video {}",
                            target.len(),
                            len
                        )));
                    }
                    let n = len as f64;
                    for ((d, &p), &q) in d_scores.iter_mut().zip(scores).zip(target.as_slice()) {
                        l_abn += bce(p, q) / n;
                        *d += loss::bce_grad(p, q) / n;
                    }
                }
            }
            VideoLabel::Normal => {
                if terms.nor {
                    l_nor = pooled(&mut d_scores, 0.0);
                }
            }
        }

        let breakdown = LossBreakdown::new(l_mil, l_abn, l_nor);
        if d_scores.iter().all(|&d| d == 0.0) {
            return Ok(breakdown);
        }

        let [l1, l2, l3] = self.layout.layers;
        let d_logits: Vec<f64> = d_scores
            .iter()
            .zip(scores)
            .map(|(&d, &p)| scale * d * p * (1.0 - p))
            .collect();
        let mut d_h2 = l3.backward(&self.params, &cache.h2, &d_logits, len, grad);
        relu_backward(&mut d_h2, &cache.h2);
        let mut d_h1 = l2.backward(&self.params, &cache.h1, &d_h2, len, grad);
        relu_backward(&mut d_h1, &cache.h1);
        l1.backward(&self.params, &cache.input, &d_h1, len, grad);

        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite gradient at parameter {i} ({})",
                features.video_id()
            )));
        }
        Ok(breakdown)
    }

    /// Losses and a fresh gradient vector for one video.
    pub fn backward(
        &self,
        features: &FeatureSequence,
        label: VideoLabel,
        rendered: Option<&ScoreTrack>,
        top_k: TopK,
        terms: LossTerms,
    ) -> Result<(LossBreakdown, Vec<f64>)> {
        let mut grad = vec![0.0; self.params.len()];
        let losses = self.backward_into(features, label, rendered, top_k, terms, 1.0, &mut grad)?;
        Ok((losses, grad))
    }

    /// Loss value only, for the same selection of terms as [`Self::backward`].
    pub fn loss(
        &self,
        features: &FeatureSequence,
        label: VideoLabel,
        rendered: Option<&ScoreTrack>,
        top_k: TopK,
        terms: LossTerms,
    ) -> Result<LossBreakdown> {
        let scores = self.forward(features)?;
        let k = top_k.resolve(scores.len())?;
        let (mut l_mil, mut l_abn, mut l_nor) = (0.0, 0.0, 0.0);
        match label {
            VideoLabel::Abnormal => {
                if terms.mil {
                    l_mil = mil_loss(topk_pool(&scores, k)?, label);
                }
                if let (true, Some(target)) = (terms.abn, rendered) {
                    l_abn = abn_loss(&scores, target)?;
                }
            }
            VideoLabel::Normal => {
                if terms.nor {
                    l_nor = mil_loss(topk_pool(&scores, k)?, label);
                }
            }
        }
        Ok(LossBreakdown::new(l_mil, l_abn, l_nor))
    }
}

/// Zeroes gradient where the (post-activation) value was clipped.
fn relu_backward(d: &mut [f64], activated: &[f64]) {
    for (g, &a) in d.iter_mut().zip(activated) {
        if a <= 0.0 {
            *g = 0.0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn features(t: usize, d: usize, seed: u64) -> FeatureSequence {
        let mut rng = RngSeed(seed).rng();
        let v: Vec<f32> = (0..t * d).map(|_| rng.sample::<f32, _>(StandardNormal)).collect();
        FeatureSequence::from_snippets("v", v, d).unwrap()
    }

    fn small(d: usize, width: usize) -> ScorerConfig {
        ScorerConfig {
            input_dim: d,
            hidden1: 6,
            hidden2: 4,
            kernel_width: width,
        }
    }

    #[test]
    fn zero_model_scores_half() {
        let model = ScorerModel::zeros(ScorerConfig::new(5)).unwrap();
        let s = model.forward(&features(7, 5, 1)).unwrap();
        assert!(s.as_slice().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn single_snippet_and_shape_errors() {
        let model = ScorerModel::init(small(3, 3), RngSeed(0)).unwrap();
        assert_eq!(model.forward(&features(1, 3, 2)).unwrap().len(), 1);
        assert!(matches!(model.forward(&features(4, 2, 2)), Err(Error::Shape(_))));
        assert!(ScorerModel::zeros(small(3, 2)).is_err());
    }

    #[test]
    fn forward_is_deterministic() {
        let a = ScorerModel::init(small(4, 1), RngSeed(0)).unwrap();
        let b = ScorerModel::init(small(4, 1), RngSeed(0)).unwrap();
        let x = features(9, 4, 0);
        let sa = a.forward(&x).unwrap();
        let sb = b.forward(&x).unwrap();
        assert!(sa.as_slice().iter().zip(sb.as_slice()).all(|(p, q)| p.to_bits() == q.to_bits()));
    }

    #[test]
    fn layout_covers_all_parameters() {
        let cfg = ScorerConfig::new(16);
        let layout = ParamLayout::new(&cfg);
        let total: usize = layout
            .tensor_shapes()
            .iter()
            .map(|(_, d)| d.iter().product::<usize>())
            .sum();
        assert_eq!(total, layout.num_params);
        assert_eq!(total, 16 * 512 + 512 + 512 * 128 + 128 + 128 + 1);
    }

    #[test]
    fn normal_loss_is_not_applied_to_abnormal_video() {
        let model = ScorerModel::init(small(3, 1), RngSeed(4)).unwrap();
        let x = features(8, 3, 5);
        let (l, g) = model
            .backward(&x, VideoLabel::Abnormal, None, TopK::Auto, LossTerms::NOR)
            .unwrap();
        assert_eq!(l.l_nor, 0.0);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_features_give_column_symmetric_gradients() {
        // Identical input channels receive identical first-layer gradients.
        let model = {
            let mut m = ScorerModel::init(small(3, 1), RngSeed(9)).unwrap();
            let l1 = m.layout().layers[0];
            let params = m.params_mut();
            for o in 0..l1.out_dim {
                let w0 = params[l1.weight_offset + o * 3];
                for i in 0..3 {
                    params[l1.weight_offset + o * 3 + i] = w0;
                }
            }
            m
        };
        let x = FeatureSequence::from_snippets("c", vec![0.7; 8 * 3], 3).unwrap();
        let (_, g) = model
            .backward(&x, VideoLabel::Abnormal, None, TopK::Auto, LossTerms::ALL)
            .unwrap();
        let l1 = model.layout().layers[0];
        for o in 0..l1.out_dim {
            let row = &g[l1.weight_offset + o * 3..l1.weight_offset + o * 3 + 3];
            assert_eq!(row[0], row[1]);
            assert_eq!(row[1], row[2]);
        }
    }

    #[test]
    fn loss_matches_backward_breakdown() {
        let model = ScorerModel::init(small(4, 3), RngSeed(2)).unwrap();
        let x = features(8, 4, 3);
        let target = ScoreTrack::new(vec![0.0, 0.2, 0.9, 1.0, 1.0, 0.5, 0.1, 0.0]).unwrap();
        let a = model
            .loss(&x, VideoLabel::Abnormal, Some(&target), TopK::Auto, LossTerms::ALL)
            .unwrap();
        let (b, _) = model
            .backward(&x, VideoLabel::Abnormal, Some(&target), TopK::Auto, LossTerms::ALL)
            .unwrap();
        assert!((a.l_total - b.l_total).abs() < 1e-12);
        assert!(a.l_mil > 0.0 && a.l_abn > 0.0 && a.l_nor == 0.0);
    }
}
