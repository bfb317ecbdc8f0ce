//! The residual squeeze-and-excitation regressor.
//!
//! Layout: stem convolution with ReLU, a sequence of stages of residual SE
//! blocks (the first block of each stage applies the stage stride), global
//! average pooling and a dense head. The raw head output is mapped to years
//! with a fixed affine transform (`shift + scale * raw`) whose constants are
//! taken from the training labels, so the trainable weights work on a unit
//! scale.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{relu_backward, relu_inplace, BlockCache, Conv1d, Dense, ResidualBlock};
use super::tensor::Tensor;
use crate::error::{invalid, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageConfig {
    pub blocks: usize,
    pub channels: usize,
    pub stride: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetConfig {
    pub input_length: usize,
    pub stem_channels: usize,
    pub stem_kernel: usize,
    pub kernel_size: usize,
    pub stages: Vec<StageConfig>,
    pub se_reduction: usize,
    /// Width of an optional hidden dense layer in the head; 0 for a single
    /// linear output layer.
    pub head_hidden: usize,
}

impl Default for NetConfig {
    /// Stem conv(k=7, 16 ch), two stages of two residual SE blocks
    /// (16 then 32 channels, stride 2 each), SE reduction 4, dense head 32 -> 1.
    fn default() -> Self {
        Self {
            input_length: 100,
            stem_channels: 16,
            stem_kernel: 7,
            kernel_size: 5,
            stages: vec![
                StageConfig { blocks: 2, channels: 16, stride: 2 },
                StageConfig { blocks: 2, channels: 32, stride: 2 },
            ],
            se_reduction: 4,
            head_hidden: 0,
        }
    }
}

impl NetConfig {
    /// Same family at a fraction of the cost: 8-channel stem, single-block
    /// stages of 8 and 16 channels and a linear head.
    pub fn small() -> Self {
        Self {
            input_length: 100,
            stem_channels: 8,
            stem_kernel: 7,
            kernel_size: 5,
            stages: vec![
                StageConfig { blocks: 1, channels: 8, stride: 2 },
                StageConfig { blocks: 1, channels: 16, stride: 2 },
            ],
            se_reduction: 4,
            head_hidden: 0,
        }
    }

    /// Two single-block stages of 4 channels on length-16 inputs.
    pub fn tiny() -> Self {
        Self {
            input_length: 16,
            stem_channels: 4,
            stem_kernel: 3,
            kernel_size: 3,
            stages: vec![
                StageConfig { blocks: 1, channels: 4, stride: 1 },
                StageConfig { blocks: 1, channels: 4, stride: 2 },
            ],
            se_reduction: 2,
            head_hidden: 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.stem_kernel == 0 || self.kernel_size == 0 {
            return invalid("kernel sizes must be positive");
        }
        if self.stem_kernel % 2 == 0 || self.kernel_size % 2 == 0 {
            return invalid("kernel sizes must be odd for same padding");
        }
        if self.input_length < self.kernel_size.max(self.stem_kernel) {
            return invalid(format!("input length {} shorter than the kernel", self.input_length));
        }
        if self.stem_channels == 0 || self.se_reduction == 0 {
            return invalid("stem channels and SE reduction must be positive");
        }
        if self.stages.is_empty() {
            return invalid("at least one stage is required");
        }
        let mut len = self.input_length;
        for (i, s) in self.stages.iter().enumerate() {
            if s.blocks == 0 || s.stride == 0 || s.channels == 0 {
                return invalid(format!("stage {i} has a zero field"));
            }
            if s.channels % self.se_reduction != 0 {
                return invalid(format!(
                    "stage {i}: {} channels not divisible by SE reduction {}",
                    s.channels, self.se_reduction
                ));
            }
            len = (len - 1) / s.stride + 1;
        }
        if len == 0 {
            return invalid("strides collapse the sequence");
        }
        Ok(())
    }

    pub fn final_channels(&self) -> usize {
        self.stages.last().map(|s| s.channels).unwrap_or(self.stem_channels)
    }
}

/// Weights of the network plus the fixed output mapping to years.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: NetConfig,
    pub stem: Conv1d,
    pub blocks: Vec<ResidualBlock>,
    pub head_hidden: Option<Dense>,
    pub head_out: Dense,
    pub output_shift: f64,
    pub output_scale: f64,
}

/// Name and shape of one parameter array, in canonical order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
}

impl ModelParams {
    /// All-zero parameters with the given config.
    pub fn zeros(config: &NetConfig) -> Result<Self> {
        config.validate()?;
        let stem = Conv1d::zeros(1, config.stem_channels, config.stem_kernel, 1, config.stem_kernel / 2);
        let mut blocks = Vec::new();
        let mut channels = config.stem_channels;
        for stage in &config.stages {
            for b in 0..stage.blocks {
                let stride = if b == 0 { stage.stride } else { 1 };
                blocks.push(ResidualBlock::zeros(
                    channels,
                    stage.channels,
                    config.kernel_size,
                    stride,
                    config.se_reduction,
                ));
                channels = stage.channels;
            }
        }
        let (head_hidden, head_out) = if config.head_hidden > 0 {
            (Some(Dense::zeros(channels, config.head_hidden)), Dense::zeros(config.head_hidden, 1))
        } else {
            (None, Dense::zeros(channels, 1))
        };
        Ok(Self { config: config.clone(), stem, blocks, head_hidden, head_out, output_shift: 0.0, output_scale: 1.0 })
    }

    /// Fan-in scaled uniform weights `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`,
    /// zero biases, one RNG stream per parameter array. Values are rounded to
    /// f32 so that checkpoints hold the exact state.
    pub fn init(config: &NetConfig, seed: u64, output_shift: f64, output_scale: f64) -> Result<Self> {
        if !(output_scale > 0.0 && output_scale.is_finite() && output_shift.is_finite()) {
            return invalid("output scale must be positive and finite");
        }
        let mut params = Self::zeros(config)?;
        params.output_shift = output_shift;
        params.output_scale = output_scale;
        let specs = params.param_specs();
        for (index, (spec, values)) in specs.iter().zip(params.arrays_mut()).enumerate() {
            if spec.name.ends_with(".bias") {
                continue;
            }
            let fan_in: usize = spec.shape[1..].iter().product();
            let bound = 1.0 / (fan_in as f64).sqrt();
            let mut stream = rng::stream(seed, &spec.name, index as u64);
            for v in values.iter_mut() {
                *v = stream.random_range(-bound..bound) as f32 as f64;
            }
        }
        Ok(params)
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            config: self.config.clone(),
            stem: self.stem.zeros_like(),
            blocks: self.blocks.iter().map(ResidualBlock::zeros_like).collect(),
            head_hidden: self.head_hidden.as_ref().map(Dense::zeros_like),
            head_out: self.head_out.zeros_like(),
            output_shift: self.output_shift,
            output_scale: self.output_scale,
        }
    }

    /// Names and shapes of every parameter array in canonical order. The
    /// same order is used by [`Self::arrays`], optimizer state and
    /// checkpoints.
    pub fn param_specs(&self) -> Vec<ParamSpec> {
        let mut out = Vec::new();
        let mut push = |name: String, shape: Vec<usize>| out.push(ParamSpec { name, shape });
        let conv_shape = |c: &Conv1d| vec![c.out_channels, c.in_channels, c.kernel];
        push("stem.weight".into(), conv_shape(&self.stem));
        push("stem.bias".into(), vec![self.stem.out_channels]);
        for (i, blk) in self.blocks.iter().enumerate() {
            for (tag, c) in [("conv1", &blk.conv1), ("conv2", &blk.conv2)] {
                push(format!("block{i}.{tag}.weight"), conv_shape(c));
                push(format!("block{i}.{tag}.bias"), vec![c.out_channels]);
            }
            for (tag, d) in [("se.reduce", &blk.se.reduce), ("se.expand", &blk.se.expand)] {
                push(format!("block{i}.{tag}.weight"), vec![d.outputs, d.inputs]);
                push(format!("block{i}.{tag}.bias"), vec![d.outputs]);
            }
            if let Some(sc) = &blk.shortcut {
                push(format!("block{i}.shortcut.weight"), conv_shape(sc));
                push(format!("block{i}.shortcut.bias"), vec![sc.out_channels]);
            }
        }
        if let Some(d) = &self.head_hidden {
            push("head.hidden.weight".into(), vec![d.outputs, d.inputs]);
            push("head.hidden.bias".into(), vec![d.outputs]);
        }
        let d = &self.head_out;
        push("head.out.weight".into(), vec![d.outputs, d.inputs]);
        push("head.out.bias".into(), vec![d.outputs]);
        out
    }

    pub fn arrays(&self) -> Vec<&Vec<f64>> {
        let mut out = vec![&self.stem.weight, &self.stem.bias];
        for blk in &self.blocks {
            out.extend([
                &blk.conv1.weight,
                &blk.conv1.bias,
                &blk.conv2.weight,
                &blk.conv2.bias,
                &blk.se.reduce.weight,
                &blk.se.reduce.bias,
                &blk.se.expand.weight,
                &blk.se.expand.bias,
            ]);
            if let Some(sc) = &blk.shortcut {
                out.extend([&sc.weight, &sc.bias]);
            }
        }
        if let Some(d) = &self.head_hidden {
            out.extend([&d.weight, &d.bias]);
        }
        out.extend([&self.head_out.weight, &self.head_out.bias]);
        out
    }

    pub fn arrays_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out = vec![&mut self.stem.weight, &mut self.stem.bias];
        for blk in &mut self.blocks {
            out.extend([
                &mut blk.conv1.weight,
                &mut blk.conv1.bias,
                &mut blk.conv2.weight,
                &mut blk.conv2.bias,
                &mut blk.se.reduce.weight,
                &mut blk.se.reduce.bias,
                &mut blk.se.expand.weight,
                &mut blk.se.expand.bias,
            ]);
            if let Some(sc) = &mut blk.shortcut {
                out.extend([&mut sc.weight, &mut sc.bias]);
            }
        }
        if let Some(d) = &mut self.head_hidden {
            out.extend([&mut d.weight, &mut d.bias]);
        }
        out.extend([&mut self.head_out.weight, &mut self.head_out.bias]);
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.arrays().iter().map(|a| a.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.arrays().iter().all(|a| a.iter().all(|v| v.is_finite()))
    }

    fn check_batch(&self, batch: &Tensor) -> Result<()> {
        if batch.channels() != 1 || batch.length() != self.config.input_length {
            return invalid(format!(
                "expected input shape (B, 1, {}), got {:?}",
                self.config.input_length,
                batch.shape()
            ));
        }
        Ok(())
    }

    pub(crate) fn forward_sample(&self, x: &[f64]) -> SampleCache {
        let len = self.config.input_length;
        let (mut stem, _) = self.stem.forward_sample(x, len);
        relu_inplace(&mut stem);
        let mut blocks: Vec<BlockCache> = Vec::with_capacity(self.blocks.len());
        let mut lens = Vec::with_capacity(self.blocks.len());
        let mut cur_len = len;
        for (i, blk) in self.blocks.iter().enumerate() {
            let input = if i == 0 { &stem } else { &blocks[i - 1].out };
            lens.push(cur_len);
            let cache = blk.forward_sample(input, cur_len);
            cur_len = cache.out.len() / blk.out_channels();
            blocks.push(cache);
        }
        let last = blocks.last().map(|c| &c.out).unwrap_or(&stem);
        let channels = self.config.final_channels();
        let pooled: Vec<f64> =
            (0..channels).map(|c| last[c * cur_len..(c + 1) * cur_len].iter().sum::<f64>() / cur_len as f64).collect();
        let hidden = self.head_hidden.as_ref().map(|d| {
            let mut h = d.forward(&pooled);
            relu_inplace(&mut h);
            h
        });
        let raw = self.head_out.forward(hidden.as_ref().unwrap_or(&pooled))[0];
        SampleCache { stem, blocks, lens, final_len: cur_len, pooled, hidden, raw }
    }

    /// Accumulates parameter gradients of `d_output * prediction` into
    /// `grad` and returns the input gradient when `want_input` is set.
    pub(crate) fn backward_sample(
        &self,
        x: &[f64],
        cache: &SampleCache,
        d_output: f64,
        grad: &mut ModelParams,
        want_input: bool,
    ) -> Option<Vec<f64>> {
        let d_raw = [d_output * self.output_scale];
        let d_pooled = match (&self.head_hidden, &cache.hidden) {
            (Some(d), Some(h)) => {
                let mut dh = self.head_out.backward(h, &d_raw, &mut grad.head_out);
                relu_backward(h, &mut dh);
                d.backward(&cache.pooled, &dh, grad.head_hidden.as_mut().expect("gradient mirrors head"))
            }
            _ => self.head_out.backward(&cache.pooled, &d_raw, &mut grad.head_out),
        };
        let channels = self.config.final_channels();
        let len = cache.final_len;
        let mut dcur = vec![0.0; channels * len];
        for c in 0..channels {
            dcur[c * len..(c + 1) * len].fill(d_pooled[c] / len as f64);
        }
        for i in (0..self.blocks.len()).rev() {
            let input = if i == 0 { &cache.stem } else { &cache.blocks[i - 1].out };
            dcur = self.blocks[i].backward_sample(input, &cache.blocks[i], &dcur, &mut grad.blocks[i]);
        }
        relu_backward(&cache.stem, &mut dcur);
        let len = self.config.input_length;
        if want_input {
            let mut dx = vec![0.0; len];
            self.stem.backward_sample(x, len, &dcur, &mut grad.stem, Some(&mut dx));
            Some(dx)
        } else {
            self.stem.backward_sample(x, len, &dcur, &mut grad.stem, None);
            None
        }
    }

    /// Predictions in years, one per batch element.
    pub fn forward(&self, batch: &Tensor) -> Result<Vec<f64>> {
        self.check_batch(batch)?;
        let preds: Vec<f64> =
            (0..batch.batch()).map(|b| self.to_years(self.forward_sample(batch.sample(b)).raw)).collect();
        debug_assert!(preds.iter().all(|p| p.is_finite()), "non-finite prediction");
        Ok(preds)
    }

    pub fn predict(&self, waveform: &[f64]) -> Result<f64> {
        let t = Tensor::from_waveforms(&[waveform])?;
        Ok(self.forward(&t)?[0])
    }

    fn to_years(&self, raw: f64) -> f64 {
        self.output_shift + self.output_scale * raw
    }

    /// Predictions and the parameter gradient of `sum_i upstream_i * pred_i`.
    pub fn vjp(&self, batch: &Tensor, upstream: &[f64]) -> Result<(Vec<f64>, ModelParams)> {
        self.check_batch(batch)?;
        if upstream.len() != batch.batch() {
            return invalid("upstream gradient length differs from batch size");
        }
        let mut grad = self.zeros_like();
        let mut preds = Vec::with_capacity(batch.batch());
        for (b, &u) in upstream.iter().enumerate() {
            let x = batch.sample(b);
            let cache = self.forward_sample(x);
            preds.push(self.to_years(cache.raw));
            self.backward_sample(x, &cache, u, &mut grad, false);
        }
        Ok((preds, grad))
    }

    /// Gradient of the prediction with respect to each input sample.
    pub fn input_gradient(&self, waveform: &[f64]) -> Result<Vec<f64>> {
        if waveform.len() != self.config.input_length {
            return invalid(format!("expected {} samples, got {}", self.config.input_length, waveform.len()));
        }
        let cache = self.forward_sample(waveform);
        let mut scratch = self.zeros_like();
        Ok(self.backward_sample(waveform, &cache, 1.0, &mut scratch, true).expect("input gradient requested"))
    }
}

pub(crate) struct SampleCache {
    stem: Vec<f64>,
    blocks: Vec<BlockCache>,
    #[allow(dead_code)]
    lens: Vec<usize>,
    final_len: usize,
    pooled: Vec<f64>,
    hidden: Option<Vec<f64>>,
    pub(crate) raw: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn default_parameter_count_matches_hand_count() {
        let p = ModelParams::zeros(&NetConfig::default()).unwrap();
        // stem 16*1*7 + 16
        let stem = 16 * 7 + 16;
        // stage 1, block 0: conv1 16->16 k5, conv2 16->16 k5, SE 16->4->16, 1x1 shortcut
        let conv16 = 16 * 16 * 5 + 16;
        let se16 = (4 * 16 + 4) + (16 * 4 + 16);
        let sc16 = 16 * 16 + 16;
        // stage 2, block 0: conv1 16->32, conv2 32->32, SE 32->8->32, shortcut 16->32
        let conv1_32 = 32 * 16 * 5 + 32;
        let conv32 = 32 * 32 * 5 + 32;
        let se32 = (8 * 32 + 8) + (32 * 8 + 32);
        let sc32 = 32 * 16 + 32;
        let head = 32 + 1;
        let expected = stem
            + (conv16 * 2 + se16 + sc16)
            + (conv16 * 2 + se16)
            + (conv1_32 + conv32 + se32 + sc32)
            + (conv32 * 2 + se32)
            + head;
        assert_eq!(expected, 25_609);
        assert_eq!(p.parameter_count(), expected);
        let from_specs: usize = p.param_specs().iter().map(|s| s.shape.iter().product::<usize>()).sum();
        assert_eq!(from_specs, expected);
    }

    #[test]
    fn specs_and_arrays_align() {
        let p = ModelParams::init(&NetConfig::tiny(), 3, 0.0, 1.0).unwrap();
        let specs = p.param_specs();
        let arrays = p.arrays();
        assert_eq!(specs.len(), arrays.len());
        for (s, a) in specs.iter().zip(arrays) {
            assert_eq!(s.shape.iter().product::<usize>(), a.len(), "{}", s.name);
        }
    }

    #[test]
    fn forward_shapes() {
        let p = ModelParams::init(&NetConfig::default(), 1, 60.0, 8.0).unwrap();
        for b in [1, 2, 64] {
            let preds = p.forward(&Tensor::zeros([b, 1, 100])).unwrap();
            assert_eq!(preds.len(), b);
        }
        assert!(p.forward(&Tensor::zeros([2, 1, 99])).is_err());
        assert!(p.forward(&Tensor::zeros([2, 2, 100])).is_err());
    }

    #[test]
    fn init_is_deterministic_and_f32_exact() {
        let a = ModelParams::init(&NetConfig::default(), 9, 0.0, 1.0).unwrap();
        let b = ModelParams::init(&NetConfig::default(), 9, 0.0, 1.0).unwrap();
        assert_eq!(a, b);
        assert!(a.arrays().iter().all(|arr| arr.iter().all(|v| *v == (*v as f32) as f64)));
        assert_ne!(a, ModelParams::init(&NetConfig::default(), 10, 0.0, 1.0).unwrap());
    }

    #[test]
    fn invalid_configs() {
        let mut c = NetConfig::default();
        c.se_reduction = 5;
        assert!(ModelParams::zeros(&c).is_err());
        let mut c = NetConfig::default();
        c.input_length = 3;
        assert!(c.validate().is_err());
        let mut c = NetConfig::default();
        c.kernel_size = 4;
        assert!(c.validate().is_err());
    }

    fn perturb_all(p: &mut ModelParams, rng: &mut ChaCha8Rng) {
        for arr in p.arrays_mut() {
            for v in arr.iter_mut() {
                *v = rng.random_range(-0.8..0.8);
            }
        }
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut p = ModelParams::init(&NetConfig::tiny(), 2, 0.0, 1.0).unwrap();
        perturb_all(&mut p, &mut rng);
        let x: Vec<f64> = (0..16).map(|_| rng.random_range(-2.0..2.0)).collect();
        let g = p.input_gradient(&x).unwrap();
        let h = 1e-6;
        for i in 0..16 {
            let mut up = x.clone();
            let mut dn = x.clone();
            up[i] += h;
            dn[i] -= h;
            let fd = (p.predict(&up).unwrap() - p.predict(&dn).unwrap()) / (2.0 * h);
            let rel = (g[i] - fd).abs() / g[i].abs().max(fd.abs()).max(1e-6);
            assert!(rel < 1e-4, "{i}: {} vs {fd}", g[i]);
        }
    }
}
