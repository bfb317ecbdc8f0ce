//! Layers of the residual squeeze-and-excitation regressor.
//!
//! Every layer works on one sample at a time, stored as a `(channels, length)`
//! row-major slab. The forward pass returns whatever the backward pass needs;
//! backward passes accumulate into a gradient layer of the same type.

use super::tensor::Tensor;
use crate::error::{invalid, Result};

pub(crate) fn relu_inplace(x: &mut [f64]) {
    for v in x {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Zeroes `grad` wherever the post-activation `out` is not positive.
pub(crate) fn relu_backward(out: &[f64], grad: &mut [f64]) {
    for (g, o) in grad.iter_mut().zip(out) {
        if *o <= 0.0 {
            *g = 0.0;
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// 1D cross-correlation with bias. Weight layout `(out, in, kernel)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl Conv1d {
    pub fn zeros(in_channels: usize, out_channels: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        Self {
            weight: vec![0.0; out_channels * in_channels * kernel],
            bias: vec![0.0; out_channels],
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.in_channels, self.out_channels, self.kernel, self.stride, self.padding)
    }

    pub fn output_length(&self, len: usize) -> Option<usize> {
        let padded = len + 2 * self.padding;
        if self.stride == 0 || padded < self.kernel {
            return None;
        }
        Some((padded - self.kernel) / self.stride + 1)
    }

    /// Output positions `t` for which input index `t * stride + k - pad` lies
    /// inside `0..len`.
    fn valid_range(&self, k: usize, len: usize, out_len: usize) -> std::ops::Range<usize> {
        let s = self.stride;
        let lo = if self.padding > k { (self.padding - k).div_ceil(s) } else { 0 };
        let hi = if len + self.padding > k { ((len + self.padding - k - 1) / s + 1).min(out_len) } else { 0 };
        lo..hi.max(lo)
    }

    pub(crate) fn forward_sample(&self, x: &[f64], len: usize) -> (Vec<f64>, usize) {
        let out_len = self.output_length(len).expect("validated conv shape");
        let mut out = vec![0.0; self.out_channels * out_len];
        let (s, kw) = (self.stride, self.kernel);
        for co in 0..self.out_channels {
            let row = &mut out[co * out_len..(co + 1) * out_len];
            row.fill(self.bias[co]);
            for ci in 0..self.in_channels {
                let xr = &x[ci * len..(ci + 1) * len];
                let wr = &self.weight[(co * self.in_channels + ci) * kw..][..kw];
                for (k, &w) in wr.iter().enumerate() {
                    let range = self.valid_range(k, len, out_len);
                    if range.is_empty() {
                        continue;
                    }
                    let start = range.start * s + k - self.padding;
                    if s == 1 {
                        let src = &xr[start..start + range.len()];
                        for (o, v) in row[range].iter_mut().zip(src) {
                            *o += w * v;
                        }
                    } else {
                        for (j, o) in row[range].iter_mut().enumerate() {
                            *o += w * xr[start + j * s];
                        }
                    }
                }
            }
        }
        (out, out_len)
    }

    pub(crate) fn backward_sample(
        &self,
        x: &[f64],
        len: usize,
        dout: &[f64],
        grad: &mut Conv1d,
        mut dx: Option<&mut [f64]>,
    ) {
        let out_len = dout.len() / self.out_channels;
        let (s, kw) = (self.stride, self.kernel);
        for co in 0..self.out_channels {
            let drow = &dout[co * out_len..(co + 1) * out_len];
            grad.bias[co] += drow.iter().sum::<f64>();
            for ci in 0..self.in_channels {
                let xr = &x[ci * len..(ci + 1) * len];
                let base = (co * self.in_channels + ci) * kw;
                for k in 0..kw {
                    let range = self.valid_range(k, len, out_len);
                    if range.is_empty() {
                        continue;
                    }
                    let start = range.start * s + k - self.padding;
                    let w = self.weight[base + k];
                    let mut acc = 0.0;
                    if s == 1 {
                        let src = &xr[start..start + range.len()];
                        for (d, v) in drow[range.clone()].iter().zip(src) {
                            acc += d * v;
                        }
                        if let Some(dx) = dx.as_deref_mut() {
                            let dst = &mut dx[ci * len + start..ci * len + start + range.len()];
                            for (o, d) in dst.iter_mut().zip(&drow[range]) {
                                *o += w * d;
                            }
                        }
                    } else {
                        for (j, d) in drow[range].iter().enumerate() {
                            let idx = start + j * s;
                            acc += d * xr[idx];
                            if let Some(dx) = dx.as_deref_mut() {
                                dx[ci * len + idx] += w * d;
                            }
                        }
                    }
                    grad.weight[base + k] += acc;
                }
            }
        }
    }

    fn check_input(&self, x: &Tensor) -> Result<usize> {
        if x.channels() != self.in_channels {
            return invalid(format!("conv expects {} input channels, got {}", self.in_channels, x.channels()));
        }
        match self.output_length(x.length()) {
            Some(l) => Ok(l),
            None => invalid(format!(
                "input length {} too short for kernel {} with padding {}",
                x.length(),
                self.kernel,
                self.padding
            )),
        }
    }
}

/// Batched [`Conv1d`] forward pass.
pub fn conv1d(x: &Tensor, conv: &Conv1d) -> Result<Tensor> {
    let out_len = conv.check_input(x)?;
    let mut data = Vec::with_capacity(x.batch() * conv.out_channels * out_len);
    for b in 0..x.batch() {
        data.extend(conv.forward_sample(x.sample(b), x.length()).0);
    }
    Tensor::new([x.batch(), conv.out_channels, out_len], data)
}

/// Fully connected layer, weight layout `(outputs, inputs)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub inputs: usize,
    pub outputs: usize,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { weight: vec![0.0; inputs * outputs], bias: vec![0.0; outputs], inputs, outputs }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.inputs, self.outputs)
    }

    pub(crate) fn forward(&self, x: &[f64]) -> Vec<f64> {
        (0..self.outputs)
            .map(|o| {
                let row = &self.weight[o * self.inputs..(o + 1) * self.inputs];
                self.bias[o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect()
    }

    pub(crate) fn backward(&self, x: &[f64], dout: &[f64], grad: &mut Dense) -> Vec<f64> {
        let mut dx = vec![0.0; self.inputs];
        for (o, &d) in dout.iter().enumerate() {
            grad.bias[o] += d;
            let row = &self.weight[o * self.inputs..(o + 1) * self.inputs];
            let grow = &mut grad.weight[o * self.inputs..(o + 1) * self.inputs];
            for i in 0..self.inputs {
                grow[i] += d * x[i];
                dx[i] += d * row[i];
            }
        }
        dx
    }
}

/// Squeeze-and-excitation channel gate: global average pool, reduce with
/// ReLU, expand with a logistic gate, then scale each channel.
#[derive(Debug, Clone, PartialEq)]
pub struct SqueezeExcite {
    pub reduce: Dense,
    pub expand: Dense,
}

#[derive(Debug, Clone)]
pub(crate) struct SeCache {
    pooled: Vec<f64>,
    hidden: Vec<f64>,
    pub(crate) gate: Vec<f64>,
}

impl SqueezeExcite {
    pub fn zeros(channels: usize, reduction: usize) -> Self {
        let hidden = channels / reduction;
        Self { reduce: Dense::zeros(channels, hidden), expand: Dense::zeros(hidden, channels) }
    }

    pub fn zeros_like(&self) -> Self {
        Self { reduce: self.reduce.zeros_like(), expand: self.expand.zeros_like() }
    }

    pub fn channels(&self) -> usize {
        self.reduce.inputs
    }

    pub(crate) fn forward_sample(&self, x: &[f64], len: usize) -> (Vec<f64>, SeCache) {
        let channels = self.channels();
        let pooled: Vec<f64> =
            (0..channels).map(|c| x[c * len..(c + 1) * len].iter().sum::<f64>() / len as f64).collect();
        let mut hidden = self.reduce.forward(&pooled);
        relu_inplace(&mut hidden);
        let gate: Vec<f64> = self.expand.forward(&hidden).into_iter().map(sigmoid).collect();
        let mut out = x.to_vec();
        for c in 0..channels {
            for v in &mut out[c * len..(c + 1) * len] {
                *v *= gate[c];
            }
        }
        (out, SeCache { pooled, hidden, gate })
    }

    pub(crate) fn backward_sample(
        &self,
        x: &[f64],
        len: usize,
        cache: &SeCache,
        dout: &[f64],
        grad: &mut SqueezeExcite,
    ) -> Vec<f64> {
        let channels = self.channels();
        let mut dx = vec![0.0; x.len()];
        let mut dgate_pre = vec![0.0; channels];
        for c in 0..channels {
            let g = cache.gate[c];
            let xs = &x[c * len..(c + 1) * len];
            let ds = &dout[c * len..(c + 1) * len];
            let mut dg = 0.0;
            for ((dxv, &d), &v) in dx[c * len..(c + 1) * len].iter_mut().zip(ds).zip(xs) {
                *dxv = d * g;
                dg += d * v;
            }
            dgate_pre[c] = dg * g * (1.0 - g);
        }
        let mut dhidden = self.expand.backward(&cache.hidden, &dgate_pre, &mut grad.expand);
        relu_backward(&cache.hidden, &mut dhidden);
        let dpooled = self.reduce.backward(&cache.pooled, &dhidden, &mut grad.reduce);
        for c in 0..channels {
            let share = dpooled[c] / len as f64;
            for v in &mut dx[c * len..(c + 1) * len] {
                *v += share;
            }
        }
        dx
    }

    /// Gate values for one sample, each in (0, 1).
    pub fn gate(&self, x: &[f64], len: usize) -> Vec<f64> {
        self.forward_sample(x, len).1.gate
    }
}

/// Batched [`SqueezeExcite`] forward pass.
pub fn se_block(x: &Tensor, se: &SqueezeExcite) -> Result<Tensor> {
    if x.channels() != se.channels() {
        return invalid(format!("SE block expects {} channels, got {}", se.channels(), x.channels()));
    }
    let mut data = Vec::with_capacity(x.data().len());
    for b in 0..x.batch() {
        data.extend(se.forward_sample(x.sample(b), x.length()).0);
    }
    Tensor::new(x.shape(), data)
}

/// `relu(se(conv2(relu(conv1(x)))) + shortcut(x))`, where the shortcut is
/// the identity or a strided 1x1 convolution when the shape changes.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualBlock {
    pub conv1: Conv1d,
    pub conv2: Conv1d,
    pub se: SqueezeExcite,
    pub shortcut: Option<Conv1d>,
}

#[derive(Debug, Clone)]
pub(crate) struct BlockCache {
    len: usize,
    out_len: usize,
    h1: Vec<f64>,
    h2: Vec<f64>,
    se: SeCache,
    pub(crate) out: Vec<f64>,
}

impl ResidualBlock {
    pub fn zeros(in_channels: usize, out_channels: usize, kernel: usize, stride: usize, se_reduction: usize) -> Self {
        let pad = kernel / 2;
        let shortcut = (in_channels != out_channels || stride != 1)
            .then(|| Conv1d::zeros(in_channels, out_channels, 1, stride, 0));
        Self {
            conv1: Conv1d::zeros(in_channels, out_channels, kernel, stride, pad),
            conv2: Conv1d::zeros(out_channels, out_channels, kernel, 1, pad),
            se: SqueezeExcite::zeros(out_channels, se_reduction),
            shortcut,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            conv1: self.conv1.zeros_like(),
            conv2: self.conv2.zeros_like(),
            se: self.se.zeros_like(),
            shortcut: self.shortcut.as_ref().map(Conv1d::zeros_like),
        }
    }

    pub fn in_channels(&self) -> usize {
        self.conv1.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.conv2.out_channels
    }

    pub(crate) fn forward_sample(&self, x: &[f64], len: usize) -> BlockCache {
        let (mut h1, out_len) = self.conv1.forward_sample(x, len);
        relu_inplace(&mut h1);
        let (h2, _) = self.conv2.forward_sample(&h1, out_len);
        let (mut out, se) = self.se.forward_sample(&h2, out_len);
        match &self.shortcut {
            Some(conv) => {
                let (sc, _) = conv.forward_sample(x, len);
                for (o, s) in out.iter_mut().zip(&sc) {
                    *o += s;
                }
            }
            None => {
                for (o, s) in out.iter_mut().zip(x) {
                    *o += s;
                }
            }
        }
        relu_inplace(&mut out);
        BlockCache { len, out_len, h1, h2, se, out }
    }

    pub(crate) fn backward_sample(
        &self,
        x: &[f64],
        cache: &BlockCache,
        dout: &[f64],
        grad: &mut ResidualBlock,
    ) -> Vec<f64> {
        let mut dpre = dout.to_vec();
        relu_backward(&cache.out, &mut dpre);
        let mut dx = vec![0.0; x.len()];
        match &self.shortcut {
            Some(conv) => {
                let g = grad.shortcut.as_mut().expect("gradient mirrors shortcut");
                conv.backward_sample(x, cache.len, &dpre, g, Some(&mut dx));
            }
            None => dx.copy_from_slice(&dpre),
        }
        let dh2 = self.se.backward_sample(&cache.h2, cache.out_len, &cache.se, &dpre, &mut grad.se);
        let mut dh1 = vec![0.0; cache.h1.len()];
        self.conv2.backward_sample(&cache.h1, cache.out_len, &dh2, &mut grad.conv2, Some(&mut dh1));
        relu_backward(&cache.h1, &mut dh1);
        self.conv1.backward_sample(x, cache.len, &dh1, &mut grad.conv1, Some(&mut dx));
        dx
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.channels() != self.in_channels() {
            return invalid(format!("residual block expects {} channels, got {}", self.in_channels(), x.channels()));
        }
        if self.conv1.output_length(x.length()).is_none() {
            return invalid("input too short for the residual block kernel");
        }
        Ok(())
    }

    /// Input gradient and parameter gradients for upstream gradient `dy`.
    pub fn vjp(&self, x: &Tensor, dy: &Tensor) -> Result<(Tensor, ResidualBlock)> {
        self.check_input(x)?;
        let mut grad = self.zeros_like();
        let mut dx = Tensor::zeros(x.shape());
        for b in 0..x.batch() {
            let cache = self.forward_sample(x.sample(b), x.length());
            if dy.batch() != x.batch() || dy.sample(b).len() != cache.out.len() {
                return invalid("upstream gradient shape does not match block output");
            }
            let g = self.backward_sample(x.sample(b), &cache, dy.sample(b), &mut grad);
            dx.sample_mut(b).copy_from_slice(&g);
        }
        Ok((dx, grad))
    }
}

/// Batched [`ResidualBlock`] forward pass.
pub fn residual_block(x: &Tensor, block: &ResidualBlock) -> Result<Tensor> {
    block.check_input(x)?;
    let mut data = Vec::new();
    let mut out_len = 0;
    for b in 0..x.batch() {
        let cache = block.forward_sample(x.sample(b), x.length());
        out_len = cache.out_len;
        data.extend(cache.out);
    }
    Tensor::new([x.batch(), block.out_channels(), out_len], data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    /// Direct definition, one output element at a time.
    fn naive_conv(x: &[f64], cin: usize, len: usize, c: &Conv1d) -> Vec<f64> {
        let out_len = (len + 2 * c.padding - c.kernel) / c.stride + 1;
        let mut out = vec![0.0; c.out_channels * out_len];
        for co in 0..c.out_channels {
            for t in 0..out_len {
                let mut acc = c.bias[co];
                for ci in 0..cin {
                    for k in 0..c.kernel {
                        let pos = (t * c.stride + k) as isize - c.padding as isize;
                        if pos >= 0 && (pos as usize) < len {
                            acc += c.weight[(co * cin + ci) * c.kernel + k] * x[ci * len + pos as usize];
                        }
                    }
                }
                out[co * out_len + t] = acc;
            }
        }
        out
    }

    #[test]
    fn identity_kernel() {
        let mut c = Conv1d::zeros(1, 1, 3, 1, 1);
        c.weight[1] = 1.0;
        let x = Tensor::new([1, 1, 5], vec![1.0, -2.0, 3.0, 4.0, 0.5]).unwrap();
        assert_eq!(conv1d(&x, &c).unwrap(), x);
    }

    #[test]
    fn ones_kernel_hand_convolution() {
        let mut c = Conv1d::zeros(1, 1, 3, 1, 1);
        c.weight.fill(1.0);
        let x = Tensor::new([1, 1, 4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(conv1d(&x, &c).unwrap().data(), &[3.0, 6.0, 9.0, 7.0]);
    }

    #[test]
    fn conv_matches_naive_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (stride, pad, k) in [(1, 2, 5), (2, 2, 5), (2, 0, 1), (1, 0, 3), (3, 1, 4)] {
            let mut c = Conv1d::zeros(3, 4, k, stride, pad);
            c.weight = random_vec(&mut rng, c.weight.len());
            c.bias = random_vec(&mut rng, 4);
            let x = Tensor::new([2, 3, 16], random_vec(&mut rng, 96)).unwrap();
            let y = conv1d(&x, &c).unwrap();
            for b in 0..2 {
                let oracle = naive_conv(x.sample(b), 3, 16, &c);
                for (a, o) in y.sample(b).iter().zip(&oracle) {
                    assert!((a - o).abs() < 1e-12);
                }
            }
            assert_eq!(y.length(), (16 + 2 * pad - k) / stride + 1);
        }
    }

    #[test]
    fn conv_shape_errors() {
        let c = Conv1d::zeros(2, 2, 3, 1, 1);
        assert!(conv1d(&Tensor::zeros([1, 3, 8]), &c).is_err());
        let c = Conv1d::zeros(1, 1, 9, 1, 0);
        assert!(conv1d(&Tensor::zeros([1, 1, 4]), &c).is_err());
    }

    #[test]
    fn zero_se_halves_input() {
        let se = SqueezeExcite::zeros(4, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Tensor::new([1, 4, 6], random_vec(&mut rng, 24)).unwrap();
        let y = se_block(&x, &se).unwrap();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert_eq!(*a, b / 2.0);
        }
    }

    #[test]
    fn saturated_gate_passes_input() {
        let mut se = SqueezeExcite::zeros(4, 2);
        se.expand.bias.fill(40.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Tensor::new([2, 4, 6], random_vec(&mut rng, 48)).unwrap();
        let y = se_block(&x, &se).unwrap();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn se_matches_scalar_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut se = SqueezeExcite::zeros(4, 2);
        se.reduce.weight = random_vec(&mut rng, 8);
        se.reduce.bias = random_vec(&mut rng, 2);
        se.expand.weight = random_vec(&mut rng, 8);
        se.expand.bias = random_vec(&mut rng, 4);
        let x: Vec<f64> = random_vec(&mut rng, 20);
        let y = se_block(&Tensor::new([1, 4, 5], x.clone()).unwrap(), &se).unwrap();
        for c in 0..4 {
            let mut gate_pre = se.expand.bias[c];
            for h in 0..2 {
                let mut hid = se.reduce.bias[h];
                for cc in 0..4 {
                    let mean: f64 = x[cc * 5..cc * 5 + 5].iter().sum::<f64>() / 5.0;
                    hid += se.reduce.weight[h * 4 + cc] * mean;
                }
                gate_pre += se.expand.weight[c * 2 + h] * hid.max(0.0);
            }
            let gate = 1.0 / (1.0 + (-gate_pre).exp());
            assert!(gate > 0.0 && gate < 1.0);
            for t in 0..5 {
                assert!((y.data()[c * 5 + t] - x[c * 5 + t] * gate).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_branch_block_is_relu_of_shortcut() {
        let block = ResidualBlock::zeros(4, 4, 3, 1, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Tensor::new([1, 4, 8], random_vec(&mut rng, 32)).unwrap();
        let y = residual_block(&x, &block).unwrap();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert_eq!(*a, b.max(0.0));
        }
    }

    #[test]
    fn strided_block_halves_length() {
        let block = ResidualBlock::zeros(4, 8, 5, 2, 2);
        let y = residual_block(&Tensor::zeros([3, 4, 16]), &block).unwrap();
        assert_eq!(y.shape(), [3, 8, 8]);
        assert!(residual_block(&Tensor::zeros([1, 3, 16]), &block).is_err());
    }

    fn randomize_block(block: &mut ResidualBlock, rng: &mut ChaCha8Rng) {
        for v in [
            &mut block.conv1.weight,
            &mut block.conv1.bias,
            &mut block.conv2.weight,
            &mut block.conv2.bias,
            &mut block.se.reduce.weight,
            &mut block.se.reduce.bias,
            &mut block.se.expand.weight,
            &mut block.se.expand.bias,
        ] {
            for x in v.iter_mut() {
                *x = rng.random_range(-0.7..0.7);
            }
        }
        if let Some(sc) = block.shortcut.as_mut() {
            for x in sc.weight.iter_mut().chain(sc.bias.iter_mut()) {
                *x = rng.random_range(-0.7..0.7);
            }
        }
    }

    #[test]
    fn block_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for (cin, cout, stride) in [(4, 4, 1), (2, 4, 2)] {
            let mut block = ResidualBlock::zeros(cin, cout, 3, stride, 2);
            randomize_block(&mut block, &mut rng);
            let x = Tensor::new([1, cin, 10], random_vec(&mut rng, cin * 10)).unwrap();
            let y = residual_block(&x, &block).unwrap();
            let dy = Tensor::new(y.shape(), random_vec(&mut rng, y.data().len())).unwrap();
            let objective = |b: &ResidualBlock, x: &Tensor| -> f64 {
                let y = residual_block(x, b).unwrap();
                y.data().iter().zip(dy.data()).map(|(a, d)| a * d).sum()
            };
            let (dx, grad) = block.vjp(&x, &dy).unwrap();
            let h = 1e-6;
            let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-6);
            for i in 0..x.data().len() {
                let mut up = x.clone().into_data();
                let mut dn = up.clone();
                up[i] += h;
                dn[i] -= h;
                let fd = (objective(&block, &Tensor::new(x.shape(), up).unwrap())
                    - objective(&block, &Tensor::new(x.shape(), dn).unwrap()))
                    / (2.0 * h);
                assert!(rel(dx.data()[i], fd) < 1e-4, "dx[{i}]: {} vs {fd}", dx.data()[i]);
            }
            for i in 0..block.conv1.weight.len() {
                let mut up = block.clone();
                let mut dn = block.clone();
                up.conv1.weight[i] += h;
                dn.conv1.weight[i] -= h;
                let fd = (objective(&up, &x) - objective(&dn, &x)) / (2.0 * h);
                assert!(rel(grad.conv1.weight[i], fd) < 1e-4);
            }
            for i in 0..block.se.reduce.weight.len() {
                let mut up = block.clone();
                let mut dn = block.clone();
                up.se.reduce.weight[i] += h;
                dn.se.reduce.weight[i] -= h;
                let fd = (objective(&up, &x) - objective(&dn, &x)) / (2.0 * h);
                assert!(rel(grad.se.reduce.weight[i], fd) < 1e-4);
            }
        }
    }
}
