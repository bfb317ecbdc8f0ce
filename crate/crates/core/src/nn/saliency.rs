//! Input-gradient saliency maps.

use super::model::ModelParams;
use crate::error::{invalid, Result};

pub const DEFAULT_SIGMA: f64 = 2.0;

/// Gaussian smoothing with a kernel truncated at 3 sigma. Near the edges the
/// kernel is renormalized over the samples that exist, so a constant signal
/// stays constant. `sigma == 0` returns the input unchanged.
pub fn gaussian_smooth(values: &[f64], sigma: f64) -> Result<Vec<f64>> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return invalid("smoothing sigma must be finite and non-negative");
    }
    if sigma == 0.0 {
        return Ok(values.to_vec());
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius).map(|d| (-0.5 * (d as f64 / sigma).powi(2)).exp()).collect();
    let n = values.len() as isize;
    Ok((0..n)
        .map(|i| {
            let (mut acc, mut norm) = (0.0, 0.0);
            for (k, w) in kernel.iter().enumerate() {
                let j = i + k as isize - radius;
                if (0..n).contains(&j) {
                    acc += w * values[j as usize];
                    norm += w;
                }
            }
            acc / norm
        })
        .collect())
}

/// Linear rescale to [0, 1]; an all-equal vector maps to zeros.
pub fn rescale_unit(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| (v - lo) / (hi - lo)).collect()
}

/// `|d prediction / d input|` per sample point, before smoothing.
pub fn raw_saliency(params: &ModelParams, waveform: &[f64]) -> Result<Vec<f64>> {
    Ok(params.input_gradient(waveform)?.into_iter().map(f64::abs).collect())
}

/// Smoothed saliency rescaled to [0, 1]. A network that ignores its input
/// yields all zeros.
pub fn saliency(params: &ModelParams, waveform: &[f64], sigma: f64) -> Result<Vec<f64>> {
    let raw = raw_saliency(params, waveform)?;
    Ok(rescale_unit(&gaussian_smooth(&raw, sigma)?))
}

/// Pointwise mean of the saliency maps of several waveforms.
pub fn mean_saliency(params: &ModelParams, waveforms: &[Vec<f64>], sigma: f64) -> Result<Vec<f64>> {
    if waveforms.is_empty() {
        return invalid("no waveforms to average");
    }
    let mut acc = vec![0.0; params.config.input_length];
    for w in waveforms {
        for (a, s) in acc.iter_mut().zip(saliency(params, w, sigma)?) {
            *a += s;
        }
    }
    let n = waveforms.len() as f64;
    Ok(acc.into_iter().map(|a| a / n).collect())
}

pub fn argmax(values: &[f64]) -> usize {
    values.iter().enumerate().fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best }).0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::model::NetConfig;

    fn wave(len: usize) -> Vec<f64> {
        (0..len).map(|i| (i as f64 * 0.7).sin() + 0.1 * i as f64).collect()
    }

    #[test]
    fn ignoring_input_gives_zero_saliency() {
        let cfg = NetConfig::tiny();
        let mut p = ModelParams::init(&cfg, 3, 50.0, 10.0).unwrap();
        p.stem.weight.fill(0.0);
        let s = saliency(&p, &wave(cfg.input_length), DEFAULT_SIGMA).unwrap();
        assert!(s.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn raw_saliency_matches_finite_differences() {
        let cfg = NetConfig::tiny();
        let p = ModelParams::init(&cfg, 5, 0.0, 1.0).unwrap();
        let x = wave(cfg.input_length);
        let raw = raw_saliency(&p, &x).unwrap();
        let h = 1e-6;
        for i in 0..x.len() {
            let (mut up, mut down) = (x.clone(), x.clone());
            up[i] += h;
            down[i] -= h;
            let fd = ((p.predict(&up).unwrap() - p.predict(&down).unwrap()) / (2.0 * h)).abs();
            let rel = (fd - raw[i]).abs() / fd.abs().max(raw[i]).max(1e-6);
            assert!(rel < 1e-4, "sample {i}: fd {fd} analytic {}", raw[i]);
        }
    }

    #[test]
    fn smoothing_keeps_unimodal_argmax() {
        for peak in [0usize, 3, 20, 50, 97, 99] {
            for width in [1.0, 4.0, 10.0] {
                let g: Vec<f64> = (0..100).map(|i| (-0.5 * ((i as f64 - peak as f64) / width).powi(2)).exp()).collect();
                let s = gaussian_smooth(&g, DEFAULT_SIGMA).unwrap();
                assert!(argmax(&s).abs_diff(peak) <= 2, "peak {peak} width {width}");
            }
        }
    }

    #[test]
    fn smoothing_preserves_constants_and_rescale_bounds() {
        let s = gaussian_smooth(&[2.0; 10], 2.0).unwrap();
        assert!(s.iter().all(|v| (v - 2.0).abs() < 1e-12));
        let r = rescale_unit(&[1.0, 3.0, 2.0]);
        assert_eq!(r, vec![0.0, 1.0, 0.5]);
        assert!(gaussian_smooth(&[1.0], -1.0).is_err());
    }
}
