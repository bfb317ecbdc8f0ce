//! Two-pulse PPG waveform model.
//!
//! A beat is the sum of a systolic and a diastolic Gaussian pulse. With
//! increasing age the diastolic pulse moves toward the systolic one and
//! loses amplitude. Linear baseline drift and white noise are added before
//! z-scoring.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub const WAVEFORM_LENGTH: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pulse {
    /// Peak position as a fraction of the window.
    pub position: f64,
    pub amplitude: f64,
    /// Standard deviation as a fraction of the window.
    pub width: f64,
}

impl Pulse {
    fn value(&self, t: f64) -> f64 {
        self.amplitude * (-0.5 * ((t - self.position) / self.width).powi(2)).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MorphologyParams {
    pub systolic: Pulse,
    /// Diastolic pulse at `reference_age`.
    pub diastolic: Pulse,
    pub reference_age: f64,
    /// Change of diastolic position per year of effective age.
    pub diastolic_position_slope: f64,
    /// Change of diastolic amplitude per year of effective age.
    pub diastolic_amplitude_slope: f64,
    /// Maximum absolute end-to-end baseline drift.
    pub drift_amplitude: f64,
    pub noise_sigma: f64,
    /// Effective ages the model is valid for.
    pub age_range: (f64, f64),
    pub length: usize,
}

impl Default for MorphologyParams {
    fn default() -> Self {
        Self {
            systolic: Pulse { position: 0.2, amplitude: 1.0, width: 0.04 },
            diastolic: Pulse { position: 0.52, amplitude: 0.75, width: 0.05 },
            reference_age: 21.0,
            diastolic_position_slope: -0.002,
            diastolic_amplitude_slope: -0.004,
            drift_amplitude: 0.1,
            noise_sigma: 0.05,
            age_range: (10.0, 115.0),
            length: WAVEFORM_LENGTH,
        }
    }
}

impl MorphologyParams {
    pub fn noise_free(&self) -> Self {
        Self { drift_amplitude: 0.0, noise_sigma: 0.0, ..self.clone() }
    }

    pub fn diastolic_at(&self, age: f64) -> Pulse {
        let d = age - self.reference_age;
        Pulse {
            position: self.diastolic.position + self.diastolic_position_slope * d,
            amplitude: self.diastolic.amplitude + self.diastolic_amplitude_slope * d,
            width: self.diastolic.width,
        }
    }

    /// Checks the pulse invariants at both ends of the age range; the
    /// morphology is affine in age, so that covers the whole range.
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.age_range;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return invalid("age range must be finite and non-empty");
        }
        if self.length < 3 {
            return invalid("waveform needs at least 3 samples");
        }
        if !(self.noise_sigma >= 0.0 && self.drift_amplitude >= 0.0) {
            return invalid("noise and drift must be non-negative");
        }
        let s = self.systolic;
        for age in [lo, hi] {
            let d = self.diastolic_at(age);
            for p in [s, d] {
                if !(p.width > 0.0) {
                    return invalid("pulse widths must be positive");
                }
                if !(p.position > 0.0 && p.position < 1.0) {
                    return invalid(format!("pulse position {} outside (0, 1) at age {age}", p.position));
                }
                if !(p.amplitude >= 0.0) {
                    return invalid(format!("negative pulse amplitude at age {age}"));
                }
            }
            if !(s.position < d.position) {
                return invalid(format!("diastolic peak precedes systolic peak at age {age}"));
            }
        }
        Ok(())
    }

    /// The noise-free two-pulse template before normalization, sampled at
    /// `t_j = j / length`.
    pub fn template(&self, age: f64) -> Vec<f64> {
        let d = self.diastolic_at(age);
        (0..self.length)
            .map(|j| {
                let t = j as f64 / self.length as f64;
                self.systolic.value(t) + d.value(t)
            })
            .collect()
    }
}

/// Subtracts the mean and divides by the population standard deviation.
pub fn z_score(values: &mut [f64]) -> Result<()> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter_mut().for_each(|v| *v -= mean);
    let sd = (values.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
    if !(sd > 0.0) {
        return invalid("constant waveform cannot be normalized");
    }
    values.iter_mut().for_each(|v| *v /= sd);
    // A second centering pass removes the rounding residue of the first.
    let residue = values.iter().sum::<f64>() / n;
    values.iter_mut().for_each(|v| *v -= residue);
    Ok(())
}

pub fn synth_waveform<R: Rng + ?Sized>(effective_age: f64, params: &MorphologyParams, rng: &mut R) -> Result<Vec<f64>> {
    params.validate()?;
    let (lo, hi) = params.age_range;
    if !(effective_age >= lo && effective_age <= hi) {
        return invalid(format!("effective age {effective_age} outside [{lo}, {hi}]"));
    }
    let mut w = params.template(effective_age);
    let n = w.len() as f64;
    if params.drift_amplitude > 0.0 {
        let slope = rng.random_range(-params.drift_amplitude..=params.drift_amplitude);
        for (j, v) in w.iter_mut().enumerate() {
            *v += slope * (j as f64 / (n - 1.0) - 0.5);
        }
    }
    if params.noise_sigma > 0.0 {
        let noise = Normal::new(0.0, params.noise_sigma).expect("positive sigma");
        for v in w.iter_mut() {
            *v += noise.sample(rng);
        }
    }
    z_score(&mut w)?;
    Ok(w)
}

/// Distance in samples between the systolic maximum and the largest local
/// maximum after it.
pub fn peak_distance(waveform: &[f64]) -> Option<usize> {
    let first = crate::nn::saliency::argmax(waveform);
    (first + 1..waveform.len().saturating_sub(1))
        .filter(|&j| waveform[j] > waveform[j - 1] && waveform[j] >= waveform[j + 1])
        .max_by(|&a, &b| waveform[a].total_cmp(&waveform[b]))
        .map(|j| j - first)
}
