//! Cohort sampling: ages, latent vascular-age offsets, covariates and
//! outcomes.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use super::waveform::{synth_waveform, MorphologyParams};
use crate::error::{invalid, Result};
use crate::rng;

/// One PPG recording of one subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpgRecord {
    pub id: u64,
    /// 0 for a single or first visit, 1 for the follow-up visit.
    pub visit: u8,
    /// Calendar age in whole years at this visit.
    pub age: f64,
    /// Hidden ground truth: effective age minus calendar age.
    pub latent_offset: f64,
    pub waveform: Vec<f64>,
    /// Years from this visit to the event or censoring.
    pub event_time: f64,
    pub event: u8,
    pub covariates: BTreeMap<String, f64>,
}

/// Mixture of a truncated normal core and two uniform tails, on whole
/// years.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgeSampler {
    pub low_tail: (i64, i64),
    pub low_weight: f64,
    pub core: (i64, i64),
    pub core_mean: f64,
    pub core_sd: f64,
    pub high_tail: (i64, i64),
    pub high_weight: f64,
}

impl Default for AgeSampler {
    fn default() -> Self {
        Self {
            low_tail: (37, 49),
            low_weight: 0.08,
            core: (50, 69),
            core_mean: 59.5,
            core_sd: 6.0,
            high_tail: (70, 87),
            high_weight: 0.08,
        }
    }
}

impl AgeSampler {
    pub fn validate(&self) -> Result<()> {
        let w = [self.low_weight, self.high_weight];
        if w.iter().any(|p| !(0.0..=1.0).contains(p)) || self.low_weight + self.high_weight > 1.0 {
            return invalid("tail weights must be probabilities summing to at most 1");
        }
        for (lo, hi) in [self.low_tail, self.core, self.high_tail] {
            if lo > hi {
                return invalid("empty age interval");
            }
        }
        if !(self.core_sd > 0.0) {
            return invalid("core standard deviation must be positive");
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let uniform = |(lo, hi): (i64, i64), rng: &mut R| rng.random_range(lo..=hi) as f64;
        if u < self.low_weight {
            return uniform(self.low_tail, rng);
        }
        if u < self.low_weight + self.high_weight {
            return uniform(self.high_tail, rng);
        }
        // Rejection keeps exact truncation; the core holds most of the mass,
        // so this loop rarely repeats.
        let normal = Normal::new(self.core_mean, self.core_sd).expect("validated sd");
        let (lo, hi) = (self.core.0 as f64 - 0.5, self.core.1 as f64 + 0.5);
        loop {
            let x = normal.sample(rng);
            if x >= lo && x < hi {
                return x.round().clamp(self.core.0 as f64, self.core.1 as f64);
            }
        }
    }
}

/// Exponential event-time model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HazardModel {
    /// Events per year for a reference subject: age 60, zero offset, all
    /// binary risk factors absent.
    pub baseline_rate: f64,
    pub log_hr_offset: f64,
    pub log_hr_age: f64,
    /// Log hazard ratios of binary covariates present in the record.
    pub log_hr_covariates: BTreeMap<String, f64>,
    /// Administrative censoring horizon in years.
    pub horizon: f64,
}

impl Default for HazardModel {
    fn default() -> Self {
        Self {
            baseline_rate: 0.02,
            log_hr_offset: 0.05,
            log_hr_age: 0.05,
            log_hr_covariates: [("sex", 0.3), ("smoking", 0.4), ("diabetes", 0.4), ("hypertension", 0.2)]
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
            horizon: 12.0,
        }
    }
}

impl HazardModel {
    pub fn rate(&self, age: f64, offset: f64, covariates: &BTreeMap<String, f64>) -> f64 {
        let mut lp = self.log_hr_offset * offset + self.log_hr_age * (age - 60.0);
        for (name, beta) in &self.log_hr_covariates {
            lp += beta * covariates.get(name).copied().unwrap_or(0.0);
        }
        self.baseline_rate * lp.exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CohortSpec {
    pub n_subjects: usize,
    pub ages: AgeSampler,
    pub offset_sigma: f64,
    pub hazard: HazardModel,
    /// Fraction of subjects with an earlier second recording.
    pub serial_fraction: f64,
    /// Years between the two recordings of a serial subject.
    pub visit_interval: f64,
    /// Standard deviation of the offset change between recordings.
    pub offset_drift_sigma: f64,
    pub morphology: MorphologyParams,
}

impl Default for CohortSpec {
    fn default() -> Self {
        Self {
            n_subjects: 5000,
            ages: AgeSampler::default(),
            offset_sigma: 6.0,
            hazard: HazardModel::default(),
            serial_fraction: 0.2,
            visit_interval: 4.0,
            offset_drift_sigma: 3.0,
            morphology: MorphologyParams::default(),
        }
    }
}

impl CohortSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_subjects == 0 {
            return invalid("cohort needs at least one subject");
        }
        self.ages.validate()?;
        self.morphology.validate()?;
        if !(0.0..=1.0).contains(&self.serial_fraction) {
            return invalid("serial fraction must lie in [0, 1]");
        }
        if !(self.offset_sigma >= 0.0 && self.offset_drift_sigma >= 0.0 && self.visit_interval >= 0.0) {
            return invalid("offset sigmas and visit interval must be non-negative");
        }
        if !(self.hazard.baseline_rate > 0.0 && self.hazard.horizon > 0.0) {
            return invalid("baseline rate and horizon must be positive");
        }
        Ok(())
    }

    /// Number of serial subjects: exactly `round(serial_fraction * n)`.
    pub fn serial_count(&self) -> usize {
        (self.serial_fraction * self.n_subjects as f64).round() as usize
    }
}

fn bernoulli<R: Rng + ?Sized>(rng: &mut R, p: f64) -> f64 {
    f64::from(u8::from(rng.random::<f64>() < p))
}

fn sample_covariates<R: Rng + ?Sized>(rng: &mut R, age: f64) -> BTreeMap<String, f64> {
    let normal = |rng: &mut R, mean: f64, sd: f64| Normal::new(mean, sd).expect("positive sd").sample(rng);
    let a = age - 60.0;
    let sex = bernoulli(rng, 0.45);
    let bmi = normal(rng, 27.0, 4.5).clamp(16.0, 50.0);
    let ethnicity = bernoulli(rng, 0.06);
    let smoking = bernoulli(rng, 0.1);
    let hypertension = bernoulli(rng, 1.0 / (1.0 + (-(-0.6 + 0.06 * a)).exp()));
    let diabetes = bernoulli(rng, 0.05 + 0.002 * a.max(-20.0));
    let dyslipidemia = bernoulli(rng, 0.2);
    let ckd = bernoulli(rng, 0.03);
    let sbp = normal(rng, 135.0 + 0.5 * a + 10.0 * hypertension, 15.0);
    let antihypertensive = hypertension * bernoulli(rng, 0.6);
    let total_chol = normal(rng, 5.7, 1.1).max(2.0);
    let hdl = normal(rng, 1.45 - 0.2 * sex, 0.35).max(0.3);
    [
        ("antihypertensive", antihypertensive),
        ("bmi", bmi),
        ("ckd", ckd),
        ("diabetes", diabetes),
        ("dyslipidemia", dyslipidemia),
        ("ethnicity", ethnicity),
        ("hdl", hdl),
        ("hypertension", hypertension),
        ("sbp", sbp),
        ("sex", sex),
        ("smoking", smoking),
        ("total_chol", total_chol),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

/// Generates all records of one subject from its own stream. Serial
/// subjects get an earlier recording `visit_interval` years before the
/// baseline one; follow-up starts at the later recording.
fn sample_subject(spec: &CohortSpec, id: u64, serial: bool, mut rng: ChaCha8Rng) -> Result<Vec<PpgRecord>> {
    let (lo, hi) = spec.morphology.age_range;
    let age = spec.ages.sample(&mut rng);
    let offset = if spec.offset_sigma > 0.0 {
        Normal::new(0.0, spec.offset_sigma).expect("positive sigma").sample(&mut rng)
    } else {
        0.0
    };
    // Keep the effective age inside the morphology's valid range.
    let offset = (age + offset).clamp(lo, hi) - age;
    let covariates = sample_covariates(&mut rng, age);

    let rate = spec.hazard.rate(age, offset, &covariates);
    let t: f64 = Exp::new(rate).expect("positive rate").sample(&mut rng);
    let (event_time, event) = if t <= spec.hazard.horizon { (t, 1) } else { (spec.hazard.horizon, 0) };

    let mut records = Vec::with_capacity(2);
    if serial {
        let drift = if spec.offset_drift_sigma > 0.0 {
            Normal::new(0.0, spec.offset_drift_sigma).expect("positive sigma").sample(&mut rng)
        } else {
            0.0
        };
        let early_age = age - spec.visit_interval;
        let early_offset = (early_age + offset - drift).clamp(lo, hi) - early_age;
        records.push(PpgRecord {
            id,
            visit: 0,
            age: early_age,
            latent_offset: early_offset,
            waveform: synth_waveform(early_age + early_offset, &spec.morphology, &mut rng)?,
            event_time: event_time + spec.visit_interval,
            event,
            covariates: covariates.clone(),
        });
    }
    records.push(PpgRecord {
        id,
        visit: u8::from(serial),
        age,
        latent_offset: offset,
        waveform: synth_waveform(age + offset, &spec.morphology, &mut rng)?,
        event_time,
        event,
        covariates,
    });
    Ok(records)
}

/// Samples the cohort. Subject `i` draws from the stream `(seed, "subject",
/// i)`, so any subject can be regenerated alone. The serial subjects are a
/// seeded choice of exactly [`CohortSpec::serial_count`] ids.
pub fn sample_cohort(spec: &CohortSpec, seed: u64) -> Result<Vec<PpgRecord>> {
    spec.validate()?;
    let n = spec.n_subjects;
    let mut serial = vec![false; n];
    let chosen = rand::seq::index::sample(&mut rng::stream(seed, "serial", 0), n, spec.serial_count());
    for i in chosen {
        serial[i] = true;
    }
    let mut records = Vec::with_capacity(n + spec.serial_count());
    for (i, &is_serial) in serial.iter().enumerate() {
        let stream = rng::stream(seed, "subject", i as u64);
        records.extend(sample_subject(spec, i as u64, is_serial, stream)?);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn no_effects() -> HazardModel {
        HazardModel { log_hr_age: 0.0, log_hr_covariates: BTreeMap::new(), ..HazardModel::default() }
    }

    #[test]
    fn zero_offset_sigma_gives_calendar_ages_and_the_model_event_rate() {
        let spec = CohortSpec {
            n_subjects: 4000,
            offset_sigma: 0.0,
            serial_fraction: 0.0,
            hazard: no_effects(),
            ..CohortSpec::default()
        };
        let records = sample_cohort(&spec, 3).unwrap();
        assert!(records.iter().all(|r| r.latent_offset == 0.0));
        let rate = records.iter().map(|r| f64::from(r.event)).sum::<f64>() / records.len() as f64;
        let h = &spec.hazard;
        let p = 1.0 - (-h.baseline_rate * h.horizon).exp();
        let se = (p * (1.0 - p) / records.len() as f64).sqrt();
        assert!((rate - p).abs() < 3.0 * se, "rate {rate} vs {p}");
    }

    #[test]
    fn age_deciles_two_to_nine_fall_in_the_core() {
        let sampler = AgeSampler::default();
        let mut r = rng::stream(1, "ages", 0);
        let mut ages: Vec<f64> = (0..100_000).map(|_| sampler.sample(&mut r)).collect();
        ages.sort_by(f64::total_cmp);
        // Empirical decile boundaries 10%..90%.
        for k in 1..=9 {
            let q = ages[k * ages.len() / 10];
            assert!((50.0..=69.0).contains(&q), "decile {k} at {q}");
        }
        assert!(ages[0] >= 37.0 && ages[ages.len() - 1] <= 87.0);
        assert!(ages.iter().all(|a| a.fract() == 0.0));
    }

    #[test]
    fn single_subject_cohorts() {
        let mut spec = CohortSpec { n_subjects: 1, serial_fraction: 0.0, ..CohortSpec::default() };
        assert_eq!(sample_cohort(&spec, 0).unwrap().len(), 1);
        spec.serial_fraction = 1.0;
        let r = sample_cohort(&spec, 0).unwrap();
        assert_eq!(r.len(), 2);
        assert_eq!((r[0].visit, r[1].visit), (0, 1));
        assert_eq!(r[1].age - r[0].age, spec.visit_interval);
        assert!((r[0].event_time - r[1].event_time - spec.visit_interval).abs() < 1e-12);
    }

    #[test]
    fn serial_count_is_exact_and_cohort_is_deterministic() {
        let spec = CohortSpec { n_subjects: 1000, serial_fraction: 0.2, ..CohortSpec::default() };
        let a = sample_cohort(&spec, 5).unwrap();
        assert_eq!(a.iter().filter(|r| r.visit == 1).count(), 200);
        assert_eq!(a.len(), 1200);
        assert_eq!(a, sample_cohort(&spec, 5).unwrap());
        assert!(a.iter().all(|r| r.event_time > 0.0 && r.waveform.len() == 100));
    }
}
