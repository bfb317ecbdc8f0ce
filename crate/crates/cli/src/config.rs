//! Experiment configuration: one TOML file with a section per module.
//!
//! ```toml
//! seed = 7
//! out_dir = "run"
//!
//! [cohort]            # synthetic cohort and outcome model
//! n_subjects = 5000
//!
//! [split]
//! ratios = [8.0, 1.0, 1.0]
//!
//! [net]               # every field required when the section is present
//! [train]             # loss, epochs, batch_size, kde_bandwidth, label_range, ...
//! [analysis]          # threshold = "9" | "15" | "sd", knots, gap grid
//! [saliency]          # probe ages and smoothing
//! ```
//!
//! Missing sections and fields take the defaults of [`ExperimentConfig`].

use std::path::{Path, PathBuf};

use ppgage_core::nn::{LossKind, NetConfig, TrainConfig};
use ppgage_core::survival::ThresholdMode;
use ppgage_core::synth::CohortSpec;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{io_err, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Master seed; every stage derives its own stream from it.
    pub seed: u64,
    pub out_dir: PathBuf,
    pub cohort: CohortSpec,
    pub split: SplitConfig,
    pub net: NetConfig,
    pub train: TrainConfig,
    pub analysis: AnalysisConfig,
    pub saliency: SaliencyConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out_dir: PathBuf::from("ppgage-run"),
            cohort: CohortSpec::default(),
            split: SplitConfig::default(),
            net: NetConfig::small(),
            train: TrainConfig::default(),
            analysis: AnalysisConfig::default(),
            saliency: SaliencyConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    /// Train, selection and holdout shares.
    pub ratios: [f64; 3],
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { ratios: [8.0, 1.0, 1.0] }
    }
}

/// Which subjects enter the survival analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnalysisSubjects {
    All,
    Holdout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    pub threshold: ThresholdMode,
    pub subjects: AnalysisSubjects,
    /// Knots of the spline hazard curve (3 to 7).
    pub knots: usize,
    /// Gap values, `[from, to, step]`, at which the curve is reported.
    pub gap_grid: [f64; 3],
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            threshold: ThresholdMode::Fixed(9.0),
            subjects: AnalysisSubjects::All,
            knots: 4,
            gap_grid: [-20.0, 20.0, 1.0],
        }
    }
}

impl AnalysisConfig {
    pub fn grid(&self) -> Vec<f64> {
        let [from, to, step] = self.gap_grid;
        let n = ((to - from) / step + 1e-9).floor() as usize + 1;
        (0..n).map(|i| from + i as f64 * step).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SaliencyConfig {
    pub probe_ages: Vec<f64>,
    /// Records within this many years of a probe age are averaged.
    pub window: f64,
    pub max_waveforms: usize,
    pub sigma: f64,
}

impl Default for SaliencyConfig {
    fn default() -> Self {
        Self {
            probe_ages: vec![40.0, 60.0, 80.0],
            window: 2.0,
            max_waveforms: 200,
            sigma: ppgage_core::nn::saliency::DEFAULT_SIGMA,
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub loss: Option<LossKind>,
    pub threshold: Option<ThresholdMode>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(dir) = &o.out_dir {
            self.out_dir = dir.clone();
        }
        if let Some(loss) = o.loss {
            self.train.loss = loss;
        }
        if let Some(t) = o.threshold {
            self.analysis.threshold = t;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |what: &str, e: ppgage_core::Error| Error::Config(format!("[{what}] {e}"));
        self.cohort.validate().map_err(|e| wrap("cohort", e))?;
        self.net.validate().map_err(|e| wrap("net", e))?;
        self.train.validate().map_err(|e| wrap("train", e))?;
        if self.net.input_length != self.cohort.morphology.length {
            return Err(Error::Config(format!(
                "[net] input_length {} differs from waveform length {}",
                self.net.input_length, self.cohort.morphology.length
            )));
        }
        if self.split.ratios.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(Error::Config("[split] ratios must be positive".into()));
        }
        if !(3..=7).contains(&self.analysis.knots) {
            return Err(Error::Config("[analysis] knots must lie in 3..=7".into()));
        }
        let [from, to, step] = self.analysis.gap_grid;
        if !(step > 0.0 && from <= to && from.is_finite() && to.is_finite()) {
            return Err(Error::Config("[analysis] gap_grid must be [from <= to, step > 0]".into()));
        }
        if !(self.saliency.sigma >= 0.0 && self.saliency.window >= 0.0) || self.saliency.max_waveforms == 0 {
            return Err(Error::Config(
                "[saliency] sigma and window must be non-negative, max_waveforms positive".into(),
            ));
        }
        Ok(())
    }

    /// SHA-256 of the canonical TOML form, in hex. The output directory is
    /// left out so identical experiments hash alike wherever they are written.
    pub fn hash(&self) -> String {
        let canonical = Self { out_dir: PathBuf::new(), ..self.clone() };
        Sha256::digest(canonical.to_toml().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}
