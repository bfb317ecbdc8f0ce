//! Synthetic cohorts with a known link between waveform, age and outcome.

pub mod cohort;
pub mod dataset;
pub mod waveform;

pub use cohort::{sample_cohort, AgeSampler, CohortSpec, HazardModel, PpgRecord};
pub use dataset::{load_records, save_records, split_dataset, Split};
pub use waveform::{synth_waveform, MorphologyParams, Pulse};
