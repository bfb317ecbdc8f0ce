//! Distribution-aware age regression from photoplethysmography (PPG)
//! waveforms, together with the survival statistics used to relate the
//! predicted age gap to outcomes.

pub mod dist_loss;
pub mod error;
pub mod label_distribution;
pub mod nn;
pub mod numfmt;
pub mod rng;
pub mod soft_sort;
pub mod survival;
pub mod synth;

pub use error::{Error, Result};
