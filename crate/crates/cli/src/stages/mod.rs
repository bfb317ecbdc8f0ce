//! The pipeline stages. Each reads its inputs from the output directory and
//! writes its own artifacts there.

pub mod analyze;
pub mod evaluate;
pub mod generate;
pub mod report;
pub mod saliency;
pub mod train;
