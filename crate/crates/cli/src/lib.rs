//! Experiment runner: generate a cohort, train the age regressor, evaluate
//! it, analyze the age gap against outcomes, map saliency and report.

pub mod artifacts;
pub mod config;
pub mod error;
pub mod stages;

use std::time::Instant;

pub use artifacts::{Layout, RunManifest};
pub use config::{ExperimentConfig, Overrides};
pub use error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Generate,
    Train { resume: bool },
    Evaluate,
    Analyze,
    Saliency,
    Report,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Generate => "generate",
            Stage::Train { .. } => "train",
            Stage::Evaluate => "evaluate",
            Stage::Analyze => "analyze",
            Stage::Saliency => "saliency",
            Stage::Report => "report",
        }
    }

    /// Every stage in pipeline order.
    pub const PIPELINE: [Stage; 6] = [
        Stage::Generate,
        Stage::Train { resume: false },
        Stage::Evaluate,
        Stage::Analyze,
        Stage::Saliency,
        Stage::Report,
    ];
}

/// What a stage wrote, plus the artifacts the report found missing.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StageOutcome {
    pub artifacts: Vec<std::path::PathBuf>,
    pub missing: Vec<String>,
}

pub fn run_stage(config: &ExperimentConfig, stage: Stage) -> Result<StageOutcome> {
    config.validate()?;
    let layout = Layout::new(&config.out_dir, config.train.loss);
    artifacts::ensure_dir(&layout.root)?;
    let started = Instant::now();
    log::info!("stage {} (seed {}, loss {})", stage.name(), config.seed, config.train.loss);
    let mut missing = Vec::new();
    let written = match stage {
        Stage::Generate => stages::generate::run(config, &layout)?,
        Stage::Train { resume } => stages::train::run(config, &layout, resume)?,
        Stage::Evaluate => stages::evaluate::run(config, &layout)?,
        Stage::Analyze => stages::analyze::run(config, &layout)?,
        Stage::Saliency => stages::saliency::run(config, &layout)?,
        Stage::Report => {
            let (written, m) = stages::report::run(config, &layout)?;
            missing = m;
            written
        }
    };
    RunManifest::record(&layout, stage.name(), &config.hash(), &written, started.elapsed().as_secs_f64())?;
    Ok(StageOutcome { artifacts: written, missing })
}

/// Runs every stage in order and returns the report outcome.
pub fn run_pipeline(config: &ExperimentConfig) -> Result<StageOutcome> {
    let mut last = StageOutcome::default();
    for stage in Stage::PIPELINE {
        last = run_stage(config, stage)?;
    }
    Ok(last)
}
