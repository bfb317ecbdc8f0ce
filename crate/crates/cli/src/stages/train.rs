use std::path::PathBuf;

use ppgage_core::nn::train::{run_epochs, TrainingState};
use ppgage_core::nn::{Checkpoint, EpochLog, LabeledSet};
use ppgage_core::rng::derive_seed;
use ppgage_core::synth::PpgRecord;

use super::generate::{Cohort, Partition};
use crate::artifacts::{Layout, Table};
use crate::config::ExperimentConfig;
use crate::error::{io_err, Error, Result};

pub fn labeled(records: &[&PpgRecord]) -> LabeledSet {
    LabeledSet {
        waveforms: records.iter().map(|r| r.waveform.clone()).collect(),
        labels: records.iter().map(|r| r.age).collect(),
    }
}

const HEADER: [&str; 7] =
    ["epoch", "steps", "train_loss", "train_sample_mae", "train_dist_mae", "selection_mae", "selection_loss"];

fn log_table(logs: &[EpochLog]) -> Table {
    let mut t = Table::new(&HEADER);
    for l in logs {
        t.push(vec![
            l.epoch.into(),
            l.steps.into(),
            l.train_loss.into(),
            l.train_sample_mae.into(),
            l.train_dist_mae.into(),
            l.selection_mae.into(),
            l.selection_loss.into(),
        ]);
    }
    t
}

/// Trains the configured loss. With `resume`, continues the training
/// checkpoint already on disk up to `train.epochs` and appends to its log.
pub fn run(config: &ExperimentConfig, layout: &Layout, resume: bool) -> Result<Vec<PathBuf>> {
    let cohort = Cohort::load(layout)?;
    let train_set = labeled(&cohort.part(Partition::Train));
    let selection = labeled(&cohort.part(Partition::Selection));
    let seed = derive_seed(config.seed, "train", 0);

    let (mut state, mut previous) = if resume && layout.checkpoint().exists() {
        match Checkpoint::load(&layout.checkpoint())? {
            Checkpoint::Training(state) => {
                if state.params.config != config.net {
                    return Err(Error::Config("checkpoint network differs from [net]".into()));
                }
                let prior = std::fs::read(layout.train_log()).map_err(io_err(layout.train_log()))?;
                (state, prior)
            }
            Checkpoint::Model(_) => {
                return Err(Error::Format {
                    path: layout.checkpoint(),
                    message: "holds bare weights, not a resumable training state".into(),
                })
            }
        }
    } else {
        (TrainingState::new(&config.net, &train_set, &config.train, seed)?, Vec::new())
    };
    let start = state.epochs_done;
    let logs = run_epochs(&mut state, &train_set, &selection, &config.train, seed)?;
    log::info!(
        "{} loss: epochs {}..={}, best epoch {} (selection loss {:.4})",
        config.train.loss,
        start + 1,
        state.epochs_done,
        state.best_epoch,
        state.best_selection_loss
    );

    Checkpoint::Training(state).save(&layout.checkpoint())?;
    let table = log_table(&logs).to_bytes();
    if previous.is_empty() {
        previous = table;
    } else {
        // Drop the header of the new rows.
        let body = table.iter().position(|&b| b == b'\n').map_or(&table[..0], |i| &table[i + 1..]);
        previous.extend_from_slice(body);
    }
    std::fs::write(layout.train_log(), previous).map_err(io_err(layout.train_log()))?;
    Ok(vec![layout.checkpoint(), layout.train_log()])
}
