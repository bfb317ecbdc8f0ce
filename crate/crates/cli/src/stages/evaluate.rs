use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ppgage_core::nn::train::{mean_absolute_error, predict, tail_mean_absolute_error};
use ppgage_core::nn::Checkpoint;
use ppgage_core::survival::agreement_metrics;

use super::generate::{Cohort, Partition};
use crate::artifacts::{parse_field, read_csv, require, Layout, Table};
use crate::config::ExperimentConfig;
use crate::error::Result;

/// Fraction of records at each end of the label range counted as tail.
pub const TAIL_FRACTION: f64 = 0.1;

/// Predicts every record and scores each partition.
pub fn run(_config: &ExperimentConfig, layout: &Layout) -> Result<Vec<PathBuf>> {
    let cohort = Cohort::load(layout)?;
    require(&layout.checkpoint(), "train")?;
    let model = Checkpoint::load(&layout.checkpoint())?.into_model();
    let waveforms: Vec<Vec<f64>> = cohort.records.iter().map(|r| r.waveform.clone()).collect();
    let predictions = predict(&model, &waveforms)?;

    let mut table = Table::new(&["id", "visit", "partition", "age", "prediction", "gap"]);
    for (r, p) in cohort.records.iter().zip(&predictions) {
        table.push(vec![
            r.id.into(),
            r.visit.into(),
            cohort.partition[&r.id].name().into(),
            r.age.into(),
            (*p).into(),
            (p - r.age).into(),
        ]);
    }
    table.write(&layout.predictions())?;

    let mut metrics = Table::new(&["partition", "n", "pearson", "mae", "tail_mae", "mean_gap"]);
    let groups: Vec<(&str, Vec<usize>)> = Partition::ALL
        .iter()
        .map(|&p| {
            let idx = (0..cohort.records.len()).filter(|&i| cohort.partition[&cohort.records[i].id] == p).collect();
            (p.name(), idx)
        })
        .chain(std::iter::once(("all", (0..cohort.records.len()).collect())))
        .collect();
    for (name, idx) in groups {
        let preds: Vec<f64> = idx.iter().map(|&i| predictions[i]).collect();
        let labels: Vec<f64> = idx.iter().map(|&i| cohort.records[i].age).collect();
        let pearson = agreement_metrics(&preds, &labels).ok().map(|a| a.pearson);
        let (mae, tail, gap) = if preds.is_empty() {
            (None, None, None)
        } else {
            let gap = preds.iter().zip(&labels).map(|(p, l)| p - l).sum::<f64>() / preds.len() as f64;
            (
                Some(mean_absolute_error(&preds, &labels)),
                Some(tail_mean_absolute_error(&preds, &labels, TAIL_FRACTION)?),
                Some(gap),
            )
        };
        metrics.push(vec![name.into(), preds.len().into(), pearson.into(), mae.into(), tail.into(), gap.into()]);
    }
    metrics.write(&layout.metrics())?;
    Ok(vec![layout.predictions(), layout.metrics()])
}

/// Predicted minus calendar age, keyed by `(id, visit)`.
pub fn load_gaps(path: &Path) -> Result<BTreeMap<(u64, u8), f64>> {
    require(path, "evaluate")?;
    read_csv(path)?
        .iter()
        .map(|row| {
            Ok(((parse_field(row, "id", path)?, parse_field(row, "visit", path)?), parse_field(row, "gap", path)?))
        })
        .collect()
}
