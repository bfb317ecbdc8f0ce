use std::path::PathBuf;

use ppgage_core::nn::saliency::{argmax, mean_saliency};
use ppgage_core::nn::Checkpoint;

use super::generate::Cohort;
use crate::artifacts::{require, Cell, Layout, Table};
use crate::config::ExperimentConfig;
use crate::error::Result;

/// Sample index of the generator's systolic and diastolic peaks at `age`.
pub fn generator_peaks(config: &ExperimentConfig, age: f64) -> (usize, usize) {
    let m = &config.cohort.morphology;
    let index = |position: f64| (position * m.length as f64).round() as usize;
    (index(m.systolic.position), index(m.diastolic_at(age).position))
}

/// Mean saliency of the recordings near each probe age, with its argmax
/// next to the generator's peak positions.
pub fn run(config: &ExperimentConfig, layout: &Layout) -> Result<Vec<PathBuf>> {
    let cohort = Cohort::load(layout)?;
    require(&layout.checkpoint(), "train")?;
    let model = Checkpoint::load(&layout.checkpoint())?.into_model();
    let s = &config.saliency;

    let mut curves = Table::new(&["probe_age", "index", "saliency"]);
    let mut peaks = Table::new(&[
        "probe_age",
        "n_waveforms",
        "argmax",
        "systolic_index",
        "diastolic_index",
        "nearest_peak_distance",
    ]);
    for &probe in &s.probe_ages {
        let waveforms: Vec<Vec<f64>> = cohort
            .records
            .iter()
            .filter(|r| (r.age - probe).abs() <= s.window)
            .take(s.max_waveforms)
            .map(|r| r.waveform.clone())
            .collect();
        let (sys, dia) = generator_peaks(config, probe);
        if waveforms.is_empty() {
            log::warn!("no recordings within {} years of age {probe}", s.window);
            peaks.push(vec![probe.into(), 0usize.into(), Cell::Empty, sys.into(), dia.into(), Cell::Empty]);
            continue;
        }
        let map = mean_saliency(&model, &waveforms, s.sigma)?;
        for (i, v) in map.iter().enumerate() {
            curves.push(vec![probe.into(), i.into(), (*v).into()]);
        }
        let top = argmax(&map);
        peaks.push(vec![
            probe.into(),
            waveforms.len().into(),
            top.into(),
            sys.into(),
            dia.into(),
            top.abs_diff(sys).min(top.abs_diff(dia)).into(),
        ]);
    }
    curves.write(&layout.saliency())?;
    peaks.write(&layout.saliency_peaks())?;
    Ok(vec![layout.saliency(), layout.saliency_peaks()])
}
