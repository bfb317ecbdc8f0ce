//! Python bindings: label densities, soft sorting, Dist Loss, the trained
//! regressor, synthetic cohorts, survival statistics and the full pipeline.

use std::path::PathBuf;

use ppgage_cli::{run_pipeline as run_all, ExperimentConfig};
use ppgage_core::dist_loss::weighted_dist_loss;
use ppgage_core::label_distribution::{allocate_frequencies, estimate_label_density, pseudo_labels, LabelGrid};
use ppgage_core::nn::saliency::saliency as saliency_map;
use ppgage_core::nn::train::predict;
use ppgage_core::nn::{Checkpoint, ModelParams, NetConfig};
use ppgage_core::soft_sort::{
    isotonic_regression_l2, soft_sort as soft_sort_core, soft_sort_vjp as soft_sort_vjp_core,
};
use ppgage_core::survival::{self, GapStratum, SerialGroup, SurvivalRecord, Ties};
use ppgage_core::synth::{sample_cohort, CohortSpec};
use ppgage_core::Error;
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: Error) -> PyErr {
    match e {
        Error::InvalidInput(m) => PyValueError::new_err(m),
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

/// Label grid with its kernel density probabilities.
#[pyclass(name = "LabelGrid", frozen)]
struct PyLabelGrid(LabelGrid);

#[pymethods]
impl PyLabelGrid {
    /// Grid from explicit (renormalized) probabilities.
    #[new]
    #[pyo3(signature = (labels, probs, bandwidth = 0.5))]
    fn new(labels: Vec<f64>, probs: Vec<f64>, bandwidth: f64) -> PyResult<Self> {
        LabelGrid::from_probs(labels, probs, bandwidth).map(Self).map_err(err)
    }

    /// Gaussian KDE of `labels` on the integer grid `lo..=hi`; the span of
    /// the rounded labels when no range is given.
    #[staticmethod]
    #[pyo3(signature = (labels, bandwidth = 0.5, label_range = None))]
    fn estimate(labels: Vec<f64>, bandwidth: f64, label_range: Option<(i64, i64)>) -> PyResult<Self> {
        let (lo, hi) = match label_range {
            Some(r) => r,
            None => ppgage_core::nn::train::observed_range(&labels).map_err(err)?,
        };
        let grid = LabelGrid::integer_grid(lo, hi).map_err(err)?;
        estimate_label_density(&labels, bandwidth, &grid).map(Self).map_err(err)
    }

    #[getter]
    fn labels(&self) -> Vec<f64> {
        self.0.labels().to_vec()
    }

    #[getter]
    fn probs(&self) -> Vec<f64> {
        self.0.probs().to_vec()
    }

    /// Per-label counts for a batch of `batch_size`.
    fn allocate(&self, batch_size: usize) -> PyResult<Vec<usize>> {
        allocate_frequencies(&self.0, batch_size).map(|a| a.adjusted).map_err(err)
    }

    /// Ascending pseudo-label sequence of length `batch_size`.
    fn pseudo_labels(&self, batch_size: usize) -> PyResult<Vec<f64>> {
        pseudo_labels(&self.0, batch_size).map(|s| s.values).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

#[pyfunction]
#[pyo3(signature = (values, epsilon = 1.0))]
fn soft_sort(values: Vec<f64>, epsilon: f64) -> PyResult<Vec<f64>> {
    soft_sort_core(&values, epsilon).map(|r| r.sorted_values).map_err(err)
}

/// Gradient of `sum(upstream * soft_sort(values))` with respect to `values`.
#[pyfunction]
#[pyo3(signature = (values, upstream, epsilon = 1.0))]
fn soft_sort_vjp(values: Vec<f64>, upstream: Vec<f64>, epsilon: f64) -> PyResult<Vec<f64>> {
    let r = soft_sort_core(&values, epsilon).map_err(err)?;
    soft_sort_vjp_core(&values, &upstream, &r).map_err(err)
}

#[pyfunction]
fn isotonic_regression(values: Vec<f64>) -> PyResult<Vec<f64>> {
    isotonic_regression_l2(&values).map(|f| f.solution).map_err(err)
}

#[pyclass(name = "LossBreakdown", frozen, get_all)]
struct PyLossBreakdown {
    sample_mae: f64,
    distributional_mae: f64,
    total: f64,
    grad: Vec<f64>,
}

#[pyfunction]
#[pyo3(signature = (predictions, labels, grid, epsilon = 1.0, weight = 1.0))]
fn dist_loss(
    predictions: Vec<f64>,
    labels: Vec<f64>,
    grid: &PyLabelGrid,
    epsilon: f64,
    weight: f64,
) -> PyResult<PyLossBreakdown> {
    let r = weighted_dist_loss(&predictions, &labels, &grid.0, epsilon, weight).map_err(err)?;
    Ok(PyLossBreakdown {
        sample_mae: r.sample_mae,
        distributional_mae: r.distributional_mae,
        total: r.total,
        grad: r.grad,
    })
}

/// Network weights, from a checkpoint or freshly initialized.
#[pyclass(name = "Model", frozen)]
struct PyModel(ModelParams);

#[pymethods]
impl PyModel {
    /// Best weights stored in a training or model checkpoint.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Checkpoint::load(&path).map(|c| Self(c.into_model())).map_err(err)
    }

    /// Random weights for one of the preset sizes: `tiny`, `small` or
    /// `default`. Predictions start at `shift + scale * raw`.
    #[staticmethod]
    #[pyo3(signature = (seed, size = "small", shift = 60.0, scale = 8.0))]
    fn init(seed: u64, size: &str, shift: f64, scale: f64) -> PyResult<Self> {
        let config = match size {
            "tiny" => NetConfig::tiny(),
            "small" => NetConfig::small(),
            "default" => NetConfig::default(),
            other => return Err(PyValueError::new_err(format!("unknown size '{other}'"))),
        };
        ModelParams::init(&config, seed, shift, scale).map(Self).map_err(err)
    }

    #[getter]
    fn parameter_count(&self) -> usize {
        self.0.parameter_count()
    }

    #[getter]
    fn input_length(&self) -> usize {
        self.0.config.input_length
    }

    fn predict(&self, waveforms: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        predict(&self.0, &waveforms).map_err(err)
    }

    /// Smoothed |d prediction / d input|, rescaled to [0, 1].
    #[pyo3(signature = (waveform, sigma = 2.0))]
    fn saliency(&self, waveform: Vec<f64>, sigma: f64) -> PyResult<Vec<f64>> {
        saliency_map(&self.0, &waveform, sigma).map_err(err)
    }
}

/// Synthetic cohort as a list of dicts, one per recording.
#[pyfunction]
#[pyo3(signature = (n_subjects, seed, serial_fraction = 0.2, noise_free = false))]
fn synth_cohort<'py>(
    py: Python<'py>,
    n_subjects: usize,
    seed: u64,
    serial_fraction: f64,
    noise_free: bool,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let mut spec = CohortSpec { n_subjects, serial_fraction, ..CohortSpec::default() };
    if noise_free {
        spec.morphology = spec.morphology.noise_free();
    }
    let records = sample_cohort(&spec, seed).map_err(err)?;
    records
        .into_iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("id", r.id)?;
            d.set_item("visit", r.visit)?;
            d.set_item("age", r.age)?;
            d.set_item("latent_offset", r.latent_offset)?;
            d.set_item("waveform", r.waveform)?;
            d.set_item("event_time", r.event_time)?;
            d.set_item("event", r.event != 0)?;
            d.set_item("covariates", r.covariates)?;
            Ok(d)
        })
        .collect()
}

#[pyclass(name = "CoxFit", frozen, get_all)]
struct PyCoxFit {
    names: Vec<String>,
    coefficients: Vec<f64>,
    std_errors: Vec<f64>,
    hazard_ratios: Vec<f64>,
    ci95: Vec<(f64, f64)>,
    p_values: Vec<f64>,
    log_likelihood: f64,
    converged: bool,
}

/// Cox proportional hazards fit; `covariates` holds one row per subject.
#[pyfunction]
#[pyo3(signature = (times, events, covariates, names, ties = "efron"))]
fn cox_fit(
    times: Vec<f64>,
    events: Vec<bool>,
    covariates: Vec<Vec<f64>>,
    names: Vec<String>,
    ties: &str,
) -> PyResult<PyCoxFit> {
    let ties = match ties {
        "efron" => Ties::Efron,
        "breslow" => Ties::Breslow,
        other => return Err(PyValueError::new_err(format!("unknown ties method '{other}'"))),
    };
    if times.len() != events.len() || times.len() != covariates.len() {
        return Err(PyValueError::new_err("times, events and covariates differ in length"));
    }
    let records: Vec<SurvivalRecord> = times
        .into_iter()
        .zip(events)
        .zip(covariates)
        .map(|((time, event), covariates)| SurvivalRecord { time, event, covariates })
        .collect();
    let f = survival::cox_fit(&records, &names, ties).map_err(err)?;
    Ok(PyCoxFit {
        names: f.names,
        coefficients: f.coefficients,
        std_errors: f.std_errors,
        hazard_ratios: f.hazard_ratios,
        ci95: f.ci95,
        p_values: f.p_values,
        log_likelihood: f.log_likelihood,
        converged: f.converged,
    })
}

#[pyfunction]
fn kaplan_meier<'py>(py: Python<'py>, times: Vec<f64>, events: Vec<bool>) -> PyResult<Bound<'py, PyDict>> {
    if times.len() != events.len() {
        return Err(PyValueError::new_err("times and events differ in length"));
    }
    let data: Vec<_> = times.into_iter().zip(events).collect();
    let km = survival::km_estimate(&data);
    let d = PyDict::new(py);
    d.set_item("times", km.times)?;
    d.set_item("survival", km.survival)?;
    d.set_item("at_risk", km.at_risk)?;
    d.set_item("events", km.events)?;
    d.set_item("ci_low", km.ci_low)?;
    d.set_item("ci_high", km.ci_high)?;
    Ok(d)
}

/// Log-rank test of group a against group b: `(statistic, p_value)`.
#[pyfunction]
fn log_rank(times_a: Vec<f64>, events_a: Vec<bool>, times_b: Vec<f64>, events_b: Vec<bool>) -> PyResult<(f64, f64)> {
    let a: Vec<_> = times_a.into_iter().zip(events_a).collect();
    let b: Vec<_> = times_b.into_iter().zip(events_b).collect();
    survival::log_rank(&a, &b).map(|r| (r.statistic, r.p_value)).map_err(err)
}

/// `underestimation`, `correct` or `overestimation`.
#[pyfunction]
fn gap_stratum(gap: f64, threshold: f64) -> &'static str {
    GapStratum::classify(gap, threshold).name()
}

/// `G1` to `G4` from the gaps at two visits.
#[pyfunction]
fn serial_group(first_gap: f64, second_gap: f64, threshold: f64) -> String {
    SerialGroup::from_strata(GapStratum::classify(first_gap, threshold), GapStratum::classify(second_gap, threshold))
        .to_string()
}

/// Runs every stage with the given TOML config (defaults when empty) and
/// returns the names of artifacts the report found missing.
#[pyfunction]
#[pyo3(signature = (config_toml = "", out_dir = None, seed = None))]
fn run_pipeline(
    py: Python<'_>,
    config_toml: &str,
    out_dir: Option<PathBuf>,
    seed: Option<u64>,
) -> PyResult<Vec<String>> {
    let mut config = ExperimentConfig::from_toml(config_toml).map_err(|e| PyValueError::new_err(e.to_string()))?;
    if let Some(dir) = out_dir {
        config.out_dir = dir;
    }
    if let Some(s) = seed {
        config.seed = s;
    }
    py.detach(|| run_all(&config))
        .map(|o| o.missing)
        .map_err(|e| PyRuntimeError::new_err(format!("error[{}]: {e}", e.code())))
}

#[pymodule]
fn ppgage(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyLabelGrid>()?;
    m.add_class::<PyLossBreakdown>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyCoxFit>()?;
    m.add_function(wrap_pyfunction!(soft_sort, m)?)?;
    m.add_function(wrap_pyfunction!(soft_sort_vjp, m)?)?;
    m.add_function(wrap_pyfunction!(isotonic_regression, m)?)?;
    m.add_function(wrap_pyfunction!(dist_loss, m)?)?;
    m.add_function(wrap_pyfunction!(synth_cohort, m)?)?;
    m.add_function(wrap_pyfunction!(cox_fit, m)?)?;
    m.add_function(wrap_pyfunction!(kaplan_meier, m)?)?;
    m.add_function(wrap_pyfunction!(log_rank, m)?)?;
    m.add_function(wrap_pyfunction!(gap_stratum, m)?)?;
    m.add_function(wrap_pyfunction!(serial_group, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    Ok(())
}
