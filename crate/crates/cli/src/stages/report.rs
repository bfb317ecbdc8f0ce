use std::fmt::Write as _;
use std::path::PathBuf;

use crate::artifacts::Layout;
use crate::config::ExperimentConfig;
use crate::error::{io_err, Result};

pub const ANALYSIS_FILES: [&str; 8] = [
    "cox_continuous.csv",
    "cox_strata.csv",
    "km.csv",
    "logrank.csv",
    "rcs_curve.csv",
    "serial_groups.csv",
    "logistic.csv",
    "summary.csv",
];

/// Every artifact a complete run of the configured loss leaves behind.
pub fn expected_artifacts(layout: &Layout) -> Vec<PathBuf> {
    let mut out = vec![
        layout.cohort(),
        layout.split(),
        layout.checkpoint(),
        layout.train_log(),
        layout.predictions(),
        layout.metrics(),
    ];
    out.extend(ANALYSIS_FILES.iter().map(|f| layout.analysis(f)));
    out.extend([layout.saliency(), layout.saliency_peaks()]);
    out
}

/// Small tables copied verbatim into the report, in this order.
fn embedded(layout: &Layout) -> Vec<(&'static str, PathBuf)> {
    vec![
        ("metrics", layout.metrics()),
        ("cox_continuous", layout.analysis("cox_continuous.csv")),
        ("cox_strata", layout.analysis("cox_strata.csv")),
        ("logrank", layout.analysis("logrank.csv")),
        ("serial_groups", layout.analysis("serial_groups.csv")),
        ("logistic", layout.analysis("logistic.csv")),
        ("analysis_summary", layout.analysis("summary.csv")),
        ("saliency_peaks", layout.saliency_peaks()),
    ]
}

pub struct Report {
    pub text: String,
    pub missing: Vec<String>,
}

/// Builds the summary text from whatever artifacts exist. Depends only on
/// the config and file contents, so rebuilding it is byte-identical.
pub fn build(config: &ExperimentConfig, layout: &Layout) -> Result<Report> {
    let mut text = String::new();
    let mut missing = Vec::new();
    writeln!(text, "ppgage report").unwrap();
    writeln!(text, "config_hash: {}", config.hash()).unwrap();
    writeln!(text, "seed: {}", config.seed).unwrap();
    writeln!(text, "loss: {}", config.train.loss).unwrap();
    writeln!(text, "threshold: {}", config.analysis.threshold).unwrap();

    writeln!(text, "\n[artifacts]").unwrap();
    for path in expected_artifacts(layout) {
        let name = layout.relative(&path);
        if path.exists() {
            writeln!(text, "present {name}").unwrap();
        } else {
            writeln!(text, "missing {name}").unwrap();
            missing.push(name);
        }
    }
    writeln!(text, "missing_count: {}", missing.len()).unwrap();

    let log = layout.train_log();
    if log.exists() {
        let body = std::fs::read_to_string(&log).map_err(io_err(&log))?;
        let mut lines = body.lines();
        writeln!(text, "\n[training]").unwrap();
        if let (Some(header), Some(last)) = (lines.next(), body.lines().last()) {
            writeln!(text, "{header}\n{last}").unwrap();
        }
    }
    for (title, path) in embedded(layout) {
        if path.exists() {
            let body = std::fs::read_to_string(&path).map_err(io_err(&path))?;
            write!(text, "\n[{title}]\n{body}").unwrap();
        }
    }
    Ok(Report { text, missing })
}

pub fn run(config: &ExperimentConfig, layout: &Layout) -> Result<(Vec<PathBuf>, Vec<String>)> {
    let report = build(config, layout)?;
    std::fs::write(layout.report(), &report.text).map_err(io_err(layout.report()))?;
    if !report.missing.is_empty() {
        log::warn!("report lists {} missing artifacts: {}", report.missing.len(), report.missing.join(", "));
    }
    Ok((vec![layout.report()], report.missing))
}
