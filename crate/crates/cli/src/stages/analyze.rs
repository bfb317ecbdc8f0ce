//! Survival analysis of the predicted age gap: Cox models with three
//! adjustment sets, gap strata with Kaplan-Meier curves and log-rank tests,
//! a spline hazard curve, serial-visit groups and a logistic model.

use std::collections::BTreeMap;
use std::path::PathBuf;

use ppgage_core::survival::{
    cox_fit, hr_curve, km_estimate, log_rank, logistic_fit, serial_groups, CoxFit, GapStratum, SerialGroup,
    SurvivalRecord, Ties, TimeEvent,
};
use ppgage_core::synth::PpgRecord;

use super::evaluate::load_gaps;
use super::generate::{Cohort, Partition};
use crate::artifacts::{ensure_dir, Cell, Layout, Table};
use crate::config::{AnalysisSubjects, ExperimentConfig};
use crate::error::{Error, Result};

/// Adjustment sets, in the order reported.
pub const MODELS: [(&str, &[&str]); 3] = [
    ("model1", &["age", "sex", "ethnicity", "bmi"]),
    ("model2", &["age", "sex", "ethnicity", "bmi", "smoking", "hypertension", "diabetes", "dyslipidemia", "ckd"]),
    ("model3", &["age", "sex", "sbp", "antihypertensive", "smoking", "diabetes", "total_chol", "hdl"]),
];

/// One subject at its last recording, where follow-up starts.
#[derive(Debug, Clone, PartialEq)]
pub struct Subject {
    pub id: u64,
    pub time: f64,
    pub event: bool,
    pub gap: f64,
    /// Gap at the earlier recording of a serial subject.
    pub first_gap: Option<f64>,
    pub covariates: BTreeMap<String, f64>,
}

impl Subject {
    pub fn values(&self, names: &[&str]) -> Result<Vec<f64>> {
        names
            .iter()
            .map(|n| {
                self.covariates
                    .get(*n)
                    .copied()
                    .ok_or_else(|| Error::Config(format!("covariate '{n}' missing for subject {}", self.id)))
            })
            .collect()
    }

    fn time_event(&self) -> TimeEvent {
        (self.time, self.event)
    }
}

/// Joins records with their gaps; calendar age becomes the `age` covariate.
pub fn subjects(records: &[&PpgRecord], gaps: &BTreeMap<(u64, u8), f64>) -> Result<Vec<Subject>> {
    let mut by_id: BTreeMap<u64, Vec<&PpgRecord>> = BTreeMap::new();
    for r in records {
        by_id.entry(r.id).or_default().push(r);
    }
    let gap_of = |r: &PpgRecord| {
        gaps.get(&(r.id, r.visit)).copied().ok_or_else(|| {
            Error::Config(format!("no prediction for subject {} visit {}; rerun evaluate", r.id, r.visit))
        })
    };
    by_id
        .into_iter()
        .map(|(id, mut visits)| {
            visits.sort_by_key(|r| r.visit);
            let last = visits[visits.len() - 1];
            let first_gap = if visits.len() > 1 { Some(gap_of(visits[0])?) } else { None };
            let mut covariates = last.covariates.clone();
            covariates.insert("age".into(), last.age);
            Ok(Subject { id, time: last.event_time, event: last.event == 1, gap: gap_of(last)?, first_gap, covariates })
        })
        .collect()
}

fn fit_with(subjects: &[&Subject], leading: &[(String, Vec<f64>)], adjust: &[&str]) -> Result<CoxFit> {
    let mut names: Vec<String> = leading.iter().map(|(n, _)| n.clone()).collect();
    names.extend(adjust.iter().map(|s| s.to_string()));
    let records = subjects
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mut covariates: Vec<f64> = leading.iter().map(|(_, v)| v[i]).collect();
            covariates.extend(s.values(adjust)?);
            Ok(SurvivalRecord { time: s.time, event: s.event, covariates })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(cox_fit(&records, &names, Ties::Efron)?)
}

/// Hazard ratio of one group against the reference.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupHr {
    pub group: String,
    pub n: usize,
    pub events: usize,
    pub hr: Option<f64>,
    pub ci: Option<(f64, f64)>,
    pub p: Option<f64>,
    pub status: String,
}

/// Cox fit of indicator variables for every non-empty, non-reference group.
/// The reference row reads HR 1 with interval (1, 1); empty groups and a
/// failed fit are reported in `status` rather than aborting.
pub fn group_hazard_ratios<G: Copy + PartialEq + std::fmt::Display>(
    subjects: &[&Subject],
    labels: &[G],
    groups: &[G],
    reference: G,
    adjust: &[&str],
) -> Vec<GroupHr> {
    let count = |g: G| {
        let members: Vec<usize> = (0..subjects.len()).filter(|&i| labels[i] == g).collect();
        let events = members.iter().filter(|&&i| subjects[i].event).count();
        (members.len(), events)
    };
    let present: Vec<G> = groups.iter().copied().filter(|&g| g != reference && count(g).0 > 0).collect();
    let fit = if count(reference).0 == 0 {
        Err("reference group is empty".to_string())
    } else if present.is_empty() {
        Err("no non-reference group".to_string())
    } else {
        let leading: Vec<(String, Vec<f64>)> = present
            .iter()
            .map(|&g| (g.to_string(), labels.iter().map(|&l| f64::from(u8::from(l == g))).collect()))
            .collect();
        fit_with(subjects, &leading, adjust).map_err(|e| e.to_string())
    };
    groups
        .iter()
        .map(|&g| {
            let (n, events) = count(g);
            let mut row =
                GroupHr { group: g.to_string(), n, events, hr: None, ci: None, p: None, status: String::new() };
            if g == reference {
                if n > 0 {
                    row.hr = Some(1.0);
                    row.ci = Some((1.0, 1.0));
                }
                row.status = if n > 0 { "reference".into() } else { "empty".into() };
            } else if n == 0 {
                row.status = "empty".into();
            } else {
                match &fit {
                    Ok(f) => {
                        let j = f.index_of(&g.to_string()).expect("indicator was fitted");
                        row.hr = Some(f.hazard_ratios[j]);
                        row.ci = Some(f.ci95[j]);
                        row.p = Some(f.p_values[j]);
                        row.status = if f.converged { "ok".into() } else { "not-converged".into() };
                    }
                    Err(e) => row.status = format!("failed: {e}"),
                }
            }
            row
        })
        .collect()
}

fn group_table(rows: &[(String, GroupHr)]) -> Table {
    let mut t = Table::new(&["model", "group", "n", "events", "hr", "ci_low", "ci_high", "p", "status"]);
    for (model, r) in rows {
        t.push(vec![
            model.clone().into(),
            r.group.clone().into(),
            r.n.into(),
            r.events.into(),
            r.hr.into(),
            r.ci.map(|c| c.0).into(),
            r.ci.map(|c| c.1).into(),
            r.p.into(),
            r.status.clone().into(),
        ]);
    }
    t
}

pub fn run(config: &ExperimentConfig, layout: &Layout) -> Result<Vec<PathBuf>> {
    let cohort = Cohort::load(layout)?;
    let gaps = load_gaps(&layout.predictions())?;
    let records: Vec<&PpgRecord> = match config.analysis.subjects {
        AnalysisSubjects::All => cohort.records.iter().collect(),
        AnalysisSubjects::Holdout => cohort.part(Partition::Holdout),
    };
    let all = subjects(&records, &gaps)?;
    let subs: Vec<&Subject> = all.iter().collect();
    ensure_dir(&layout.analysis_dir())?;
    let mut written = Vec::new();
    let mut summary: Vec<(&str, Cell)> =
        vec![("subjects", subs.len().into()), ("events", subs.iter().filter(|s| s.event).count().into())];

    // Continuous gap, per year.
    let gap_values: Vec<f64> = subs.iter().map(|s| s.gap).collect();
    let mut t = Table::new(&["model", "term", "n", "events", "coef", "se", "hr", "ci_low", "ci_high", "p", "status"]);
    for (model, adjust) in MODELS {
        match fit_with(&subs, &[("gap".into(), gap_values.clone())], adjust) {
            Ok(f) => {
                let j = 0;
                t.push(vec![
                    model.into(),
                    "gap".into(),
                    f.n.into(),
                    f.n_events.into(),
                    f.coefficients[j].into(),
                    f.std_errors[j].into(),
                    f.hazard_ratios[j].into(),
                    f.ci95[j].0.into(),
                    f.ci95[j].1.into(),
                    f.p_values[j].into(),
                    (if f.converged { "ok" } else { "not-converged" }).into(),
                ]);
            }
            Err(e) => {
                log::warn!("{model} continuous gap fit failed: {e}");
                let mut row = vec![model.into(), "gap".into()];
                row.extend(std::iter::repeat_n(Cell::Empty, 8));
                row.push(format!("failed: {e}").into());
                t.push(row);
            }
        }
    }
    written.push(write(&t, layout, "cox_continuous.csv")?);

    // Strata around the threshold.
    let threshold = config.analysis.threshold.resolve(&gap_values)?;
    summary.push(("threshold_mode", config.analysis.threshold.to_string().into()));
    summary.push(("threshold", threshold.into()));
    let strata: Vec<GapStratum> = gap_values.iter().map(|&g| GapStratum::classify(g, threshold)).collect();
    let mut rows = Vec::new();
    for (model, adjust) in MODELS {
        for r in group_hazard_ratios(&subs, &strata, &GapStratum::ALL, GapStratum::Correct, adjust) {
            rows.push((model.to_string(), r));
        }
    }
    written.push(write(&group_table(&rows), layout, "cox_strata.csv")?);

    let members = |g: GapStratum| -> Vec<TimeEvent> {
        subs.iter().zip(&strata).filter(|(_, &s)| s == g).map(|(s, _)| s.time_event()).collect()
    };
    let mut km = Table::new(&["stratum", "time", "survival", "ci_low", "ci_high", "at_risk", "events"]);
    for g in GapStratum::ALL {
        let c = km_estimate(&members(g));
        for i in 0..c.times.len() {
            km.push(vec![
                g.name().into(),
                c.times[i].into(),
                c.survival[i].into(),
                c.ci_low[i].into(),
                c.ci_high[i].into(),
                c.at_risk[i].into(),
                c.events[i].into(),
            ]);
        }
    }
    written.push(write(&km, layout, "km.csv")?);

    let mut lr = Table::new(&["comparison", "statistic", "p", "observed", "expected", "status"]);
    for g in [GapStratum::Underestimation, GapStratum::Overestimation] {
        let name = format!("{}_vs_{}", g.name(), GapStratum::Correct.name());
        match log_rank(&members(g), &members(GapStratum::Correct)) {
            Ok(r) => lr.push(vec![
                name.into(),
                r.statistic.into(),
                r.p_value.into(),
                r.observed_a.into(),
                r.expected_a.into(),
                "ok".into(),
            ]),
            Err(e) => lr.push(vec![
                name.into(),
                Cell::Empty,
                Cell::Empty,
                Cell::Empty,
                Cell::Empty,
                format!("failed: {e}").into(),
            ]),
        }
    }
    written.push(write(&lr, layout, "logrank.csv")?);

    // Spline hazard curve under the first adjustment set.
    let (_, adjust) = MODELS[0];
    let spline_records = subs
        .iter()
        .map(|s| Ok(SurvivalRecord { time: s.time, event: s.event, covariates: s.values(adjust)? }))
        .collect::<Result<Vec<_>>>()?;
    let adjust_names: Vec<String> = adjust.iter().map(|s| s.to_string()).collect();
    let mut curve = Table::new(&["gap", "hr", "ci_low", "ci_high"]);
    match hr_curve(&spline_records, &gap_values, &adjust_names, config.analysis.knots, &config.analysis.grid()) {
        Ok((basis, points)) => {
            for p in points {
                curve.push(vec![p.gap.into(), p.hr.into(), p.ci_low.into(), p.ci_high.into()]);
            }
            let knots: Vec<String> = basis.knots.iter().map(|&k| ppgage_core::numfmt::fmt_sig(k)).collect();
            summary.push(("spline_knots", knots.join(";").into()));
        }
        Err(e) => {
            log::warn!("spline curve failed: {e}");
            summary.push(("spline_knots", format!("failed: {e}").into()));
        }
    }
    written.push(write(&curve, layout, "rcs_curve.csv")?);

    // Serial subjects by their strata at both recordings.
    let pairs: Vec<(Option<f64>, Option<f64>)> = subs.iter().map(|s| (s.first_gap, Some(s.gap))).collect();
    let assignment = serial_groups(&pairs, threshold)?;
    summary.push(("serial_subjects", (subs.len() - assignment.excluded).into()));
    summary.push(("serial_excluded", assignment.excluded.into()));
    let serial: Vec<(&Subject, SerialGroup)> =
        subs.iter().zip(&assignment.groups).filter_map(|(s, g)| g.map(|g| (*s, g))).collect();
    let serial_subs: Vec<&Subject> = serial.iter().map(|(s, _)| *s).collect();
    let serial_labels: Vec<SerialGroup> = serial.iter().map(|(_, g)| *g).collect();
    let rows: Vec<(String, GroupHr)> =
        group_hazard_ratios(&serial_subs, &serial_labels, &SerialGroup::ALL, SerialGroup::G4, MODELS[0].1)
            .into_iter()
            .map(|r| (MODELS[0].0.to_string(), r))
            .collect();
    written.push(write(&group_table(&rows), layout, "serial_groups.csv")?);

    // Logistic model of the event flag.
    let mut logit = Table::new(&["term", "coef", "odds_ratio", "ci_low", "ci_high", "p"]);
    let outcome: Vec<bool> = subs.iter().map(|s| s.event).collect();
    let mut names = vec!["gap".to_string()];
    names.extend(adjust_names.iter().cloned());
    let rows = subs
        .iter()
        .map(|s| {
            let mut v = vec![s.gap];
            v.extend(s.values(adjust)?);
            Ok(v)
        })
        .collect::<Result<Vec<_>>>()?;
    match logistic_fit(&outcome, &rows, &names) {
        Ok(f) => {
            for j in 0..f.names.len() {
                logit.push(vec![
                    f.names[j].clone().into(),
                    f.coefficients[j].into(),
                    f.odds_ratios[j].into(),
                    f.ci95[j].0.into(),
                    f.ci95[j].1.into(),
                    f.p_values[j].into(),
                ]);
            }
            summary.push(("logistic_separation", (if f.separation { "yes" } else { "no" }).into()));
        }
        Err(e) => {
            log::warn!("logistic fit failed: {e}");
            summary.push(("logistic_separation", format!("failed: {e}").into()));
        }
    }
    written.push(write(&logit, layout, "logistic.csv")?);

    let mut s = Table::new(&["key", "value"]);
    for (k, v) in summary {
        s.push(vec![k.into(), v]);
    }
    written.push(write(&s, layout, "summary.csv")?);
    Ok(written)
}

fn write(table: &Table, layout: &Layout, name: &str) -> Result<PathBuf> {
    let path = layout.analysis(name);
    table.write(&path)?;
    Ok(path)
}
