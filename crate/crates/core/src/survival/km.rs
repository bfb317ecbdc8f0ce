//! Kaplan-Meier product-limit estimator and the log-rank test.

use serde::{Deserialize, Serialize};

use super::{chi_square_1df_p, Z95};
use crate::error::{Error, Result};

/// Survival time and event indicator.
pub type TimeEvent = (f64, bool);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmCurve {
    /// Distinct event times, ascending.
    pub times: Vec<f64>,
    pub survival: Vec<f64>,
    pub at_risk: Vec<usize>,
    pub events: Vec<usize>,
    /// Greenwood variance of the survival estimate.
    pub variance: Vec<f64>,
    /// Pointwise 95% interval on the log scale, clipped to [0, 1].
    pub ci_low: Vec<f64>,
    pub ci_high: Vec<f64>,
}

impl KmCurve {
    /// Survival probability just after time `t` (right-continuous step).
    pub fn at(&self, t: f64) -> f64 {
        match self.times.iter().rposition(|&x| x <= t) {
            Some(i) => self.survival[i],
            None => 1.0,
        }
    }
}

/// Groups sorted data into `(time, at_risk, events)` for every distinct
/// event time.
fn event_table(data: &[TimeEvent]) -> Vec<(f64, usize, usize)> {
    let mut sorted = data.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut table = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let t = sorted[i].0;
        let at_risk = sorted.len() - i;
        let mut events = 0;
        while i < sorted.len() && sorted[i].0 == t {
            events += usize::from(sorted[i].1);
            i += 1;
        }
        if events > 0 {
            table.push((t, at_risk, events));
        }
    }
    table
}

/// An empty input or one without events gives an empty curve (S = 1
/// everywhere).
pub fn km_estimate(data: &[TimeEvent]) -> KmCurve {
    let mut curve = KmCurve {
        times: vec![],
        survival: vec![],
        at_risk: vec![],
        events: vec![],
        variance: vec![],
        ci_low: vec![],
        ci_high: vec![],
    };
    let (mut s, mut greenwood) = (1.0, 0.0);
    for (t, n, d) in event_table(data) {
        let (nf, df) = (n as f64, d as f64);
        s *= 1.0 - df / nf;
        if n > d {
            greenwood += df / (nf * (nf - df));
        }
        let half = Z95 * greenwood.sqrt();
        curve.times.push(t);
        curve.survival.push(s);
        curve.at_risk.push(n);
        curve.events.push(d);
        curve.variance.push(s * s * greenwood);
        curve.ci_low.push((s * (-half).exp()).clamp(0.0, 1.0));
        curve.ci_high.push((s * half.exp()).clamp(0.0, 1.0));
    }
    curve
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRank {
    pub statistic: f64,
    pub p_value: f64,
    pub observed_a: f64,
    pub expected_a: f64,
    pub variance: f64,
}

/// Two-group log-rank test with the hypergeometric variance.
pub fn log_rank(a: &[TimeEvent], b: &[TimeEvent]) -> Result<LogRank> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidInput("both groups must be non-empty".into()));
    }
    if !a.iter().chain(b).any(|x| x.1) {
        return Err(Error::Undefined("log-rank statistic needs at least one event".into()));
    }
    let mut all: Vec<(f64, bool, bool)> =
        a.iter().map(|&(t, e)| (t, e, true)).chain(b.iter().map(|&(t, e)| (t, e, false))).collect();
    all.sort_by(|x, y| x.0.total_cmp(&y.0));
    let (mut o, mut e, mut v) = (0.0, 0.0, 0.0);
    let (mut n, mut na) = (all.len() as f64, a.len() as f64);
    let mut i = 0;
    while i < all.len() {
        let t = all[i].0;
        let (mut d, mut da, mut leaving, mut leaving_a) = (0.0, 0.0, 0.0, 0.0);
        while i < all.len() && all[i].0 == t {
            let (_, event, in_a) = all[i];
            leaving += 1.0;
            if in_a {
                leaving_a += 1.0;
            }
            if event {
                d += 1.0;
                if in_a {
                    da += 1.0;
                }
            }
            i += 1;
        }
        if d > 0.0 {
            o += da;
            e += d * na / n;
            if n > 1.0 {
                v += d * (na / n) * (1.0 - na / n) * (n - d) / (n - 1.0);
            }
        }
        n -= leaving;
        na -= leaving_a;
    }
    let statistic = if v > 0.0 { (o - e).powi(2) / v } else { 0.0 };
    Ok(LogRank { statistic, p_value: chi_square_1df_p(statistic), observed_a: o, expected_a: e, variance: v })
}
