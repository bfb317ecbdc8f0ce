//! Age-gap strata, serial-visit groups and agreement metrics.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GapStratum {
    Underestimation,
    Correct,
    Overestimation,
}

impl GapStratum {
    pub const ALL: [GapStratum; 3] = [GapStratum::Underestimation, GapStratum::Correct, GapStratum::Overestimation];

    /// `gap < -t` is under, `gap > t` is over, the closed interval
    /// `[-t, t]` is correct.
    pub fn classify(gap: f64, threshold: f64) -> Self {
        if gap < -threshold {
            GapStratum::Underestimation
        } else if gap > threshold {
            GapStratum::Overestimation
        } else {
            GapStratum::Correct
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GapStratum::Underestimation => "underestimation",
            GapStratum::Correct => "correct",
            GapStratum::Overestimation => "overestimation",
        }
    }
}

impl fmt::Display for GapStratum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub fn stratify_gap(gaps: &[f64], threshold: f64) -> Result<Vec<GapStratum>> {
    if !(threshold > 0.0 && threshold.is_finite()) {
        return invalid("threshold must be positive and finite");
    }
    if gaps.iter().any(|g| g.is_nan()) {
        return invalid("gap is NaN");
    }
    Ok(gaps.iter().map(|&g| GapStratum::classify(g, threshold)).collect())
}

/// How the stratification threshold is chosen. Serialized as the string
/// form accepted by `FromStr`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ThresholdMode {
    Fixed(f64),
    /// Sample standard deviation of the gaps being stratified.
    Sd,
}

impl ThresholdMode {
    pub fn resolve(self, gaps: &[f64]) -> Result<f64> {
        match self {
            ThresholdMode::Fixed(t) => Ok(t),
            ThresholdMode::Sd => {
                if gaps.len() < 2 {
                    return invalid("need two gaps to estimate their spread");
                }
                let n = gaps.len() as f64;
                let mean = gaps.iter().sum::<f64>() / n;
                Ok((gaps.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt())
            }
        }
    }
}

impl FromStr for ThresholdMode {
    type Err = Error;

    /// `9`, `15` or any positive number, or `sd`.
    fn from_str(s: &str) -> Result<Self> {
        if s == "sd" {
            return Ok(ThresholdMode::Sd);
        }
        match s.parse::<f64>() {
            Ok(t) if t > 0.0 && t.is_finite() => Ok(ThresholdMode::Fixed(t)),
            _ => invalid(format!("threshold '{s}' is neither a positive number nor 'sd'")),
        }
    }
}

impl TryFrom<String> for ThresholdMode {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ThresholdMode> for String {
    fn from(mode: ThresholdMode) -> Self {
        mode.to_string()
    }
}

impl fmt::Display for ThresholdMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ThresholdMode::Fixed(t) => write!(f, "{t}"),
            ThresholdMode::Sd => f.write_str("sd"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SerialGroup {
    /// Overestimation at both visits.
    G1,
    /// Not over at the first visit, over at the second.
    G2,
    /// Over at the first visit, not over at the second.
    G3,
    /// Over at neither visit.
    G4,
}

impl SerialGroup {
    pub const ALL: [SerialGroup; 4] = [SerialGroup::G1, SerialGroup::G2, SerialGroup::G3, SerialGroup::G4];

    pub fn from_strata(first: GapStratum, second: GapStratum) -> Self {
        let over = |s| s == GapStratum::Overestimation;
        match (over(first), over(second)) {
            (true, true) => SerialGroup::G1,
            (false, true) => SerialGroup::G2,
            (true, false) => SerialGroup::G3,
            (false, false) => SerialGroup::G4,
        }
    }
}

impl fmt::Display for SerialGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SerialAssignment {
    /// `None` where a visit is missing.
    pub groups: Vec<Option<SerialGroup>>,
    pub excluded: usize,
}

/// Groups subjects by their strata at two visits. Subjects lacking either
/// gap are excluded and counted.
pub fn serial_groups(pairs: &[(Option<f64>, Option<f64>)], threshold: f64) -> Result<SerialAssignment> {
    if !(threshold > 0.0 && threshold.is_finite()) {
        return invalid("threshold must be positive and finite");
    }
    let groups: Vec<Option<SerialGroup>> = pairs
        .iter()
        .map(|&(a, b)| match (a, b) {
            (Some(a), Some(b)) if !a.is_nan() && !b.is_nan() => {
                Some(SerialGroup::from_strata(GapStratum::classify(a, threshold), GapStratum::classify(b, threshold)))
            }
            _ => None,
        })
        .collect();
    let excluded = groups.iter().filter(|g| g.is_none()).count();
    Ok(SerialAssignment { groups, excluded })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    pub pearson: f64,
    pub mae: f64,
}

pub fn agreement_metrics(predictions: &[f64], labels: &[f64]) -> Result<Agreement> {
    let n = predictions.len();
    if n != labels.len() {
        return invalid("predictions and labels differ in length");
    }
    if n < 2 {
        return invalid("need at least two pairs");
    }
    let nf = n as f64;
    let (mp, ml) = (predictions.iter().sum::<f64>() / nf, labels.iter().sum::<f64>() / nf);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (p, l) in predictions.iter().zip(labels) {
        let (dp, dl) = (p - mp, l - ml);
        sxy += dp * dl;
        sxx += dp * dp;
        syy += dl * dl;
    }
    if !(sxx > 0.0 && syy > 0.0) {
        return Err(Error::Undefined("correlation with zero variance".into()));
    }
    Ok(Agreement {
        pearson: (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0),
        mae: predictions.iter().zip(labels).map(|(p, l)| (p - l).abs()).sum::<f64>() / nf,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;
    use GapStratum::*;

    #[test]
    fn boundaries() {
        let s = stratify_gap(&[-9.0, 9.0, 9.01, -9.01, 0.0], 9.0).unwrap();
        assert_eq!(s, vec![Correct, Correct, Overestimation, Underestimation, Correct]);
        assert_eq!(stratify_gap(&[-15.5], 15.0).unwrap(), vec![Underestimation]);
        assert!(stratify_gap(&[1.0], 0.0).is_err());
        assert!(stratify_gap(&[f64::NAN], 9.0).is_err());
    }

    #[test]
    fn strata_partition_every_real() {
        let mut r = rng::stream(0, "strata", 0);
        for _ in 0..10_000 {
            let g: f64 = r.random_range(-50.0..50.0);
            let t: f64 = r.random_range(0.1..20.0);
            let hits = [g < -t, (-t..=t).contains(&g), g > t];
            assert_eq!(hits.iter().filter(|&&h| h).count(), 1);
            let expect = GapStratum::ALL[hits.iter().position(|&h| h).unwrap()];
            assert_eq!(GapStratum::classify(g, t), expect);
        }
        for g in [f64::INFINITY, f64::NEG_INFINITY, f64::MAX, -0.0] {
            let _ = GapStratum::classify(g, 9.0);
        }
    }

    #[test]
    fn serial_truth_table() {
        let table = [
            (Underestimation, Underestimation, SerialGroup::G4),
            (Underestimation, Correct, SerialGroup::G4),
            (Underestimation, Overestimation, SerialGroup::G2),
            (Correct, Underestimation, SerialGroup::G4),
            (Correct, Correct, SerialGroup::G4),
            (Correct, Overestimation, SerialGroup::G2),
            (Overestimation, Underestimation, SerialGroup::G3),
            (Overestimation, Correct, SerialGroup::G3),
            (Overestimation, Overestimation, SerialGroup::G1),
        ];
        for (a, b, g) in table {
            assert_eq!(SerialGroup::from_strata(a, b), g, "({a}, {b})");
        }
    }

    #[test]
    fn missing_visits_are_excluded() {
        let pairs = [(Some(10.0), Some(12.0)), (None, Some(1.0)), (Some(-20.0), None), (Some(0.0), Some(0.0))];
        let s = serial_groups(&pairs, 9.0).unwrap();
        assert_eq!(s.groups, vec![Some(SerialGroup::G1), None, None, Some(SerialGroup::G4)]);
        assert_eq!(s.excluded, 2);
    }

    #[test]
    fn threshold_modes() {
        assert_eq!("9".parse::<ThresholdMode>().unwrap(), ThresholdMode::Fixed(9.0));
        assert_eq!("sd".parse::<ThresholdMode>().unwrap(), ThresholdMode::Sd);
        assert!("-3".parse::<ThresholdMode>().is_err());
        assert_eq!(
            ThresholdMode::Fixed(15.0).to_string().parse::<ThresholdMode>().unwrap(),
            ThresholdMode::Fixed(15.0)
        );
        let sd = ThresholdMode::Sd.resolve(&[1.0, 3.0]).unwrap();
        assert!((sd - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn agreement_examples() {
        let y: Vec<f64> = (0..10).map(f64::from).collect();
        let a = agreement_metrics(&y, &y).unwrap();
        assert_eq!((a.pearson, a.mae), (1.0, 0.0));
        let neg: Vec<f64> = y.iter().map(|v| -v).collect();
        assert!((agreement_metrics(&neg, &y).unwrap().pearson + 1.0).abs() < 1e-15);
        assert!(matches!(agreement_metrics(&[1.0, 1.0], &[1.0, 2.0]), Err(Error::Undefined(_))));
        assert!(agreement_metrics(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn agreement_matches_two_pass_oracle() {
        let mut r = rng::stream(4, "agree", 0);
        let p: Vec<f64> = (0..100).map(|_| r.random_range(30.0..90.0)).collect();
        let y: Vec<f64> = (0..100).map(|_| r.random_range(30.0..90.0)).collect();
        let a = agreement_metrics(&p, &y).unwrap();
        // Two passes: means first, then centered sums; written out long-hand.
        let mut mean_p = 0.0;
        let mut mean_y = 0.0;
        for i in 0..100 {
            mean_p += p[i] / 100.0;
            mean_y += y[i] / 100.0;
        }
        let mut cov = 0.0;
        let mut vp = 0.0;
        let mut vy = 0.0;
        let mut abs = 0.0;
        for i in 0..100 {
            cov += (p[i] - mean_p) * (y[i] - mean_y);
            vp += (p[i] - mean_p).powi(2);
            vy += (y[i] - mean_y).powi(2);
            abs += (p[i] - y[i]).abs();
        }
        assert!((a.pearson - cov / (vp.sqrt() * vy.sqrt())).abs() < 1e-12);
        assert!((a.mae - abs / 100.0).abs() < 1e-12);
    }
}
