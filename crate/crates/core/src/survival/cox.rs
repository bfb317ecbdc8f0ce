//! Cox proportional hazards regression by Newton-Raphson on the partial
//! likelihood.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{normal_two_sided_p, SurvivalRecord, Z95};
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ties {
    #[default]
    Efron,
    Breslow,
}

pub const SCORE_TOLERANCE: f64 = 1e-8;
pub const MAX_ITERATIONS: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct CoxFit {
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub std_errors: Vec<f64>,
    pub hazard_ratios: Vec<f64>,
    pub ci95: Vec<(f64, f64)>,
    pub z: Vec<f64>,
    pub p_values: Vec<f64>,
    pub n: usize,
    pub n_events: usize,
    pub log_likelihood: f64,
    pub null_log_likelihood: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl CoxFit {
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// Log partial likelihood, score and information at `beta`.
pub(crate) struct PartialLikelihood {
    pub log_likelihood: f64,
    pub score: DVector<f64>,
    pub information: DMatrix<f64>,
}

/// Records sorted by time with covariates centered, ready for repeated
/// likelihood evaluations.
pub(crate) struct CoxData {
    times: Vec<f64>,
    events: Vec<bool>,
    x: Vec<DVector<f64>>,
    p: usize,
}

impl CoxData {
    pub(crate) fn new(records: &[SurvivalRecord], p: usize) -> Result<Self> {
        if records.is_empty() {
            return invalid("no records");
        }
        for r in records {
            if !(r.time > 0.0 && r.time.is_finite()) {
                return invalid(format!("survival time {} must be positive and finite", r.time));
            }
            if r.covariates.len() != p || r.covariates.iter().any(|v| !v.is_finite()) {
                return invalid("covariate vectors must be finite and match the names");
            }
        }
        let mut order: Vec<usize> = (0..records.len()).collect();
        order.sort_by(|&a, &b| records[a].time.total_cmp(&records[b].time));
        let n = records.len() as f64;
        let means: Vec<f64> = (0..p).map(|j| records.iter().map(|r| r.covariates[j]).sum::<f64>() / n).collect();
        Ok(Self {
            times: order.iter().map(|&i| records[i].time).collect(),
            events: order.iter().map(|&i| records[i].event).collect(),
            x: order
                .iter()
                .map(|&i| DVector::from_iterator(p, records[i].covariates.iter().zip(&means).map(|(v, m)| v - m)))
                .collect(),
            p,
        })
    }

    pub(crate) fn n_events(&self) -> usize {
        self.events.iter().filter(|&&e| e).count()
    }

    /// Walks distinct times from last to first, growing the risk set, and
    /// applies the tie correction to each group of events.
    pub(crate) fn evaluate(&self, beta: &DVector<f64>, ties: Ties) -> PartialLikelihood {
        let p = self.p;
        let eta: Vec<f64> = self.x.iter().map(|x| x.dot(beta)).collect();
        let w: Vec<f64> = eta.iter().map(|e| e.exp()).collect();
        let mut s0 = 0.0;
        let mut s1 = DVector::<f64>::zeros(p);
        let mut s2 = DMatrix::<f64>::zeros(p, p);
        let mut ll = 0.0;
        let mut score = DVector::<f64>::zeros(p);
        let mut info = DMatrix::<f64>::zeros(p, p);

        let mut end = self.times.len();
        while end > 0 {
            let t = self.times[end - 1];
            let mut start = end;
            while start > 0 && self.times[start - 1] == t {
                start -= 1;
            }
            let (mut d0, mut d1, mut d2, mut d) = (0.0, DVector::zeros(p), DMatrix::zeros(p, p), 0usize);
            for i in start..end {
                let xx = &self.x[i] * self.x[i].transpose();
                s0 += w[i];
                s1 += &self.x[i] * w[i];
                s2 += &xx * w[i];
                if self.events[i] {
                    d += 1;
                    d0 += w[i];
                    d1 += &self.x[i] * w[i];
                    d2 += xx * w[i];
                    ll += eta[i];
                    score += &self.x[i];
                }
            }
            for l in 0..d {
                let f = match ties {
                    Ties::Efron => l as f64 / d as f64,
                    Ties::Breslow => 0.0,
                };
                let a0 = s0 - f * d0;
                let a1 = &s1 - &d1 * f;
                let a2 = &s2 - &d2 * f;
                ll -= a0.ln();
                score -= &a1 / a0;
                info += a2 / a0 - (&a1 * a1.transpose()) / (a0 * a0);
            }
            end = start;
        }
        PartialLikelihood { log_likelihood: ll, score, information: info }
    }
}

fn collinearity_check(data: &CoxData, names: &[String]) -> Result<()> {
    let p = data.p;
    if p == 0 {
        return Ok(());
    }
    let mut gram = DMatrix::<f64>::zeros(p, p);
    for x in &data.x {
        gram += x * x.transpose();
    }
    let scale: Vec<f64> = (0..p).map(|j| gram[(j, j)].sqrt()).collect();
    if let Some(j) = scale.iter().position(|&s| !(s > 0.0)) {
        return Err(Error::Collinear(format!("covariate '{}' is constant", names[j])));
    }
    let corr = DMatrix::from_fn(p, p, |i, j| gram[(i, j)] / (scale[i] * scale[j]));
    let eig = corr.symmetric_eigen();
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min < 1e-10 {
        return Err(Error::Collinear(format!("covariates {} are linearly dependent", names.join(", "))));
    }
    Ok(())
}

/// Fits the model. Stops when the largest score component is below
/// [`SCORE_TOLERANCE`]; a fit that needs more than [`MAX_ITERATIONS`]
/// Newton steps is returned with `converged == false`.
pub fn cox_fit(records: &[SurvivalRecord], names: &[String], ties: Ties) -> Result<CoxFit> {
    let p = names.len();
    let data = CoxData::new(records, p)?;
    let n_events = data.n_events();
    if n_events == 0 {
        return Err(Error::NoEvents);
    }
    collinearity_check(&data, names)?;

    let mut beta = DVector::<f64>::zeros(p);
    let null = data.evaluate(&beta, ties);
    let null_ll = null.log_likelihood;
    let mut cur = null;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        let chol = cur
            .information
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Collinear("information matrix is singular".into()))?;
        let step = chol.solve(&cur.score);
        if cur.score.amax() < SCORE_TOLERANCE {
            converged = true;
            // One more full step is nearly free and takes the remaining
            // error from ~tolerance / information down to rounding.
            let trial = &beta + &step;
            let next = data.evaluate(&trial, ties);
            if next.log_likelihood.is_finite() && next.log_likelihood >= cur.log_likelihood {
                beta = trial;
                cur = next;
            }
            break;
        }
        iterations += 1;
        // Step halving guards against overshooting on flat likelihoods.
        let mut scale = 1.0;
        loop {
            let trial = &beta + &step * scale;
            let next = data.evaluate(&trial, ties);
            if next.log_likelihood.is_finite() && (next.log_likelihood >= cur.log_likelihood - 1e-12 || scale < 1e-6) {
                beta = trial;
                cur = next;
                break;
            }
            scale /= 2.0;
        }
    }
    if !converged && cur.score.amax() < SCORE_TOLERANCE {
        converged = true;
    }
    if !converged {
        log::warn!("Cox fit did not converge in {MAX_ITERATIONS} iterations");
    }

    let covariance = cur
        .information
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Collinear("information matrix is singular".into()))?;
    let coefficients: Vec<f64> = beta.iter().copied().collect();
    let std_errors: Vec<f64> = (0..p).map(|j| covariance[(j, j)].max(0.0).sqrt()).collect();
    let z: Vec<f64> = coefficients.iter().zip(&std_errors).map(|(b, s)| b / s).collect();
    Ok(CoxFit {
        names: names.to_vec(),
        hazard_ratios: coefficients.iter().map(|b| b.exp()).collect(),
        ci95: coefficients.iter().zip(&std_errors).map(|(b, s)| ((b - Z95 * s).exp(), (b + Z95 * s).exp())).collect(),
        p_values: z.iter().map(|&z| normal_two_sided_p(z)).collect(),
        z,
        covariance: (0..p).map(|i| (0..p).map(|j| covariance[(i, j)]).collect()).collect(),
        std_errors,
        coefficients,
        n: records.len(),
        n_events,
        log_likelihood: cur.log_likelihood,
        null_log_likelihood: null_ll,
        converged,
        iterations,
    })
}
