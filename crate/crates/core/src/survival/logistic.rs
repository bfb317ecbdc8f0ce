//! Logistic regression by iteratively reweighted least squares.

use nalgebra::{DMatrix, DVector};

use super::{normal_two_sided_p, Z95};
use crate::error::{invalid, Error, Result};

pub const INTERCEPT: &str = "(intercept)";

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFit {
    /// `(intercept)` first, then the covariates.
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub std_errors: Vec<f64>,
    pub odds_ratios: Vec<f64>,
    pub ci95: Vec<(f64, f64)>,
    pub p_values: Vec<f64>,
    pub converged: bool,
    /// Set when coefficients diverge, the signature of (quasi-)separation.
    pub separation: bool,
    pub iterations: usize,
}

/// Coefficients beyond this size in log-odds are treated as diverging.
const DIVERGENCE: f64 = 25.0;

pub fn logistic_fit(outcome: &[bool], covariates: &[Vec<f64>], names: &[String]) -> Result<LogisticFit> {
    let n = outcome.len();
    if covariates.len() != n || covariates.iter().any(|r| r.len() != names.len()) {
        return invalid("covariate rows must match outcomes and names");
    }
    let positives = outcome.iter().filter(|&&y| y).count();
    if positives == 0 || positives == n {
        return invalid("both outcome classes must be present");
    }
    let p = names.len() + 1;
    let x = DMatrix::from_fn(n, p, |i, j| if j == 0 { 1.0 } else { covariates[i][j - 1] });
    let y = DVector::from_fn(n, |i, _| f64::from(u8::from(outcome[i])));
    let mut beta = DVector::<f64>::zeros(p);
    let mut converged = false;
    let mut iterations = 0;
    let mut info = DMatrix::<f64>::zeros(p, p);
    let mut diverged = false;
    while iterations < 100 {
        let eta = &x * &beta;
        let mu = eta.map(|e| 1.0 / (1.0 + (-e).exp()));
        let w = mu.map(|m| m * (1.0 - m));
        let score = x.transpose() * (&y - &mu);
        info = x.transpose() * DMatrix::from_diagonal(&w) * &x;
        let Some(chol) = info.clone().cholesky() else {
            if iterations > 0 {
                // Weights collapsed to zero while coefficients grew.
                diverged = true;
                break;
            }
            return Err(Error::Collinear("logistic information matrix is singular".into()));
        };
        let step = chol.solve(&score);
        beta += &step;
        iterations += 1;
        if step.amax() < 1e-10 {
            converged = true;
            break;
        }
        if beta.amax() > DIVERGENCE {
            break;
        }
    }
    let separation = diverged || beta.amax() > DIVERGENCE;
    if separation {
        log::warn!("logistic fit diverges; outcome looks separable");
    }
    let cov = match info.try_inverse() {
        Some(c) => c,
        None if separation => DMatrix::from_element(p, p, f64::INFINITY),
        None => return Err(Error::Collinear("logistic information matrix is singular".into())),
    };
    let coefficients: Vec<f64> = beta.iter().copied().collect();
    let std_errors: Vec<f64> = (0..p).map(|j| cov[(j, j)].max(0.0).sqrt()).collect();
    let mut all_names = vec![INTERCEPT.to_string()];
    all_names.extend(names.iter().cloned());
    Ok(LogisticFit {
        names: all_names,
        odds_ratios: coefficients.iter().map(|b| b.exp()).collect(),
        ci95: coefficients.iter().zip(&std_errors).map(|(b, s)| ((b - Z95 * s).exp(), (b + Z95 * s).exp())).collect(),
        p_values: coefficients.iter().zip(&std_errors).map(|(b, s)| normal_two_sided_p(b / s)).collect(),
        covariance: (0..p).map(|i| (0..p).map(|j| cov[(i, j)]).collect()).collect(),
        std_errors,
        coefficients,
        converged: converged && !separation,
        separation,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    fn name(s: &str) -> Vec<String> {
        vec![s.to_string()]
    }

    #[test]
    fn two_by_two_table_gives_cross_product_ratio() {
        // a = exposed cases, b = exposed controls, c = unexposed cases,
        // d = unexposed controls.
        let (a, b, c, d) = (30, 70, 12, 88);
        let mut y = Vec::new();
        let mut x = Vec::new();
        for (count, exposed, case) in [(a, 1.0, true), (b, 1.0, false), (c, 0.0, true), (d, 0.0, false)] {
            for _ in 0..count {
                y.push(case);
                x.push(vec![exposed]);
            }
        }
        let fit = logistic_fit(&y, &x, &name("exposed")).unwrap();
        let or = (a * d) as f64 / (b * c) as f64;
        assert!((fit.odds_ratios[1] - or).abs() < 1e-6);
        assert!(fit.converged && !fit.separation);
    }

    #[test]
    fn intercept_only_recovers_event_fraction() {
        let y: Vec<bool> = (0..40).map(|i| i % 5 == 0).collect();
        let fit = logistic_fit(&y, &vec![vec![]; 40], &[]).unwrap();
        let p = 1.0 / (1.0 + (-fit.coefficients[0]).exp());
        assert!((p - 0.2).abs() < 1e-12);
    }

    #[test]
    fn independent_covariate_interval_covers_one() {
        let mut covered = 0;
        for seed in 0..100 {
            let mut r = rng::stream(seed, "logit", 0);
            let y: Vec<bool> = (0..300).map(|_| r.random_bool(0.5)).collect();
            let x: Vec<Vec<f64>> = (0..300).map(|_| vec![r.random_range(-1.0..1.0)]).collect();
            let fit = logistic_fit(&y, &x, &name("x")).unwrap();
            if fit.ci95[1].0 <= 1.0 && 1.0 <= fit.ci95[1].1 {
                covered += 1;
            }
        }
        assert!(covered >= 90, "{covered} of 100");
    }

    #[test]
    fn separation_is_flagged_and_single_class_rejected() {
        let y = vec![false, false, false, true, true, true];
        let x: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64]).collect();
        let fit = logistic_fit(&y, &x, &name("x")).unwrap();
        assert!(fit.separation && !fit.converged);
        assert!(logistic_fit(&[true, true], &[vec![0.0], vec![1.0]], &name("x")).is_err());
    }
}
