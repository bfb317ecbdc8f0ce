//! Restricted cubic splines and spline-based hazard-ratio curves.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::cox::{cox_fit, Ties};
use super::{SurvivalRecord, Z95};
use crate::error::{invalid, Result};

/// Knot quantiles used for 3 to 7 knots.
pub fn knot_quantiles(n_knots: usize) -> Option<&'static [f64]> {
    Some(match n_knots {
        3 => &[0.1, 0.5, 0.9],
        4 => &[0.05, 0.35, 0.65, 0.95],
        5 => &[0.05, 0.275, 0.5, 0.725, 0.95],
        6 => &[0.05, 0.23, 0.41, 0.59, 0.77, 0.95],
        7 => &[0.025, 0.1833, 0.3417, 0.5, 0.6583, 0.8167, 0.975],
        _ => return None,
    })
}

/// Linear-interpolation sample quantile (the usual "type 7").
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Restricted (natural) cubic spline with fixed knots: linear below the
/// first and above the last knot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RcsBasis {
    pub knots: Vec<f64>,
}

impl RcsBasis {
    pub fn from_knots(knots: Vec<f64>) -> Result<Self> {
        if knots.len() < 3 || knots.windows(2).any(|w| !(w[0] < w[1])) {
            return invalid("need at least 3 strictly increasing knots");
        }
        Ok(Self { knots })
    }

    /// Knots at the standard quantiles of `x`.
    pub fn from_data(x: &[f64], n_knots: usize) -> Result<Self> {
        let Some(qs) = knot_quantiles(n_knots) else {
            return invalid(format!("{n_knots} knots requested, expected 3 to 7"));
        };
        let mut sorted: Vec<f64> = x.to_vec();
        if sorted.iter().any(|v| !v.is_finite()) {
            return invalid("non-finite spline input");
        }
        sorted.sort_by(f64::total_cmp);
        let mut distinct = sorted.clone();
        distinct.dedup();
        if distinct.len() < n_knots {
            return invalid(format!("{} distinct values cannot place {n_knots} knots", distinct.len()));
        }
        let knots: Vec<f64> = qs.iter().map(|&q| quantile(&sorted, q)).collect();
        Self::from_knots(knots)
            .map_err(|_| crate::Error::InvalidInput("too few distinct values: knots at the quantiles coincide".into()))
    }

    /// Number of columns: `x` itself plus `n_knots - 2` nonlinear terms.
    pub fn columns(&self) -> usize {
        self.knots.len() - 1
    }

    /// Basis row at `x`. Nonlinear terms use the truncated-power form
    /// scaled by `(t_k - t_1)^2` so that they are on the scale of `x`.
    pub fn row(&self, x: f64) -> Vec<f64> {
        let t = &self.knots;
        let k = t.len();
        let (tk, tk1) = (t[k - 1], t[k - 2]);
        let norm = (tk - t[0]).powi(2);
        let cube = |v: f64| if v > 0.0 { v * v * v } else { 0.0 };
        let mut row = Vec::with_capacity(k - 1);
        row.push(x);
        for &tj in &t[..k - 2] {
            let v = cube(x - tj) - cube(x - tk1) * (tk - tj) / (tk - tk1) + cube(x - tk) * (tk1 - tj) / (tk - tk1);
            row.push(v / norm);
        }
        row
    }

    pub fn design(&self, x: &[f64]) -> Vec<Vec<f64>> {
        x.iter().map(|&v| self.row(v)).collect()
    }
}

/// Basis matrix for `x` with knots at the standard quantiles.
pub fn rcs_basis(x: &[f64], n_knots: usize) -> Result<(RcsBasis, Vec<Vec<f64>>)> {
    let basis = RcsBasis::from_data(x, n_knots)?;
    let design = basis.design(x);
    Ok((basis, design))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HrPoint {
    pub gap: f64,
    pub hr: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Hazard ratio as a function of the gap, relative to gap 0, from a Cox fit
/// on the spline basis of the gap plus `adjust` covariates (one row per
/// record). Intervals come from the delta method.
pub fn hr_curve(
    records: &[SurvivalRecord],
    gaps: &[f64],
    adjust: &[String],
    n_knots: usize,
    grid: &[f64],
) -> Result<(RcsBasis, Vec<HrPoint>)> {
    if gaps.len() != records.len() {
        return invalid("one gap per record is required");
    }
    let basis = RcsBasis::from_data(gaps, n_knots)?;
    let m = basis.columns();
    let mut names: Vec<String> = (0..m).map(|j| format!("gap_rcs{j}")).collect();
    names.extend(adjust.iter().cloned());
    let design: Vec<SurvivalRecord> = records
        .iter()
        .zip(gaps)
        .map(|(r, &g)| {
            let mut covariates = basis.row(g);
            covariates.extend_from_slice(&r.covariates);
            SurvivalRecord { time: r.time, event: r.event, covariates }
        })
        .collect();
    let fit = cox_fit(&design, &names, Ties::Efron)?;
    let beta = DVector::from_column_slice(&fit.coefficients[..m]);
    let origin = basis.row(0.0);
    let points = grid
        .iter()
        .map(|&g| {
            let d: Vec<f64> = basis.row(g).iter().zip(&origin).map(|(a, b)| a - b).collect();
            let d = DVector::from_vec(d);
            let log_hr = d.dot(&beta);
            let var: f64 =
                (0..m).flat_map(|i| (0..m).map(move |j| (i, j))).map(|(i, j)| d[i] * fit.covariance[i][j] * d[j]).sum();
            let half = Z95 * var.max(0.0).sqrt();
            HrPoint { gap: g, hr: log_hr.exp(), ci_low: (log_hr - half).exp(), ci_high: (log_hr + half).exp() }
        })
        .collect();
    Ok((basis, points))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use nalgebra::DMatrix;
    use rand::Rng;

    fn basis() -> RcsBasis {
        RcsBasis::from_knots(vec![-3.0, -0.5, 1.0, 4.0]).unwrap()
    }

    #[test]
    fn linear_outside_the_boundary_knots() {
        let b = basis();
        for (lo, step) in [(-10.0, 1.0), (5.0, 0.7)] {
            let rows: Vec<Vec<f64>> = (0..4).map(|i| b.row(lo + i as f64 * step)).collect();
            for c in 0..b.columns() {
                let second = rows[2][c] - 2.0 * rows[1][c] + rows[0][c];
                let third = rows[3][c] - 2.0 * rows[2][c] + rows[1][c];
                assert!(second.abs() < 1e-9 && third.abs() < 1e-9, "column {c} curves outside the knots");
            }
        }
    }

    #[test]
    fn continuous_up_to_second_derivative_at_knots() {
        let b = basis();
        let h = 1e-4;
        for &t in &b.knots {
            let f = |x: f64| b.row(x);
            let d1 = |x: f64, s: f64| -> Vec<f64> { f(x + s).iter().zip(f(x)).map(|(a, b)| (a - b) / s).collect() };
            for c in 0..b.columns() {
                let (left, right) = (f(t - 1e-9)[c], f(t + 1e-9)[c]);
                assert!((left - right).abs() < 1e-7);
                // One-sided first derivatives agree.
                let (dl, dr) = (d1(t, -h)[c], d1(t, h)[c]);
                assert!((dl - dr).abs() < 1e-3, "slope jump at knot {t}");
                // One-sided second derivatives agree.
                let sl = (f(t)[c] - 2.0 * f(t - h)[c] + f(t - 2.0 * h)[c]) / (h * h);
                let sr = (f(t + 2.0 * h)[c] - 2.0 * f(t + h)[c] + f(t)[c]) / (h * h);
                assert!((sl - sr).abs() < 1e-2, "curvature jump at knot {t}: {sl} vs {sr}");
            }
        }
    }

    #[test]
    fn affine_transform_spans_the_same_space() {
        let mut r = rng::stream(1, "rcs", 0);
        let x: Vec<f64> = (0..200).map(|_| r.random_range(-5.0..8.0)).collect();
        let (b, design) = rcs_basis(&x, 5).unwrap();
        let (a, c) = (2.5, -7.0);
        let moved = RcsBasis::from_knots(b.knots.iter().map(|k| a * k + c).collect()).unwrap();
        let other = moved.design(&x.iter().map(|v| a * v + c).collect::<Vec<_>>());
        // Columns of the original basis (with intercept) must explain the
        // transformed columns exactly.
        let n = x.len();
        let p = b.columns() + 1;
        let m = DMatrix::from_fn(n, p, |i, j| if j == 0 { 1.0 } else { design[i][j - 1] });
        let svd = m.clone().svd(true, true);
        for col in 0..moved.columns() {
            let y = nalgebra::DVector::from_fn(n, |i, _| other[i][col]);
            let coef = svd.solve(&y, 1e-12).unwrap();
            let resid = (&m * coef - &y).norm() / y.norm();
            assert!(resid < 1e-8, "column {col}: residual {resid}");
        }
    }

    #[test]
    fn knots_at_standard_quantiles_and_errors() {
        let x: Vec<f64> = (0..=100).map(f64::from).collect();
        let (b, _) = rcs_basis(&x, 3).unwrap();
        assert_eq!(b.knots, vec![10.0, 50.0, 90.0]);
        assert!(rcs_basis(&x, 2).is_err());
        assert!(rcs_basis(&x, 8).is_err());
        assert!(rcs_basis(&[1.0, 1.0, 2.0, 2.0], 3).is_err());
    }

    fn cohort(seed: u64, log_hr: f64, n: usize) -> (Vec<SurvivalRecord>, Vec<f64>) {
        let mut r = rng::stream(seed, "hr", 0);
        let mut records = Vec::new();
        let mut gaps = Vec::new();
        for _ in 0..n {
            let g: f64 = r.random_range(-12.0..12.0);
            let t = -r.random::<f64>().ln() / (0.05 * (log_hr * g).exp());
            records.push(SurvivalRecord { time: t.min(10.0), event: t <= 10.0, covariates: vec![] });
            gaps.push(g);
        }
        (records, gaps)
    }

    fn grid() -> Vec<f64> {
        (-10..=10).map(f64::from).collect()
    }

    #[test]
    fn reference_is_exactly_one_and_monotone_truth_is_recovered() {
        let (records, gaps) = cohort(2, 0.08, 3000);
        let (_, curve) = hr_curve(&records, &gaps, &[], 4, &grid()).unwrap();
        let zero = curve.iter().find(|p| p.gap == 0.0).unwrap();
        assert_eq!(zero.hr, 1.0);
        for p in &curve {
            let truth = (0.08 * p.gap).exp();
            assert!(p.ci_low <= truth && truth <= p.ci_high, "gap {}: {truth} outside CI", p.gap);
        }
        assert!(curve.first().unwrap().hr < 1.0 && curve.last().unwrap().hr > 1.0);
    }

    #[test]
    fn flat_truth_covers_one() {
        // Pointwise intervals: each plotted gap must cover 1 in at least 90%
        // of seeds. Covering at every gap at once is a simultaneous-band
        // property that 95% pointwise intervals on a 2-df curve only meet
        // with probability of roughly 85-95%, so it gets a looser bound.
        let g = grid();
        let mut per_gap = vec![0usize; g.len()];
        let mut all = 0;
        for seed in 0..100 {
            let (records, gaps) = cohort(100 + seed, 0.0, 800);
            let (_, curve) = hr_curve(&records, &gaps, &[], 3, &g).unwrap();
            let covers: Vec<bool> = curve.iter().map(|p| p.ci_low <= 1.0 && 1.0 <= p.ci_high).collect();
            for (c, &ok) in per_gap.iter_mut().zip(&covers) {
                *c += usize::from(ok);
            }
            all += usize::from(covers.iter().all(|&c| c));
        }
        assert!(per_gap.iter().all(|&c| c >= 90), "{per_gap:?}");
        assert!(all >= 80, "{all} of 100");
    }
}
