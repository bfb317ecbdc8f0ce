//! Survival and association statistics for the predicted age gap.

pub mod cox;
pub mod km;
pub mod logistic;
pub mod spline;
pub mod strata;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

pub use cox::{cox_fit, CoxFit, Ties};
pub use km::{km_estimate, log_rank, KmCurve, LogRank, TimeEvent};
pub use logistic::{logistic_fit, LogisticFit};
pub use spline::{hr_curve, rcs_basis, HrPoint, RcsBasis};
pub use strata::{
    agreement_metrics, serial_groups, stratify_gap, Agreement, GapStratum, SerialAssignment, SerialGroup, ThresholdMode,
};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959963984540054;

/// One subject's follow-up and covariate vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalRecord {
    pub time: f64,
    pub event: bool,
    pub covariates: Vec<f64>,
}

/// Two-sided p-value of a standard normal statistic. Uses `erfc` so tiny
/// p-values keep their relative precision instead of rounding to zero.
pub fn normal_two_sided_p(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    erfc(z.abs() / std::f64::consts::SQRT_2).min(1.0)
}

/// Upper tail of the chi-square distribution with one degree of freedom.
pub fn chi_square_1df_p(statistic: f64) -> f64 {
    normal_two_sided_p(statistic.max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p_values() {
        assert_eq!(normal_two_sided_p(0.0), 1.0);
        assert!((normal_two_sided_p(Z95) - 0.05).abs() < 1e-9, "{}", normal_two_sided_p(Z95) - 0.05);
        assert!((chi_square_1df_p(3.841458820694124) - 0.05).abs() < 1e-9);
        let tiny = normal_two_sided_p(30.0);
        assert!(tiny > 0.0 && tiny < 1e-190);
    }
}
