//! Sample-wise MAE plus distributional MAE between the pseudo-label sequence
//! and the soft-sorted predictions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};
use crate::label_distribution::{pseudo_labels, LabelGrid};
use crate::soft_sort::{soft_sort, soft_sort_vjp};

#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    pub sample_mae: f64,
    pub distributional_mae: f64,
    pub total: f64,
    /// d(total) / d(predictions).
    pub grad: Vec<f64>,
}

/// Subgradient of `|x|` with the value 0 at the kink.
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Plain MAE with its subgradient.
pub fn mae_loss(predictions: &[f64], labels: &[f64]) -> Result<LossBreakdown> {
    check_batch(predictions, labels)?;
    let b = predictions.len() as f64;
    let mut sum = 0.0;
    let grad = predictions
        .iter()
        .zip(labels)
        .map(|(p, y)| {
            sum += (p - y).abs();
            sign(p - y) / b
        })
        .collect();
    let sample_mae = sum / b;
    Ok(LossBreakdown { sample_mae, distributional_mae: 0.0, total: sample_mae, grad })
}

fn check_batch(predictions: &[f64], labels: &[f64]) -> Result<()> {
    if predictions.is_empty() {
        return invalid("batch must hold at least one sample");
    }
    if predictions.len() != labels.len() {
        return invalid(format!("{} predictions for {} labels", predictions.len(), labels.len()));
    }
    Ok(())
}

/// Dist Loss with unit weight on the distributional term.
pub fn dist_loss(predictions: &[f64], labels: &[f64], grid: &LabelGrid, epsilon: f64) -> Result<LossBreakdown> {
    weighted_dist_loss(predictions, labels, grid, epsilon, 1.0)
}

/// `total = sample_mae + weight * distributional_mae`.
///
/// The pseudo-labels depend only on the grid and the batch size, so the
/// distributional gradient flows through the soft sort alone.
pub fn weighted_dist_loss(
    predictions: &[f64],
    labels: &[f64],
    grid: &LabelGrid,
    epsilon: f64,
    weight: f64,
) -> Result<LossBreakdown> {
    if !(weight >= 0.0 && weight.is_finite()) {
        return invalid("distributional weight must be finite and non-negative");
    }
    let sample = mae_loss(predictions, labels)?;
    let b = predictions.len();
    let targets = pseudo_labels(grid, b)?;
    let sorted = soft_sort(predictions, epsilon)?;

    let mut dist_sum = 0.0;
    let upstream: Vec<f64> = sorted
        .sorted_values
        .iter()
        .zip(&targets.values)
        .map(|(sp, sl)| {
            dist_sum += (sp - sl).abs();
            weight * sign(sp - sl) / b as f64
        })
        .collect();
    let distributional_mae = dist_sum / b as f64;
    let dist_grad = soft_sort_vjp(predictions, &upstream, &sorted)?;

    let grad = sample.grad.iter().zip(&dist_grad).map(|(a, c)| a + c).collect();
    Ok(LossBreakdown {
        sample_mae: sample.sample_mae,
        distributional_mae,
        total: sample.sample_mae + weight * distributional_mae,
        grad,
    })
}

/// Compares the analytic Dist Loss gradient with central finite differences
/// on a random, kink-free batch of 32 and returns the max relative error.
pub fn dist_loss_grad_check(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = 32;
    let grid = LabelGrid::from_probs(
        (40..=70).map(f64::from).collect(),
        (0..31).map(|_| rng.random_range(0.05..1.0)).collect(),
        0.5,
    )
    .expect("valid grid");
    let eps = 0.5;
    let h = 1e-6;
    loop {
        let labels: Vec<f64> = (0..b).map(|_| rng.random_range(40..=70) as f64).collect();
        let preds: Vec<f64> = (0..b).map(|_| rng.random_range(35.0..75.0)).collect();
        if !kink_free(&preds, &labels, &grid, eps, 10.0 * h) {
            continue;
        }
        let analytic = dist_loss(&preds, &labels, &grid, eps).expect("valid batch").grad;
        let mut worst: f64 = 0.0;
        for i in 0..b {
            let mut up = preds.clone();
            let mut down = preds.clone();
            up[i] += h;
            down[i] -= h;
            let fd = (dist_loss(&up, &labels, &grid, eps).unwrap().total
                - dist_loss(&down, &labels, &grid, eps).unwrap().total)
                / (2.0 * h);
            let denom = analytic[i].abs().max(fd.abs()).max(1e-3);
            worst = worst.max((analytic[i] - fd).abs() / denom);
        }
        return worst;
    }
}

/// True when no residual, sorted-vs-pseudo-label gap, input tie or PAV
/// block boundary is within `margin` of switching.
fn kink_free(preds: &[f64], labels: &[f64], grid: &LabelGrid, eps: f64, margin: f64) -> bool {
    if preds.iter().zip(labels).any(|(p, y)| (p - y).abs() < margin) {
        return false;
    }
    let mut sorted = preds.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.windows(2).any(|w| w[1] - w[0] < margin) {
        return false;
    }
    let Ok(s) = soft_sort(preds, eps) else {
        return false;
    };
    let Ok(targets) = pseudo_labels(grid, preds.len()) else {
        return false;
    };
    if s.sorted_values.iter().zip(&targets.values).any(|(a, b)| (a - b).abs() < margin) {
        return false;
    }
    // Every single-coordinate nudge must leave the PAV block structure intact.
    for i in 0..preds.len() {
        for delta in [margin, -margin] {
            let mut nudged = preds.to_vec();
            nudged[i] += delta;
            match soft_sort(&nudged, eps) {
                Ok(p) if p.blocks == s.blocks => {}
                _ => return false,
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    fn worked_grid() -> LabelGrid {
        LabelGrid::from_probs(vec![40.0, 50.0, 60.0], vec![1.0, 2.0, 3.0], 0.5).unwrap()
    }

    #[test]
    fn degenerate_distribution_exact_fit() {
        let grid = LabelGrid::from_probs(vec![55.0], vec![1.0], 0.5).unwrap();
        let r = dist_loss(&[55.0; 5], &[55.0; 5], &grid, 1.0).unwrap();
        assert_eq!(r.total, 0.0);
        assert!(r.grad.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn matching_sequence_is_zero() {
        let y = [40.0, 50.0, 50.0, 60.0, 60.0, 60.0];
        let r = dist_loss(&y, &y, &worked_grid(), 1e-6).unwrap();
        assert_eq!(r.sample_mae, 0.0);
        assert_eq!(r.distributional_mae, 0.0);
        assert_eq!(r.total, 0.0);
    }

    #[test]
    fn hand_evaluated_distributional_term() {
        let labels = [40.0, 50.0, 50.0, 60.0, 60.0, 60.0];
        let preds = [41.0, 52.0, 48.0, 63.0, 58.0, 61.0];
        let r = dist_loss(&preds, &labels, &worked_grid(), 1e-6).unwrap();
        assert!((r.distributional_mae - 11.0 / 6.0).abs() < 1e-12);
        assert!((r.total - r.sample_mae - r.distributional_mae).abs() < 1e-12);
    }

    #[test]
    fn shuffled_pairing_has_zero_distributional_term() {
        let labels = [60.0, 40.0, 50.0, 60.0, 50.0, 60.0];
        let preds = [50.0, 60.0, 60.0, 40.0, 60.0, 50.0];
        let r = dist_loss(&preds, &labels, &worked_grid(), 1e-6).unwrap();
        assert_eq!(r.distributional_mae, 0.0);
        assert!(r.sample_mae > 0.0);
    }

    #[test]
    fn constant_predictions_far_away() {
        let labels = [40.0, 50.0, 50.0, 60.0, 60.0, 60.0];
        let r = mae_loss(&[100.0; 6], &labels).unwrap();
        assert!(r.grad.iter().all(|g| *g == 1.0 / 6.0));
        let r = mae_loss(&[0.0; 6], &labels).unwrap();
        assert!(r.grad.iter().all(|g| *g == -1.0 / 6.0));
    }

    #[test]
    fn zero_residual_has_zero_subgradient() {
        let r = mae_loss(&[1.0, 5.0], &[1.0, 2.0]).unwrap();
        assert_eq!(r.grad, vec![0.0, 0.5]);
    }

    #[test]
    fn translation_response() {
        let labels = [40.0, 50.0, 50.0, 60.0, 60.0, 60.0];
        let preds = [45.0, 55.0, 52.0, 66.0, 61.0, 64.0];
        let grid = worked_grid();
        let base = dist_loss(&preds, &labels, &grid, 1e-3).unwrap();
        let c = 2.5;
        let shifted: Vec<f64> = preds.iter().map(|p| p + c).collect();
        let moved = dist_loss(&shifted, &labels, &grid, 1e-3).unwrap();
        assert!((moved.sample_mae - base.sample_mae - c).abs() < 1e-12);
        let a = soft_sort(&preds, 1e-3).unwrap().sorted_values;
        let b = soft_sort(&shifted, 1e-3).unwrap().sorted_values;
        for (x, y) in a.iter().zip(&b) {
            assert!((y - x - c).abs() < 1e-9);
        }
    }

    #[test]
    fn shape_errors() {
        let grid = worked_grid();
        assert!(dist_loss(&[1.0], &[1.0, 2.0], &grid, 1.0).is_err());
        assert!(dist_loss(&[], &[], &grid, 1.0).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..5 {
            let err = dist_loss_grad_check(seed);
            assert!(err < 1e-5, "seed {seed}: {err}");
        }
    }
}
