//! Finite-difference check of the analytic parameter gradient.

use rand::Rng;

use super::model::{ModelParams, NetConfig};
use super::tensor::Tensor;
use crate::error::Result;
use crate::rng;

/// Largest relative error between the analytic gradient of
/// `sum_b u_b * pred_b` and central differences, over every parameter of a
/// randomly initialized network at one random point (`seed`). Relative error
/// is `|a - f| / max(|a|, |f|, 1e-6)`.
pub fn model_gradient_check(config: &NetConfig, seed: u64, batch: usize) -> Result<f64> {
    let mut draw = rng::stream(seed, "gradcheck", 0);
    // Non-zero biases so every code path carries signal.
    let mut params = ModelParams::init(config, seed, 0.0, 1.0)?;
    for a in params.arrays_mut() {
        for v in a.iter_mut() {
            if *v == 0.0 {
                *v = draw.random_range(-0.2..0.2);
            }
        }
    }
    let data: Vec<f64> = (0..batch * config.input_length).map(|_| draw.random_range(-1.0..1.0)).collect();
    let x = Tensor::new([batch, 1, config.input_length], data)?;
    let upstream: Vec<f64> = (0..batch).map(|_| draw.random_range(-1.0..1.0)).collect();
    let objective =
        |p: &ModelParams| -> Result<f64> { Ok(p.forward(&x)?.iter().zip(&upstream).map(|(a, b)| a * b).sum()) };

    let (_, grad) = params.vjp(&x, &upstream)?;
    let analytic: Vec<f64> = grad.arrays().into_iter().flatten().copied().collect();
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    let mut flat = 0;
    let n_arrays = params.arrays().len();
    for a in 0..n_arrays {
        let len = params.arrays()[a].len();
        for i in 0..len {
            let orig = params.arrays()[a][i];
            params.arrays_mut()[a][i] = orig + h;
            let up = objective(&params)?;
            params.arrays_mut()[a][i] = orig - h;
            let down = objective(&params)?;
            params.arrays_mut()[a][i] = orig;
            let fd = (up - down) / (2.0 * h);
            let an = analytic[flat];
            worst = worst.max((an - fd).abs() / an.abs().max(fd.abs()).max(1e-6));
            flat += 1;
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiny_network_gradient_matches_finite_differences() {
        for seed in 0..3 {
            let err = model_gradient_check(&NetConfig::tiny(), seed, 2).unwrap();
            assert!(err < 1e-4, "seed {seed}: {err}");
        }
    }
}
