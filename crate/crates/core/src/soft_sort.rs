//! L2-regularized differentiable sorting.
//!
//! The ascending soft sort of `v` with strength `epsilon` is the projection of
//! the increasing reference vector `rho / epsilon` onto the permutahedron of
//! `v`. With `w = sort(v)` it reduces to
//!
//! ```text
//! s = z - iso(z - w),   z_i = (i - (n - 1) / 2) / epsilon
//! ```
//!
//! where `iso` is non-decreasing L2 isotonic regression. Inside each pooled
//! block of the isotonic fit the output is `z_i - mean(z) + mean(w)`, so the
//! Jacobian with respect to `w` is the block-averaging matrix.

use std::ops::Range;

use crate::error::{invalid, Result};

/// Solution of a non-decreasing L2 isotonic regression.
#[derive(Debug, Clone, PartialEq)]
pub struct IsotonicFit {
    pub solution: Vec<f64>,
    /// Contiguous index ranges pooled to a common value, in order.
    pub blocks: Vec<Range<usize>>,
}

/// Pool-adjacent-violators for `argmin_{u non-decreasing} sum (u_i - v_i)^2`.
pub fn isotonic_regression_l2(v: &[f64]) -> Result<IsotonicFit> {
    if v.is_empty() {
        return invalid("isotonic regression of an empty vector");
    }
    if v.iter().any(|x| !x.is_finite()) {
        return invalid("isotonic regression input must be finite");
    }
    // Stack of (start, sum, count).
    let mut stack: Vec<(usize, f64, usize)> = Vec::with_capacity(v.len());
    for (i, &x) in v.iter().enumerate() {
        let mut start = i;
        let mut sum = x;
        let mut count = 1usize;
        while let Some(&(s, psum, pcount)) = stack.last() {
            // Merge while the previous block mean exceeds the current one.
            if psum * count as f64 > sum * pcount as f64 {
                stack.pop();
                start = s;
                sum += psum;
                count += pcount;
            } else {
                break;
            }
        }
        stack.push((start, sum, count));
    }
    let mut solution = vec![0.0; v.len()];
    let mut blocks = Vec::with_capacity(stack.len());
    for &(start, sum, count) in &stack {
        let end = start + count;
        // Singletons keep the input value bit-for-bit.
        let mean = if count == 1 { v[start] } else { sum / count as f64 };
        solution[start..end].fill(mean);
        blocks.push(start..end);
    }
    Ok(IsotonicFit { solution, blocks })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SoftSortResult {
    pub sorted_values: Vec<f64>,
    /// `argsort_perm[i]` is the input index placed at sorted position `i`.
    pub argsort_perm: Vec<usize>,
    pub blocks: Vec<Range<usize>>,
    pub epsilon: f64,
}

fn reference(n: usize, epsilon: f64) -> Vec<f64> {
    let center = (n as f64 - 1.0) / 2.0;
    (0..n).map(|i| (i as f64 - center) / epsilon).collect()
}

/// Ascending soft sort. Converges to the hard sort as `epsilon -> 0` and to
/// the constant mean vector as `epsilon -> inf`.
pub fn soft_sort(v: &[f64], epsilon: f64) -> Result<SoftSortResult> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return invalid(format!("soft sort epsilon must be positive, got {epsilon}"));
    }
    if v.is_empty() {
        return invalid("soft sort of an empty vector");
    }
    if v.iter().any(|x| !x.is_finite()) {
        return invalid("soft sort input must be finite");
    }
    let mut perm: Vec<usize> = (0..v.len()).collect();
    perm.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let sorted: Vec<f64> = perm.iter().map(|&i| v[i]).collect();

    let z = reference(v.len(), epsilon);
    let diff: Vec<f64> = z.iter().zip(&sorted).map(|(a, b)| a - b).collect();
    let fit = isotonic_regression_l2(&diff)?;

    let mut out = vec![0.0; v.len()];
    for block in &fit.blocks {
        if block.len() == 1 {
            out[block.start] = sorted[block.start];
            continue;
        }
        let k = block.len() as f64;
        let z_mean = z[block.clone()].iter().sum::<f64>() / k;
        let w_mean = sorted[block.clone()].iter().sum::<f64>() / k;
        for i in block.clone() {
            out[i] = (z[i] - z_mean) + w_mean;
        }
    }
    Ok(SoftSortResult { sorted_values: out, argsort_perm: perm, blocks: fit.blocks, epsilon })
}

/// Vector-Jacobian product of [`soft_sort`]: block-average the upstream
/// gradient, then scatter it back through the argsort permutation.
pub fn soft_sort_vjp(v: &[f64], upstream: &[f64], result: &SoftSortResult) -> Result<Vec<f64>> {
    let n = v.len();
    if upstream.len() != n || result.sorted_values.len() != n || result.argsort_perm.len() != n {
        return invalid(format!(
            "soft sort vjp shape mismatch: input {n}, upstream {}, result {}",
            upstream.len(),
            result.sorted_values.len()
        ));
    }
    let mut grad = vec![0.0; n];
    for block in &result.blocks {
        let mean = upstream[block.clone()].iter().sum::<f64>() / block.len() as f64;
        for pos in block.clone() {
            grad[result.argsort_perm[pos]] = mean;
        }
    }
    Ok(grad)
}
