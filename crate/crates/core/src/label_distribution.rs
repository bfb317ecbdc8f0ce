//! Label density estimation and the pseudo-label sequence used by the
//! distributional term of the loss.
//!
//! The training-set labels are smoothed with a Gaussian kernel and evaluated
//! on an ordered grid of unique label values. For a batch of size `B` each
//! grid label gets an integer frequency close to `B * p_i`, and the labels
//! replicated by those frequencies form the ascending pseudo-label sequence.

use crate::error::{invalid, Error, Result};

/// Slack used when flooring `B * p_i`, so that products which are integral in
/// exact arithmetic (e.g. `6 * (1/6)`) are not floored one unit low.
const FLOOR_SLACK: f64 = 1e-9;

/// Probability mass over an ordered grid of unique labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelGrid {
    labels: Vec<f64>,
    probs: Vec<f64>,
    bandwidth: f64,
    range: (f64, f64),
}

impl LabelGrid {
    /// Builds a grid from explicit probabilities. The probabilities are
    /// renormalized to sum to one.
    pub fn from_probs(labels: Vec<f64>, probs: Vec<f64>, bandwidth: f64) -> Result<Self> {
        check_grid(&labels)?;
        if probs.len() != labels.len() {
            return invalid(format!("{} probabilities for {} labels", probs.len(), labels.len()));
        }
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return invalid("bandwidth must be positive and finite");
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return invalid("probabilities must be finite and non-negative");
        }
        let total: f64 = probs.iter().sum();
        if total <= 0.0 {
            return invalid("probabilities sum to zero");
        }
        let probs = probs.into_iter().map(|p| p / total).collect();
        let range = (labels[0], labels[labels.len() - 1]);
        Ok(Self { labels, probs, bandwidth, range })
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn range(&self) -> (f64, f64) {
        self.range
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Convenience: the integer grid `lo..=hi`.
    pub fn integer_grid(lo: i64, hi: i64) -> Result<Vec<f64>> {
        if hi < lo {
            return invalid(format!("empty label range {lo}..={hi}"));
        }
        Ok((lo..=hi).map(|v| v as f64).collect())
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return invalid("label grid is empty");
    }
    if grid.iter().any(|v| !v.is_finite()) {
        return invalid("label grid has non-finite values");
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return invalid("label grid must be strictly increasing");
    }
    Ok(())
}

/// Gaussian kernel density of `labels` evaluated on `grid` and normalized
/// over the grid into a probability mass function.
///
/// Labels are rounded to the nearest integer (ages are whole years) before
/// the kernel sum.
pub fn estimate_label_density(labels: &[f64], bandwidth: f64, grid: &[f64]) -> Result<LabelGrid> {
    if labels.is_empty() {
        return invalid("no labels to estimate a density from");
    }
    if labels.iter().any(|v| !v.is_finite()) {
        return invalid("non-finite label");
    }
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return invalid("bandwidth must be positive and finite");
    }
    check_grid(grid)?;

    // Collapse to (value, count) so the kernel sum is O(grid * unique labels).
    let mut rounded: Vec<f64> = labels.iter().map(|v| v.round()).collect();
    rounded.sort_by(f64::total_cmp);
    let mut unique: Vec<(f64, f64)> = Vec::new();
    for v in rounded {
        match unique.last_mut() {
            Some((last, count)) if *last == v => *count += 1.0,
            _ => unique.push((v, 1.0)),
        }
    }

    let denom = 2.0 * bandwidth * bandwidth;
    let density: Vec<f64> = grid
        .iter()
        .map(|&g| unique.iter().map(|&(v, count)| count * (-(g - v) * (g - v) / denom).exp()).sum())
        .collect();
    let total: f64 = density.iter().sum();
    if total <= 0.0 || !total.is_finite() {
        return Err(Error::InvalidInput("labels carry no kernel mass on the grid".into()));
    }
    Ok(LabelGrid {
        labels: grid.to_vec(),
        probs: density.into_iter().map(|d| d / total).collect(),
        bandwidth,
        range: (grid[0], grid[grid.len() - 1]),
    })
}

/// Integer label frequencies for one batch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrequencyAllocation {
    pub batch_size: usize,
    pub floors: Vec<usize>,
    pub residual: usize,
    pub aux: Vec<u8>,
    pub adjusted: Vec<usize>,
}

/// Splits a batch of `batch_size` slots across the grid labels.
///
/// Each label first gets `floor(B * p_i)` slots. The `r` leftover slots go one
/// each to the first `floor((r + 1) / 2)` and the last `floor(r / 2)` label
/// positions, so the residual is shared between both ends of the grid.
pub fn allocate_frequencies(grid: &LabelGrid, batch_size: usize) -> Result<FrequencyAllocation> {
    if batch_size < 1 {
        return invalid("batch size must be at least 1");
    }
    let b = batch_size as f64;
    let floors: Vec<usize> = grid.probs.iter().map(|p| (b * p + FLOOR_SLACK).floor() as usize).collect();
    let floor_sum: usize = floors.iter().sum();
    // The slack can only lift a floor that was within 1e-9 of the next
    // integer, which cannot overshoot B for any realistic grid size.
    debug_assert!(floor_sum <= batch_size);
    let residual = batch_size - floor_sum;

    let len = floors.len();
    let head = residual.div_ceil(2);
    let tail = residual / 2;
    let aux: Vec<u8> = (1..=len).map(|i| u8::from(i <= head || i > len - tail.min(len))).collect();
    let adjusted: Vec<usize> = floors.iter().zip(&aux).map(|(f, r)| f + *r as usize).collect();
    let total: usize = adjusted.iter().sum();
    if total != batch_size {
        // Only reachable when the residual exceeds the number of labels.
        return invalid(format!("residual {residual} cannot be spread over {len} labels"));
    }
    Ok(FrequencyAllocation { batch_size, floors, residual, aux, adjusted })
}

/// Ascending, length-`B` pseudo-label sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabelSequence {
    pub values: Vec<f64>,
}

/// Replicates each grid label by its adjusted frequency, in ascending order.
pub fn build_pseudo_labels(grid: &LabelGrid, alloc: &FrequencyAllocation) -> Result<PseudoLabelSequence> {
    if alloc.adjusted.len() != grid.len() {
        return invalid(format!("allocation has {} labels, grid has {}", alloc.adjusted.len(), grid.len()));
    }
    let mut values = Vec::with_capacity(alloc.batch_size);
    for (&label, &count) in grid.labels.iter().zip(&alloc.adjusted) {
        values.extend(std::iter::repeat_n(label, count));
    }
    if values.len() != alloc.batch_size {
        return invalid("allocation counts do not sum to the batch size");
    }
    Ok(PseudoLabelSequence { values })
}

/// Allocation and pseudo-labels in one call.
pub fn pseudo_labels(grid: &LabelGrid, batch_size: usize) -> Result<PseudoLabelSequence> {
    let alloc = allocate_frequencies(grid, batch_size)?;
    build_pseudo_labels(grid, &alloc)
}
