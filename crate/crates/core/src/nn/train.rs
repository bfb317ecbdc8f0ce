//! Minibatch Adam training with per-epoch model selection.

use log::{debug, warn};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::adam::{AdamConfig, AdamState};
use super::model::{ModelParams, NetConfig};
use super::tensor::Tensor;
use crate::dist_loss::{mae_loss, weighted_dist_loss, LossBreakdown};
use crate::error::{invalid, Error, Result};
use crate::label_distribution::{estimate_label_density, LabelGrid};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Dist,
    Mae,
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LossKind::Dist => "dist",
            LossKind::Mae => "mae",
        })
    }
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dist" => Ok(LossKind::Dist),
            "mae" => Ok(LossKind::Mae),
            other => invalid(format!("unknown loss '{other}', expected dist or mae")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub loss: LossKind,
    /// Weight of the distributional term; the plain sum uses 1.
    pub dist_weight: f64,
    pub sort_epsilon: f64,
    pub kde_bandwidth: f64,
    /// Inclusive integer label range the density is evaluated on. `None`
    /// uses the span of the rounded training labels.
    pub label_range: Option<(i64, i64)>,
    /// Epochs trained with the plain MAE before the distributional term is
    /// switched on.
    pub dist_warmup_epochs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 256,
            adam: AdamConfig::default(),
            loss: LossKind::Dist,
            dist_weight: 1.0,
            sort_epsilon: 1.0,
            kde_bandwidth: 0.5,
            label_range: None,
            dist_warmup_epochs: 5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return invalid("batch size must be positive");
        }
        if !(self.adam.lr > 0.0) || !(0.0..1.0).contains(&self.adam.beta1) || !(0.0..1.0).contains(&self.adam.beta2) {
            return invalid("invalid Adam hyperparameters");
        }
        if !(self.sort_epsilon > 0.0) || !(self.kde_bandwidth > 0.0) {
            return invalid("sort epsilon and KDE bandwidth must be positive");
        }
        if let Some((lo, hi)) = self.label_range {
            if hi < lo {
                return invalid("empty label range");
            }
        }
        Ok(())
    }
}

/// Waveforms with their age labels.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledSet {
    pub waveforms: Vec<Vec<f64>>,
    pub labels: Vec<f64>,
}

impl LabeledSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub steps: u64,
    pub train_loss: f64,
    pub train_sample_mae: f64,
    pub train_dist_mae: f64,
    pub selection_mae: f64,
    /// The training objective on the whole selection set; drives model
    /// selection.
    pub selection_loss: f64,
}

/// Everything needed to continue training exactly where it stopped.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingState {
    pub params: ModelParams,
    pub adam: AdamState,
    pub epochs_done: usize,
    pub best: ModelParams,
    pub best_epoch: usize,
    pub best_selection_loss: f64,
}

impl TrainingState {
    /// Fresh state: output mapping from the training label mean and spread,
    /// weights from the init stream of `seed`.
    pub fn new(net: &NetConfig, train: &LabeledSet, config: &TrainConfig, seed: u64) -> Result<Self> {
        if train.is_empty() {
            return invalid("training set is empty");
        }
        let n = train.len() as f64;
        let mean = train.labels.iter().sum::<f64>() / n;
        let var = train.labels.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / n;
        let scale = if var > 0.0 { var.sqrt() } else { 1.0 };
        let params = ModelParams::init(net, rng::derive_seed(seed, "init", 0), mean, scale)?;
        let adam = AdamState::new(config.adam, &params);
        Ok(Self {
            best: params.clone(),
            params,
            adam,
            epochs_done: 0,
            best_epoch: 0,
            best_selection_loss: f64::INFINITY,
        })
    }
}

pub fn predict(params: &ModelParams, waveforms: &[Vec<f64>]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(waveforms.len());
    for chunk in waveforms.chunks(512) {
        out.extend(params.forward(&Tensor::from_waveforms(chunk)?)?);
    }
    Ok(out)
}

pub fn mean_absolute_error(predictions: &[f64], labels: &[f64]) -> f64 {
    predictions.iter().zip(labels).map(|(p, y)| (p - y).abs()).sum::<f64>() / labels.len().max(1) as f64
}

/// Splits `n` items into `ceil(n / batch)` batches of near-equal size, so
/// that no batch is a tiny remainder.
fn batch_sizes(n: usize, batch: usize) -> Vec<usize> {
    let count = n.div_ceil(batch).max(1);
    let base = n / count;
    let extra = n % count;
    (0..count).map(|i| base + usize::from(i < extra)).collect()
}

/// MAE over the records in the lowest and highest `fraction` of labels
/// (`floor(n * fraction)` each, at least one). Ties in the label keep input
/// order.
pub fn tail_mean_absolute_error(predictions: &[f64], labels: &[f64], fraction: f64) -> Result<f64> {
    if predictions.len() != labels.len() || labels.is_empty() {
        return invalid("predictions and labels must be non-empty and equally long");
    }
    if !(fraction > 0.0 && fraction <= 0.5) {
        return invalid("tail fraction must lie in (0, 0.5]");
    }
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.sort_by(|&a, &b| labels[a].total_cmp(&labels[b]));
    let k = ((labels.len() as f64 * fraction).floor() as usize).max(1);
    let tails = order[..k].iter().chain(&order[order.len() - k..]);
    Ok(tails.map(|&i| (predictions[i] - labels[i]).abs()).sum::<f64>() / (2 * k) as f64)
}

/// Smallest and largest rounded label.
pub fn observed_range(labels: &[f64]) -> Result<(i64, i64)> {
    if labels.is_empty() || labels.iter().any(|y| !y.is_finite()) {
        return invalid("labels must be non-empty and finite");
    }
    let lo = labels.iter().fold(f64::INFINITY, |a, &b| a.min(b)).round() as i64;
    let hi = labels.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b)).round() as i64;
    Ok((lo, hi))
}

pub fn label_grid(train: &LabeledSet, config: &TrainConfig) -> Result<LabelGrid> {
    let (lo, hi) = match config.label_range {
        Some(range) => range,
        None => observed_range(&train.labels)?,
    };
    let grid = LabelGrid::integer_grid(lo, hi)?;
    estimate_label_density(&train.labels, config.kde_bandwidth, &grid)
}

/// Runs epochs `state.epochs_done + 1 ..= config.epochs`. Shuffling for
/// epoch `e` comes from its own stream, so a resumed run replays exactly.
pub fn run_epochs(
    state: &mut TrainingState,
    train: &LabeledSet,
    selection: &LabeledSet,
    config: &TrainConfig,
    seed: u64,
) -> Result<Vec<EpochLog>> {
    config.validate()?;
    if train.is_empty() || selection.is_empty() {
        return invalid("training and selection sets must be non-empty");
    }
    if train.waveforms.len() != train.labels.len() || selection.waveforms.len() != selection.labels.len() {
        return invalid("waveform and label counts differ");
    }
    if config.loss == LossKind::Dist && config.batch_size < 64 {
        warn!(
            "batch size {} is small for the distributional term; the pseudo-label sequence will be coarse",
            config.batch_size
        );
    }
    state.adam.config = config.adam;
    let grid = match config.loss {
        LossKind::Dist => Some(label_grid(train, config)?),
        LossKind::Mae => None,
    };

    let mut logs = Vec::new();
    while state.epochs_done < config.epochs {
        let epoch = state.epochs_done + 1;
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng::stream(seed, "shuffle", epoch as u64));

        let (mut loss_sum, mut sample_sum, mut dist_sum) = (0.0, 0.0, 0.0);
        let mut offset = 0;
        for (step, size) in batch_sizes(train.len(), config.batch_size).into_iter().enumerate() {
            let idx = &order[offset..offset + size];
            offset += size;
            let batch = Tensor::from_waveforms(&idx.iter().map(|&i| &train.waveforms[i]).collect::<Vec<_>>())?;
            let labels: Vec<f64> = idx.iter().map(|&i| train.labels[i]).collect();
            let preds = state.params.forward(&batch)?;
            let loss: LossBreakdown = match grid.as_ref().filter(|_| epoch > config.dist_warmup_epochs) {
                Some(g) => weighted_dist_loss(&preds, &labels, g, config.sort_epsilon, config.dist_weight)?,
                None => mae_loss(&preds, &labels)?,
            };
            if !loss.total.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, step });
            }
            let (_, grad) = state.params.vjp(&batch, &loss.grad)?;
            state.adam.step(&mut state.params, &grad)?;
            if !state.params.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, step });
            }
            let w = size as f64;
            loss_sum += loss.total * w;
            sample_sum += loss.sample_mae * w;
            dist_sum += loss.distributional_mae * w;
        }

        let selection_preds = predict(&state.params, &selection.waveforms)?;
        let selection_mae = mean_absolute_error(&selection_preds, &selection.labels);
        let selection_loss = match grid.as_ref() {
            Some(g) => {
                weighted_dist_loss(&selection_preds, &selection.labels, g, config.sort_epsilon, config.dist_weight)?
                    .total
            }
            None => selection_mae,
        };
        if !selection_loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, step: 0 });
        }
        if selection_loss < state.best_selection_loss {
            state.best_selection_loss = selection_loss;
            state.best_epoch = epoch;
            state.best = state.params.clone();
        }
        state.epochs_done = epoch;
        let n = train.len() as f64;
        let log = EpochLog {
            epoch,
            steps: state.adam.step,
            train_loss: loss_sum / n,
            train_sample_mae: sample_sum / n,
            train_dist_mae: dist_sum / n,
            selection_mae,
            selection_loss,
        };
        debug!("epoch {epoch}: loss {:.4} selection MAE {:.4}", log.train_loss, selection_mae);
        logs.push(log);
    }
    Ok(logs)
}

/// Trains from scratch and returns the final state (whose `best` holds the
/// parameters with the lowest selection objective) with the per-epoch log.
pub fn train(
    net: &NetConfig,
    train_set: &LabeledSet,
    selection: &LabeledSet,
    config: &TrainConfig,
    seed: u64,
) -> Result<(TrainingState, Vec<EpochLog>)> {
    config.validate()?;
    let mut state = TrainingState::new(net, train_set, config, seed)?;
    let log = run_epochs(&mut state, train_set, selection, config, seed)?;
    Ok((state, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::model::StageConfig;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_net() -> NetConfig {
        NetConfig {
            input_length: 32,
            stem_channels: 4,
            stem_kernel: 5,
            kernel_size: 3,
            stages: vec![StageConfig { blocks: 1, channels: 8, stride: 2 }],
            se_reduction: 4,
            head_hidden: 0,
        }
    }

    /// Signals whose mean level is affine in the label, plus noise.
    fn linear_set(n: usize, seed: u64) -> LabeledSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut set = LabeledSet::default();
        for _ in 0..n {
            let y = rng.random_range(40..=80) as f64;
            let level = (y - 60.0) / 10.0;
            set.waveforms.push((0..32).map(|_| level + rng.random_range(-0.3..0.3)).collect());
            set.labels.push(y);
        }
        set
    }

    #[test]
    fn batch_sizes_are_balanced() {
        assert_eq!(batch_sizes(10, 4), vec![4, 3, 3]);
        assert_eq!(batch_sizes(8, 4), vec![4, 4]);
        assert_eq!(batch_sizes(1, 256), vec![1]);
        assert_eq!(batch_sizes(4000, 256).iter().sum::<usize>(), 4000);
    }

    #[test]
    fn tail_error_uses_both_ends() {
        let labels: Vec<f64> = (0..20).map(f64::from).collect();
        let mut preds = labels.clone();
        preds[0] += 4.0;
        preds[19] -= 2.0;
        preds[10] += 100.0;
        // Two records per tail at fraction 0.1.
        assert_eq!(tail_mean_absolute_error(&preds, &labels, 0.1).unwrap(), 1.5);
        assert!(tail_mean_absolute_error(&preds, &labels, 0.0).is_err());
    }

    #[test]
    fn observed_range_rounds_the_extremes() {
        assert_eq!(observed_range(&[41.4, 60.0, 86.6]).unwrap(), (41, 87));
        assert!(observed_range(&[]).is_err());
        let config = TrainConfig::default();
        let set = LabeledSet { waveforms: vec![], labels: vec![50.0, 52.0] };
        assert_eq!(label_grid(&set, &config).unwrap().labels(), &[50.0, 51.0, 52.0]);
    }

    #[test]
    fn memorizes_a_single_sample() {
        let set = LabeledSet { waveforms: vec![(0..32).map(|i| (i as f64 / 5.0).sin()).collect()], labels: vec![63.0] };
        let config = TrainConfig { epochs: 200, batch_size: 1, loss: LossKind::Mae, ..TrainConfig::default() };
        let (state, log) = train(&small_net(), &set, &set, &config, 1).unwrap();
        assert_eq!(log.len(), 200);
        assert!(log.last().unwrap().train_loss < 0.5);
        assert!(state.best_selection_loss < 0.5);
    }

    #[test]
    fn beats_the_mean_predictor() {
        let train_set = linear_set(400, 1);
        let selection = linear_set(100, 2);
        let config = TrainConfig {
            epochs: 15,
            batch_size: 64,
            loss: LossKind::Dist,
            label_range: Some((40, 80)),
            ..TrainConfig::default()
        };
        let (state, _) = train(&small_net(), &train_set, &selection, &config, 3).unwrap();
        let mean = train_set.labels.iter().sum::<f64>() / train_set.len() as f64;
        let baseline = mean_absolute_error(&vec![mean; selection.len()], &selection.labels);
        let model = mean_absolute_error(&predict(&state.best, &selection.waveforms).unwrap(), &selection.labels);
        assert!(model < baseline, "model {model} vs baseline {baseline}");
    }

    #[test]
    fn same_seed_same_log_and_resume_replays() {
        let train_set = linear_set(120, 4);
        let selection = linear_set(30, 5);
        let mut config =
            TrainConfig { epochs: 3, batch_size: 32, label_range: Some((40, 80)), ..TrainConfig::default() };
        let (full_state, full_log) = train(&small_net(), &train_set, &selection, &config, 8).unwrap();
        let (_, again) = train(&small_net(), &train_set, &selection, &config, 8).unwrap();
        assert_eq!(full_log, again);

        config.epochs = 2;
        let (mut state, _) = train(&small_net(), &train_set, &selection, &config, 8).unwrap();
        config.epochs = 3;
        let resumed = run_epochs(&mut state, &train_set, &selection, &config, 8).unwrap();
        assert_eq!(resumed.len(), 1);
        assert_eq!(resumed[0], full_log[2]);
        assert_eq!(state, full_state);
    }

    #[test]
    fn rejects_empty_sets() {
        let config = TrainConfig::default();
        assert!(train(&small_net(), &LabeledSet::default(), &LabeledSet::default(), &config, 0).is_err());
    }
}
