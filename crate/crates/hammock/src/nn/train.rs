//! Minibatch training with AdaDelta, shuffling, optional validation
//! split with early exit, and accuracy evaluation.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adadelta::adadelta_step_model;
use super::{
    accumulate_rows, finish_batch_loss, reduce_chunks, sample_loss, AdaDeltaState, DataView,
    ForwardCache, Gradients, MlpModel, NnError, OutputLink,
};

const SPLIT_TAG: u64 = 0x53504c49;
const MASK_TAG: u64 = 0x4d41534b;

/// Training hyperparameters. Defaults: 200 epochs, batch 64, 50%
/// dropout, AdaDelta rho 0.95 / eps 1e-6, no regularization, no
/// validation split, patience 20 once a split exists, single thread.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub dropout_rate: f64,
    pub rho: f64,
    pub eps: f64,
    pub l1_weight: f64,
    pub l2_weight: f64,
    pub shuffle_seed: u64,
    /// Fraction of rows held out for early stopping; 0 disables both the
    /// split and early exit.
    pub validation_fraction: f64,
    /// Stop after this many epochs without a validation-accuracy
    /// improvement. Ignored without a validation split.
    pub patience: Option<usize>,
    /// Worker threads per batch. 1 is bit-reproducible; more threads
    /// promise accuracy-level reproducibility only.
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 64,
            dropout_rate: 0.5,
            rho: 0.95,
            eps: 1e-6,
            l1_weight: 0.0,
            l2_weight: 0.0,
            shuffle_seed: 0,
            validation_fraction: 0.0,
            patience: Some(20),
            threads: 1,
        }
    }
}

/// Per-epoch training curves. `val_accuracy` is empty when no
/// validation split was configured; the other vectors have one entry per
/// epoch actually run.
#[derive(Debug, Clone, Default)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    pub train_accuracy: Vec<f64>,
    pub val_accuracy: Vec<f64>,
    pub epoch_seconds: Vec<f64>,
    pub epochs_run: usize,
}

/// Accuracy and mean cross-entropy (data term only, no regularization).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalMetrics {
    pub accuracy: f64,
    pub mean_loss: f64,
}

fn validate_config(config: &TrainConfig) -> Result<(), NnError> {
    if config.batch_size < 1 {
        return Err(NnError::InvalidConfig("batch_size must be >= 1".into()));
    }
    if !(0.0..1.0).contains(&config.dropout_rate) {
        return Err(NnError::InvalidConfig(
            "dropout_rate must lie in [0, 1)".into(),
        ));
    }
    if !(config.rho > 0.0 && config.rho < 1.0) {
        return Err(NnError::InvalidConfig("rho must lie in (0, 1)".into()));
    }
    if config.eps <= 0.0 || config.eps.is_nan() {
        return Err(NnError::InvalidConfig("eps must be > 0".into()));
    }
    if !(0.0..1.0).contains(&config.validation_fraction) {
        return Err(NnError::InvalidConfig(
            "validation_fraction must lie in [0, 1)".into(),
        ));
    }
    Ok(())
}

fn validate_labels(model: &MlpModel, data: &DataView<'_>) -> Result<(), NnError> {
    match model.output_link {
        OutputLink::Softmax(k) => {
            for &label in data.labels {
                if label >= k {
                    return Err(NnError::InvalidLabel {
                        label,
                        num_classes: k,
                    });
                }
            }
        }
        OutputLink::Sigmoid => {
            for &label in data.labels {
                if label > 1 {
                    return Err(NnError::InvalidLabel {
                        label,
                        num_classes: 2,
                    });
                }
            }
        }
        OutputLink::Identity => return Err(NnError::UnsupportedLink),
    }
    Ok(())
}

/// Train in place: shuffled minibatches, one AdaDelta update per batch,
/// an inference-mode pass over the training rows after each epoch, and
/// optional early exit on flat validation accuracy. Bit-reproducible for
/// fixed seeds at `threads == 1`.
pub fn train(
    model: &mut MlpModel,
    data: &DataView<'_>,
    config: &TrainConfig,
) -> Result<TrainReport, NnError> {
    validate_config(config)?;
    if data.is_empty() {
        return Err(NnError::EmptyDataset);
    }
    validate_labels(model, data)?;

    let n = data.len();
    let (mut train_rows, val_rows) = if config.validation_fraction > 0.0 {
        let mut order: Vec<usize> = (0..n).collect();
        let mut split_rng = ChaCha8Rng::seed_from_u64(config.shuffle_seed ^ SPLIT_TAG);
        order.shuffle(&mut split_rng);
        let val_len = ((n as f64 * config.validation_fraction).round() as usize).max(1);
        if val_len >= n {
            return Err(NnError::InvalidConfig(
                "validation split leaves no training rows".into(),
            ));
        }
        let val = order.split_off(n - val_len);
        (order, val)
    } else {
        ((0..n).collect(), Vec::new())
    };
    let eval_rows = {
        let mut rows = train_rows.clone();
        rows.sort_unstable();
        rows
    };

    let mask_seed = config.shuffle_seed ^ MASK_TAG;
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.shuffle_seed);
    let threads = config.threads.max(1);
    let mut pool: Vec<(Gradients, ForwardCache)> = (0..threads)
        .map(|_| (model.gradients(), model.scratch()))
        .collect();
    let mut grads = model.gradients();
    let mut state = AdaDeltaState::for_model(model);

    let mut report = TrainReport::default();
    let mut best_val = f64::NEG_INFINITY;
    let mut epochs_since_improvement = 0usize;

    for epoch in 0..config.epochs {
        let started = Instant::now();
        train_rows.shuffle(&mut shuffle_rng);
        for batch in train_rows.chunks(config.batch_size) {
            batch_step(
                model,
                data,
                batch,
                config,
                epoch as u64,
                mask_seed,
                &mut pool,
                &mut grads,
            )?;
            adadelta_step_model(model, &grads, &mut state, config.rho, config.eps)?;
        }

        let train_metrics = evaluate_rows(model, data, &eval_rows)?;
        report.train_loss.push(train_metrics.mean_loss);
        report.train_accuracy.push(train_metrics.accuracy);
        if !val_rows.is_empty() {
            report
                .val_accuracy
                .push(evaluate_rows(model, data, &val_rows)?.accuracy);
        }
        report.epoch_seconds.push(started.elapsed().as_secs_f64());
        report.epochs_run += 1;

        if let (Some(patience), Some(&val_acc)) = (config.patience, report.val_accuracy.last()) {
            if val_acc > best_val {
                best_val = val_acc;
                epochs_since_improvement = 0;
            } else {
                epochs_since_improvement += 1;
                if epochs_since_improvement >= patience {
                    break;
                }
            }
        }
    }
    Ok(report)
}

/// One gradient computation over `rows`, fanned across the pool's
/// threads in fixed chunk order.
#[allow(clippy::too_many_arguments)]
fn batch_step(
    model: &MlpModel,
    data: &DataView<'_>,
    rows: &[usize],
    config: &TrainConfig,
    epoch: u64,
    mask_seed: u64,
    pool: &mut [(Gradients, ForwardCache)],
    grads: &mut Gradients,
) -> Result<f64, NnError> {
    let threads = pool.len().min(rows.len()).max(1);
    if threads == 1 {
        grads.zero();
        let cache = &mut pool[0].1;
        let data_loss = accumulate_rows(
            model,
            data,
            rows,
            config.dropout_rate,
            mask_seed,
            epoch,
            cache,
            grads,
        )?;
        return finish_batch_loss(
            model,
            rows.len(),
            data_loss,
            config.l1_weight,
            config.l2_weight,
            grads,
        );
    }

    let chunk_size = rows.len().div_ceil(threads);
    let chunks: Vec<&[usize]> = rows.chunks(chunk_size).collect();
    let used = chunks.len();
    let data = *data;
    let results: Vec<Result<f64, NnError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = pool[..used]
            .iter_mut()
            .zip(&chunks)
            .map(|((chunk_grads, cache), &chunk)| {
                scope.spawn(move || {
                    chunk_grads.zero();
                    accumulate_rows(
                        model,
                        &data,
                        chunk,
                        config.dropout_rate,
                        mask_seed,
                        epoch,
                        cache,
                        chunk_grads,
                    )
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker thread panicked"))
            .collect()
    });

    let mut data_loss = 0.0;
    for result in results {
        data_loss += result?;
    }
    grads.zero();
    let chunk_grads: Vec<Gradients> = pool[..used].iter().map(|(g, _)| g.clone()).collect();
    reduce_chunks(grads, &chunk_grads);
    finish_batch_loss(
        model,
        rows.len(),
        data_loss,
        config.l1_weight,
        config.l2_weight,
        grads,
    )
}

/// Accuracy and mean loss over all rows of `data`.
pub fn evaluate(model: &MlpModel, data: &DataView<'_>) -> Result<EvalMetrics, NnError> {
    let rows: Vec<usize> = (0..data.len()).collect();
    evaluate_rows(model, data, &rows)
}

fn evaluate_rows(
    model: &MlpModel,
    data: &DataView<'_>,
    rows: &[usize],
) -> Result<EvalMetrics, NnError> {
    if rows.is_empty() {
        return Err(NnError::EmptyDataset);
    }
    let mut cache = model.scratch();
    let mut correct = 0usize;
    let mut loss_sum = 0.0;
    for &row in rows {
        let logits = model.forward_infer(data.row(row), &mut cache)?;
        loss_sum += sample_loss(model.output_link, logits, data.labels[row])?;
        if model.predict_class(logits)? == data.labels[row] {
            correct += 1;
        }
    }
    Ok(EvalMetrics {
        accuracy: correct as f64 / rows.len() as f64,
        mean_loss: loss_sum / rows.len() as f64,
    })
}
