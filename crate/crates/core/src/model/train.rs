use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{argmax, softmax, BuiltinModel, Classifier};
use crate::error::{Result, WamError};
use crate::signal::Signal;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Heavy-ball momentum; 0 gives plain SGD.
    pub momentum: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            learning_rate: 0.05,
            batch_size: 16,
            momentum: 0.9,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean cross-entropy per epoch.
    pub epoch_losses: Vec<f64>,
    /// Accuracy of the returned model on the training set.
    pub train_accuracy: f64,
}

/// Minibatch SGD on the softmax cross-entropy. Deterministic in
/// `cfg.seed`: per-sample gradients may be computed in parallel but are
/// summed in batch order.
pub fn train(
    model: &BuiltinModel,
    samples: &[Signal],
    labels: &[usize],
    cfg: &TrainConfig,
) -> Result<(BuiltinModel, TrainReport)> {
    if samples.is_empty() {
        return Err(WamError::EmptyDataset);
    }
    if samples.len() != labels.len() {
        return Err(WamError::InvalidArgument(format!(
            "{} samples but {} labels",
            samples.len(),
            labels.len()
        )));
    }
    for (s, &l) in samples.iter().zip(labels) {
        s.ensure_shape(model.input_shape())?;
        model.check_class(l)?;
    }
    if cfg.batch_size == 0 {
        return Err(WamError::InvalidArgument("batch size must be positive".into()));
    }

    let mut model = model.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut velocity = model.zero_grads();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let per_sample: Vec<(f64, Vec<Vec<f64>>)> = batch
                .par_iter()
                .map(|&i| sample_gradient(&model, samples[i].data(), labels[i]))
                .collect();
            let mut grads = model.zero_grads();
            for (loss, g) in &per_sample {
                total_loss += loss;
                for (acc, layer) in grads.iter_mut().zip(g) {
                    for (a, v) in acc.iter_mut().zip(layer) {
                        *a += v;
                    }
                }
            }
            let scale = 1.0 / batch.len() as f64;
            for ((layer, grad), vel) in model.layers_mut().iter_mut().zip(&grads).zip(&mut velocity) {
                for ((p, g), v) in layer.params.iter_mut().zip(grad).zip(vel.iter_mut()) {
                    *v = cfg.momentum * *v + g * scale;
                    *p -= cfg.learning_rate * *v;
                }
            }
        }
        let mean_loss = total_loss / samples.len() as f64;
        let params_finite = model.layers().iter().all(|l| l.params.iter().all(|p| p.is_finite()));
        if !mean_loss.is_finite() || !params_finite {
            return Err(WamError::DivergedLoss { epoch });
        }
        epoch_losses.push(mean_loss);
    }

    let train_accuracy = accuracy(&model, samples, labels)?;
    Ok((
        model,
        TrainReport {
            epoch_losses,
            train_accuracy,
        },
    ))
}

fn sample_gradient(model: &BuiltinModel, x: &[f64], label: usize) -> (f64, Vec<Vec<f64>>) {
    let (logits, caches) = model.run(x);
    let probs = softmax(&logits);
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    let loss = lse - logits[label];
    let mut dlogits = probs;
    dlogits[label] -= 1.0;
    let mut grads = model.zero_grads();
    model.backward(&caches, &dlogits, Some(&mut grads));
    (loss, grads)
}

/// Fraction of samples whose argmax logit equals the label.
pub fn accuracy<C: Classifier + ?Sized>(model: &C, samples: &[Signal], labels: &[usize]) -> Result<f64> {
    if samples.is_empty() {
        return Err(WamError::EmptyDataset);
    }
    let hits: Vec<bool> = samples
        .par_iter()
        .zip(labels.par_iter())
        .map(|(s, &l)| Ok(argmax(&model.logits_raw(s.data())?) == l))
        .collect::<Result<_>>()?;
    Ok(hits.iter().filter(|&&h| h).count() as f64 / samples.len() as f64)
}
