//! Differentiable classifiers to explain.
//!
//! Everything downstream talks to a model through [`Classifier`]: class
//! logits and the exact input gradient of one logit. Built-in networks
//! implement it with hand-written backpropagation; [`ExternalWorker`]
//! forwards the calls to a child process over a JSON-lines protocol.

mod builtin;
mod external;
mod layers;
mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Result, WamError};
use crate::signal::Signal;

pub use builtin::{Activation, BuiltinModel, Layer, LayerKind, Topology};
pub use external::{decode_f64s, encode_f64s, ExternalWorker, DEFAULT_TIMEOUT};
pub use train::{accuracy, train, TrainConfig, TrainReport};

/// Class logits and their softmax.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelOutput {
    pub logits: Vec<f64>,
    pub probabilities: Vec<f64>,
}

impl ModelOutput {
    pub fn from_logits(logits: Vec<f64>) -> Self {
        let probabilities = softmax(&logits);
        Self {
            logits,
            probabilities,
        }
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.logits)
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Index of the first maximum.
pub fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
            if v > bv {
                (i, v)
            } else {
                (bi, bv)
            }
        })
        .0
}

/// A differentiable classifier over signals of one fixed shape.
///
/// The `*_raw` methods take row-major sample buffers of the declared input
/// shape; they are the hot path of every estimator and metric.
pub trait Classifier: Send + Sync {
    fn input_shape(&self) -> &[usize];
    fn num_classes(&self) -> usize;
    fn logits_raw(&self, x: &[f64]) -> Result<Vec<f64>>;
    /// `∂ logit_class / ∂x`.
    fn gradient_raw(&self, x: &[f64], class: usize) -> Result<Vec<f64>>;

    fn input_len(&self) -> usize {
        self.input_shape().iter().product()
    }

    fn forward_logits(&self, x: &Signal) -> Result<ModelOutput> {
        x.ensure_shape(self.input_shape())?;
        Ok(ModelOutput::from_logits(self.logits_raw(x.data())?))
    }

    fn input_gradient(&self, x: &Signal, class: usize) -> Result<Signal> {
        x.ensure_shape(self.input_shape())?;
        self.check_class(class)?;
        let g = self.gradient_raw(x.data(), class)?;
        x.with_data(g)
    }

    fn check_class(&self, class: usize) -> Result<()> {
        if class >= self.num_classes() {
            return Err(WamError::ClassOutOfRange {
                class,
                num_classes: self.num_classes(),
            });
        }
        Ok(())
    }

    fn probability_raw(&self, x: &[f64], class: usize) -> Result<f64> {
        Ok(softmax(&self.logits_raw(x)?)[class])
    }
}

impl<C: Classifier + ?Sized> Classifier for &C {
    fn input_shape(&self) -> &[usize] {
        (**self).input_shape()
    }
    fn num_classes(&self) -> usize {
        (**self).num_classes()
    }
    fn logits_raw(&self, x: &[f64]) -> Result<Vec<f64>> {
        (**self).logits_raw(x)
    }
    fn gradient_raw(&self, x: &[f64], class: usize) -> Result<Vec<f64>> {
        (**self).gradient_raw(x, class)
    }
}

impl<C: Classifier + ?Sized> Classifier for Box<C> {
    fn input_shape(&self) -> &[usize] {
        (**self).input_shape()
    }
    fn num_classes(&self) -> usize {
        (**self).num_classes()
    }
    fn logits_raw(&self, x: &[f64]) -> Result<Vec<f64>> {
        (**self).logits_raw(x)
    }
    fn gradient_raw(&self, x: &[f64], class: usize) -> Result<Vec<f64>> {
        (**self).gradient_raw(x, class)
    }
}

/// Either a built-in network or an external worker process.
pub enum BackendHandle {
    Builtin(BuiltinModel),
    External(ExternalWorker),
}

impl BackendHandle {
    pub fn name(&self) -> String {
        match self {
            BackendHandle::Builtin(m) => format!("builtin:{}", m.topology().name()),
            BackendHandle::External(w) => format!("external:{}", w.name()),
        }
    }
}

impl Classifier for BackendHandle {
    fn input_shape(&self) -> &[usize] {
        match self {
            BackendHandle::Builtin(m) => m.input_shape(),
            BackendHandle::External(w) => w.input_shape(),
        }
    }
    fn num_classes(&self) -> usize {
        match self {
            BackendHandle::Builtin(m) => m.num_classes(),
            BackendHandle::External(w) => w.num_classes(),
        }
    }
    fn logits_raw(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            BackendHandle::Builtin(m) => m.logits_raw(x),
            BackendHandle::External(w) => w.logits_raw(x),
        }
    }
    fn gradient_raw(&self, x: &[f64], class: usize) -> Result<Vec<f64>> {
        match self {
            BackendHandle::Builtin(m) => m.gradient_raw(x, class),
            BackendHandle::External(w) => w.gradient_raw(x, class),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_is_normalised_and_stable() {
        let p = softmax(&[1000.0, 1001.0, 1002.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let q = softmax(&[1.0, 2.0, 3.0]);
        for (a, b) in p.iter().zip(&q) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(softmax(&[0.0; 4]), vec![0.25; 4]);
    }

    #[test]
    fn argmax_takes_first_maximum() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0, 2.0]), 1);
    }
}
