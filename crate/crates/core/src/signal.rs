//! N-dimensional real signals and the noise utility used for the
//! audio robustness experiments.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, WamError};

/// Informational modality tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Audio,
    #[default]
    Image,
    Volume,
}

impl Modality {
    pub fn for_ndim(ndim: usize) -> Self {
        match ndim {
            1 => Modality::Audio,
            3 => Modality::Volume,
            _ => Modality::Image,
        }
    }
}

/// A real array of rank 1 to 3, row-major with the last axis fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    shape: Vec<usize>,
    data: Vec<f64>,
    modality: Modality,
    /// When set, the signal stores integer samples in this closed range
    /// (e.g. 16-bit PCM) and noise injection clips to it.
    clip_range: Option<(f64, f64)>,
}

pub(crate) fn check_shape(shape: &[usize]) -> Result<()> {
    if shape.is_empty() || shape.len() > 3 || shape.contains(&0) {
        return Err(WamError::InvalidShape {
            shape: shape.to_vec(),
            reason: "expected 1 to 3 positive extents".into(),
        });
    }
    Ok(())
}

impl Signal {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        check_shape(&shape)?;
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(WamError::InvalidShape {
                shape,
                reason: format!("{} values for {} elements", data.len(), expected),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(WamError::NonFiniteValues);
        }
        let modality = Modality::for_ndim(shape.len());
        Ok(Self {
            shape,
            data,
            modality,
            clip_range: None,
        })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Self::new(shape.to_vec(), vec![0.0; shape.iter().product()])
    }

    /// Builds a signal without validation. Callers guarantee the invariants.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        let modality = Modality::for_ndim(shape.len());
        Self {
            shape,
            data,
            modality,
            clip_range: None,
        }
    }

    pub fn with_modality(mut self, modality: Modality) -> Self {
        self.modality = modality;
        self
    }

    /// Tags the signal as holding 16-bit PCM samples.
    pub fn with_int16_range(mut self) -> Self {
        self.clip_range = Some((-32768.0, 32767.0));
        self
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn clip_range(&self) -> Option<(f64, f64)> {
        self.clip_range
    }

    /// Returns a signal of the same shape and tags holding `data`.
    pub fn with_data(&self, data: Vec<f64>) -> Result<Self> {
        if data.len() != self.data.len() {
            return Err(WamError::ShapeMismatch {
                expected: vec![self.data.len()],
                actual: vec![data.len()],
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(WamError::NonFiniteValues);
        }
        Ok(Self {
            shape: self.shape.clone(),
            data,
            modality: self.modality,
            clip_range: self.clip_range,
        })
    }

    pub fn rms(&self) -> f64 {
        rms(&self.data)
    }

    /// max − min over all samples.
    pub fn dynamic_range(&self) -> f64 {
        let (lo, hi) = self
            .data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        hi - lo
    }

    pub fn ensure_shape(&self, expected: &[usize]) -> Result<()> {
        if self.shape != expected {
            return Err(WamError::ShapeMismatch {
                expected: expected.to_vec(),
                actual: self.shape.clone(),
            });
        }
        Ok(())
    }
}

pub fn rms(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    (values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64).sqrt()
}

/// Adds white Gaussian noise at 0 dB SNR: the noise is rescaled so its RMS
/// equals the signal's RMS. Integer-range signals are clipped to their range
/// afterwards.
pub fn add_gaussian_noise(x: &Signal, seed: u64) -> Result<Signal> {
    let (noisy, _) = add_gaussian_noise_unclipped(x, seed)?;
    let data = match x.clip_range {
        Some((lo, hi)) => noisy.into_iter().map(|v| v.clamp(lo, hi)).collect(),
        None => noisy,
    };
    x.with_data(data)
}

/// Returns the pre-clipping noisy samples and the noise itself.
pub fn add_gaussian_noise_unclipped(x: &Signal, seed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
    let rms_signal = x.rms();
    if rms_signal == 0.0 {
        return Err(WamError::SilentSignal);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut noise: Vec<f64> = (0..x.len())
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let scale = rms_signal / rms(&noise);
    noise.iter_mut().for_each(|n| *n *= scale);
    let noisy = x.data.iter().zip(&noise).map(|(a, n)| a + n).collect();
    Ok((noisy, noise))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seeded(len: usize, seed: u64) -> Signal {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..len).map(|_| StandardNormal.sample(&mut rng)).collect();
        Signal::new(vec![len], data).unwrap()
    }

    #[test]
    fn rejects_bad_shapes_and_values() {
        assert!(Signal::new(vec![2, 2], vec![0.0; 3]).is_err());
        assert!(Signal::new(vec![], vec![]).is_err());
        assert!(Signal::new(vec![1, 1, 1, 1], vec![0.0]).is_err());
        assert!(matches!(
            Signal::new(vec![2], vec![0.0, f64::NAN]),
            Err(WamError::NonFiniteValues)
        ));
    }

    #[test]
    fn noise_matches_signal_rms() {
        let x = seeded(1024, 3);
        let (noisy, noise) = add_gaussian_noise_unclipped(&x, 11).unwrap();
        assert!((rms(&noise) / x.rms() - 1.0).abs() < 1e-6);
        let diff: Vec<f64> = noisy.iter().zip(x.data()).map(|(a, b)| a - b).collect();
        assert!((rms(&diff) / x.rms() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn silent_signal_is_rejected() {
        let x = Signal::zeros(&[16]).unwrap();
        assert!(matches!(add_gaussian_noise(&x, 0), Err(WamError::SilentSignal)));
    }

    #[test]
    fn noise_is_deterministic() {
        let x = seeded(64, 1);
        assert_eq!(add_gaussian_noise(&x, 5).unwrap(), add_gaussian_noise(&x, 5).unwrap());
        assert_ne!(add_gaussian_noise(&x, 5).unwrap(), add_gaussian_noise(&x, 6).unwrap());
    }

    #[test]
    fn int16_signals_are_clipped() {
        let data: Vec<f64> = (0..256).map(|i| if i % 2 == 0 { 32000.0 } else { -32000.0 }).collect();
        let x = Signal::new(vec![256], data).unwrap().with_int16_range();
        let noisy = add_gaussian_noise(&x, 9).unwrap();
        assert!(noisy.data().iter().all(|v| (-32768.0..=32767.0).contains(v)));
        assert!(noisy.data().iter().any(|&v| v == 32767.0 || v == -32768.0));
    }
}
