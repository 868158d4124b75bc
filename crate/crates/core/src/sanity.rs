//! Cascading model-randomization checks: an explanation that survives
//! re-initialising the network's weights is not explaining the network.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attribution::{attribute, Domain, MethodConfig};
use crate::error::{Result, WamError};
use crate::model::{BuiltinModel, Classifier, ModelOutput};
use crate::signal::Signal;
use crate::wavelet::WaveletSpec;

/// Pearson correlation coefficient.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(WamError::ShapeMismatch {
            expected: vec![a.len()],
            actual: vec![b.len()],
        });
    }
    if a.len() < 2 {
        return Err(WamError::InsufficientSamples(a.len()));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(WamError::DegenerateVariance);
    }
    // sqrt(fl(s·s)) == s exactly, so pearson(a, a) is exactly 1
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Ranks starting at 1, ties sharing their average rank.
fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut ranks = vec![0.0; v.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && v[order[end]] == v[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

/// Spearman rank correlation (Pearson on average ranks).
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(WamError::ShapeMismatch {
            expected: vec![a.len()],
            actual: vec![b.len()],
        });
    }
    pearson(&average_ranks(a), &average_ranks(b))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    /// "orig", then the shallowest re-initialised layer.
    pub label: String,
    pub pearson: Vec<f64>,
    pub spearman: Vec<f64>,
    pub mean: f64,
    /// Normal-approximation 95% half-width, `1.96 · sd / √n`.
    pub half_width: f64,
    pub spearman_mean: f64,
}

impl Checkpoint {
    fn new(label: &str, pearson: Vec<f64>, spearman: Vec<f64>) -> Self {
        let n = pearson.len() as f64;
        let mean = pearson.iter().sum::<f64>() / n;
        let var = pearson.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Self {
            label: label.to_string(),
            mean,
            half_width: 1.96 * var.sqrt() / n.sqrt(),
            spearman_mean: spearman.iter().sum::<f64>() / n,
            pearson,
            spearman,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomizationCurve {
    pub checkpoints: Vec<Checkpoint>,
}

impl RandomizationCurve {
    pub fn checkpoint(&self, label: &str) -> Option<&Checkpoint> {
        self.checkpoints.iter().find(|c| c.label == label)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("checkpoint,mean,ci_low,ci_high,spearman_mean\n");
        for c in &self.checkpoints {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                c.label,
                c.mean,
                c.mean - c.half_width,
                c.mean + c.half_width,
                c.spearman_mean
            ));
        }
        out
    }
}

/// Re-initialises layers deepest-first and correlates `|attr|` of each
/// randomized model with that of the original, per sample. Each sample is
/// explained for the original model's predicted class throughout.
pub fn cascading_randomization(
    model: &BuiltinModel,
    samples: &[Signal],
    cfg: &MethodConfig,
    spec: &WaveletSpec,
    seed: u64,
) -> Result<RandomizationCurve> {
    if samples.len() < 2 {
        return Err(WamError::InsufficientSamples(samples.len()));
    }
    let domain = Domain::Wavelet(*spec);
    let explain = |m: &BuiltinModel| -> Result<Vec<Vec<f64>>> {
        samples
            .par_iter()
            .map(|x| {
                let c = ModelOutput::from_logits(model.logits_raw(x.data())?).argmax();
                Ok(attribute(m, x, c, domain, cfg)?.values.iter().map(|v| v.abs()).collect())
            })
            .collect()
    };
    let reference = explain(model)?;
    let correlate = |attrs: &[Vec<f64>]| -> Result<(Vec<f64>, Vec<f64>)> {
        let p = reference.iter().zip(attrs).map(|(a, b)| pearson(a, b)).collect::<Result<_>>()?;
        let s = reference.iter().zip(attrs).map(|(a, b)| spearman(a, b)).collect::<Result<_>>()?;
        Ok((p, s))
    };

    let (p, s) = correlate(&reference)?;
    let mut checkpoints = vec![Checkpoint::new("orig", p, s)];
    for name in model.layer_names().into_iter().rev() {
        let randomized = model.randomize_through(name, seed)?;
        let (p, s) = correlate(&explain(&randomized)?)?;
        checkpoints.push(Checkpoint::new(name, p, s));
    }
    Ok(RandomizationCurve { checkpoints })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pearson_of_a_hand_pair() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [1.0, 2.0, 3.0, 5.0];
        // means 2.5 and 2.75; Σdxdy = 6.5, Σdx² = 5, Σdy² = 8.75
        let expected = 6.5 / (5.0f64 * 8.75).sqrt();
        assert!((pearson(&a, &b).unwrap() - expected).abs() < 1e-15);
        assert_eq!(pearson(&a, &a).unwrap(), 1.0);
        let neg: Vec<f64> = a.iter().map(|v| -v).collect();
        assert_eq!(pearson(&a, &neg).unwrap(), -1.0);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(pearson(&[1.0, 1.0], &[1.0, 2.0]), Err(WamError::DegenerateVariance)));
        assert!(matches!(pearson(&[1.0], &[1.0]), Err(WamError::InsufficientSamples(_))));
        assert!(pearson(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn spearman_uses_average_ranks() {
        assert_eq!(average_ranks(&[10.0, 20.0, 10.0, 5.0]), vec![2.5, 4.0, 2.5, 1.0]);
        // monotone but non-linear relation is a perfect rank correlation
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        let b: Vec<f64> = a.iter().map(|v: &f64| v.powi(3)).collect();
        assert!((spearman(&a, &b).unwrap() - 1.0).abs() < 1e-15);
        assert!(pearson(&a, &b).unwrap() < 1.0);
    }

    #[test]
    fn too_few_samples() {
        let m = BuiltinModel::new(crate::model::Topology::Mlp, &[8], 2, crate::model::Activation::Softplus, 1).unwrap();
        let spec = WaveletSpec::new(crate::wavelet::Family::Haar, 1);
        let x = Signal::new(vec![8], vec![1.0; 8]).unwrap();
        assert!(matches!(
            cascading_randomization(&m, &[x], &MethodConfig::Saliency, &spec, 0),
            Err(WamError::InsufficientSamples(1))
        ));
    }
}
