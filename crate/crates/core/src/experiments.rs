//! End-to-end protocols on the synthetic datasets. Each returns plain data
//! with a CSV rendering; the CLI adds file output and run manifests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attribution::{attribute, scale_importance, Attribution, Domain, IgConfig, Method, MethodConfig};
use crate::datasets::{generate, Augmentation, Dataset, DatasetSpec, Generator};
use crate::error::{Result, WamError};
use crate::metrics::{faithfulness_curves, pointing_game, FaithfulnessResult};
use crate::model::{argmax, train, Activation, BuiltinModel, Classifier, Topology, TrainConfig, TrainReport};
use crate::perturbation::{optimize_mask, MaskConfig};
use crate::sanity::pearson;
use crate::signal::{add_gaussian_noise_unclipped, rms, Signal};
use crate::wavelet::{topk_reconstruct, Family, WaveletSpec};

pub fn topology_for(generator: Generator) -> Topology {
    match generator.shape().len() {
        1 => Topology::Conv1d,
        3 => Topology::Conv3d,
        _ => Topology::Conv2d,
    }
}

/// How to build and train the classifier for one dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixtureConfig {
    pub generator: Generator,
    pub per_class: usize,
    pub seed: u64,
    pub augmentation: Augmentation,
    pub activation: Activation,
    pub train: TrainConfig,
}

impl FixtureConfig {
    pub fn new(generator: Generator, per_class: usize, seed: u64) -> Self {
        Self {
            generator,
            per_class,
            seed,
            augmentation: Augmentation::None,
            activation: Activation::Softplus,
            train: TrainConfig {
                epochs: 8,
                learning_rate: 0.02,
                seed,
                ..Default::default()
            },
        }
    }

    /// Half the training samples blurred (σ up to 1.5), which leans the
    /// model on coarse scales.
    pub fn blur_augmented(generator: Generator, per_class: usize, seed: u64) -> Self {
        Self {
            augmentation: Augmentation::Blur { sigma: 1.5 },
            ..Self::new(generator, per_class, seed)
        }
    }

    /// Half the training samples carry 0 dB noise; trained twice as long.
    pub fn noise_augmented(generator: Generator, per_class: usize, seed: u64) -> Self {
        let mut cfg = Self::new(generator, per_class, seed);
        cfg.augmentation = Augmentation::Noise;
        cfg.train.epochs = 16;
        cfg
    }
}

/// Mask sparsity weights swept by the Pareto recipe. The L1 term sums over
/// every coefficient, so useful weights are small.
pub const PARETO_ALPHAS: [f64; 5] = [1e-4, 1e-3, 1e-2, 5e-2, 2e-1];
pub const PARETO_STEPS: usize = 100;

/// Generates a training set and trains a fresh network of the matching
/// topology on it.
pub fn train_fixture(cfg: &FixtureConfig) -> Result<(BuiltinModel, TrainReport)> {
    let ds = generate(&DatasetSpec {
        augmentation: cfg.augmentation,
        ..DatasetSpec::new(cfg.generator, cfg.per_class, cfg.seed)
    })?;
    let model = BuiltinModel::new(
        topology_for(cfg.generator),
        &cfg.generator.shape(),
        cfg.generator.num_classes(),
        cfg.activation,
        cfg.seed,
    )?;
    train(&model, &ds.samples, &ds.labels, &cfg.train)
}

fn predicted<C: Classifier + ?Sized>(b: &C, x: &Signal) -> Result<usize> {
    Ok(argmax(&b.logits_raw(x.data())?))
}

/// Attributions for every sample, each explaining the model's prediction.
pub fn explain_all<C: Classifier + ?Sized>(
    b: &C,
    samples: &[Signal],
    domain: Domain,
    cfg: &MethodConfig,
) -> Result<Vec<Attribution>> {
    samples
        .par_iter()
        .map(|x| attribute(b, x, predicted(b, x)?, domain, cfg))
        .collect()
}

/// Uniform random scores drawn per sample.
pub fn random_attributions(reference: &[Attribution], seed: u64) -> Vec<Attribution> {
    reference
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let values = (0..a.len()).map(|_| rng.gen::<f64>()).collect();
            Attribution {
                values,
                method: a.method,
                config: serde_json::json!({"random": seed}),
                ..a.clone()
            }
        })
        .collect()
}

/// Same scores with the ranking flipped (most important becomes least).
pub fn reversed_attributions(attrs: &[Attribution]) -> Vec<Attribution> {
    attrs
        .iter()
        .map(|a| {
            let mags: Vec<f64> = a.values.iter().map(|v| v.abs()).collect();
            let top = mags.iter().copied().fold(0.0, f64::max);
            Attribution {
                values: mags.iter().map(|m| top - m).collect(),
                ..a.clone()
            }
        })
        .collect()
}

pub fn faithfulness_batch<C: Classifier + ?Sized>(
    b: &C,
    samples: &[Signal],
    attrs: &[Attribution],
    steps: usize,
) -> Result<Vec<FaithfulnessResult>> {
    samples
        .par_iter()
        .zip(attrs.par_iter())
        .map(|(x, a)| faithfulness_curves(b, x, a, a.class, steps))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub method: String,
    pub insertion: f64,
    pub deletion: f64,
    pub faithfulness: f64,
}

impl ScoreRow {
    pub fn from_results(method: &str, results: &[FaithfulnessResult]) -> Self {
        let n = results.len() as f64;
        let insertion = results.iter().map(|r| r.insertion.auc).sum::<f64>() / n;
        let deletion = results.iter().map(|r| r.deletion.auc).sum::<f64>() / n;
        Self {
            method: method.to_string(),
            insertion,
            deletion,
            faithfulness: insertion - deletion,
        }
    }
}

/// Long format: one row per method × metric.
pub fn score_table_csv(rows: &[ScoreRow]) -> String {
    let mut out = String::from("method,metric,value\n");
    for r in rows {
        out.push_str(&format!("{},insertion,{}\n", r.method, r.insertion));
        out.push_str(&format!("{},deletion,{}\n", r.method, r.deletion));
        out.push_str(&format!("{},faithfulness,{}\n", r.method, r.faithfulness));
    }
    out
}

fn method_label(domain: &Domain, method: Method) -> String {
    let prefix = match domain {
        Domain::Wavelet(_) => "wam",
        Domain::Pixel => "pixel",
    };
    format!("{prefix}-{}", method.name())
}

/// Insertion/deletion/faithfulness for the WAM estimators, their pixel
/// counterparts, and a random control.
pub fn table1_desk<C: Classifier + ?Sized>(
    b: &C,
    samples: &[Signal],
    spec: &WaveletSpec,
    steps: usize,
    seed: u64,
) -> Result<Vec<ScoreRow>> {
    let mut rows = Vec::new();
    let mut reference = None;
    for domain in [Domain::Wavelet(*spec), Domain::Pixel] {
        for method in Method::ALL {
            let mut cfg = MethodConfig::default_for(method);
            if let MethodConfig::SmoothGrad(sg) = &mut cfg {
                sg.seed = seed;
            }
            let attrs = explain_all(b, samples, domain, &cfg)?;
            rows.push(ScoreRow::from_results(
                &method_label(&domain, method),
                &faithfulness_batch(b, samples, &attrs, steps)?,
            ));
            if reference.is_none() {
                reference = Some(attrs);
            }
        }
    }
    let random = random_attributions(&reference.unwrap(), seed);
    rows.push(ScoreRow::from_results("random", &faithfulness_batch(b, samples, &random, steps)?));
    Ok(rows)
}

/// WAM-IG insertion/deletion under each mother wavelet.
pub fn wavelet_invariance<C: Classifier + ?Sized>(
    b: &C,
    samples: &[Signal],
    levels: usize,
    ig: &IgConfig,
    steps: usize,
) -> Result<Vec<ScoreRow>> {
    Family::ALL
        .iter()
        .map(|&family| {
            let domain = Domain::Wavelet(WaveletSpec::new(family, levels));
            let attrs = explain_all(b, samples, domain, &MethodConfig::Ig(ig.clone()))?;
            Ok(ScoreRow::from_results(family.name(), &faithfulness_batch(b, samples, &attrs, steps)?))
        })
        .collect()
}

/// Largest pairwise gap in insertion and in deletion across families.
pub fn max_pairwise_gap(rows: &[ScoreRow]) -> (f64, f64) {
    let mut gaps = (0.0f64, 0.0f64);
    for a in rows {
        for b in rows {
            gaps.0 = gaps.0.max((a.insertion - b.insertion).abs());
            gaps.1 = gaps.1.max((a.deletion - b.deletion).abs());
        }
    }
    gaps
}

/// Mean scale-importance vectors `[approx, J, …, 1]` for two models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleComparison {
    pub levels: usize,
    pub normal: Vec<f64>,
    pub blurred: Vec<f64>,
}

impl ScaleComparison {
    /// Share of the approximation plus the coarsest detail level.
    pub fn coarse_share(v: &[f64]) -> f64 {
        v.iter().take(2).sum()
    }

    pub fn coarse_margin(&self) -> f64 {
        Self::coarse_share(&self.blurred) - Self::coarse_share(&self.normal)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("scale,normal,blur_augmented\n");
        let labels = std::iter::once("approx".to_string()).chain((1..=self.levels).rev().map(|l| format!("level{l}")));
        for ((label, n), b) in labels.zip(&self.normal).zip(&self.blurred) {
            out.push_str(&format!("{label},{n},{b}\n"));
        }
        out
    }
}

fn mean_scales<C: Classifier + ?Sized>(b: &C, samples: &[Signal], spec: &WaveletSpec, cfg: &MethodConfig) -> Result<Vec<f64>> {
    let attrs = explain_all(b, samples, Domain::Wavelet(*spec), cfg)?;
    let vectors: Vec<Vec<f64>> = attrs
        .iter()
        .filter_map(|a| match scale_importance(a) {
            Err(WamError::AllZeroAttribution) => None,
            other => Some(other),
        })
        .collect::<Result<_>>()?;
    if vectors.is_empty() {
        return Err(WamError::AllZeroAttribution);
    }
    let mut mean = vec![0.0; spec.levels + 1];
    for v in &vectors {
        for (m, x) in mean.iter_mut().zip(v) {
            *m += x / vectors.len() as f64;
        }
    }
    Ok(mean)
}

pub fn fig4_scales<C: Classifier + ?Sized>(
    normal: &C,
    blurred: &C,
    samples: &[Signal],
    spec: &WaveletSpec,
    cfg: &MethodConfig,
) -> Result<ScaleComparison> {
    Ok(ScaleComparison {
        levels: spec.levels,
        normal: mean_scales(normal, samples, spec, cfg)?,
        blurred: mean_scales(blurred, samples, spec, cfg)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParetoSummary {
    pub alpha: f64,
    pub mean_sparsity: f64,
    pub mean_logit: f64,
    /// Fraction of samples whose minimal signal keeps the prediction.
    pub preserved: f64,
    /// Fraction reaching the target sparsity while keeping the prediction.
    pub sparse_and_preserved: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoSample {
    pub sample: usize,
    pub alpha: f64,
    pub sparsity: f64,
    pub logit: f64,
    pub argmax_preserved: bool,
}

pub struct ParetoReport {
    pub target_sparsity: f64,
    pub summaries: Vec<ParetoSummary>,
    pub samples: Vec<ParetoSample>,
}

impl ParetoReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("alpha,sparsity,logit,argmax_preserved,sparse_and_preserved\n");
        for s in &self.summaries {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                s.alpha, s.mean_sparsity, s.mean_logit, s.preserved, s.sparse_and_preserved
            ));
        }
        out
    }

    pub fn samples_csv(&self) -> String {
        let mut out = String::from("sample,alpha,sparsity,logit,argmax_preserved\n");
        for s in &self.samples {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                s.sample, s.alpha, s.sparsity, s.logit, s.argmax_preserved
            ));
        }
        out
    }
}

/// Preservation masks for every sample and `alpha`.
pub fn fig6_pareto<C: Classifier + ?Sized>(
    b: &C,
    samples: &[Signal],
    spec: &WaveletSpec,
    alphas: &[f64],
    steps: usize,
    learning_rate: f64,
    target_sparsity: f64,
) -> Result<ParetoReport> {
    if alphas.is_empty() {
        return Err(WamError::InvalidArgument("need at least one alpha".into()));
    }
    let jobs: Vec<(usize, f64)> = (0..samples.len()).flat_map(|i| alphas.iter().map(move |&a| (i, a))).collect();
    let rows = jobs
        .par_iter()
        .map(|&(i, alpha)| {
            let x = &samples[i];
            let c = predicted(b, x)?;
            let cfg = MaskConfig {
                steps,
                learning_rate,
                ..MaskConfig::new(alpha, c)
            };
            let r = optimize_mask(b, x, spec, &cfg)?;
            let logits = b.logits_raw(r.minimal_signal.data())?;
            Ok(ParetoSample {
                sample: i,
                alpha,
                sparsity: r.sparsity(),
                logit: logits[c],
                argmax_preserved: argmax(&logits) == c,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let summaries = alphas
        .iter()
        .map(|&alpha| {
            let group: Vec<&ParetoSample> = rows.iter().filter(|r| r.alpha == alpha).collect();
            let n = group.len() as f64;
            ParetoSummary {
                alpha,
                mean_sparsity: group.iter().map(|r| r.sparsity).sum::<f64>() / n,
                mean_logit: group.iter().map(|r| r.logit).sum::<f64>() / n,
                preserved: group.iter().filter(|r| r.argmax_preserved).count() as f64 / n,
                sparse_and_preserved: group
                    .iter()
                    .filter(|r| r.argmax_preserved && r.sparsity >= target_sparsity)
                    .count() as f64
                    / n,
            }
        })
        .collect();
    Ok(ParetoReport {
        target_sparsity,
        summaries,
        samples: rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSample {
    pub sample: usize,
    /// RMS(noise) / RMS(signal) before any clipping.
    pub rms_ratio: f64,
    pub argmax_unchanged: bool,
    pub noisy_logit: f64,
    pub denoised_logit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseReport {
    pub keep_fraction: f64,
    pub samples: Vec<NoiseSample>,
}

impl NoiseReport {
    pub fn unchanged_fraction(&self) -> f64 {
        self.samples.iter().filter(|s| s.argmax_unchanged).count() as f64 / self.samples.len() as f64
    }

    /// Among samples whose prediction survived the noise, the fraction
    /// whose top-k reconstruction raised the class logit.
    pub fn raised_fraction(&self) -> f64 {
        let kept: Vec<&NoiseSample> = self.samples.iter().filter(|s| s.argmax_unchanged).collect();
        if kept.is_empty() {
            return 0.0;
        }
        kept.iter().filter(|s| s.denoised_logit > s.noisy_logit).count() as f64 / kept.len() as f64
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("sample,rms_ratio,argmax_unchanged,noisy_logit,denoised_logit\n");
        for s in &self.samples {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                s.sample, s.rms_ratio, s.argmax_unchanged, s.noisy_logit, s.denoised_logit
            ));
        }
        out
    }
}

/// 0 dB white noise, then keep the top coefficients of the noisy input
/// ranked by a wavelet attribution of the clean prediction.
pub fn noise_audio<C: Classifier + ?Sized>(
    b: &C,
    samples: &[Signal],
    spec: &WaveletSpec,
    cfg: &MethodConfig,
    keep_fraction: f64,
    seed: u64,
) -> Result<NoiseReport> {
    let rows = samples
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let c = predicted(b, x)?;
            let (noisy, noise) = add_gaussian_noise_unclipped(x, seed.wrapping_add(i as u64))?;
            let rms_ratio = rms(&noise) / x.rms();
            let noisy = x.with_data(noisy)?;
            let noisy_logits = b.logits_raw(noisy.data())?;
            let attr = attribute(b, &noisy, c, Domain::Wavelet(*spec), cfg)?;
            let denoised = topk_reconstruct(&noisy, &attr.pyramid()?, keep_fraction)?;
            Ok(NoiseSample {
                sample: i,
                rms_ratio,
                argmax_unchanged: argmax(&noisy_logits) == c,
                noisy_logit: noisy_logits[c],
                denoised_logit: b.logits_raw(denoised.data())?[c],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(NoiseReport {
        keep_fraction,
        samples: rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapSample {
    pub sample: usize,
    /// Correlation of the reconstruction with the explained source.
    pub target_correlation: f64,
    /// Correlation of the reconstruction with the corrupting source.
    pub other_correlation: f64,
}

/// Mixes a burst clip (explained) with a plain tone clip (corruption), keeps
/// the top coefficients for the burst class and compares the reconstruction
/// with both sources.
pub fn overlap_audio<C: Classifier + ?Sized>(
    b: &C,
    targets: &[Signal],
    others: &[Signal],
    class: usize,
    spec: &WaveletSpec,
    cfg: &MethodConfig,
    keep_fraction: f64,
) -> Result<Vec<OverlapSample>> {
    targets
        .par_iter()
        .zip(others.par_iter())
        .enumerate()
        .map(|(i, (t, o))| {
            let mix = t.with_data(t.data().iter().zip(o.data()).map(|(a, b)| a + b).collect())?;
            let attr = attribute(b, &mix, class, Domain::Wavelet(*spec), cfg)?;
            let rec = topk_reconstruct(&mix, &attr.pyramid()?, keep_fraction)?;
            Ok(OverlapSample {
                sample: i,
                target_correlation: pearson(rec.data(), t.data())?,
                other_correlation: pearson(rec.data(), o.data())?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointingReport {
    pub hits: Vec<bool>,
    pub accuracy: f64,
    /// Mean box-area fraction: the expected accuracy of a uniform guess.
    pub random_baseline: f64,
}

/// Pointing game on a dataset with target boxes, explaining the true label.
pub fn pointing<C: Classifier + ?Sized>(b: &C, ds: &Dataset, domain: Domain, cfg: &MethodConfig) -> Result<PointingReport> {
    let boxes = ds
        .boxes
        .as_ref()
        .ok_or_else(|| WamError::MissingArtifact("dataset has no target boxes".into()))?;
    let n: usize = ds.shape().iter().product();
    let hits = ds
        .samples
        .par_iter()
        .zip(ds.labels.par_iter())
        .zip(boxes.par_iter())
        .map(|((x, &c), bx)| pointing_game(&attribute(b, x, c, domain, cfg)?, bx))
        .collect::<Result<Vec<_>>>()?;
    let count = hits.len().max(1) as f64;
    Ok(PointingReport {
        accuracy: hits.iter().filter(|&&h| h).count() as f64 / count,
        random_baseline: boxes.iter().map(|bx| bx.volume() as f64 / n as f64).sum::<f64>() / count,
        hits,
    })
}
