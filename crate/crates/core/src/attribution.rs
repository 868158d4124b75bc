//! Gradient attributions over wavelet coefficients, with pixel-domain
//! counterparts for comparison.
//!
//! The explained score is always the class logit `f_c`. Wavelet estimators
//! differentiate `f_c(idwt(z))` with respect to `z`; by the chain rule this
//! is `idwt_adjoint(∇x f_c)`, so backends only ever supply input gradients.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Result, WamError};
use crate::model::Classifier;
use crate::signal::Signal;
use crate::wavelet::transform::{dwt_flat, idwt_adjoint_flat, idwt_flat};
use crate::wavelet::{WaveletPyramid, WaveletSpec};

/// Where attribution scores live.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Domain {
    Wavelet(WaveletSpec),
    Pixel,
}

impl Domain {
    pub fn validate(&self, shape: &[usize]) -> Result<()> {
        match self {
            Domain::Wavelet(spec) => spec.validate(shape),
            Domain::Pixel => Ok(()),
        }
    }

    /// Signal → domain coordinates.
    pub fn forward(&self, x: &[f64], shape: &[usize]) -> Vec<f64> {
        match self {
            Domain::Wavelet(spec) => dwt_flat(x, shape, spec),
            Domain::Pixel => x.to_vec(),
        }
    }

    /// Domain coordinates → signal.
    pub fn inverse(&self, z: &[f64], shape: &[usize]) -> Vec<f64> {
        match self {
            Domain::Wavelet(spec) => idwt_flat(z, shape, spec),
            Domain::Pixel => z.to_vec(),
        }
    }

    /// Pulls a signal-space gradient back to domain coordinates.
    pub fn pullback(&self, g: &[f64], shape: &[usize]) -> Vec<f64> {
        match self {
            Domain::Wavelet(spec) => idwt_adjoint_flat(g, shape, spec),
            Domain::Pixel => g.to_vec(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Domain::Wavelet(_) => "wavelet",
            Domain::Pixel => "pixel",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Saliency,
    SmoothGrad,
    #[serde(rename = "ig")]
    IntegratedGradients,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Saliency, Method::SmoothGrad, Method::IntegratedGradients];

    pub fn name(self) -> &'static str {
        match self {
            Method::Saliency => "saliency",
            Method::SmoothGrad => "smoothgrad",
            Method::IntegratedGradients => "ig",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "saliency" => Ok(Method::Saliency),
            "smoothgrad" => Ok(Method::SmoothGrad),
            "ig" | "integrated-gradients" => Ok(Method::IntegratedGradients),
            other => Err(WamError::InvalidArgument(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothGradConfig {
    pub samples: usize,
    /// Noise standard deviation as a fraction of `max(x) − min(x)`.
    pub sigma: f64,
    pub seed: u64,
}

impl Default for SmoothGradConfig {
    fn default() -> Self {
        Self {
            samples: 25,
            sigma: 0.15,
            seed: 0,
        }
    }
}

impl SmoothGradConfig {
    fn validate(&self) -> Result<()> {
        if self.samples == 0 || !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(WamError::InvalidArgument(format!(
                "smoothgrad needs n >= 1 and sigma >= 0 (got n = {}, sigma = {})",
                self.samples, self.sigma
            )));
        }
        Ok(())
    }
}

/// Path origin for integrated gradients, in domain coordinates.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Baseline {
    #[default]
    Zero,
    Provided(Vec<f64>),
}

impl Baseline {
    pub fn id(&self) -> &'static str {
        match self {
            Baseline::Zero => "zero",
            Baseline::Provided(_) => "provided",
        }
    }

    fn resolve(&self, n: usize) -> Result<Vec<f64>> {
        match self {
            Baseline::Zero => Ok(vec![0.0; n]),
            Baseline::Provided(v) if v.len() == n => Ok(v.clone()),
            Baseline::Provided(v) => Err(WamError::ShapeMismatch {
                expected: vec![n],
                actual: vec![v.len()],
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IgConfig {
    /// Midpoint-rule quadrature steps.
    pub steps: usize,
    pub baseline: Baseline,
}

impl Default for IgConfig {
    fn default() -> Self {
        Self {
            steps: 64,
            baseline: Baseline::Zero,
        }
    }
}

impl IgConfig {
    pub fn with_steps(steps: usize) -> Self {
        Self {
            steps,
            ..Default::default()
        }
    }
}

/// Estimator choice plus its hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub enum MethodConfig {
    Saliency,
    SmoothGrad(SmoothGradConfig),
    Ig(IgConfig),
}

impl MethodConfig {
    pub fn default_for(method: Method) -> Self {
        match method {
            Method::Saliency => MethodConfig::Saliency,
            Method::SmoothGrad => MethodConfig::SmoothGrad(SmoothGradConfig::default()),
            Method::IntegratedGradients => MethodConfig::Ig(IgConfig::default()),
        }
    }

    pub fn method(&self) -> Method {
        match self {
            MethodConfig::Saliency => Method::Saliency,
            MethodConfig::SmoothGrad(_) => Method::SmoothGrad,
            MethodConfig::Ig(_) => Method::IntegratedGradients,
        }
    }

    /// JSON snapshot of the hyperparameters (baselines by id only).
    pub fn snapshot(&self) -> serde_json::Value {
        match self {
            MethodConfig::Saliency => json!({}),
            MethodConfig::SmoothGrad(c) => json!({"n": c.samples, "sigma": c.sigma, "seed": c.seed}),
            MethodConfig::Ig(c) => json!({"steps": c.steps, "baseline": c.baseline.id(), "quadrature": "midpoint"}),
        }
    }
}

/// Importance scores aligned with a signal or with its coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct Attribution {
    pub domain: Domain,
    pub signal_shape: Vec<usize>,
    /// Flat scores: row-major samples, or the flat coefficient layout.
    pub values: Vec<f64>,
    pub method: Method,
    pub config: serde_json::Value,
    pub class: usize,
}

impl Attribution {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn pyramid(&self) -> Result<WaveletPyramid> {
        match self.domain {
            Domain::Wavelet(spec) => WaveletPyramid::from_flat(spec, &self.signal_shape, &self.values),
            Domain::Pixel => Err(WamError::InvalidArgument("pixel attribution has no pyramid".into())),
        }
    }

    /// Scores on the signal grid: pixel scores as-is, wavelet scores via
    /// [`crate::spatial_projection`].
    pub fn spatial_map(&self) -> Result<Signal> {
        match self.domain {
            Domain::Wavelet(_) => crate::wavelet::spatial_projection(&self.pyramid()?),
            Domain::Pixel => Signal::new(self.signal_shape.clone(), self.values.clone()),
        }
    }

    pub fn abs(&self) -> Self {
        Self {
            values: self.values.iter().map(|v| v.abs()).collect(),
            ..self.clone()
        }
    }

    /// Same attribution with replaced scores (e.g. a rank-reversed control).
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.values.len() {
            return Err(WamError::ShapeMismatch {
                expected: vec![self.values.len()],
                actual: vec![values.len()],
            });
        }
        Ok(Self {
            values,
            ..self.clone()
        })
    }

    /// Metadata stored next to persisted scores.
    pub fn sidecar(&self, model_id: &str) -> serde_json::Value {
        json!({
            "method": self.method.name(),
            "domain": self.domain.name(),
            "class": self.class,
            "config": self.config,
            "model_id": model_id,
        })
    }
}

fn prepare<C: Classifier + ?Sized>(b: &C, x: &Signal, c: usize, domain: &Domain) -> Result<()> {
    x.ensure_shape(b.input_shape())?;
    b.check_class(c)?;
    domain.validate(x.shape())
}

fn domain_gradient<C: Classifier + ?Sized>(b: &C, x: &[f64], shape: &[usize], c: usize, domain: &Domain) -> Result<Vec<f64>> {
    let g = b.gradient_raw(x, c)?;
    if g.iter().any(|v| !v.is_finite()) {
        return Err(WamError::NonFiniteValues);
    }
    Ok(domain.pullback(&g, shape))
}

/// Mean of per-sample vectors, summed in index order regardless of how they
/// were computed.
fn ordered_mean(parts: Vec<Vec<f64>>) -> Vec<f64> {
    let count = parts.len() as f64;
    let mut acc = vec![0.0; parts.first().map_or(0, Vec::len)];
    for p in &parts {
        for (a, v) in acc.iter_mut().zip(p) {
            *a += v;
        }
    }
    acc.iter_mut().for_each(|a| *a /= count);
    acc
}

/// Runs one estimator in the given domain.
pub fn attribute<C: Classifier + ?Sized>(
    b: &C,
    x: &Signal,
    c: usize,
    domain: Domain,
    cfg: &MethodConfig,
) -> Result<Attribution> {
    prepare(b, x, c, &domain)?;
    let shape = x.shape();
    let values = match cfg {
        MethodConfig::Saliency => domain_gradient(b, x.data(), shape, c, &domain)?
            .into_iter()
            .map(f64::abs)
            .collect(),
        MethodConfig::SmoothGrad(sg) => smoothgrad_values(b, x, c, &domain, sg)?,
        MethodConfig::Ig(ig) => ig_values(b, x, c, &domain, ig)?,
    };
    Ok(Attribution {
        domain,
        signal_shape: shape.to_vec(),
        values,
        method: cfg.method(),
        config: cfg.snapshot(),
        class: c,
    })
}

fn smoothgrad_values<C: Classifier + ?Sized>(
    b: &C,
    x: &Signal,
    c: usize,
    domain: &Domain,
    cfg: &SmoothGradConfig,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    let std = cfg.sigma * x.dynamic_range();
    let shape = x.shape();
    if std == 0.0 {
        // every sample is x itself; averaging would only add rounding
        return domain_gradient(b, x.data(), shape, c, domain);
    }
    let parts = (0..cfg.samples)
        .into_par_iter()
        .map(|i| {
            let mut noisy = x.data().to_vec();
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i as u64);
            let normal = Normal::new(0.0, std).expect("finite std");
            noisy.iter_mut().for_each(|v| *v += normal.sample(&mut rng));
            domain_gradient(b, &noisy, shape, c, domain)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ordered_mean(parts))
}

fn ig_values<C: Classifier + ?Sized>(b: &C, x: &Signal, c: usize, domain: &Domain, cfg: &IgConfig) -> Result<Vec<f64>> {
    if cfg.steps == 0 {
        return Err(WamError::InvalidArgument("integrated gradients needs at least one step".into()));
    }
    let shape = x.shape();
    let z = domain.forward(x.data(), shape);
    let z0 = cfg.baseline.resolve(z.len())?;
    let m = cfg.steps;
    let parts = (1..=m)
        .into_par_iter()
        .map(|t| {
            let alpha = (t as f64 - 0.5) / m as f64;
            let zt: Vec<f64> = z0.iter().zip(&z).map(|(b0, zi)| b0 + alpha * (zi - b0)).collect();
            domain_gradient(b, &domain.inverse(&zt, shape), shape, c, domain)
        })
        .collect::<Result<Vec<_>>>()?;
    let mean = ordered_mean(parts);
    Ok(z.iter().zip(&z0).zip(&mean).map(|((zi, b0), g)| (zi - b0) * g).collect())
}

/// `|∂f_c/∂z|` with `z = dwt(x)`.
pub fn wam_saliency<C: Classifier + ?Sized>(b: &C, x: &Signal, c: usize, spec: &WaveletSpec) -> Result<Attribution> {
    attribute(b, x, c, Domain::Wavelet(*spec), &MethodConfig::Saliency)
}

/// Signed average of coefficient gradients at `dwt(x + δ)`, `δ ~ N(0, (σ·range)²)`.
pub fn wam_smoothgrad<C: Classifier + ?Sized>(
    b: &C,
    x: &Signal,
    c: usize,
    spec: &WaveletSpec,
    cfg: &SmoothGradConfig,
) -> Result<Attribution> {
    attribute(b, x, c, Domain::Wavelet(*spec), &MethodConfig::SmoothGrad(*cfg))
}

/// Integrated gradients along the straight coefficient path from the baseline.
pub fn wam_ig<C: Classifier + ?Sized>(
    b: &C,
    x: &Signal,
    c: usize,
    spec: &WaveletSpec,
    cfg: &IgConfig,
) -> Result<Attribution> {
    attribute(b, x, c, Domain::Wavelet(*spec), &MethodConfig::Ig(cfg.clone()))
}

/// The same estimators computed directly on the input samples.
pub fn pixel_baseline<C: Classifier + ?Sized>(b: &C, x: &Signal, c: usize, cfg: &MethodConfig) -> Result<Attribution> {
    attribute(b, x, c, Domain::Pixel, cfg)
}

/// Shares of `Σ|attr|` per level, ordered `[approx, J, J−1, …, 1]`.
pub fn scale_importance(attr: &Attribution) -> Result<Vec<f64>> {
    let p = attr.pyramid()?;
    let levels = p.spec().levels;
    let mut shares = Vec::with_capacity(levels + 1);
    shares.push(p.approx().iter().map(|v| v.abs()).sum::<f64>());
    for level in (1..=levels).rev() {
        let mass = p
            .level_bands(level)
            .iter()
            .flatten()
            .map(|v| v.abs())
            .sum();
        shares.push(mass);
    }
    let total: f64 = shares.iter().sum();
    if total == 0.0 {
        return Err(WamError::AllZeroAttribution);
    }
    shares.iter_mut().for_each(|s| *s /= total);
    Ok(shares)
}

/// Mean of the per-sample normalised scale vectors.
pub fn scale_importance_mean(attrs: &[Attribution]) -> Result<Vec<f64>> {
    if attrs.is_empty() {
        return Err(WamError::EmptyDataset);
    }
    let parts = attrs.iter().map(scale_importance).collect::<Result<Vec<_>>>()?;
    if parts.iter().any(|p| p.len() != parts[0].len()) {
        return Err(WamError::InvalidArgument("attributions use different level counts".into()));
    }
    Ok(ordered_mean(parts))
}

/// Attribution total versus the logit change it should account for.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Completeness {
    pub attribution_sum: f64,
    pub output_delta: f64,
}

impl Completeness {
    pub fn gap(&self) -> f64 {
        (self.attribution_sum - self.output_delta).abs()
    }

    /// Gap divided by `|f_c(x) − f_c(baseline)|`; the absolute gap when that is zero.
    pub fn relative_gap(&self) -> f64 {
        if self.output_delta == 0.0 {
            self.gap()
        } else {
            self.gap() / self.output_delta.abs()
        }
    }
}

pub fn completeness<C: Classifier + ?Sized>(
    b: &C,
    x: &Signal,
    c: usize,
    spec: &WaveletSpec,
    cfg: &IgConfig,
) -> Result<Completeness> {
    let attr = wam_ig(b, x, c, spec, cfg)?;
    let z0 = cfg.baseline.resolve(attr.len())?;
    let x0 = Domain::Wavelet(*spec).inverse(&z0, x.shape());
    let fx = b.logits_raw(x.data())?[c];
    let f0 = b.logits_raw(&x0)?[c];
    Ok(Completeness {
        attribution_sum: attr.values.iter().sum(),
        output_delta: fx - f0,
    })
}

/// `|Σ wam_ig − (f_c(x) − f_c(idwt(z₀)))|`.
pub fn completeness_gap<C: Classifier + ?Sized>(
    b: &C,
    x: &Signal,
    c: usize,
    spec: &WaveletSpec,
    cfg: &IgConfig,
) -> Result<f64> {
    Ok(completeness(b, x, c, spec, cfg)?.gap())
}
