//! Faithfulness metrics over attributions, in whichever domain the
//! attribution lives (masks on coefficients are reconstructed before the
//! model sees them).

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::attribution::{Attribution, Baseline};
use crate::error::{Result, WamError};
use crate::model::{argmax, softmax, Classifier};
use crate::ranking::{fraction_count, rank_by_magnitude, step_count};
use crate::sanity::pearson;
use crate::signal::Signal;

pub const DEFAULT_CURVE_STEPS: usize = 50;
pub const DEFAULT_MASK_FRACTION: f64 = 0.2;

/// Which model output a metric reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Score {
    #[default]
    Probability,
    Logit,
}

impl Score {
    fn eval<C: Classifier + ?Sized>(self, b: &C, x: &[f64], c: usize) -> Result<f64> {
        let logits = b.logits_raw(x)?;
        Ok(match self {
            Score::Probability => softmax(&logits)[c],
            Score::Logit => logits[c],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveResult {
    pub fractions: Vec<f64>,
    pub probabilities: Vec<f64>,
    /// `Σ_{k=1..K} p_k / K`.
    pub auc: f64,
}

impl CurveResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("fraction,probability\n");
        for (f, p) in self.fractions.iter().zip(&self.probabilities) {
            out.push_str(&format!("{f},{p}\n"));
        }
        out
    }
}

/// Attribution, signal and baseline resolved to flat domain coordinates.
struct Aligned {
    z: Vec<f64>,
    z0: Vec<f64>,
}

fn align<C: Classifier + ?Sized>(b: &C, x: &Signal, attr: &Attribution, c: usize, baseline: &Baseline) -> Result<Aligned> {
    x.ensure_shape(b.input_shape())?;
    b.check_class(c)?;
    if attr.signal_shape != x.shape() {
        return Err(WamError::ShapeMismatch {
            expected: x.shape().to_vec(),
            actual: attr.signal_shape.clone(),
        });
    }
    attr.domain.validate(x.shape())?;
    let z = attr.domain.forward(x.data(), x.shape());
    if z.len() != attr.len() {
        return Err(WamError::ShapeMismatch {
            expected: vec![z.len()],
            actual: vec![attr.len()],
        });
    }
    let z0 = match baseline {
        Baseline::Zero => vec![0.0; z.len()],
        Baseline::Provided(v) if v.len() == z.len() => v.clone(),
        Baseline::Provided(v) => {
            return Err(WamError::ShapeMismatch {
                expected: vec![z.len()],
                actual: vec![v.len()],
            })
        }
    };
    Ok(Aligned { z, z0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Direction {
    Insert,
    Delete,
}

fn curve<C: Classifier + ?Sized>(
    b: &C,
    x: &Signal,
    attr: &Attribution,
    c: usize,
    steps: usize,
    baseline: &Baseline,
    direction: Direction,
) -> Result<CurveResult> {
    if steps == 0 {
        return Err(WamError::InvalidArgument("curves need at least one step".into()));
    }
    let Aligned { z, z0 } = align(b, x, attr, c, baseline)?;
    let n = z.len();
    let order = rank_by_magnitude(&attr.values);
    let (start, target) = match direction {
        Direction::Insert => (&z0, &z),
        Direction::Delete => (&z, &z0),
    };
    let probabilities = (0..=steps)
        .into_par_iter()
        .map(|k| {
            let mut v = start.clone();
            for &i in &order[..step_count(k, n, steps)] {
                v[i] = target[i];
            }
            Score::Probability.eval(b, &attr.domain.inverse(&v, x.shape()), c)
        })
        .collect::<Result<Vec<_>>>()?;
    let auc = probabilities[1..].iter().sum::<f64>() / steps as f64;
    Ok(CurveResult {
        fractions: (0..=steps).map(|k| k as f64 / steps as f64).collect(),
        probabilities,
        auc,
    })
}

/// Restores features most-important-first into the baseline.
pub fn insertion<C: Classifier + ?Sized>(
    b: &C,
    x: &Signal,
    attr: &Attribution,
    c: usize,
    steps: usize,
    baseline: &Baseline,
) -> Result<CurveResult> {
    curve(b, x, attr, c, steps, baseline, Direction::Insert)
}

/// Replaces features most-important-first with the baseline.
pub fn deletion<C: Classifier + ?Sized>(
    b: &C,
    x: &Signal,
    attr: &Attribution,
    c: usize,
    steps: usize,
    baseline: &Baseline,
) -> Result<CurveResult> {
    curve(b, x, attr, c, steps, baseline, Direction::Delete)
}

/// Insertion and deletion curves plus their difference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaithfulnessResult {
    pub insertion: CurveResult,
    pub deletion: CurveResult,
}

impl FaithfulnessResult {
    pub fn faithfulness(&self) -> f64 {
        self.insertion.auc - self.deletion.auc
    }
}

pub fn faithfulness_curves<C: Classifier + ?Sized>(
    b: &C,
    x: &Signal,
    attr: &Attribution,
    c: usize,
    steps: usize,
) -> Result<FaithfulnessResult> {
    Ok(FaithfulnessResult {
        insertion: insertion(b, x, attr, c, steps, &Baseline::Zero)?,
        deletion: deletion(b, x, attr, c, steps, &Baseline::Zero)?,
    })
}

/// Insertion AUC minus deletion AUC.
pub fn faithfulness<C: Classifier + ?Sized>(b: &C, x: &Signal, attr: &Attribution, c: usize, steps: usize) -> Result<f64> {
    Ok(faithfulness_curves(b, x, attr, c, steps)?.faithfulness())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MuFidelityConfig {
    /// Defaults to `⌈0.2 N⌉`.
    pub subset_size: Option<usize>,
    pub num_subsets: usize,
    pub baseline: Baseline,
    pub score: Score,
    pub seed: u64,
}

impl Default for MuFidelityConfig {
    fn default() -> Self {
        Self {
            subset_size: None,
            num_subsets: 128,
            baseline: Baseline::Zero,
            score: Score::Probability,
            seed: 0,
        }
    }
}

/// Pearson correlation between subset attribution sums and the score drop
/// when those subsets are set to the baseline.
pub fn mu_fidelity<C: Classifier + ?Sized>(
    b: &C,
    x: &Signal,
    attr: &Attribution,
    c: usize,
    cfg: &MuFidelityConfig,
) -> Result<f64> {
    let Aligned { z, z0 } = align(b, x, attr, c, &cfg.baseline)?;
    let n = z.len();
    let d = cfg.subset_size.unwrap_or_else(|| fraction_count(0.2, n));
    if d == 0 || d > n {
        return Err(WamError::InvalidArgument(format!("subset size {d} outside 1..={n}")));
    }
    if cfg.num_subsets < 2 {
        return Err(WamError::InvalidArgument("need at least two subsets".into()));
    }
    let full = cfg.score.eval(b, x.data(), c)?;
    let pairs = (0..cfg.num_subsets)
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(s as u64);
            let subset = sample(&mut rng, n, d);
            let mut v = z.clone();
            let mut attr_sum = 0.0;
            for i in subset.iter() {
                v[i] = z0[i];
                attr_sum += attr.values[i];
            }
            let drop = full - cfg.score.eval(b, &attr.domain.inverse(&v, x.shape()), c)?;
            Ok((attr_sum, drop))
        })
        .collect::<Result<Vec<_>>>()?;
    let (sums, drops): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    pearson(&sums, &drops)
}

/// Binary mask over the top `⌈q N⌉` features by `|attr|`.
fn top_mask(attr: &Attribution, q: f64) -> Result<Vec<bool>> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(WamError::InvalidArgument(format!("mask fraction {q} outside (0, 1]")));
    }
    let order = rank_by_magnitude(&attr.values);
    let mut mask = vec![false; attr.len()];
    for &i in &order[..fraction_count(q, attr.len())] {
        mask[i] = true;
    }
    Ok(mask)
}

/// Logit drop after zeroing the top-`q` features: `f_c(x) − f_c(x ⊙ (1 − m))`.
pub fn ff_spectra<C: Classifier + ?Sized>(b: &C, x: &Signal, attr: &Attribution, c: usize, q: f64) -> Result<f64> {
    let Aligned { z, .. } = align(b, x, attr, c, &Baseline::Zero)?;
    let mask = top_mask(attr, q)?;
    let kept: Vec<f64> = z.iter().zip(&mask).map(|(&v, &m)| if m { 0.0 } else { v }).collect();
    let full = Score::Logit.eval(b, x.data(), c)?;
    Ok(full - Score::Logit.eval(b, &attr.domain.inverse(&kept, x.shape()), c)?)
}

/// Whether the prediction on the masked-in top-`q` features matches the
/// prediction on `x`.
pub fn fid_in_sample<C: Classifier + ?Sized>(b: &C, x: &Signal, attr: &Attribution, q: f64) -> Result<bool> {
    let Aligned { z, .. } = align(b, x, attr, attr.class, &Baseline::Zero)?;
    let mask = top_mask(attr, q)?;
    let kept: Vec<f64> = z.iter().zip(&mask).map(|(&v, &m)| if m { v } else { 0.0 }).collect();
    let original = argmax(&b.logits_raw(x.data())?);
    Ok(argmax(&b.logits_raw(&attr.domain.inverse(&kept, x.shape()))?) == original)
}

/// Fraction of samples whose argmax survives masking in.
pub fn fid_in<C: Classifier + ?Sized>(b: &C, samples: &[Signal], attrs: &[Attribution], q: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(WamError::EmptyDataset);
    }
    if samples.len() != attrs.len() {
        return Err(WamError::InvalidArgument(format!(
            "{} samples but {} attributions",
            samples.len(),
            attrs.len()
        )));
    }
    let hits = samples
        .par_iter()
        .zip(attrs.par_iter())
        .map(|(x, a)| fid_in_sample(b, x, a, q))
        .collect::<Result<Vec<_>>>()?;
    Ok(hits.iter().filter(|&&h| h).count() as f64 / hits.len() as f64)
}

/// Axis-aligned box with inclusive corners, in sample coordinates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min: Vec<usize>,
    pub max: Vec<usize>,
}

impl BoundingBox {
    pub fn new(min: Vec<usize>, max: Vec<usize>) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, point: &[usize]) -> bool {
        point
            .iter()
            .zip(self.min.iter().zip(&self.max))
            .all(|(p, (lo, hi))| lo <= p && p <= hi)
    }

    /// Number of grid points inside.
    pub fn volume(&self) -> usize {
        self.min.iter().zip(&self.max).map(|(lo, hi)| hi + 1 - lo).product()
    }

    fn validate(&self, shape: &[usize]) -> Result<()> {
        let ok = self.min.len() == shape.len()
            && self.max.len() == shape.len()
            && self.min.iter().zip(&self.max).all(|(lo, hi)| lo <= hi)
            && self.max.iter().zip(shape).all(|(hi, n)| hi < n);
        if ok {
            Ok(())
        } else {
            Err(WamError::EmptyBox)
        }
    }
}

/// Hit iff the first maximum (row-major) of the spatial map lies in the box.
pub fn pointing_game(attr: &Attribution, target: &BoundingBox) -> Result<bool> {
    let map = attr.spatial_map()?;
    target.validate(map.shape())?;
    let mut idx = argmax(map.data());
    let mut coords = vec![0; map.ndim()];
    for a in (0..map.ndim()).rev() {
        coords[a] = idx % map.shape()[a];
        idx /= map.shape()[a];
    }
    Ok(target.contains(&coords))
}

/// Hits / (hits + misses).
pub fn pointing_accuracy(attrs: &[Attribution], boxes: &[BoundingBox]) -> Result<f64> {
    if attrs.is_empty() {
        return Err(WamError::EmptyDataset);
    }
    if attrs.len() != boxes.len() {
        return Err(WamError::InvalidArgument(format!(
            "{} attributions but {} boxes",
            attrs.len(),
            boxes.len()
        )));
    }
    let mut hits = 0;
    for (a, bx) in attrs.iter().zip(boxes) {
        hits += pointing_game(a, bx)? as usize;
    }
    Ok(hits as f64 / attrs.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    Mean,
    Median,
}

impl Aggregation {
    pub fn apply(self, values: &[f64]) -> f64 {
        if values.is_empty() {
            return f64::NAN;
        }
        match self {
            Aggregation::Mean => values.iter().sum::<f64>() / values.len() as f64,
            Aggregation::Median => {
                let mut v = values.to_vec();
                v.sort_by(f64::total_cmp);
                let mid = v.len() / 2;
                if v.len() % 2 == 1 {
                    v[mid]
                } else {
                    0.5 * (v[mid - 1] + v[mid])
                }
            }
        }
    }
}

/// Per-sample values of one metric and their aggregate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric: String,
    pub per_sample: Vec<f64>,
    pub aggregation: Aggregation,
    pub aggregate: f64,
    pub count: usize,
    pub config: serde_json::Value,
}

impl MetricReport {
    pub fn new(metric: &str, per_sample: Vec<f64>, aggregation: Aggregation, config: serde_json::Value) -> Self {
        Self {
            metric: metric.to_string(),
            aggregate: aggregation.apply(&per_sample),
            count: per_sample.len(),
            per_sample,
            aggregation,
            config,
        }
    }

    /// Mean for most metrics, median for FF.
    pub fn for_metric(metric: &str, per_sample: Vec<f64>, config: serde_json::Value) -> Self {
        let aggregation = if metric == "ff" {
            Aggregation::Median
        } else {
            Aggregation::Mean
        };
        Self::new(metric, per_sample, aggregation, config)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("sample,value\n");
        for (i, v) in self.per_sample.iter().enumerate() {
            out.push_str(&format!("{i},{v}\n"));
        }
        out
    }
}

/// Config snapshot shared by the batch evaluators.
pub fn metric_config(steps: usize, q: f64) -> serde_json::Value {
    json!({"steps": steps, "mask_fraction": q, "baseline": "zero", "curve_score": "probability", "ff_score": "logit"})
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attribution::{Domain, Method};
    use crate::model::BuiltinModel;
    use crate::wavelet::{Family, WaveletSpec};

    fn pixel_attr(values: Vec<f64>) -> Attribution {
        Attribution {
            domain: Domain::Pixel,
            signal_shape: vec![values.len()],
            values,
            method: Method::Saliency,
            config: json!({}),
            class: 0,
        }
    }

    #[test]
    fn single_step_curves_hit_the_endpoints() {
        let m = BuiltinModel::linear(&[4], vec![1.0, -2.0, 0.5, 3.0, 0.0, 1.0, 1.0, -1.0], vec![0.2, -0.1]).unwrap();
        let x = Signal::new(vec![4], vec![0.5, 1.0, -1.0, 2.0]).unwrap();
        let a = pixel_attr(vec![0.3, 0.1, 0.2, 0.4]);
        let ins = insertion(&m, &x, &a, 0, 1, &Baseline::Zero).unwrap();
        let p_x = m.probability_raw(x.data(), 0).unwrap();
        let p_0 = m.probability_raw(&[0.0; 4], 0).unwrap();
        assert_eq!(ins.auc, p_x);
        assert_eq!(ins.probabilities, vec![p_0, p_x]);
        let del = deletion(&m, &x, &a, 0, 1, &Baseline::Zero).unwrap();
        assert_eq!(del.auc, p_0);
    }

    #[test]
    fn constant_model_has_zero_faithfulness() {
        let m = BuiltinModel::linear(&[8], vec![0.0; 16], vec![0.4, 0.1]).unwrap();
        let x = Signal::new(vec![8], (0..8).map(|i| i as f64).collect()).unwrap();
        let a = pixel_attr((0..8).map(|i| (i * 3 % 5) as f64).collect());
        assert_eq!(faithfulness(&m, &x, &a, 1, 8).unwrap(), 0.0);
        assert_eq!(ff_spectra(&m, &x, &a, 1, 0.5).unwrap(), 0.0);
        assert!(matches!(
            mu_fidelity(&m, &x, &a, 0, &MuFidelityConfig::default()),
            Err(WamError::DegenerateVariance)
        ));
    }

    #[test]
    fn full_mask_ff_is_the_logit_drop_to_zero() {
        let w = vec![1.0, 2.0, 3.0, 4.0];
        let m = BuiltinModel::linear(&[4], w, vec![0.5]).unwrap();
        let x = Signal::new(vec![4], vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        let a = pixel_attr(vec![1.0; 4]);
        assert_eq!(ff_spectra(&m, &x, &a, 0, 1.0).unwrap(), 10.0);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let m = BuiltinModel::linear(&[4], vec![1.0; 4], vec![0.0]).unwrap();
        let x = Signal::new(vec![4], vec![1.0; 4]).unwrap();
        let a = pixel_attr(vec![1.0; 8]);
        assert!(matches!(
            insertion(&m, &x, &a, 0, 4, &Baseline::Zero),
            Err(WamError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn pointing_game_hits_and_misses() {
        let mut v = vec![0.0; 64];
        v[3 * 8 + 4] = 1.0;
        let mut a = pixel_attr(v);
        a.signal_shape = vec![8, 8];
        assert!(pointing_game(&a, &BoundingBox::new(vec![2, 3], vec![4, 5])).unwrap());
        assert!(!pointing_game(&a, &BoundingBox::new(vec![0, 0], vec![2, 2])).unwrap());
        assert!(matches!(
            pointing_game(&a, &BoundingBox::new(vec![4, 4], vec![3, 5])),
            Err(WamError::EmptyBox)
        ));
        assert!(matches!(
            pointing_game(&a, &BoundingBox::new(vec![0, 0], vec![8, 2])),
            Err(WamError::EmptyBox)
        ));
    }

    #[test]
    fn wavelet_pointing_uses_the_projection() {
        let spec = WaveletSpec::new(Family::Haar, 1);
        let mut v = vec![0.0; 16];
        // level-1 band of a 4×4 signal: orientation 1 starts after the 2×2 approx
        v[4 + 3] = 5.0;
        let a = Attribution {
            domain: Domain::Wavelet(spec),
            signal_shape: vec![4, 4],
            values: v,
            method: Method::Saliency,
            config: json!({}),
            class: 0,
        };
        assert!(pointing_game(&a, &BoundingBox::new(vec![2, 2], vec![3, 3])).unwrap());
        assert!(!pointing_game(&a, &BoundingBox::new(vec![0, 0], vec![1, 1])).unwrap());
    }

    #[test]
    fn aggregates() {
        assert_eq!(Aggregation::Median.apply(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(Aggregation::Median.apply(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        let r = MetricReport::for_metric("ff", vec![1.0, 100.0, 2.0], json!({}));
        assert_eq!(r.aggregate, 2.0);
        assert_eq!(r.to_csv(), "sample,value\n0,1\n1,100\n2,2\n");
    }
}
