//! Seeded synthetic datasets, one per modality, small enough to train on a
//! laptop in seconds.
//!
//! * `textured-shapes-2d` (64×64): a square carrying a coarse sinusoidal
//!   texture versus a disk carrying a fine one.
//! * `tone-burst-1d` (1024): a pure tone versus the same tone with a short
//!   transient (a Gaussian bump) at a random offset.
//! * `solid-shapes-3d` (16³): sphere, cube, axis-aligned cross.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, WamError};
use crate::io::{read_wamf, write_wamf};
use crate::metrics::BoundingBox;
use crate::signal::{add_gaussian_noise, Modality, Signal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Generator {
    #[serde(rename = "textured-shapes-2d")]
    TexturedShapes2d,
    #[serde(rename = "tone-burst-1d")]
    ToneBurst1d,
    #[serde(rename = "solid-shapes-3d")]
    SolidShapes3d,
    /// Textured target plus a flat distractor, with the target's box.
    #[serde(rename = "two-object-2d")]
    TwoObject2d,
}

impl Generator {
    pub const ALL: [Generator; 4] = [
        Generator::TexturedShapes2d,
        Generator::ToneBurst1d,
        Generator::SolidShapes3d,
        Generator::TwoObject2d,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Generator::TexturedShapes2d => "textured-shapes-2d",
            Generator::ToneBurst1d => "tone-burst-1d",
            Generator::SolidShapes3d => "solid-shapes-3d",
            Generator::TwoObject2d => "two-object-2d",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|g| g.name() == s)
            .ok_or_else(|| WamError::InvalidArgument(format!("unknown generator `{s}`")))
    }

    pub fn shape(self) -> Vec<usize> {
        match self {
            Generator::TexturedShapes2d | Generator::TwoObject2d => vec![64, 64],
            Generator::ToneBurst1d => vec![1024],
            Generator::SolidShapes3d => vec![16, 16, 16],
        }
    }

    pub fn num_classes(self) -> usize {
        match self {
            Generator::SolidShapes3d => 3,
            _ => 2,
        }
    }

    pub fn modality(self) -> Modality {
        Modality::for_ndim(self.shape().len())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub generator: Generator,
    pub per_class: usize,
    pub seed: u64,
    #[serde(default)]
    pub augmentation: Augmentation,
}

/// Corruption applied to a random half of the samples.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Augmentation {
    #[default]
    None,
    /// Gaussian blur at a σ drawn uniformly from `(0, sigma]`.
    Blur { sigma: f64 },
    /// White noise at 0 dB SNR.
    Noise,
}

impl DatasetSpec {
    pub fn new(generator: Generator, per_class: usize, seed: u64) -> Self {
        Self {
            generator,
            per_class,
            seed,
            augmentation: Augmentation::None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub spec: DatasetSpec,
    pub samples: Vec<Signal>,
    pub labels: Vec<usize>,
    /// Target boxes, for generators that place a known object.
    pub boxes: Option<Vec<BoundingBox>>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.spec.generator.shape()
    }

    pub fn num_classes(&self) -> usize {
        self.spec.generator.num_classes()
    }
}

/// Samples interleave the classes: sample `i` has label `i mod classes`.
pub fn generate(spec: &DatasetSpec) -> Result<Dataset> {
    if let Augmentation::Blur { sigma } = spec.augmentation {
        if !(sigma > 0.0) {
            return Err(WamError::InvalidArgument("blur sigma must be positive".into()));
        }
    }
    let g = spec.generator;
    let classes = g.num_classes();
    let shape = g.shape();
    let mut samples = Vec::with_capacity(spec.per_class * classes);
    let mut labels = Vec::with_capacity(samples.capacity());
    let mut boxes = Vec::new();
    for i in 0..spec.per_class * classes {
        let label = i % classes;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(i as u64);
        let (data, bx) = match g {
            Generator::TexturedShapes2d => (textured_shape(&mut rng, label, None).0, None),
            Generator::TwoObject2d => {
                let (data, bx) = two_objects(&mut rng, label);
                (data, Some(bx))
            }
            Generator::ToneBurst1d => (tone_burst(&mut rng, label), None),
            Generator::SolidShapes3d => (solid_shape(&mut rng, label), None),
        };
        let mut x = Signal::new(shape.clone(), data)?.with_modality(g.modality());
        if spec.augmentation != Augmentation::None && rng.gen_bool(0.5) {
            x = match spec.augmentation {
                Augmentation::Blur { sigma } => {
                    let sigma = sigma * (1.0 - rng.gen::<f64>());
                    x.with_data(gaussian_blur(x.data(), &shape, sigma))?
                }
                _ => add_gaussian_noise(&x, rng.gen())?,
            };
        }
        samples.push(x);
        labels.push(label);
        boxes.extend(bx);
    }
    Ok(Dataset {
        spec: *spec,
        samples,
        labels,
        boxes: (g == Generator::TwoObject2d).then_some(boxes),
    })
}

const SIDE: usize = 64;

fn noise(rng: &mut ChaCha8Rng, std: f64) -> f64 {
    Normal::new(0.0, std).unwrap().sample(rng)
}

/// Texture value in [0, 1] for class 0 (coarse) or class 1 (fine).
fn texture(label: usize, r: f64, c: f64, phase: f64, angle: f64) -> f64 {
    let period = if label == 0 { 16.0 } else { 4.0 };
    let u = r * angle.cos() + c * angle.sin();
    0.5 + 0.5 * (2.0 * PI * u / period + phase).sin()
}

/// Draws one textured object onto a 64×64 canvas restricted to columns
/// `cols`; returns the canvas and the object's inclusive box.
fn textured_shape(rng: &mut ChaCha8Rng, label: usize, cols: Option<(usize, usize)>) -> (Vec<f64>, BoundingBox) {
    let (lo, hi) = cols.unwrap_or((0, SIDE));
    let half: f64 = if label == 0 {
        rng.gen_range(8.0..12.0)
    } else {
        rng.gen_range(9.0..13.0)
    };
    let margin = half.ceil() as usize + 1;
    let cr = rng.gen_range(margin..SIDE - margin) as f64;
    let cc = rng.gen_range(lo + margin..hi - margin) as f64;
    let phase = rng.gen_range(0.0..2.0 * PI);
    let angle = rng.gen_range(0.0..PI);
    let mut data = vec![0.0; SIDE * SIDE];
    let (mut rmin, mut rmax, mut cmin, mut cmax) = (SIDE, 0, SIDE, 0);
    for r in 0..SIDE {
        for c in 0..SIDE {
            let (dr, dc) = (r as f64 - cr, c as f64 - cc);
            let inside = if label == 0 {
                dr.abs() <= half && dc.abs() <= half
            } else {
                (dr * dr + dc * dc).sqrt() <= half
            };
            let v = noise(rng, 0.05);
            data[r * SIDE + c] = if inside {
                rmin = rmin.min(r);
                rmax = rmax.max(r);
                cmin = cmin.min(c);
                cmax = cmax.max(c);
                0.2 + 0.8 * texture(label, r as f64, c as f64, phase, angle) + v
            } else {
                v
            };
        }
    }
    (data, BoundingBox::new(vec![rmin, cmin], vec![rmax, cmax]))
}

/// Textured target in one half, flat dim distractor in the other.
fn two_objects(rng: &mut ChaCha8Rng, label: usize) -> (Vec<f64>, BoundingBox) {
    let left = rng.gen_bool(0.5);
    let target_cols = if left { (0, SIDE / 2) } else { (SIDE / 2, SIDE) };
    let (mut data, bx) = textured_shape(rng, label, Some(target_cols));
    let (lo, hi) = if left { (SIDE / 2, SIDE) } else { (0, SIDE / 2) };
    let half: f64 = rng.gen_range(7.0..11.0);
    let margin = half.ceil() as usize + 1;
    let cr = rng.gen_range(margin..SIDE - margin) as f64;
    let cc = rng.gen_range(lo + margin..hi - margin) as f64;
    let level = rng.gen_range(0.25..0.4);
    for r in 0..SIDE {
        for c in 0..SIDE {
            let (dr, dc) = (r as f64 - cr, c as f64 - cc);
            if (dr * dr + dc * dc).sqrt() <= half {
                data[r * SIDE + c] += level;
            }
        }
    }
    (data, bx)
}

fn tone_burst(rng: &mut ChaCha8Rng, label: usize) -> Vec<f64> {
    const N: usize = 1024;
    let freq = rng.gen_range(0.01..0.03);
    let phase = rng.gen_range(0.0..2.0 * PI);
    let amp = rng.gen_range(0.3..0.5);
    let center = rng.gen_range(128.0..(N - 128) as f64);
    (0..N)
        .map(|t| {
            let t = t as f64;
            let mut v = amp * (2.0 * PI * freq * t + phase).sin() + noise(rng, 0.02);
            if label == 1 {
                v += (-((t - center) / 24.0).powi(2)).exp();
            }
            v
        })
        .collect()
}

fn solid_shape(rng: &mut ChaCha8Rng, label: usize) -> Vec<f64> {
    const S: usize = 16;
    let center: Vec<f64> = (0..3).map(|_| rng.gen_range(6.5..8.5)).collect();
    let size = rng.gen_range(3.5..5.0);
    let arm = rng.gen_range(1.0..1.8);
    let mut data = Vec::with_capacity(S * S * S);
    for d in 0..S {
        for r in 0..S {
            for c in 0..S {
                let p = [d as f64 - center[0], r as f64 - center[1], c as f64 - center[2]];
                let inside = match label {
                    0 => p.iter().map(|v| v * v).sum::<f64>().sqrt() <= size,
                    1 => p.iter().all(|v| v.abs() <= size * 0.8),
                    _ => {
                        let within = p.iter().all(|v| v.abs() <= size + 1.0);
                        let thin = p.iter().filter(|v| v.abs() <= arm).count() >= 2;
                        within && thin
                    }
                };
                data.push(if inside { 1.0 } else { 0.0 } + noise(rng, 0.05));
            }
        }
    }
    data
}

/// Separable Gaussian blur with periodic boundaries (truncated at 3σ).
pub fn gaussian_blur(data: &[f64], shape: &[usize], sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let total: f64 = kernel.iter().sum();
    let kernel: Vec<f64> = kernel.iter().map(|k| k / total).collect();
    let mut current = data.to_vec();
    for axis in 0..shape.len() {
        let n = shape[axis] as isize;
        let stride: usize = shape[axis + 1..].iter().product();
        let mut next = vec![0.0; current.len()];
        for (idx, out) in next.iter_mut().enumerate() {
            let pos = ((idx / stride) % shape[axis]) as isize;
            let base = idx - pos as usize * stride;
            *out = kernel
                .iter()
                .enumerate()
                .map(|(k, w)| {
                    let p = (pos + k as isize - radius).rem_euclid(n) as usize;
                    w * current[base + p * stride]
                })
                .sum();
        }
        current = next;
    }
    current
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SampleEntry {
    file: String,
    label: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    bbox: Option<BoundingBox>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LabelsFile {
    spec: DatasetSpec,
    shape: Vec<usize>,
    num_classes: usize,
    samples: Vec<SampleEntry>,
}

/// Writes `sample_NNNNN.wamf` files and `labels.json`.
pub fn write_dataset(dir: &Path, ds: &Dataset) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(ds.len());
    for (i, (x, &label)) in ds.samples.iter().zip(&ds.labels).enumerate() {
        let file = format!("sample_{i:05}.wamf");
        write_wamf(&dir.join(&file), x)?;
        entries.push(SampleEntry {
            file,
            label,
            bbox: ds.boxes.as_ref().map(|b| b[i].clone()),
        });
    }
    let labels = LabelsFile {
        spec: ds.spec,
        shape: ds.shape(),
        num_classes: ds.num_classes(),
        samples: entries,
    };
    fs::write(dir.join("labels.json"), serde_json::to_string_pretty(&labels)? + "\n")?;
    Ok(())
}

pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let path = dir.join("labels.json");
    if !path.exists() {
        return Err(WamError::MissingArtifact(path.display().to_string()));
    }
    let labels: LabelsFile = serde_json::from_slice(&fs::read(&path)?)?;
    let modality = labels.spec.generator.modality();
    let mut samples = Vec::with_capacity(labels.samples.len());
    for e in &labels.samples {
        let x = read_wamf(&dir.join(&e.file))?;
        x.ensure_shape(&labels.shape)?;
        samples.push(x.with_modality(modality));
    }
    let boxes = labels.samples.iter().map(|e| e.bbox.clone()).collect::<Option<Vec<_>>>();
    Ok(Dataset {
        spec: labels.spec,
        samples,
        labels: labels.samples.iter().map(|e| e.label).collect(),
        boxes: if labels.samples.is_empty() { None } else { boxes },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_generator_produces_labelled_samples() {
        for g in Generator::ALL {
            let ds = generate(&DatasetSpec::new(g, 2, 5)).unwrap();
            assert_eq!(ds.len(), 2 * g.num_classes());
            assert_eq!(ds.samples[0].shape(), g.shape().as_slice());
            assert_eq!(ds.labels[..g.num_classes()], (0..g.num_classes()).collect::<Vec<_>>()[..]);
        }
    }

    #[test]
    fn empty_and_deterministic() {
        let empty = generate(&DatasetSpec::new(Generator::ToneBurst1d, 0, 1)).unwrap();
        assert!(empty.is_empty());
        let a = generate(&DatasetSpec::new(Generator::SolidShapes3d, 1, 9)).unwrap();
        let b = generate(&DatasetSpec::new(Generator::SolidShapes3d, 1, 9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn boxes_enclose_bright_texture() {
        let ds = generate(&DatasetSpec::new(Generator::TwoObject2d, 3, 2)).unwrap();
        let boxes = ds.boxes.as_ref().unwrap();
        assert_eq!(boxes.len(), ds.len());
        for b in boxes {
            assert!(b.volume() >= 15 * 15 && b.volume() <= 27 * 27, "{b:?}");
        }
    }

    #[test]
    fn blur_preserves_mean_and_smooths() {
        let x: Vec<f64> = (0..64).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let y = gaussian_blur(&x, &[8, 8], 1.5);
        assert!(y.iter().sum::<f64>().abs() < 1e-12);
        assert!(y.iter().all(|v| v.abs() < 0.1));
    }
}
