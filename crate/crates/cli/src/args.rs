//! Command-line surface. Every struct here also serialises into the run
//! manifest's config snapshot.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use wam_core::attribution::{IgConfig, Method, MethodConfig, SmoothGradConfig};
use wam_core::datasets::Generator;
use wam_core::experiments::PARETO_ALPHAS;
use wam_core::model::{Activation, Topology};
use wam_core::{Family, Modality, WaveletSpec};

fn parse_family(s: &str) -> Result<Family, String> {
    s.parse().map_err(|e: wam_core::WamError| e.to_string())
}

fn parse_generator(s: &str) -> Result<Generator, String> {
    Generator::parse(s).map_err(|e| e.to_string())
}

fn parse_method(s: &str) -> Result<Method, String> {
    Method::parse(s).map_err(|e| e.to_string())
}

fn parse_topology(s: &str) -> Result<Topology, String> {
    Topology::parse(s).map_err(|e| e.to_string())
}

#[derive(Parser, Debug, Serialize)]
#[command(name = "wam", version, about = "Wavelet attribution workbench")]
pub struct Cli {
    /// Seed for every random draw of the run.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Mother wavelet: haar, db2 or bior2.2.
    #[arg(long, global = true, default_value = "haar", value_parser = parse_family)]
    pub family: Family,
    /// Decomposition depth; defaults to 5 for audio, 3 for images, 2 for volumes.
    #[arg(long, global = true)]
    pub levels: Option<usize>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

impl Cli {
    pub fn spec_for(&self, modality: Modality) -> WaveletSpec {
        let default = WaveletSpec::default_for(self.family, modality);
        WaveletSpec::new(self.family, self.levels.unwrap_or(default.levels))
    }
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Write a synthetic dataset (WAMF samples plus labels.json).
    GenData(GenDataArgs),
    /// Train a built-in classifier on a dataset directory.
    Train(TrainArgs),
    /// Forward wavelet transform of a WAMF signal into a pyramid directory.
    Dwt(InputArgs),
    /// Inverse transform of a pyramid directory.
    Idwt(InputArgs),
    /// Attribute one sample.
    Attribute(AttributeArgs),
    /// Faithfulness metrics over a dataset.
    Eval(EvalArgs),
    /// Optimise a wavelet mask for one sample.
    Perturb(PerturbArgs),
    /// Sparsity sweep of preservation masks for one sample.
    Sweep(SweepArgs),
    /// Cascading model randomization.
    Sanity(SanityArgs),
    /// Per-level shares of a wavelet attribution.
    ScaleImportance(AttributionInput),
    /// Add 0 dB white noise to a signal.
    Noise(InputArgs),
    /// Keep the top coefficients of a signal ranked by an attribution.
    TopkReconstruct(TopkArgs),
    /// Render a signal or pyramid as a PGM/PPM heatmap.
    Render(RenderArgs),
    /// Run an end-to-end experiment recipe.
    Recipe(RecipeArgs),
}

#[derive(Args, Debug, Serialize)]
pub struct GenDataArgs {
    /// textured-shapes-2d, tone-burst-1d, solid-shapes-3d or two-object-2d.
    #[arg(long, value_parser = parse_generator)]
    pub generator: Generator,
    #[arg(long, default_value_t = 100)]
    pub per_class: usize,
    #[arg(long, value_enum, default_value_t = AugmentArg::None)]
    pub augment: AugmentArg,
    /// Largest blur σ when `--augment blur`.
    #[arg(long, default_value_t = 1.5)]
    pub blur_sigma: f64,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AugmentArg {
    None,
    Blur,
    Noise,
}

#[derive(Args, Debug, Serialize)]
pub struct TrainArgs {
    /// Dataset directory written by gen-data.
    #[arg(long)]
    pub data: PathBuf,
    /// Defaults to the convolutional network matching the sample rank.
    #[arg(long, value_parser = parse_topology)]
    pub topology: Option<Topology>,
    #[arg(long, value_enum, default_value_t = ActivationArg::Softplus)]
    pub activation: ActivationArg,
    #[arg(long, default_value_t = 8)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.02)]
    pub lr: f64,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationArg {
    Relu,
    Softplus,
}

impl From<ActivationArg> for Activation {
    fn from(a: ActivationArg) -> Self {
        match a {
            ActivationArg::Relu => Activation::Relu,
            ActivationArg::Softplus => Activation::Softplus,
        }
    }
}

#[derive(Args, Debug, Serialize)]
pub struct InputArgs {
    /// WAMF file, or a pyramid directory for idwt.
    #[arg(long)]
    pub input: PathBuf,
}

/// Where gradients come from. Without `--model`, the `WAM_WORKER`
/// environment variable names an external worker command.
#[derive(Args, Debug, Serialize)]
pub struct ModelArgs {
    /// Model header written by `train`.
    #[arg(long)]
    pub model: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct MethodArgs {
    /// saliency, smoothgrad or ig.
    #[arg(long, value_parser = parse_method, default_value = "ig")]
    pub method: Method,
    /// Integrated-gradients quadrature steps.
    #[arg(long, default_value_t = 64)]
    pub ig_steps: usize,
    /// SmoothGrad sample count.
    #[arg(long, default_value_t = 25)]
    pub sg_samples: usize,
    /// SmoothGrad noise σ as a fraction of the input range.
    #[arg(long, default_value_t = 0.15)]
    pub sg_sigma: f64,
}

impl MethodArgs {
    pub fn config(&self, seed: u64) -> MethodConfig {
        match self.method {
            Method::Saliency => MethodConfig::Saliency,
            Method::SmoothGrad => MethodConfig::SmoothGrad(SmoothGradConfig {
                samples: self.sg_samples,
                sigma: self.sg_sigma,
                seed,
            }),
            Method::IntegratedGradients => MethodConfig::Ig(IgConfig::with_steps(self.ig_steps)),
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainArg {
    Wavelet,
    Pixel,
}

#[derive(Args, Debug, Serialize)]
pub struct AttributeArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub method: MethodArgs,
    #[arg(long, value_enum, default_value_t = DomainArg::Wavelet)]
    pub domain: DomainArg,
    /// Class to explain; defaults to the predicted class.
    #[arg(long)]
    pub class: Option<usize>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricArg {
    Insertion,
    Deletion,
    Faithfulness,
    MuFidelity,
    Ff,
    FidIn,
    Pointing,
}

impl MetricArg {
    pub fn name(self) -> &'static str {
        match self {
            MetricArg::Insertion => "insertion",
            MetricArg::Deletion => "deletion",
            MetricArg::Faithfulness => "faithfulness",
            MetricArg::MuFidelity => "mu-fidelity",
            MetricArg::Ff => "ff",
            MetricArg::FidIn => "fid-in",
            MetricArg::Pointing => "pointing",
        }
    }
}

#[derive(Args, Debug, Serialize)]
pub struct EvalArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Dataset directory.
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub method: MethodArgs,
    #[arg(long, value_enum, default_value_t = DomainArg::Wavelet)]
    pub domain: DomainArg,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [MetricArg::Insertion, MetricArg::Deletion, MetricArg::Faithfulness])]
    pub metrics: Vec<MetricArg>,
    /// Insertion/deletion curve steps K.
    #[arg(long, default_value_t = 50)]
    pub steps: usize,
    /// Mask fraction for FF and Fid-In.
    #[arg(long, default_value_t = 0.2)]
    pub q: f64,
    /// Evaluate only the first N samples.
    #[arg(long)]
    pub limit: Option<usize>,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskModeArg {
    Preservation,
    Deletion,
}

#[derive(Args, Debug, Serialize)]
pub struct PerturbArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub input: PathBuf,
    /// L1 sparsity weight.
    #[arg(long, default_value_t = 0.01)]
    pub alpha: f64,
    #[arg(long, default_value_t = 500)]
    pub steps: usize,
    #[arg(long, default_value_t = 0.05)]
    pub lr: f64,
    #[arg(long, value_enum, default_value_t = MaskModeArg::Preservation)]
    pub mode: MaskModeArg,
    /// Class to explain; defaults to the predicted class.
    #[arg(long)]
    pub class: Option<usize>,
}

#[derive(Args, Debug, Serialize)]
pub struct SweepArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = PARETO_ALPHAS)]
    pub alphas: Vec<f64>,
    #[arg(long, default_value_t = 100)]
    pub steps: usize,
}

#[derive(Args, Debug, Serialize)]
pub struct SanityArgs {
    /// Built-in model header; external workers cannot be re-initialised.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub method: MethodArgs,
    /// Use only the first N samples.
    #[arg(long, default_value_t = 50)]
    pub limit: usize,
}

#[derive(Args, Debug, Serialize)]
pub struct AttributionInput {
    /// Pyramid directory written by `attribute`.
    #[arg(long)]
    pub attribution: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct TopkArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Pyramid directory written by `attribute`.
    #[arg(long)]
    pub attribution: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    pub keep: f64,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ColormapArg {
    Gray,
    Heat,
}

#[derive(Args, Debug, Serialize)]
pub struct RenderArgs {
    /// WAMF signal, or a pyramid directory (rendered as its spatial projection).
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = ColormapArg::Gray)]
    pub colormap: ColormapArg,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecipeName {
    Table1Desk,
    Fig4Scales,
    #[value(name = "figB-randomization")]
    #[serde(rename = "figB-randomization")]
    FigBRandomization,
    Fig6Pareto,
    NoiseAudio,
    OverlapAudio,
    WaveletInvariance,
}

#[derive(Args, Debug, Serialize)]
pub struct RecipeArgs {
    pub name: RecipeName,
    /// Reuse a trained model instead of training the fixture.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Reuse a test dataset instead of generating one.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Training samples per class for fixture models.
    #[arg(long, default_value_t = 200)]
    pub per_class: usize,
    /// Test samples to use; each recipe has its own default.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Curve steps for the insertion/deletion recipes.
    #[arg(long, default_value_t = 50)]
    pub steps: usize,
    /// Estimator for the randomization recipe.
    #[arg(long, value_parser = parse_method, default_value = "saliency")]
    pub method: Method,
}
