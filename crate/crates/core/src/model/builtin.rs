use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{self, ConvGeom, Dims};
use super::Classifier;
use crate::error::{Result, WamError};
use crate::io::{read_wamf, write_wamf};
use crate::signal::Signal;

/// Steepness of the softplus activation, `log(1 + exp(βx)) / β`.
pub const SOFTPLUS_BETA: f64 = 10.0;

const CONV_CHANNELS: [usize; 2] = [8, 16];
const MLP_HIDDEN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    /// A single affine map, `f(x) = Wx + b`.
    Linear,
    /// One hidden layer of 64 units.
    Mlp,
    Conv1d,
    Conv2d,
    Conv3d,
}

impl Topology {
    pub fn name(self) -> &'static str {
        match self {
            Topology::Linear => "linear",
            Topology::Mlp => "mlp",
            Topology::Conv1d => "conv1d",
            Topology::Conv2d => "conv2d",
            Topology::Conv3d => "conv3d",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "linear" => Topology::Linear,
            "mlp" => Topology::Mlp,
            "conv1d" => Topology::Conv1d,
            "conv2d" => Topology::Conv2d,
            "conv3d" => Topology::Conv3d,
            _ => return Err(WamError::InvalidArgument(format!("unknown topology `{s}`"))),
        })
    }

    fn conv_rank(self) -> Option<usize> {
        match self {
            Topology::Conv1d => Some(1),
            Topology::Conv2d => Some(2),
            Topology::Conv3d => Some(3),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    /// Softplus with β = 10: a smooth stand-in for ReLU.
    Softplus,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Softplus => {
                let bx = SOFTPLUS_BETA * x;
                if bx > 30.0 {
                    x
                } else {
                    bx.exp().ln_1p() / SOFTPLUS_BETA
                }
            }
        }
    }

    #[inline]
    fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Softplus => 1.0 / (1.0 + (-SOFTPLUS_BETA * x).exp()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum LayerKind {
    /// Stride-1 "same" convolution, kernel 3 along each signal axis.
    Conv {
        in_ch: usize,
        out_ch: usize,
        kernel: Dims,
        dims: Dims,
    },
    Dense { inputs: usize, outputs: usize },
}

/// One parameterised layer; `params` holds the weights followed by the biases.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub name: String,
    pub kind: LayerKind,
    pub params: Vec<f64>,
    /// Followed by the model's activation.
    pub activate: bool,
    /// Followed by 2× max pooling along each signal axis.
    pub pool: Option<Dims>,
}

impl Layer {
    fn weight_len(&self) -> usize {
        match &self.kind {
            LayerKind::Conv { in_ch, out_ch, kernel, .. } => in_ch * out_ch * layers::volume(*kernel),
            LayerKind::Dense { inputs, outputs } => inputs * outputs,
        }
    }

    fn param_len(&self) -> usize {
        self.weight_len() + self.bias_len()
    }

    fn bias_len(&self) -> usize {
        match &self.kind {
            LayerKind::Conv { out_ch, .. } => *out_ch,
            LayerKind::Dense { outputs, .. } => *outputs,
        }
    }

    fn fan_in(&self) -> usize {
        match &self.kind {
            LayerKind::Conv { in_ch, kernel, .. } => in_ch * layers::volume(*kernel),
            LayerKind::Dense { inputs, .. } => *inputs,
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.params[..self.weight_len()]
    }

    pub fn bias(&self) -> &[f64] {
        &self.params[self.weight_len()..]
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        let n = self.weight_len();
        &mut self.params[..n]
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        let n = self.weight_len();
        &mut self.params[n..]
    }

    fn geom(&self) -> Option<ConvGeom> {
        match self.kind {
            LayerKind::Conv { in_ch, out_ch, kernel, dims } => Some(ConvGeom {
                in_ch,
                out_ch,
                kernel,
                dims,
            }),
            LayerKind::Dense { .. } => None,
        }
    }

    /// Redraws all parameters from U(−1/√fan_in, 1/√fan_in). The stream is
    /// keyed by the layer's position so layers draw independently.
    fn initialise(&mut self, seed: u64, position: usize) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(position as u64);
        let bound = 1.0 / (self.fan_in() as f64).sqrt();
        self.params = (0..self.param_len())
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
    }

    fn forward(&self, input: &[f64]) -> Vec<f64> {
        match &self.kind {
            LayerKind::Conv { .. } => self.geom().unwrap().forward(input, self.weights(), self.bias()),
            LayerKind::Dense { .. } => layers::dense_forward(input, self.weights(), self.bias()),
        }
    }
}

/// Intermediate values of one layer kept for backpropagation.
pub(crate) struct LayerCache {
    input: Vec<f64>,
    pre: Vec<f64>,
    argmax: Vec<usize>,
}

/// A small network with hand-written forward and backward passes.
#[derive(Debug, Clone, PartialEq)]
pub struct BuiltinModel {
    topology: Topology,
    activation: Activation,
    input_shape: Vec<usize>,
    num_classes: usize,
    seed: u64,
    layers: Vec<Layer>,
}

fn pad_dims(shape: &[usize]) -> Dims {
    let mut d = [1; 3];
    d[3 - shape.len()..].copy_from_slice(shape);
    d
}

impl BuiltinModel {
    /// Builds a freshly initialised network.
    ///
    /// Conv topologies stack conv(8) → act → pool2 → conv(16) → act → pool2
    /// → dense "fc"; the MLP is dense "hidden"(64) → act → "fc"; linear is a
    /// lone "fc".
    pub fn new(
        topology: Topology,
        input_shape: &[usize],
        num_classes: usize,
        activation: Activation,
        seed: u64,
    ) -> Result<Self> {
        crate::signal::check_shape(input_shape)?;
        if num_classes == 0 {
            return Err(WamError::InvalidArgument("num_classes must be positive".into()));
        }
        let n: usize = input_shape.iter().product();
        let dense = |name: &str, inputs, outputs, activate| Layer {
            name: name.into(),
            kind: LayerKind::Dense { inputs, outputs },
            params: Vec::new(),
            activate,
            pool: None,
        };
        let mut layers = Vec::new();
        match topology.conv_rank() {
            None => {
                if topology == Topology::Mlp {
                    layers.push(dense("hidden", n, MLP_HIDDEN, true));
                    layers.push(dense("fc", MLP_HIDDEN, num_classes, false));
                } else {
                    layers.push(dense("fc", n, num_classes, false));
                }
            }
            Some(rank) => {
                if input_shape.len() != rank || input_shape.iter().any(|d| d % 4 != 0) {
                    return Err(WamError::InvalidShape {
                        shape: input_shape.to_vec(),
                        reason: format!("{} needs {rank} axes divisible by 4", topology.name()),
                    });
                }
                let mut kernel = [1; 3];
                let mut pool = [1; 3];
                for a in 3 - rank..3 {
                    kernel[a] = 3;
                    pool[a] = 2;
                }
                let mut dims = pad_dims(input_shape);
                let mut in_ch = 1;
                for (i, &out_ch) in CONV_CHANNELS.iter().enumerate() {
                    layers.push(Layer {
                        name: format!("conv{}", i + 1),
                        kind: LayerKind::Conv {
                            in_ch,
                            out_ch,
                            kernel,
                            dims,
                        },
                        params: Vec::new(),
                        activate: true,
                        pool: Some(pool),
                    });
                    dims = [dims[0] / pool[0], dims[1] / pool[1], dims[2] / pool[2]];
                    in_ch = out_ch;
                }
                layers.push(dense("fc", in_ch * layers::volume(dims), num_classes, false));
            }
        }
        for (i, layer) in layers.iter_mut().enumerate() {
            layer.initialise(seed, i);
        }
        Ok(Self {
            topology,
            activation,
            input_shape: input_shape.to_vec(),
            num_classes,
            seed,
            layers,
        })
    }

    /// `f(x) = Wx + b` with `W` given row-major as `num_classes × |x|`.
    pub fn linear(input_shape: &[usize], weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        let n: usize = input_shape.iter().product();
        let classes = bias.len();
        if classes == 0 || weights.len() != n * classes {
            return Err(WamError::InvalidArgument(format!(
                "linear model needs {} weights for {classes} classes",
                n * classes
            )));
        }
        let mut m = Self::new(Topology::Linear, input_shape, classes, Activation::Relu, 0)?;
        let mut params = weights;
        params.extend(bias);
        m.layers[0].params = params;
        Ok(m)
    }

    pub fn topology(&self) -> Topology {
        self.topology
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn layer(&self, name: &str) -> Option<&Layer> {
        self.layers.iter().find(|l| l.name == name)
    }

    /// Layer names, shallow to deep.
    pub fn layer_names(&self) -> Vec<&str> {
        self.layers.iter().map(|l| l.name.as_str()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.params.len()).sum()
    }

    /// Re-initialises every layer from the deepest ("fc") down to and
    /// including `layer_name`, drawing from the original initialisation law
    /// with a fresh `seed`. Shallower layers are untouched.
    pub fn randomize_through(&self, layer_name: &str, seed: u64) -> Result<Self> {
        let start = self
            .layers
            .iter()
            .position(|l| l.name == layer_name)
            .ok_or_else(|| WamError::UnknownLayer(layer_name.to_string()))?;
        let mut out = self.clone();
        for (i, layer) in out.layers.iter_mut().enumerate().skip(start) {
            layer.initialise(seed, i);
        }
        Ok(out)
    }

    pub(crate) fn run(&self, x: &[f64]) -> (Vec<f64>, Vec<LayerCache>) {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut current = x.to_vec();
        for layer in &self.layers {
            let pre = layer.forward(&current);
            let mut out: Vec<f64> = if layer.activate {
                pre.iter().map(|&v| self.activation.apply(v)).collect()
            } else {
                pre.clone()
            };
            let mut argmax = Vec::new();
            if let (Some(factor), LayerKind::Conv { out_ch, dims, .. }) = (layer.pool, &layer.kind) {
                let (pooled, arg) = layers::max_pool(&out, *out_ch, *dims, factor);
                out = pooled;
                argmax = arg;
            }
            caches.push(LayerCache {
                input: std::mem::replace(&mut current, out),
                pre,
                argmax,
            });
        }
        (current, caches)
    }

    /// Backpropagates `dlogits`; accumulates parameter gradients into
    /// `param_grads` when given and returns the input gradient.
    pub(crate) fn backward(
        &self,
        caches: &[LayerCache],
        dlogits: &[f64],
        mut param_grads: Option<&mut [Vec<f64>]>,
    ) -> Vec<f64> {
        let mut grad = dlogits.to_vec();
        for (idx, (layer, cache)) in self.layers.iter().zip(caches).enumerate().rev() {
            if layer.pool.is_some() {
                grad = layers::max_pool_backward(&grad, &cache.argmax, cache.pre.len());
            }
            if layer.activate {
                for (g, &p) in grad.iter_mut().zip(&cache.pre) {
                    *g *= self.activation.derivative(p);
                }
            }
            let wlen = layer.weight_len();
            if let Some(pg) = param_grads.as_deref_mut() {
                let (dw, db) = pg[idx].split_at_mut(wlen);
                match layer.geom() {
                    Some(g) => g.backward_params(&cache.input, &grad, dw, db),
                    None => layers::dense_backward_params(&cache.input, &grad, dw, db),
                }
            }
            if idx == 0 && param_grads.is_some() && self.layers.len() > 1 {
                // training does not need the input gradient
                return Vec::new();
            }
            grad = match layer.geom() {
                Some(g) => g.backward_input(&grad, layer.weights()),
                None => layers::dense_backward_input(&grad, layer.weights(), cache.input.len()),
            };
        }
        grad
    }

    pub(crate) fn zero_grads(&self) -> Vec<Vec<f64>> {
        self.layers.iter().map(|l| vec![0.0; l.params.len()]).collect()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_len() {
            return Err(WamError::ShapeMismatch {
                expected: self.input_shape.clone(),
                actual: vec![x.len()],
            });
        }
        Ok(())
    }

    /// Writes a JSON header at `path` and the parameters as a 1D WAMF file
    /// next to it (`<stem>.params.wamf`).
    pub fn save(&self, path: &Path) -> Result<()> {
        let params_path = params_path(path);
        let header = ModelHeader {
            format: HEADER_FORMAT.into(),
            topology: self.topology,
            activation: self.activation,
            input_shape: self.input_shape.clone(),
            num_classes: self.num_classes,
            seed: self.seed,
            layers: self
                .layers
                .iter()
                .map(|l| LayerHeader {
                    name: l.name.clone(),
                    kind: l.kind.clone(),
                    param_count: l.params.len(),
                })
                .collect(),
            params_file: params_path.file_name().unwrap().to_string_lossy().into_owned(),
        };
        fs::write(path, serde_json::to_string_pretty(&header)?)?;
        let flat: Vec<f64> = self.layers.iter().flat_map(|l| l.params.iter().copied()).collect();
        write_wamf(&params_path, &Signal::new(vec![flat.len()], flat)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(WamError::MissingArtifact(path.display().to_string()));
        }
        let header: ModelHeader = serde_json::from_slice(&fs::read(path)?)?;
        if header.format != HEADER_FORMAT {
            return Err(WamError::format(path, format!("unknown model format `{}`", header.format)));
        }
        let mut model = Self::new(
            header.topology,
            &header.input_shape,
            header.num_classes,
            header.activation,
            header.seed,
        )?;
        let params = read_wamf(&path.with_file_name(&header.params_file))?;
        if params.len() != model.param_count() || header.layers.len() != model.layers.len() {
            return Err(WamError::format(path, "parameter count does not match topology"));
        }
        let mut offset = 0;
        for (layer, lh) in model.layers.iter_mut().zip(&header.layers) {
            if layer.name != lh.name || layer.kind != lh.kind {
                return Err(WamError::format(path, format!("layer `{}` does not match", lh.name)));
            }
            let n = layer.params.len();
            layer.params.copy_from_slice(&params.data()[offset..offset + n]);
            offset += n;
        }
        Ok(model)
    }
}

const HEADER_FORMAT: &str = "wam-builtin-v1";

#[derive(Serialize, Deserialize)]
struct LayerHeader {
    name: String,
    kind: LayerKind,
    param_count: usize,
}

#[derive(Serialize, Deserialize)]
struct ModelHeader {
    format: String,
    topology: Topology,
    activation: Activation,
    input_shape: Vec<usize>,
    num_classes: usize,
    seed: u64,
    layers: Vec<LayerHeader>,
    params_file: String,
}

fn params_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.params.wamf"))
}

impl Classifier for BuiltinModel {
    fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn logits_raw(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.run(x).0)
    }

    fn gradient_raw(&self, x: &[f64], class: usize) -> Result<Vec<f64>> {
        self.check_input(x)?;
        self.check_class(class)?;
        let (_, caches) = self.run(x);
        let mut dlogits = vec![0.0; self.num_classes];
        dlogits[class] = 1.0;
        Ok(self.backward(&caches, &dlogits, None))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{softmax, Classifier};

    fn random_input(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    /// Central-difference oracle for ∂ logit_c / ∂x_i.
    fn finite_difference(m: &BuiltinModel, x: &[f64], c: usize, i: usize, h: f64) -> f64 {
        let mut xp = x.to_vec();
        xp[i] += h;
        let mut xm = x.to_vec();
        xm[i] -= h;
        (m.logits_raw(&xp).unwrap()[c] - m.logits_raw(&xm).unwrap()[c]) / (2.0 * h)
    }

    #[test]
    fn zero_weights_give_uniform_probabilities() {
        let mut m = BuiltinModel::new(Topology::Conv2d, &[8, 8], 4, Activation::Relu, 1).unwrap();
        for l in m.layers_mut() {
            l.params.iter_mut().for_each(|p| *p = 0.0);
        }
        let out = m.forward_logits(&Signal::new(vec![8, 8], random_input(64, 2)).unwrap()).unwrap();
        assert_eq!(out.probabilities, vec![0.25; 4]);
    }

    #[test]
    fn linear_model_on_basis_vector_returns_column() {
        let w: Vec<f64> = (0..12).map(|i| i as f64 * 0.5 - 2.0).collect();
        let m = BuiltinModel::linear(&[4], w.clone(), vec![0.0; 3]).unwrap();
        for i in 0..4 {
            let mut e = vec![0.0; 4];
            e[i] = 1.0;
            let logits = m.logits_raw(&e).unwrap();
            let column: Vec<f64> = (0..3).map(|c| w[c * 4 + i]).collect();
            assert_eq!(logits, column);
            assert_eq!(m.gradient_raw(&e, 1).unwrap(), w[4..8].to_vec());
        }
    }

    #[test]
    fn probabilities_sum_to_one() {
        let m = BuiltinModel::new(Topology::Mlp, &[16], 5, Activation::Softplus, 3).unwrap();
        let out = m.forward_logits(&Signal::new(vec![16], random_input(16, 4)).unwrap()).unwrap();
        assert!((out.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(out.probabilities, softmax(&out.logits));
    }

    #[test]
    fn softplus_conv_gradients_match_finite_differences() {
        for (topology, shape) in [
            (Topology::Conv1d, vec![32]),
            (Topology::Conv2d, vec![16, 16]),
            (Topology::Conv3d, vec![8, 8, 8]),
            (Topology::Mlp, vec![20]),
        ] {
            let m = BuiltinModel::new(topology, &shape, 3, Activation::Softplus, 7).unwrap();
            let n: usize = shape.iter().product();
            let x = random_input(n, 8);
            let g = m.gradient_raw(&x, 2).unwrap();
            let mut worst: f64 = 0.0;
            for i in (0..n).step_by((n / 50).max(1)) {
                let fd = finite_difference(&m, &x, 2, i, 1e-5);
                let err = (g[i] - fd).abs() / g[i].abs().max(fd.abs()).max(1e-6);
                worst = worst.max(err);
            }
            assert!(worst <= 1e-4, "{}: relative error {worst}", topology.name());
        }
    }

    #[test]
    fn relu_gradient_matches_away_from_kinks() {
        let m = BuiltinModel::new(Topology::Mlp, &[12], 2, Activation::Relu, 5).unwrap();
        let x = random_input(12, 6);
        let (_, caches) = m.run(&x);
        assert!(caches[0].pre.iter().all(|p| p.abs() > 1e-4));
        let g = m.gradient_raw(&x, 0).unwrap();
        for i in 0..12 {
            let fd = finite_difference(&m, &x, 0, i, 1e-7);
            assert!((g[i] - fd).abs() <= 1e-4 * g[i].abs().max(1e-3));
        }
    }

    #[test]
    fn randomize_through_fc_only_touches_fc() {
        let m = BuiltinModel::new(Topology::Conv2d, &[8, 8], 2, Activation::Relu, 1).unwrap();
        let r = m.randomize_through("fc", 99).unwrap();
        assert_eq!(r.layers()[0], m.layers()[0]);
        assert_eq!(r.layers()[1], m.layers()[1]);
        assert_ne!(r.layers()[2].params, m.layers()[2].params);
        let all = m.randomize_through("conv1", 99).unwrap();
        for (a, b) in all.layers().iter().zip(m.layers()) {
            assert_ne!(a.params, b.params);
        }
        // cumulative: the deeper layers match the fc-only draw
        assert_eq!(all.layers()[2], r.layers()[2]);
        let x = random_input(64, 3);
        let (lo, lr) = (m.logits_raw(&x).unwrap(), all.logits_raw(&x).unwrap());
        assert!(lo.iter().zip(&lr).any(|(a, b)| (a - b).abs() > 1e-6));
        assert!(matches!(m.randomize_through("conv9", 1), Err(WamError::UnknownLayer(_))));
    }

    #[test]
    fn layer_names_are_ordered_and_end_with_fc() {
        let m = BuiltinModel::new(Topology::Conv3d, &[8, 8, 8], 3, Activation::Relu, 0).unwrap();
        assert_eq!(m.layer_names(), vec!["conv1", "conv2", "fc"]);
        let m = BuiltinModel::new(Topology::Mlp, &[8], 3, Activation::Relu, 0).unwrap();
        assert_eq!(m.layer_names(), vec!["hidden", "fc"]);
    }

    #[test]
    fn conv_topology_rejects_bad_shape() {
        assert!(BuiltinModel::new(Topology::Conv2d, &[16], 2, Activation::Relu, 0).is_err());
        assert!(BuiltinModel::new(Topology::Conv1d, &[18], 2, Activation::Relu, 0).is_err());
    }

    #[test]
    fn save_and_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let m = BuiltinModel::new(Topology::Conv1d, &[16], 2, Activation::Softplus, 4).unwrap();
        m.save(&path).unwrap();
        assert!(dir.path().join("model.params.wamf").exists());
        assert_eq!(BuiltinModel::load(&path).unwrap(), m);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let m = BuiltinModel::new(Topology::Mlp, &[8], 2, Activation::Relu, 0).unwrap();
        let x = Signal::new(vec![4], vec![0.0; 4]).unwrap();
        assert!(matches!(m.forward_logits(&x), Err(WamError::ShapeMismatch { .. })));
        assert!(matches!(m.input_gradient(&x, 0), Err(WamError::ShapeMismatch { .. })));
        let x = Signal::zeros(&[8]).unwrap();
        assert!(matches!(m.input_gradient(&x, 2), Err(WamError::ClassOutOfRange { .. })));
    }
}
