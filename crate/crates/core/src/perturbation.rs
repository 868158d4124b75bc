//! Sparse coefficient masks that keep (or destroy) a class score: the
//! "minimal signal" is `idwt(z ⊙ m)` for an L1-penalised mask `m ∈ [0,1]`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attribution::Domain;
use crate::error::{Result, WamError};
use crate::model::{argmax, Classifier};
use crate::signal::Signal;
use crate::wavelet::WaveletSpec;

/// Entries below this count as switched off.
pub const SPARSITY_THRESHOLD: f64 = 0.01;

/// Nesterov-accelerated Adam with the usual bias corrections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NadamState {
    pub first: Vec<f64>,
    pub second: Vec<f64>,
    pub step: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl NadamState {
    pub fn new(len: usize, learning_rate: f64) -> Self {
        Self {
            first: vec![0.0; len],
            second: vec![0.0; len],
            step: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// One Nadam update of `mask` followed by clamping to `[0, 1]`:
///
/// ```text
/// t  += 1
/// m   = β₁m + (1−β₁)g            v = β₂v + (1−β₂)g²
/// m̂   = β₁m/(1−β₁^{t+1}) + (1−β₁)g/(1−β₁^t)
/// v̂   = v/(1−β₂^t)
/// θ  -= η m̂ / (√v̂ + ε)
/// ```
pub fn nadam_step(state: &mut NadamState, mask: &mut [f64], grad: &[f64]) -> Result<()> {
    if mask.len() != grad.len() || state.first.len() != grad.len() {
        return Err(WamError::ShapeMismatch {
            expected: vec![state.first.len()],
            actual: vec![grad.len()],
        });
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1_next = 1.0 - b1.powi(t + 1);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for i in 0..grad.len() {
        let g = grad[i];
        state.first[i] = b1 * state.first[i] + (1.0 - b1) * g;
        state.second[i] = b2 * state.second[i] + (1.0 - b2) * g * g;
        let m_hat = b1 * state.first[i] / c1_next + (1.0 - b1) * g / c1;
        let v_hat = state.second[i] / c2;
        mask[i] = (mask[i] - state.learning_rate * m_hat / (v_hat.sqrt() + state.epsilon)).clamp(0.0, 1.0);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskMode {
    /// Minimise `−f_c + α‖m‖₁`: keep the score with few coefficients.
    #[default]
    Preservation,
    /// Minimise `f_c + α‖m‖₁`: find coefficients whose removal kills the score.
    Deletion,
}

impl MaskMode {
    fn sign(self) -> f64 {
        match self {
            MaskMode::Preservation => -1.0,
            MaskMode::Deletion => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskConfig {
    pub alpha: f64,
    pub steps: usize,
    pub mode: MaskMode,
    pub class: usize,
    pub learning_rate: f64,
}

impl MaskConfig {
    pub fn new(alpha: f64, class: usize) -> Self {
        Self {
            alpha,
            steps: 500,
            mode: MaskMode::Preservation,
            class,
            learning_rate: 0.05,
        }
    }
}

/// Objective components for one mask; `loss = ±logit + α · l1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    /// Class logit of the minimal signal (the objective's score term).
    pub logit: f64,
    pub l1: f64,
    pub sparsity: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskResult {
    pub mask: Vec<f64>,
    /// Row `t` describes the mask after `t` updates.
    pub trace: Vec<TraceRow>,
    pub minimal_signal: Signal,
}

impl MaskResult {
    pub fn sparsity(&self) -> f64 {
        sparsity(&self.mask)
    }
}

pub fn sparsity(mask: &[f64]) -> f64 {
    mask.iter().filter(|&&m| m < SPARSITY_THRESHOLD).count() as f64 / mask.len() as f64
}

/// `idwt(dwt(x) ⊙ mask)`.
pub fn minimal_signal(x: &Signal, spec: &WaveletSpec, mask: &[f64]) -> Result<Signal> {
    spec.validate(x.shape())?;
    let domain = Domain::Wavelet(*spec);
    let z = domain.forward(x.data(), x.shape());
    if z.len() != mask.len() {
        return Err(WamError::ShapeMismatch {
            expected: vec![z.len()],
            actual: vec![mask.len()],
        });
    }
    let zm: Vec<f64> = z.iter().zip(mask).map(|(a, m)| a * m).collect();
    x.with_data(domain.inverse(&zm, x.shape()))
}

/// Gradient descent on the mask from all-ones, with Nadam and projection.
pub fn optimize_mask<C: Classifier + ?Sized>(b: &C, x: &Signal, spec: &WaveletSpec, cfg: &MaskConfig) -> Result<MaskResult> {
    x.ensure_shape(b.input_shape())?;
    b.check_class(cfg.class)?;
    spec.validate(x.shape())?;
    if cfg.steps == 0 || !(cfg.alpha >= 0.0) {
        return Err(WamError::InvalidArgument(format!(
            "mask optimisation needs steps >= 1 and alpha >= 0 (got {}, {})",
            cfg.steps, cfg.alpha
        )));
    }
    let domain = Domain::Wavelet(*spec);
    let shape = x.shape();
    let z = domain.forward(x.data(), shape);
    let mut mask = vec![1.0; z.len()];
    let mut state = NadamState::new(z.len(), cfg.learning_rate);
    let mut trace = Vec::with_capacity(cfg.steps + 1);
    let sign = cfg.mode.sign();

    for step in 0..=cfg.steps {
        let zm: Vec<f64> = z.iter().zip(&mask).map(|(a, m)| a * m).collect();
        let signal = domain.inverse(&zm, shape);
        let logit = b.logits_raw(&signal)?[cfg.class];
        let l1: f64 = mask.iter().sum();
        let loss = sign * logit + cfg.alpha * l1;
        if !loss.is_finite() {
            return Err(WamError::NonFiniteLoss { step });
        }
        trace.push(TraceRow {
            step,
            logit,
            l1,
            sparsity: sparsity(&mask),
            loss,
        });
        if step == cfg.steps {
            break;
        }
        // ∂/∂m of f_c(idwt(z ⊙ m)) is z ⊙ idwt_adjoint(∇x f_c); the L1 term
        // contributes α (the mask never goes negative).
        let g_x = b.gradient_raw(&signal, cfg.class)?;
        let g_z = domain.pullback(&g_x, shape);
        let grad: Vec<f64> = z.iter().zip(&g_z).map(|(a, g)| sign * a * g + cfg.alpha).collect();
        nadam_step(&mut state, &mut mask, &grad)?;
    }

    let minimal_signal = minimal_signal(x, spec, &mask)?;
    Ok(MaskResult {
        mask,
        trace,
        minimal_signal,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParetoRow {
    pub alpha: f64,
    pub sparsity: f64,
    pub logit: f64,
    pub argmax_preserved: bool,
}

/// One preservation-mode mask per `alpha`, explaining the predicted class.
pub fn pareto_sweep<C: Classifier + ?Sized>(
    b: &C,
    x: &Signal,
    spec: &WaveletSpec,
    alphas: &[f64],
    steps: usize,
) -> Result<Vec<ParetoRow>> {
    if alphas.is_empty() || alphas.iter().any(|a| !(*a >= 0.0)) {
        return Err(WamError::InvalidArgument("alphas must be a non-empty list of non-negative values".into()));
    }
    x.ensure_shape(b.input_shape())?;
    let predicted = argmax(&b.logits_raw(x.data())?);
    alphas
        .par_iter()
        .map(|&alpha| {
            let cfg = MaskConfig {
                steps,
                ..MaskConfig::new(alpha, predicted)
            };
            let r = optimize_mask(b, x, spec, &cfg)?;
            let logits = b.logits_raw(r.minimal_signal.data())?;
            Ok(ParetoRow {
                alpha,
                sparsity: r.sparsity(),
                logit: logits[predicted],
                argmax_preserved: argmax(&logits) == predicted,
            })
        })
        .collect()
}

pub fn pareto_csv(rows: &[ParetoRow]) -> String {
    let mut out = String::from("alpha,sparsity,logit,argmax_preserved\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{}\n", r.alpha, r.sparsity, r.logit, r.argmax_preserved));
    }
    out
}

/// Least-squares non-decreasing fit (pool adjacent violators).
pub fn isotonic_fit(values: &[f64]) -> Vec<f64> {
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(values.len());
    for &v in values {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (m2, n2) = blocks[blocks.len() - 1];
            let (m1, n1) = blocks[blocks.len() - 2];
            if m1 <= m2 {
                break;
            }
            blocks.pop();
            let n = n1 + n2;
            *blocks.last_mut().unwrap() = ((m1 * n1 as f64 + m2 * n2 as f64) / n as f64, n);
        }
    }
    blocks.into_iter().flat_map(|(m, n)| std::iter::repeat(m).take(n)).collect()
}

/// Whether `values` already is its own isotonic fit.
pub fn is_non_decreasing(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[0] <= w[1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::BuiltinModel;
    use crate::wavelet::Family;

    #[test]
    fn first_step_matches_hand_evaluation() {
        // m₁ = 0.1, v₁ = 0.001, m̂ = 0.09/0.19 + 1, v̂ = 1
        let mut s = NadamState::new(1, 0.05);
        let mut mask = vec![1.0];
        nadam_step(&mut s, &mut mask, &[1.0]).unwrap();
        let expected = 1.0 - 0.05 * (0.09 / 0.19 + 1.0) / (1.0 + 1e-8);
        assert!((mask[0] - expected).abs() < 1e-15);
        assert!((mask[0] - 0.926_315_790_21).abs() < 1e-11);
    }

    #[test]
    fn zero_gradient_only_advances_the_counter() {
        let mut s = NadamState::new(3, 0.05);
        let mut mask = vec![0.2, 0.5, 1.0];
        nadam_step(&mut s, &mut mask, &[0.0; 3]).unwrap();
        assert_eq!(mask, vec![0.2, 0.5, 1.0]);
        assert_eq!(s.first, vec![0.0; 3]);
        assert_eq!(s.second, vec![0.0; 3]);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn projection_clamps_to_zero() {
        let mut s = NadamState::new(1, 0.5);
        let mut mask = vec![0.01];
        nadam_step(&mut s, &mut mask, &[1.0]).unwrap();
        assert_eq!(mask, vec![0.0]);
        assert!(nadam_step(&mut s, &mut mask, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn pav_pools_violators() {
        assert_eq!(isotonic_fit(&[1.0, 3.0, 2.0, 4.0]), vec![1.0, 2.5, 2.5, 4.0]);
        assert_eq!(isotonic_fit(&[3.0, 2.0, 1.0]), vec![2.0, 2.0, 2.0]);
        assert!(is_non_decreasing(&isotonic_fit(&[0.5, 0.1, 0.9, 0.3])));
    }

    #[test]
    fn all_ones_mask_reconstructs_the_input() {
        let spec = WaveletSpec::new(Family::Bior22, 2);
        let x = Signal::new(vec![16], (0..16).map(|i| (i as f64 * 0.7).sin()).collect()).unwrap();
        let y = minimal_signal(&x, &spec, &[1.0; 16]).unwrap();
        for (a, b) in x.data().iter().zip(y.data()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_alpha_preservation_keeps_positive_linear_mask_full() {
        let spec = WaveletSpec::new(Family::Haar, 1);
        let m = BuiltinModel::linear(&[8], vec![0.5; 8], vec![0.0]).unwrap();
        let x = Signal::new(vec![8], vec![1.0, 2.0, 0.5, 1.5, 3.0, 1.0, 2.0, 0.25]).unwrap();
        let cfg = MaskConfig {
            steps: 20,
            ..MaskConfig::new(0.0, 0)
        };
        let r = optimize_mask(&m, &x, &spec, &cfg).unwrap();
        // detail coefficients have zero gradient here, approximations push up
        assert!(r.mask.iter().all(|&v| v == 1.0));
        assert_eq!(r.trace.len(), 21);
        for row in &r.trace {
            assert!((row.loss - (-row.logit)).abs() < 1e-12);
        }
    }

    #[test]
    fn huge_alpha_empties_the_mask() {
        let spec = WaveletSpec::new(Family::Haar, 1);
        let m = BuiltinModel::linear(&[8], vec![0.5; 8], vec![0.3]).unwrap();
        let x = Signal::new(vec![8], vec![1.0; 8]).unwrap();
        let cfg = MaskConfig {
            steps: 60,
            ..MaskConfig::new(1e3, 0)
        };
        let r = optimize_mask(&m, &x, &spec, &cfg).unwrap();
        assert_eq!(r.sparsity(), 1.0);
        assert!((r.trace.last().unwrap().logit - 0.3).abs() < 1e-12);
    }
}
