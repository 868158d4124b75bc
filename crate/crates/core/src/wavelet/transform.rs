use super::pyramid::WaveletPyramid;
use super::{FilterBank, WaveletSpec};
use crate::error::{Result, WamError};
use crate::signal::Signal;

/// Decimating stencils for the two channels of one filter bank side.
struct Stencils {
    low: Vec<(isize, f64)>,
    high: Vec<(isize, f64)>,
}

impl Stencils {
    fn analysis(fb: &FilterBank) -> Self {
        Self {
            low: fb.analysis_low.analysis_stencil(),
            high: fb.analysis_high.analysis_stencil(),
        }
    }

    fn synthesis(fb: &FilterBank) -> Self {
        Self {
            low: fb.synthesis_low.synthesis_stencil(),
            high: fb.synthesis_high.synthesis_stencil(),
        }
    }

    /// `out = [low | high]`, `out[k] = Σ w · x[(2k + off) mod n]`.
    fn gather(&self, x: &[f64], out: &mut [f64]) {
        let n = x.len() as isize;
        let half = x.len() / 2;
        for k in 0..half {
            let base = 2 * k as isize;
            let mut lo = 0.0;
            for &(off, w) in &self.low {
                lo += w * x[(base + off).rem_euclid(n) as usize];
            }
            let mut hi = 0.0;
            for &(off, w) in &self.high {
                hi += w * x[(base + off).rem_euclid(n) as usize];
            }
            out[k] = lo;
            out[half + k] = hi;
        }
    }

    /// Transpose of [`Stencils::gather`]: `c = [low | high]` is scattered
    /// back onto `out`.
    fn scatter(&self, c: &[f64], out: &mut [f64]) {
        let n = out.len() as isize;
        let half = out.len() / 2;
        out.iter_mut().for_each(|v| *v = 0.0);
        for k in 0..half {
            let base = 2 * k as isize;
            let (lo, hi) = (c[k], c[half + k]);
            for &(off, w) in &self.low {
                out[(base + off).rem_euclid(n) as usize] += w * lo;
            }
            for &(off, w) in &self.high {
                out[(base + off).rem_euclid(n) as usize] += w * hi;
            }
        }
    }
}

#[derive(Clone, Copy)]
enum Mode {
    Gather,
    Scatter,
}

/// Applies the single-level operator along every axis of `data`.
fn transform_block(data: &mut [f64], shape: &[usize], st: &Stencils, mode: Mode) {
    let max_n = shape.iter().copied().max().unwrap_or(0);
    let mut lane = vec![0.0; max_n];
    let mut out = vec![0.0; max_n];
    for axis in 0..shape.len() {
        let n = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let outer: usize = shape[..axis].iter().product();
        let (lane, out) = (&mut lane[..n], &mut out[..n]);
        for o in 0..outer {
            for i in 0..inner {
                let base = o * n * inner + i;
                for t in 0..n {
                    lane[t] = data[base + t * inner];
                }
                match mode {
                    Mode::Gather => st.gather(lane, out),
                    Mode::Scatter => st.scatter(lane, out),
                }
                for t in 0..n {
                    data[base + t * inner] = out[t];
                }
            }
        }
    }
}

/// Subband mask of a position: bit for axis 0 is the most significant.
fn locate(mut idx: usize, shape: &[usize]) -> (usize, usize) {
    let d = shape.len();
    let mut coords = [0usize; 3];
    for a in (0..d).rev() {
        coords[a] = idx % shape[a];
        idx /= shape[a];
    }
    let mut mask = 0;
    let mut sub = 0;
    for a in 0..d {
        let h = shape[a] / 2;
        let (bit, r) = if coords[a] >= h { (1, coords[a] - h) } else { (0, coords[a]) };
        mask = (mask << 1) | bit;
        sub = sub * h + r;
    }
    (mask, sub)
}

fn split_subbands(block: &[f64], shape: &[usize]) -> Vec<Vec<f64>> {
    let count = 1 << shape.len();
    let sub_len = block.len() / count;
    let mut out = vec![vec![0.0; sub_len]; count];
    for (idx, &v) in block.iter().enumerate() {
        let (mask, sub) = locate(idx, shape);
        out[mask][sub] = v;
    }
    out
}

fn merge_subbands(approx: &[f64], details: &[Vec<f64>], shape: &[usize]) -> Vec<f64> {
    let len: usize = shape.iter().product();
    let mut block = vec![0.0; len];
    for (idx, slot) in block.iter_mut().enumerate() {
        let (mask, sub) = locate(idx, shape);
        *slot = if mask == 0 { approx[sub] } else { details[mask - 1][sub] };
    }
    block
}

fn level_shape(shape: &[usize], level: usize) -> Vec<usize> {
    shape.iter().map(|n| n >> level).collect()
}

fn decompose(x: &[f64], shape: &[usize], spec: &WaveletSpec, st: &Stencils) -> WaveletPyramid {
    let mut current = x.to_vec();
    let mut details = Vec::with_capacity(spec.levels);
    for level in 1..=spec.levels {
        let block_shape = level_shape(shape, level - 1);
        transform_block(&mut current, &block_shape, st, Mode::Gather);
        let mut subbands = split_subbands(&current, &block_shape);
        current = std::mem::take(&mut subbands[0]);
        subbands.remove(0);
        details.push(subbands);
    }
    WaveletPyramid::from_parts_unchecked(*spec, shape.to_vec(), current, details)
}

fn compose(p: &WaveletPyramid, st: &Stencils) -> Vec<f64> {
    let shape = p.signal_shape();
    let mut current = p.approx().to_vec();
    for level in (1..=p.spec().levels).rev() {
        let block_shape = level_shape(shape, level - 1);
        let mut block = merge_subbands(&current, p.level_bands(level), &block_shape);
        transform_block(&mut block, &block_shape, st, Mode::Scatter);
        current = block;
    }
    current
}

/// Forward multilevel transform.
pub fn dwt(x: &Signal, spec: &WaveletSpec) -> Result<WaveletPyramid> {
    spec.validate(x.shape())?;
    let st = Stencils::analysis(&spec.family.filter_bank());
    Ok(decompose(x.data(), x.shape(), spec, &st))
}

/// Inverse multilevel transform (perfect reconstruction of [`dwt`]).
pub fn idwt(p: &WaveletPyramid) -> Result<Signal> {
    p.check()?;
    let st = Stencils::synthesis(&p.spec().family.filter_bank());
    let data = compose(p, &st);
    if data.iter().any(|v| !v.is_finite()) {
        return Err(WamError::NonFiniteValues);
    }
    Ok(Signal::from_parts(p.signal_shape().to_vec(), data))
}

/// Exact adjoint (transpose) of [`idwt`]: maps a gradient with respect to
/// the signal to the gradient with respect to the coefficients. For the
/// orthonormal families this coincides with [`dwt`].
pub fn idwt_adjoint(grad: &Signal, spec: &WaveletSpec) -> Result<WaveletPyramid> {
    spec.validate(grad.shape())?;
    let st = Stencils::synthesis(&spec.family.filter_bank());
    Ok(decompose(grad.data(), grad.shape(), spec, &st))
}

/// Exact adjoint of [`dwt`].
pub fn dwt_adjoint(p: &WaveletPyramid) -> Result<Signal> {
    p.check()?;
    let st = Stencils::analysis(&p.spec().family.filter_bank());
    Ok(Signal::from_parts(p.signal_shape().to_vec(), compose(p, &st)))
}

// Flat-vector entry points for the inner loops of the estimators.

pub(crate) fn dwt_flat(x: &[f64], shape: &[usize], spec: &WaveletSpec) -> Vec<f64> {
    let st = Stencils::analysis(&spec.family.filter_bank());
    decompose(x, shape, spec, &st).into_flat_values()
}

pub(crate) fn idwt_flat(z: &[f64], shape: &[usize], spec: &WaveletSpec) -> Vec<f64> {
    let st = Stencils::synthesis(&spec.family.filter_bank());
    let p = WaveletPyramid::from_flat_unchecked(*spec, shape, z);
    compose(&p, &st)
}

pub(crate) fn idwt_adjoint_flat(g: &[f64], shape: &[usize], spec: &WaveletSpec) -> Vec<f64> {
    let st = Stencils::synthesis(&spec.family.filter_bank());
    decompose(g, shape, spec, &st).into_flat_values()
}

#[cfg(test)]
mod tests {
    use std::f64::consts::SQRT_2;

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::wavelet::Family;

    fn random_signal(shape: &[usize], seed: u64) -> Signal {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = shape.iter().product();
        Signal::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn haar_constant_signal_has_zero_detail() {
        let x = Signal::new(vec![4], vec![1.0; 4]).unwrap();
        let p = dwt(&x, &WaveletSpec::new(Family::Haar, 1)).unwrap();
        assert!(max_abs_diff(p.approx(), &[SQRT_2, SQRT_2]) < 1e-15);
        assert_eq!(p.band(1, 1).unwrap(), &[0.0, 0.0]);
    }

    #[test]
    fn haar_detail_sign_convention() {
        let x = Signal::new(vec![2], vec![1.0, -1.0]).unwrap();
        let p = dwt(&x, &WaveletSpec::new(Family::Haar, 1)).unwrap();
        assert!(p.approx()[0].abs() < 1e-15);
        assert!((p.band(1, 1).unwrap()[0] - SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn haar_inverse_of_known_pyramid() {
        let spec = WaveletSpec::new(Family::Haar, 1);
        let p = WaveletPyramid::from_flat(spec, &[4], &[SQRT_2, SQRT_2, 0.0, 0.0]).unwrap();
        let x = idwt(&p).unwrap();
        assert!(max_abs_diff(x.data(), &[1.0; 4]) < 1e-15);
    }

    #[test]
    fn zero_pyramid_inverts_to_zero() {
        for family in Family::ALL {
            let p = WaveletPyramid::zeros(WaveletSpec::new(family, 2), &[8, 8]).unwrap();
            assert!(idwt(&p).unwrap().data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn db2_two_level_reconstructs_random_vector() {
        let x = random_signal(&[16], 42);
        let spec = WaveletSpec::new(Family::Db2, 2);
        let y = idwt(&dwt(&x, &spec).unwrap()).unwrap();
        assert!(max_abs_diff(x.data(), y.data()) <= 1e-10);
    }

    #[test]
    fn bior_one_level_reconstructs_random_image() {
        let x = random_signal(&[8, 8], 7);
        let spec = WaveletSpec::new(Family::Bior22, 1);
        let y = idwt(&dwt(&x, &spec).unwrap()).unwrap();
        assert!(max_abs_diff(x.data(), y.data()) <= 1e-9);
    }

    #[test]
    fn non_dyadic_dimension_is_rejected() {
        let x = random_signal(&[12, 16], 1);
        let err = dwt(&x, &WaveletSpec::new(Family::Haar, 3)).unwrap_err();
        assert!(matches!(err, WamError::DimensionNotDyadic { dim: 0, .. }));
    }

    #[test]
    fn bior_adjoint_differs_from_forward() {
        // The biorthogonal analysis operator is not the transpose of synthesis.
        let g = random_signal(&[16], 3);
        let spec = WaveletSpec::new(Family::Bior22, 2);
        let a = idwt_adjoint(&g, &spec).unwrap().into_flat_values();
        let f = dwt(&g, &spec).unwrap().into_flat_values();
        assert!(max_abs_diff(&a, &f) > 1e-3);
    }

    #[test]
    fn adjoint_identity_holds_for_every_family() {
        // <idwt(p), g> = <p, idwt_adjoint(g)> and <dwt(x), p> = <x, dwt_adjoint(p)>
        for family in Family::ALL {
            let spec = WaveletSpec::new(family, 2);
            let shape = [8, 16];
            let g = random_signal(&shape, 10);
            let x = random_signal(&shape, 11);
            let p = dwt(&random_signal(&shape, 12), &spec).unwrap();
            let pf = p.clone().into_flat_values();
            let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| u * v).sum::<f64>();
            let lhs = dot(idwt(&p).unwrap().data(), g.data());
            let rhs = dot(&pf, &idwt_adjoint(&g, &spec).unwrap().into_flat_values());
            assert!((lhs - rhs).abs() < 1e-9, "{family}: {lhs} vs {rhs}");
            let lhs = dot(&dwt(&x, &spec).unwrap().into_flat_values(), &pf);
            let rhs = dot(x.data(), dwt_adjoint(&p).unwrap().data());
            assert!((lhs - rhs).abs() < 1e-9, "{family}: {lhs} vs {rhs}");
        }
    }
}
