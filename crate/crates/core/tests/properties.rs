//! Invariants that must hold for every seeded input.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wam_core::attribution::{attribute, scale_importance, Domain, MethodConfig, SmoothGradConfig};
use wam_core::metrics::{
    faithfulness_curves, fid_in_sample, ff_spectra, mu_fidelity, pointing_game, BoundingBox, MuFidelityConfig,
};
use wam_core::model::{softmax, Activation, BuiltinModel, Classifier, Topology};
use wam_core::perturbation::{nadam_step, optimize_mask, MaskConfig, MaskMode, NadamState};
use wam_core::sanity::{pearson, spearman};
use wam_core::{dwt, idwt, topk_reconstruct, Family, Signal, WaveletPyramid, WaveletSpec};

fn family() -> impl Strategy<Value = Family> {
    prop_oneof![Just(Family::Haar), Just(Family::Db2), Just(Family::Bior22)]
}

fn orthonormal() -> impl Strategy<Value = Family> {
    prop_oneof![Just(Family::Haar), Just(Family::Db2)]
}

/// Dyadic shapes of rank 1–3 that admit three levels.
fn shape() -> impl Strategy<Value = Vec<usize>> {
    prop_oneof![
        (3u32..8).prop_map(|e| vec![1 << e]),
        (3u32..6, 3u32..6).prop_map(|(a, b)| vec![1 << a, 1 << b]),
        Just(vec![8, 8, 8]),
        Just(vec![16, 8, 8]),
    ]
}

fn random(shape: &[usize], seed: u64) -> Signal {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Signal::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn reconstruction_is_perfect(f in family(), levels in 1usize..4, shape in shape(), seed in any::<u64>()) {
        let x = random(&shape, seed);
        let p = dwt(&x, &WaveletSpec::new(f, levels)).unwrap();
        prop_assert_eq!(p.len(), x.len());
        prop_assert!(max_abs_diff(idwt(&p).unwrap().data(), x.data()) <= 1e-9);
    }

    #[test]
    fn transform_is_linear(f in family(), levels in 1usize..4, shape in shape(), s1 in any::<u64>(), s2 in any::<u64>(), a in -3.0..3.0f64, b in -3.0..3.0f64) {
        let spec = WaveletSpec::new(f, levels);
        let (x, y) = (random(&shape, s1), random(&shape, s2));
        let mix = x.with_data(x.data().iter().zip(y.data()).map(|(u, v)| a * u + b * v).collect()).unwrap();
        let (zx, zy) = (dwt(&x, &spec).unwrap().into_flat_values(), dwt(&y, &spec).unwrap().into_flat_values());
        let zm = dwt(&mix, &spec).unwrap().into_flat_values();
        let expected: Vec<f64> = zx.iter().zip(&zy).map(|(u, v)| a * u + b * v).collect();
        prop_assert!(max_abs_diff(&zm, &expected) <= 1e-10);
    }

    #[test]
    fn orthonormal_transforms_are_adjoint_and_preserve_energy(f in orthonormal(), levels in 1usize..4, shape in shape(), s1 in any::<u64>(), s2 in any::<u64>()) {
        let spec = WaveletSpec::new(f, levels);
        let x = random(&shape, s1);
        let p = WaveletPyramid::from_flat(spec, &shape, random(&shape, s2).data()).unwrap();
        let z = dwt(&x, &spec).unwrap().into_flat_values();
        let lhs = dot(&z, &p.clone().into_flat_values());
        let rhs = dot(x.data(), idwt(&p).unwrap().data());
        prop_assert!((lhs - rhs).abs() <= 1e-9);
        prop_assert!((dot(&z, &z).sqrt() - dot(x.data(), x.data()).sqrt()).abs() <= 1e-9);
    }

    #[test]
    fn keeping_every_coefficient_reconstructs(f in family(), levels in 1usize..4, shape in shape(), seed in any::<u64>()) {
        let x = random(&shape, seed);
        let spec = WaveletSpec::new(f, levels);
        let attr = dwt(&random(&shape, seed ^ 1), &spec).unwrap();
        prop_assert!(max_abs_diff(topk_reconstruct(&x, &attr, 1.0).unwrap().data(), x.data()) <= 1e-9);
    }

    #[test]
    fn softmax_is_normalised(logits in prop::collection::vec(-50.0..50.0f64, 1..12)) {
        let p = softmax(&logits);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(p.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn correlation_ignores_positive_affine_rescaling(seed in any::<u64>(), scale in 0.01..100.0f64, shift in -10.0..10.0f64) {
        let a = random(&[32], seed).into_data();
        let b = random(&[32], seed ^ 7).into_data();
        let rescaled: Vec<f64> = b.iter().map(|v| scale * v + shift).collect();
        prop_assert!((pearson(&a, &b).unwrap() - pearson(&a, &rescaled).unwrap()).abs() <= 1e-12);
        prop_assert!((spearman(&a, &b).unwrap() - spearman(&a, &rescaled).unwrap()).abs() <= 1e-12);
        prop_assert_eq!(pearson(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn nadam_keeps_masks_in_the_unit_box(seed in any::<u64>(), lr in 0.001..2.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut mask: Vec<f64> = (0..16).map(|_| rng.gen()).collect();
        let mut state = NadamState::new(16, lr);
        for _ in 0..20 {
            let g: Vec<f64> = (0..16).map(|_| rng.gen_range(-100.0..100.0)).collect();
            nadam_step(&mut state, &mut mask, &g).unwrap();
            prop_assert!(mask.iter().all(|m| (0.0..=1.0).contains(m)));
        }
    }
}

fn mlp(seed: u64) -> BuiltinModel {
    BuiltinModel::new(Topology::Mlp, &[32], 3, Activation::Softplus, seed).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn scale_importance_sums_to_one(f in family(), levels in 1usize..4, shape in shape(), seed in any::<u64>()) {
        let spec = WaveletSpec::new(f, levels);
        let x = random(&shape, seed);
        let model = BuiltinModel::new(Topology::Mlp, &shape, 2, Activation::Softplus, seed).unwrap();
        let attr = attribute(&model, &x, 1, Domain::Wavelet(spec), &MethodConfig::Saliency).unwrap();
        let s = scale_importance(&attr).unwrap();
        prop_assert_eq!(s.len(), levels + 1);
        prop_assert!((s.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn zero_sigma_smoothgrad_is_the_wavelet_gradient(f in family(), seed in any::<u64>(), samples in 1usize..6) {
        let model = mlp(seed);
        let x = random(&[32], seed);
        let domain = Domain::Wavelet(WaveletSpec::new(f, 3));
        let smooth = attribute(&model, &x, 0, domain, &MethodConfig::SmoothGrad(SmoothGradConfig { samples, sigma: 0.0, seed })).unwrap();
        let g = model.gradient_raw(x.data(), 0).unwrap();
        prop_assert_eq!(smooth.values, domain.pullback(&g, &[32]));
    }

    #[test]
    fn metrics_depend_only_on_the_ranking(seed in any::<u64>(), lambda in 0.01..100.0f64) {
        let model = mlp(seed);
        let x = random(&[32], seed ^ 3);
        let spec = WaveletSpec::new(Family::Haar, 3);
        let attr = attribute(&model, &x, 2, Domain::Wavelet(spec), &MethodConfig::Saliency).unwrap();
        let scaled = attr.with_values(attr.values.iter().map(|v| lambda * v).collect()).unwrap();
        prop_assert_eq!(faithfulness_curves(&model, &x, &attr, 2, 16).unwrap(), faithfulness_curves(&model, &x, &scaled, 2, 16).unwrap());
        prop_assert_eq!(ff_spectra(&model, &x, &attr, 2, 0.25).unwrap(), ff_spectra(&model, &x, &scaled, 2, 0.25).unwrap());
        prop_assert_eq!(fid_in_sample(&model, &x, &attr, 0.25).unwrap(), fid_in_sample(&model, &x, &scaled, 0.25).unwrap());
        let b = BoundingBox::new(vec![4], vec![19]);
        prop_assert_eq!(pointing_game(&attr, &b).unwrap(), pointing_game(&scaled, &b).unwrap());
        let cfg = MuFidelityConfig { num_subsets: 32, seed, ..Default::default() };
        let (m1, m2) = (mu_fidelity(&model, &x, &attr, 2, &cfg).unwrap(), mu_fidelity(&model, &x, &scaled, 2, &cfg).unwrap());
        prop_assert!((m1.abs() - m2.abs()).abs() <= 1e-12);
    }

    #[test]
    fn mask_traces_are_bounded_consistent_and_reproducible(seed in any::<u64>(), alpha in 0.0..0.5f64, deletion in any::<bool>()) {
        let model = mlp(seed);
        let x = random(&[32], seed ^ 5);
        let spec = WaveletSpec::new(Family::Db2, 2);
        let mut cfg = MaskConfig::new(alpha, 1);
        cfg.steps = 15;
        if deletion {
            cfg.mode = MaskMode::Deletion;
        }
        let r = optimize_mask(&model, &x, &spec, &cfg).unwrap();
        prop_assert!(r.mask.iter().all(|m| (0.0..=1.0).contains(m)));
        prop_assert_eq!(r.trace.len(), 16);
        let sign = if deletion { 1.0 } else { -1.0 };
        for row in &r.trace {
            prop_assert!((row.loss - (sign * row.logit + alpha * row.l1)).abs() <= 1e-9);
        }
        prop_assert_eq!(optimize_mask(&model, &x, &spec, &cfg).unwrap(), r);
    }
}
