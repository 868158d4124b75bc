use serde::{Deserialize, Serialize};

use super::transform::{dwt, idwt};
use super::WaveletSpec;
use crate::error::{Result, WamError};
use crate::ranking::{fraction_count, rank_by_magnitude};
use crate::signal::Signal;

/// Position of one coefficient block inside the flat layout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockInfo {
    /// Decomposition level; the approximation block sits at level J.
    pub level: usize,
    /// 0 for the approximation block, `1..2^d` for detail orientations.
    pub orientation: usize,
    pub offset: usize,
    pub shape: Vec<usize>,
}

impl BlockInfo {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Canonical ordering of a pyramid's coefficients: the approximation block
/// first, then detail bands by ascending level (finest first), ascending
/// orientation, row-major within each block.
///
/// Orientations enumerate the lowpass/highpass choice per axis
/// lexicographically (axis 0 most significant, L before H), skipping the
/// all-lowpass combination: in 2D that is LH, HL, HH.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoeffLayout {
    pub spec: WaveletSpec,
    pub signal_shape: Vec<usize>,
}

impl CoeffLayout {
    pub fn new(spec: WaveletSpec, signal_shape: &[usize]) -> Result<Self> {
        spec.validate(signal_shape)?;
        Ok(Self {
            spec,
            signal_shape: signal_shape.to_vec(),
        })
    }

    pub fn len(&self) -> usize {
        self.signal_shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn orientations(&self) -> usize {
        (1 << self.signal_shape.len()) - 1
    }

    pub fn block_shape(&self, level: usize) -> Vec<usize> {
        self.signal_shape.iter().map(|n| n >> level).collect()
    }

    pub fn blocks(&self) -> Vec<BlockInfo> {
        let levels = self.spec.levels;
        let mut out = Vec::with_capacity(1 + levels * self.orientations());
        let shape = self.block_shape(levels);
        let mut offset = shape.iter().product();
        out.push(BlockInfo {
            level: levels,
            orientation: 0,
            offset: 0,
            shape,
        });
        for level in 1..=levels {
            let shape = self.block_shape(level);
            let len: usize = shape.iter().product();
            for orientation in 1..=self.orientations() {
                out.push(BlockInfo {
                    level,
                    orientation,
                    offset,
                    shape: shape.clone(),
                });
                offset += len;
            }
        }
        out
    }
}

/// Flat coefficient vector tagged with its layout.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatCoeffs {
    pub values: Vec<f64>,
    pub layout: CoeffLayout,
}

impl FlatCoeffs {
    pub fn unflatten(&self) -> Result<WaveletPyramid> {
        WaveletPyramid::from_flat(
            self.layout.spec,
            &self.layout.signal_shape,
            &self.values,
        )
    }
}

/// Multilevel coefficient set `z = W(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletPyramid {
    spec: WaveletSpec,
    signal_shape: Vec<usize>,
    approx: Vec<f64>,
    /// `details[level − 1][orientation − 1]`
    details: Vec<Vec<Vec<f64>>>,
}

impl WaveletPyramid {
    pub(crate) fn from_parts_unchecked(
        spec: WaveletSpec,
        signal_shape: Vec<usize>,
        approx: Vec<f64>,
        details: Vec<Vec<Vec<f64>>>,
    ) -> Self {
        Self {
            spec,
            signal_shape,
            approx,
            details,
        }
    }

    pub(crate) fn from_flat_unchecked(spec: WaveletSpec, shape: &[usize], values: &[f64]) -> Self {
        let layout = CoeffLayout {
            spec,
            signal_shape: shape.to_vec(),
        };
        let blocks = layout.blocks();
        let approx = values[blocks[0].range()].to_vec();
        let per_level = layout.orientations();
        let details = blocks[1..]
            .chunks(per_level)
            .map(|level| level.iter().map(|b| values[b.range()].to_vec()).collect())
            .collect();
        Self::from_parts_unchecked(spec, shape.to_vec(), approx, details)
    }

    pub fn from_flat(spec: WaveletSpec, signal_shape: &[usize], values: &[f64]) -> Result<Self> {
        spec.validate(signal_shape)?;
        let expected: usize = signal_shape.iter().product();
        if values.len() != expected {
            return Err(WamError::LayoutMismatch {
                expected,
                actual: values.len(),
            });
        }
        Ok(Self::from_flat_unchecked(spec, signal_shape, values))
    }

    pub fn zeros(spec: WaveletSpec, signal_shape: &[usize]) -> Result<Self> {
        let n = signal_shape.iter().product();
        Self::from_flat(spec, signal_shape, &vec![0.0; n])
    }

    pub fn spec(&self) -> &WaveletSpec {
        &self.spec
    }

    pub fn signal_shape(&self) -> &[usize] {
        &self.signal_shape
    }

    pub fn layout(&self) -> CoeffLayout {
        CoeffLayout {
            spec: self.spec,
            signal_shape: self.signal_shape.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.approx.len() + self.details.iter().flatten().map(Vec::len).sum::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn orientations(&self) -> usize {
        (1 << self.signal_shape.len()) - 1
    }

    pub fn approx(&self) -> &[f64] {
        &self.approx
    }

    pub fn approx_mut(&mut self) -> &mut [f64] {
        &mut self.approx
    }

    /// Detail block at `level` (1 = finest) and `orientation` (1-based).
    pub fn band(&self, level: usize, orientation: usize) -> Option<&[f64]> {
        self.details
            .get(level.checked_sub(1)?)?
            .get(orientation.checked_sub(1)?)
            .map(Vec::as_slice)
    }

    pub fn band_mut(&mut self, level: usize, orientation: usize) -> Option<&mut [f64]> {
        self.details
            .get_mut(level.checked_sub(1)?)?
            .get_mut(orientation.checked_sub(1)?)
            .map(Vec::as_mut_slice)
    }

    pub(crate) fn level_bands(&self, level: usize) -> &[Vec<f64>] {
        &self.details[level - 1]
    }

    /// Validates the shape invariants.
    pub fn check(&self) -> Result<()> {
        let layout = CoeffLayout::new(self.spec, &self.signal_shape)
            .map_err(|e| WamError::MalformedPyramid(e.to_string()))?;
        let malformed = |what: String| Err(WamError::MalformedPyramid(what));
        let approx_len: usize = layout.block_shape(self.spec.levels).iter().product();
        if self.approx.len() != approx_len {
            return malformed(format!(
                "approximation holds {} values, expected {approx_len}",
                self.approx.len()
            ));
        }
        if self.details.len() != self.spec.levels {
            return malformed(format!(
                "{} detail levels, expected {}",
                self.details.len(),
                self.spec.levels
            ));
        }
        for (j, bands) in self.details.iter().enumerate() {
            let len: usize = layout.block_shape(j + 1).iter().product();
            if bands.len() != layout.orientations() {
                return malformed(format!("level {} has {} orientations", j + 1, bands.len()));
            }
            if let Some(b) = bands.iter().find(|b| b.len() != len) {
                return malformed(format!("level {} band holds {} values, expected {len}", j + 1, b.len()));
            }
        }
        Ok(())
    }

    pub fn flatten(&self) -> FlatCoeffs {
        FlatCoeffs {
            values: self.clone().into_flat_values(),
            layout: self.layout(),
        }
    }

    pub fn into_flat_values(self) -> Vec<f64> {
        let mut out = self.approx;
        for band in self.details.into_iter().flatten() {
            out.extend(band);
        }
        out
    }

    pub fn unflatten(flat: &FlatCoeffs, spec: WaveletSpec, signal_shape: &[usize]) -> Result<Self> {
        if flat.layout.spec != spec || flat.layout.signal_shape != signal_shape {
            return Err(WamError::LayoutMismatch {
                expected: signal_shape.iter().product(),
                actual: flat.layout.len(),
            });
        }
        Self::from_flat(spec, signal_shape, &flat.values)
    }

    /// Applies `f` to every coefficient.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        let apply = |v: &Vec<f64>| v.iter().map(|&x| f(x)).collect::<Vec<_>>();
        Self {
            spec: self.spec,
            signal_shape: self.signal_shape.clone(),
            approx: apply(&self.approx),
            details: self
                .details
                .iter()
                .map(|level| level.iter().map(apply).collect())
                .collect(),
        }
    }
}

/// Projects coefficient magnitudes back onto the signal grid.
///
/// A coefficient at level j covers a block of 2^j samples per axis; its
/// `|value|` is spread uniformly over that block and contributions from all
/// levels and orientations are summed, so the map's total equals `Σ|attr|`.
pub fn spatial_projection(attr: &WaveletPyramid) -> Result<Signal> {
    attr.check()?;
    let shape = attr.signal_shape();
    let ndim = shape.len();
    let n: usize = shape.iter().product();
    let mut out = vec![0.0; n];
    let mut add_block = |block: &[f64], level: usize| {
        let block_shape: Vec<usize> = shape.iter().map(|s| s >> level).collect();
        let share = 1.0 / (1u64 << (level * ndim)) as f64;
        let mut coords = [0usize; 3];
        for (idx, slot) in out.iter_mut().enumerate() {
            let mut rest = idx;
            for a in (0..ndim).rev() {
                coords[a] = rest % shape[a];
                rest /= shape[a];
            }
            let mut src = 0;
            for a in 0..ndim {
                src = src * block_shape[a] + (coords[a] >> level);
            }
            *slot += block[src].abs() * share;
        }
    };
    add_block(attr.approx(), attr.spec().levels);
    for level in 1..=attr.spec().levels {
        for band in attr.level_bands(level) {
            add_block(band, level);
        }
    }
    Signal::new(shape.to_vec(), out)
}

/// Keeps the `⌈keep_fraction · N⌉` coefficients of `dwt(x)` with the largest
/// `|attr|` (ties to the lowest flat index), zeroes the rest and inverts.
pub fn topk_reconstruct(x: &Signal, attr: &WaveletPyramid, keep_fraction: f64) -> Result<Signal> {
    if attr.signal_shape() != x.shape() {
        return Err(WamError::ShapeMismatch {
            expected: x.shape().to_vec(),
            actual: attr.signal_shape().to_vec(),
        });
    }
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(WamError::InvalidArgument(format!(
            "keep fraction {keep_fraction} outside (0, 1]"
        )));
    }
    let z = dwt(x, attr.spec())?.into_flat_values();
    let order = rank_by_magnitude(&attr.clone().into_flat_values());
    let keep = fraction_count(keep_fraction, z.len());
    let mut kept = vec![0.0; z.len()];
    for &i in &order[..keep] {
        kept[i] = z[i];
    }
    let p = WaveletPyramid::from_flat(*attr.spec(), x.shape(), &kept)?;
    Ok(idwt(&p)?.with_modality(x.modality()))
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::wavelet::Family;

    #[test]
    fn flat_layout_1d() {
        let spec = WaveletSpec::new(Family::Haar, 1);
        let x = Signal::new(vec![4], vec![1.0, 3.0, 2.0, 2.0]).unwrap();
        let p = dwt(&x, &spec).unwrap();
        let flat = p.flatten();
        let mut expected = p.approx().to_vec();
        expected.extend_from_slice(p.band(1, 1).unwrap());
        assert_eq!(flat.values, expected);
        assert_eq!(flat.values.len(), 4);
    }

    #[test]
    fn layout_mismatch_is_reported() {
        let spec = WaveletSpec::new(Family::Haar, 1);
        let err = WaveletPyramid::from_flat(spec, &[4], &[0.0; 3]).unwrap_err();
        assert!(matches!(err, WamError::LayoutMismatch { expected: 4, actual: 3 }));
        let flat = FlatCoeffs {
            values: vec![0.0; 4],
            layout: CoeffLayout::new(spec, &[4]).unwrap(),
        };
        assert!(WaveletPyramid::unflatten(&flat, spec, &[2, 2]).is_err());
        assert!(WaveletPyramid::unflatten(&flat, spec, &[4]).is_ok());
    }

    #[test]
    fn malformed_pyramid_is_rejected() {
        let spec = WaveletSpec::new(Family::Haar, 2);
        let mut p = WaveletPyramid::zeros(spec, &[8]).unwrap();
        p.details[1].pop();
        assert!(matches!(idwt(&p), Err(WamError::MalformedPyramid(_))));
    }

    #[test]
    fn blocks_cover_layout_contiguously() {
        let layout = CoeffLayout::new(WaveletSpec::new(Family::Db2, 2), &[8, 8, 8]).unwrap();
        let blocks = layout.blocks();
        assert_eq!(blocks.len(), 1 + 2 * 7);
        let mut next = 0;
        for b in &blocks {
            assert_eq!(b.offset, next);
            next += b.len();
        }
        assert_eq!(next, 512);
    }

    #[test]
    fn projection_spreads_single_coefficient() {
        let spec = WaveletSpec::new(Family::Haar, 2);
        let mut p = WaveletPyramid::zeros(spec, &[16]).unwrap();
        p.band_mut(2, 1).unwrap()[1] = 4.0;
        let map = spatial_projection(&p).unwrap();
        let expected: Vec<f64> = (0..16).map(|i| if (4..8).contains(&i) { 1.0 } else { 0.0 }).collect();
        assert_eq!(map.data(), expected.as_slice());
    }

    #[test]
    fn projection_of_zero_is_zero() {
        let p = WaveletPyramid::zeros(WaveletSpec::new(Family::Db2, 3), &[16, 16]).unwrap();
        assert!(spatial_projection(&p).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn topk_keep_all_is_identity() {
        let x = Signal::new(vec![8], vec![3.0, -1.0, 2.0, 0.5, 4.0, 4.0, -2.0, 1.0]).unwrap();
        let spec = WaveletSpec::new(Family::Db2, 2);
        let attr = dwt(&x, &spec).unwrap();
        let y = topk_reconstruct(&x, &attr, 1.0).unwrap();
        for (a, b) in x.data().iter().zip(y.data()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn topk_single_approx_coefficient_recovers_constant() {
        // constant length-8 signal, Haar J=3: the whole signal lives in the
        // single approximation coefficient 5·√8
        let x = Signal::new(vec![8], vec![5.0; 8]).unwrap();
        let spec = WaveletSpec::new(Family::Haar, 3);
        let mut attr = WaveletPyramid::zeros(spec, &[8]).unwrap();
        attr.approx_mut()[0] = 1.0;
        let y = topk_reconstruct(&x, &attr, 1.0 / 8.0).unwrap();
        for v in y.data() {
            assert!((v - 5.0).abs() < 1e-12);
        }
    }

    #[test]
    fn topk_ties_keep_lowest_indices() {
        let x = Signal::new(vec![4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let spec = WaveletSpec::new(Family::Haar, 1);
        let attr = WaveletPyramid::from_flat(spec, &[4], &[1.0; 4]).unwrap();
        let y = topk_reconstruct(&x, &attr, 0.5).unwrap();
        let z = dwt(&x, &spec).unwrap().into_flat_values();
        let expected = idwt(&WaveletPyramid::from_flat(spec, &[4], &[z[0], z[1], 0.0, 0.0]).unwrap()).unwrap();
        assert_eq!(y.data(), expected.data());
    }

    #[test]
    fn topk_shape_mismatch() {
        let x = Signal::zeros(&[8]).unwrap();
        let attr = WaveletPyramid::zeros(WaveletSpec::new(Family::Haar, 1), &[4]).unwrap();
        assert!(matches!(topk_reconstruct(&x, &attr, 0.5), Err(WamError::ShapeMismatch { .. })));
    }

    fn shape_strategy() -> impl Strategy<Value = Vec<usize>> {
        prop_oneof![
            (1usize..5).prop_map(|k| vec![8 * k]),
            (1usize..3, 1usize..3).prop_map(|(a, b)| vec![8 * a, 8 * b]),
            Just(vec![8, 8, 8]),
        ]
    }

    proptest! {
        #[test]
        fn flatten_unflatten_round_trip(shape in shape_strategy(), levels in 1usize..4, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n: usize = shape.iter().product();
            let values: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let spec = WaveletSpec::new(Family::Db2, levels);
            let p = WaveletPyramid::from_flat(spec, &shape, &values).unwrap();
            let flat = p.flatten();
            prop_assert_eq!(&flat.values, &values);
            prop_assert_eq!(flat.unflatten().unwrap(), p);
        }

        #[test]
        fn projection_conserves_mass(shape in shape_strategy(), levels in 1usize..4, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n: usize = shape.iter().product();
            let values: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let p = WaveletPyramid::from_flat(WaveletSpec::new(Family::Haar, levels), &shape, &values).unwrap();
            let total: f64 = values.iter().map(|v| v.abs()).sum();
            let map: f64 = spatial_projection(&p).unwrap().data().iter().sum();
            prop_assert!((total - map).abs() <= 1e-9 * total.max(1.0));
        }
    }
}
