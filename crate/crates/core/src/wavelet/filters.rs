use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

use super::Family;

/// A finite impulse response anchored at `origin`.
///
/// Analysis filters act by decimated convolution,
/// `out[k] = Σ_i taps[i] · x[2k + origin − i]`, while synthesis filters act by
/// upsampled scattering, `x[2k + origin + i] += taps[i] · c[k]`. Indices wrap
/// periodically.
#[derive(Debug, Clone, PartialEq)]
pub struct Filter {
    pub taps: Vec<f64>,
    pub origin: isize,
}

impl Filter {
    fn new(taps: Vec<f64>, origin: isize) -> Self {
        Self { taps, origin }
    }

    /// Time-reversed copy, re-anchored so that it is the transpose of `self`
    /// (analysis ↔ synthesis).
    fn reversed(&self) -> Self {
        let mut taps = self.taps.clone();
        taps.reverse();
        Self::new(taps, self.origin - (self.taps.len() as isize - 1))
    }

    pub fn energy(&self) -> f64 {
        self.taps.iter().map(|t| t * t).sum()
    }

    pub(crate) fn analysis_stencil(&self) -> Vec<(isize, f64)> {
        self.taps
            .iter()
            .enumerate()
            .map(|(i, &w)| (self.origin - i as isize, w))
            .collect()
    }

    pub(crate) fn synthesis_stencil(&self) -> Vec<(isize, f64)> {
        self.taps
            .iter()
            .enumerate()
            .map(|(i, &w)| (self.origin + i as isize, w))
            .collect()
    }
}

/// Analysis lowpass g, analysis highpass h, and their synthesis partners.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    pub analysis_low: Filter,
    pub analysis_high: Filter,
    pub synthesis_low: Filter,
    pub synthesis_high: Filter,
}

impl FilterBank {
    pub fn for_family(family: Family) -> Self {
        match family {
            Family::Haar => Self::orthonormal(vec![FRAC_1_SQRT_2, FRAC_1_SQRT_2]),
            Family::Db2 => {
                let s3 = 3f64.sqrt();
                let norm = 4.0 * SQRT_2;
                Self::orthonormal(vec![
                    (1.0 - s3) / norm,
                    (3.0 - s3) / norm,
                    (3.0 + s3) / norm,
                    (1.0 + s3) / norm,
                ])
            }
            Family::Bior22 => Self::cdf_5_3(),
        }
    }

    /// Orthonormal bank from a lowpass filter: the highpass is its quadrature
    /// mirror, `h[i] = (−1)^(i+1) g[L−1−i]`, and synthesis is the transpose.
    /// For Haar this yields `detail_k = (x_2k − x_2k+1)/√2`.
    fn orthonormal(low: Vec<f64>) -> Self {
        let len = low.len();
        let origin = len as isize - 1;
        let high: Vec<f64> = (0..len)
            .map(|i| {
                let sign = if i % 2 == 0 { -1.0 } else { 1.0 };
                sign * low[len - 1 - i]
            })
            .collect();
        let analysis_low = Filter::new(low, origin);
        let analysis_high = Filter::new(high, origin);
        Self {
            synthesis_low: analysis_low.reversed(),
            synthesis_high: analysis_high.reversed(),
            analysis_low,
            analysis_high,
        }
    }

    /// CDF 5/3 spline pair (bior2.2), from the lifting factorisation
    ///   d[k] = x[2k+1] − (x[2k] + x[2k+2]) / 2
    ///   a[k] = x[2k]   + (d[k−1] + d[k]) / 4
    /// expanded into FIR form, with a scaled by √2 and d by 1/√2.
    fn cdf_5_3() -> Self {
        let lo = [-0.125, 0.25, 0.75, 0.25, -0.125];
        let hi = [-0.5, 1.0, -0.5];
        let rec_lo = [0.5, 1.0, 0.5];
        let rec_hi = [-0.125, -0.25, 0.75, -0.25, -0.125];
        Self {
            // taps at x[2k−2 ..= 2k+2]; symmetric, so convolution order is moot
            analysis_low: Filter::new(lo.iter().map(|v| v * SQRT_2).collect(), 2),
            // taps at x[2k ..= 2k+2]
            analysis_high: Filter::new(hi.iter().map(|v| v * FRAC_1_SQRT_2).collect(), 2),
            // scatters onto x[2k−1 ..= 2k+1]
            synthesis_low: Filter::new(rec_lo.iter().map(|v| v * FRAC_1_SQRT_2).collect(), -1),
            // scatters onto x[2k−1 ..= 2k+3]
            synthesis_high: Filter::new(rec_hi.iter().map(|v| v * SQRT_2).collect(), -1),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orthonormal_banks_are_time_reversed_and_unit_energy() {
        for family in [Family::Haar, Family::Db2] {
            let fb = family.filter_bank();
            let mut rev = fb.analysis_low.taps.clone();
            rev.reverse();
            assert_eq!(rev, fb.synthesis_low.taps);
            let mut rev = fb.analysis_high.taps.clone();
            rev.reverse();
            assert_eq!(rev, fb.synthesis_high.taps);
            assert!((fb.analysis_low.energy() - 1.0).abs() < 1e-14);
            assert!((fb.analysis_high.energy() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn lowpass_has_dc_gain_sqrt2_and_highpass_is_zero_mean() {
        for family in Family::ALL {
            let fb = family.filter_bank();
            let dc: f64 = fb.analysis_low.taps.iter().sum();
            let hp: f64 = fb.analysis_high.taps.iter().sum();
            assert!((dc - SQRT_2).abs() < 1e-14, "{family}");
            assert!(hp.abs() < 1e-14, "{family}");
        }
    }
}
