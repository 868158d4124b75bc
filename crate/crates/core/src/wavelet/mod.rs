//! Periodized, critically sampled discrete wavelet transforms in 1 to 3
//! dimensions.
//!
//! The transform is computed by the classic two-channel filter bank:
//! lowpass/highpass filtering followed by decimation, applied separably
//! along every axis and iterated on the approximation block. Every
//! single-level operator is described as a set of decimating *stencils*
//! (offset, weight) pairs so that the forward transform, its inverse and
//! the exact adjoint of the inverse share one driver.

mod filters;
mod pyramid;
pub(crate) mod transform;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, WamError};
use crate::signal::Modality;

pub use filters::{Filter, FilterBank};
pub use pyramid::{
    spatial_projection, topk_reconstruct, BlockInfo, CoeffLayout, FlatCoeffs, WaveletPyramid,
};
pub use transform::{dwt, dwt_adjoint, idwt, idwt_adjoint};

/// Mother wavelet family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "haar")]
    Haar,
    #[serde(rename = "db2")]
    Db2,
    #[serde(rename = "bior2.2")]
    Bior22,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Haar, Family::Db2, Family::Bior22];

    pub fn name(self) -> &'static str {
        match self {
            Family::Haar => "haar",
            Family::Db2 => "db2",
            Family::Bior22 => "bior2.2",
        }
    }

    /// Orthonormal families have synthesis = transpose of analysis.
    pub fn is_orthonormal(self) -> bool {
        !matches!(self, Family::Bior22)
    }

    pub fn filter_bank(self) -> FilterBank {
        FilterBank::for_family(self)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = WamError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "haar" | "db1" => Ok(Family::Haar),
            "db2" => Ok(Family::Db2),
            "bior2.2" => Ok(Family::Bior22),
            _ => Err(WamError::UnsupportedFamily(s.to_string())),
        }
    }
}

/// Boundary extension rule. Only periodization is supported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    #[default]
    Periodization,
}

/// Wavelet family, decomposition depth and boundary rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WaveletSpec {
    pub family: Family,
    pub levels: usize,
    #[serde(default)]
    pub boundary: Boundary,
}

impl WaveletSpec {
    pub fn new(family: Family, levels: usize) -> Self {
        Self {
            family,
            levels,
            boundary: Boundary::Periodization,
        }
    }

    /// Default depth per modality: 5 for audio, 3 for images, 2 for volumes.
    pub fn default_for(family: Family, modality: Modality) -> Self {
        let levels = match modality {
            Modality::Audio => 5,
            Modality::Image => 3,
            Modality::Volume => 2,
        };
        Self::new(family, levels)
    }

    /// Checks that `shape` can be decomposed `levels` times.
    pub fn validate(&self, shape: &[usize]) -> Result<()> {
        crate::signal::check_shape(shape)?;
        if self.levels == 0 {
            return Err(WamError::InvalidArgument(
                "wavelet levels must be at least 1".into(),
            ));
        }
        let step = 1usize
            .checked_shl(self.levels as u32)
            .filter(|s| *s > 0)
            .ok_or_else(|| WamError::InvalidArgument("too many levels".into()))?;
        for (dim, &n) in shape.iter().enumerate() {
            if n % step != 0 {
                return Err(WamError::DimensionNotDyadic {
                    shape: shape.to_vec(),
                    dim,
                    levels: self.levels,
                });
            }
        }
        Ok(())
    }
}
