//! Wavelet attribution method (WAM) toolkit.
//!
//! Explains differentiable classifiers over 1D, 2D and 3D signals by taking
//! gradients with respect to discrete wavelet coefficients, and evaluates
//! those explanations with insertion/deletion style faithfulness metrics.

pub mod attribution;
pub mod datasets;
pub mod error;
pub mod experiments;
pub mod io;
pub mod metrics;
pub mod model;
pub mod perturbation;
pub mod ranking;
pub mod sanity;
pub mod signal;
pub mod wavelet;

pub use error::{ErrorKind, Result, WamError};
pub use signal::{add_gaussian_noise, Modality, Signal};
pub use wavelet::{
    dwt, idwt, idwt_adjoint, spatial_projection, topk_reconstruct, Family, FlatCoeffs,
    WaveletPyramid, WaveletSpec,
};
