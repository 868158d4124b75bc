use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = WamError> = std::result::Result<T, E>;

/// Every failure the toolkit can report.
///
/// Variants are grouped by the subsystem that raises them; the CLI maps
/// them onto exit codes through [`WamError::kind`].
#[derive(Debug, Error)]
pub enum WamError {
    #[error("invalid signal shape {shape:?}: {reason}")]
    InvalidShape { shape: Vec<usize>, reason: String },
    #[error("signal contains non-finite values")]
    NonFiniteValues,
    #[error("dimension {dim} of shape {shape:?} is not divisible by 2^{levels}")]
    DimensionNotDyadic {
        shape: Vec<usize>,
        dim: usize,
        levels: usize,
    },
    #[error("unsupported wavelet family `{0}`")]
    UnsupportedFamily(String),
    #[error("malformed pyramid: {0}")]
    MalformedPyramid(String),
    #[error("coefficient layout mismatch: expected {expected} values, got {actual}")]
    LayoutMismatch { expected: usize, actual: usize },
    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error("signal is silent (zero RMS); cannot scale noise")]
    SilentSignal,
    #[error("external worker failure: {0}")]
    ExternalWorkerFailure(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("training loss diverged at epoch {epoch}")]
    DivergedLoss { epoch: usize },
    #[error("unknown layer `{0}`")]
    UnknownLayer(String),
    #[error("class {class} out of range for a model with {num_classes} classes")]
    ClassOutOfRange { class: usize, num_classes: usize },
    #[error("attribution is all zero; normalization undefined")]
    AllZeroAttribution,
    #[error("degenerate variance: correlation undefined")]
    DegenerateVariance,
    #[error("bounding box is empty")]
    EmptyBox,
    #[error("loss became non-finite at step {step}")]
    NonFiniteLoss { step: usize },
    #[error("need at least 2 samples, got {0}")]
    InsufficientSamples(usize),
    #[error("missing artifact: {0}")]
    MissingArtifact(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("format error in {path}: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Coarse failure category, used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Backend,
}

impl WamError {
    pub fn kind(&self) -> ErrorKind {
        use WamError::*;
        match self {
            InvalidArgument(_) | UnknownLayer(_) | ClassOutOfRange { .. } | MissingArtifact(_)
            | UnsupportedFamily(_) => ErrorKind::Usage,
            ExternalWorkerFailure(_) | DivergedLoss { .. } | NonFiniteLoss { .. } => {
                ErrorKind::Backend
            }
            _ => ErrorKind::Data,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        WamError::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
