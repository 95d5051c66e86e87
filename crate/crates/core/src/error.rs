use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the sedkit library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("class map must not be empty")]
    EmptyClassMap,
    #[error("class label must not be empty")]
    EmptyLabel,
    #[error("duplicate class label `{0}`")]
    DuplicateLabel(String),
    #[error("unknown class label `{0}`")]
    UnknownClass(String),

    #[error("invalid time grid: {0}")]
    InvalidGrid(String),
    #[error("posterior matrix is empty")]
    EmptyClip,
    #[error("class dimension mismatch: class map has {expected} classes, matrix has {found} columns")]
    ClassDimensionMismatch { expected: usize, found: usize },
    #[error("probability out of range at frame {frame}, class {class}: {value}")]
    ProbabilityOutOfRange { frame: usize, class: usize, value: f64 },

    #[error("invalid event `{label}` [{onset}, {offset}): onset must satisfy 0 <= onset < offset")]
    InvalidEvent { label: String, onset: f64, offset: f64 },
    #[error("event `{label}` [{onset}, {offset}) lies outside the grid of {frames} frames ({duration} s)")]
    EventOutsideGrid {
        label: String,
        onset: f64,
        offset: f64,
        frames: usize,
        duration: f64,
    },

    #[error("sequence must not be empty")]
    EmptySequence,
    #[error("gradient undefined: {0}")]
    GradientUndefined(String),

    #[error("invalid subsampling operator: {0}")]
    InvalidKind(String),
    #[error("window has {found} elements but the convolution kernel needs {expected}")]
    WindowSizeMismatch { expected: usize, found: usize },
    #[error("lp requires non-negative input for fractional p")]
    NegativeLpInput,
    #[error("unsupported subsampling factor {0}; expected one of 1, 2, 4, 8, 16")]
    UnsupportedFactor(u32),
    #[error("invalid layer sequence {0:?}")]
    InvalidLayers([u32; 4]),

    #[error("window must be odd, got {0}")]
    EvenWindow(usize),
    #[error("invalid post-processing parameters: {0}")]
    InvalidParams(String),

    #[error("fusion needs at least two clips, got {0}")]
    FuseTooFew(usize),
    #[error("cannot fuse clips: {0}")]
    FuseMismatch(String),

    #[error("invalid evaluation parameters: {0}")]
    InvalidEvalParams(String),
    #[error("class `{0}` is not assigned to a duration bucket")]
    MissingBucket(String),

    #[error("infeasible synthesis spec: {0}")]
    InfeasibleSpec(String),
    #[error("invalid synthesis spec: {0}")]
    InvalidSpec(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
