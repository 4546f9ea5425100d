use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad failure classes, used for CLI exit codes and FFI status codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad, missing or inconsistent input data or configuration.
    Input,
    /// A numerical stage failed (singular system, degenerate geometry).
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("pixel ({u}, {v}) has no valid depth")]
    InvalidPixel { u: u32, v: u32 },

    #[error("point is behind the camera (z = {z})")]
    BehindCamera { z: f64 },

    #[error("deformed vertex {vertex} of group {group} is behind the camera (z = {z})")]
    VertexBehindCamera { group: u32, vertex: usize, z: f64 },

    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("no pixel is valid in both maps")]
    NoOverlap,

    #[error("image {width}x{height} is smaller than the {kernel}-pixel smoothing kernel")]
    InputTooSmall {
        width: usize,
        height: usize,
        kernel: usize,
    },

    #[error("requested {requested} samples but only {available} valid pixels exist")]
    InsufficientPixels { requested: usize, available: usize },

    #[error("invalid scene: {0}")]
    InvalidScene(String),

    #[error("triangulation needs at least 3 vertices, got {count}")]
    TooFewVertices { count: usize },

    #[error("all input points are collinear")]
    CollinearPoints,

    #[error("triangle {triangle} has zero area")]
    DegenerateTriangle { triangle: usize },

    #[error("singular system in component {component}: {detail}")]
    SingularSystem { component: usize, detail: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::VertexBehindCamera { .. }
            | Error::CollinearPoints
            | Error::DegenerateTriangle { .. }
            | Error::SingularSystem { .. } => ErrorKind::Numerical,
            _ => ErrorKind::Input,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}
