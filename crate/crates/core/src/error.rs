use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the pipeline stages.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt image {path}: {reason}")]
    CorruptImage { path: PathBuf, reason: String },
    #[error("region {x},{y} {width}x{height} at level {level} lies outside the slide")]
    OutOfBounds {
        x: u32,
        y: u32,
        width: u32,
        height: u32,
        level: usize,
    },
    #[error("image is empty")]
    EmptyImage,
    #[error("rectangle has zero area")]
    ZeroArea,
    #[error("no candidate patch locations: {0}")]
    NoCandidates(String),
    #[error("bandwidth must be positive, got {0}")]
    DegenerateBandwidth(f64),
    #[error("density model has no probability mass")]
    EmptyDensity,
    #[error("no tissue found")]
    NoTissue,
    #[error("rotated output side {0} is below the 8 px minimum")]
    DegenerateOutput(u32),
    #[error("image side {side} is smaller than the required {min}")]
    ImageTooSmall { side: u32, min: u32 },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("forward pass produced non-finite values")]
    NonFiniteOutput,
    #[error("manifest mismatch: {0}")]
    ManifestMismatch(String),
    #[error("weight blob truncated: expected {expected} bytes, found {found}")]
    TruncatedBlob { expected: u64, found: u64 },
    #[error("query {query} has {available} eligible neighbors, {required} required")]
    InsufficientNeighbors {
        query: usize,
        available: usize,
        required: usize,
    },
    #[error("set is empty")]
    EmptySet,
    #[error("need at least 2 slides, found {0}")]
    InsufficientSlides(usize),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("class {label} has {count} samples, fewer than {required}")]
    ClassTooSmall {
        label: String,
        count: usize,
        required: usize,
    },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Short machine-readable name, used in run reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::UnsupportedFormat(_) => "UnsupportedFormat",
            Error::CorruptImage { .. } => "CorruptImage",
            Error::OutOfBounds { .. } => "OutOfBounds",
            Error::EmptyImage => "EmptyImage",
            Error::ZeroArea => "ZeroArea",
            Error::NoCandidates(_) => "NoCandidates",
            Error::DegenerateBandwidth(_) => "DegenerateBandwidth",
            Error::EmptyDensity => "EmptyDensity",
            Error::NoTissue => "NoTissue",
            Error::DegenerateOutput(_) => "DegenerateOutput",
            Error::ImageTooSmall { .. } => "ImageTooSmall",
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::NonFiniteOutput => "NonFiniteOutput",
            Error::ManifestMismatch(_) => "ManifestMismatch",
            Error::TruncatedBlob { .. } => "TruncatedBlob",
            Error::InsufficientNeighbors { .. } => "InsufficientNeighbors",
            Error::EmptySet => "EmptySet",
            Error::InsufficientSlides(_) => "InsufficientSlides",
            Error::LengthMismatch(..) => "LengthMismatch",
            Error::ClassTooSmall { .. } => "ClassTooSmall",
            Error::Invalid(_) => "Invalid",
            Error::Io(_) => "Io",
            Error::Json(_) => "Json",
        }
    }
}
