use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the audit kernels and their file loaders.
#[derive(Debug, Error)]
pub enum Error {
    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),
    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("duplicate image id `{0}`")]
    DuplicateId(String),
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("multi-channel input ({channels} channels) where a single-channel map was expected: {}", path.display())]
    MultiChannelInput { path: PathBuf, channels: u8 },
    #[error("target dimensions must be nonzero, got {width}x{height}")]
    ZeroTargetDimension { width: u32, height: u32 },
    #[error("dimension mismatch: {left_w}x{left_h} vs {right_w}x{right_h}")]
    DimensionMismatch {
        left_w: u32,
        left_h: u32,
        right_w: u32,
        right_h: u32,
    },
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("score {0} outside [0, 1]")]
    OutOfRange(f64),
    #[error("invalid map: {0}")]
    InvalidMap(String),
    #[error("responses reference more than one image: `{0}` and `{1}`")]
    MixedImageIds(String, String),
    #[error("invalid response: {0}")]
    InvalidResponse(String),
    #[error("tag trial has {have} tags, need at least {need}")]
    TooFewTags { have: usize, need: usize },
    #[error("invalid tag trial: {0}")]
    InvalidTrial(String),
    #[error("trial count mismatch: pristine has {pristine}, tampered has {tampered}")]
    TrialCountMismatch { pristine: usize, tampered: usize },
    #[error("image id mismatch: `{0}` vs `{1}`")]
    ImageIdMismatch(String, String),
    #[error("expected {expected} report, got {found}")]
    VariantMismatch {
        expected: &'static str,
        found: &'static str,
    },
    #[error("image `{image_id}` has no `{kind}` artifact")]
    MissingArtifact { image_id: String, kind: String },
    #[error("image `{0}` has no saliency assignment")]
    MissingAssignment(String),
    #[error("before/after runs cover different image sets ({0})")]
    ImageSetMismatch(String),
    #[error("cannot write {}: {source}", path.display())]
    UnwritablePath { path: PathBuf, source: std::io::Error },
    #[error("i/o error on {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("image decode error on {}: {message}", path.display())]
    Decode { path: PathBuf, message: String },
}

impl Error {
    /// Stable identifier used in machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::MissingFile(_) => "MissingFile",
            Error::Parse { .. } => "ParseError",
            Error::DuplicateId(_) => "DuplicateId",
            Error::UnsupportedFormat(_) => "UnsupportedFormat",
            Error::MultiChannelInput { .. } => "MultiChannelInput",
            Error::ZeroTargetDimension { .. } => "ZeroTargetDimension",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::EmptyInput(_) => "EmptyInput",
            Error::OutOfRange(_) => "OutOfRange",
            Error::InvalidMap(_) => "InvalidMap",
            Error::MixedImageIds(..) => "MixedImageIds",
            Error::InvalidResponse(_) => "SchemaViolation",
            Error::TooFewTags { .. } => "TooFewTags",
            Error::InvalidTrial(_) => "InvalidTrial",
            Error::TrialCountMismatch { .. } => "TrialCountMismatch",
            Error::ImageIdMismatch(..) => "ImageIdMismatch",
            Error::VariantMismatch { .. } => "VariantMismatch",
            Error::MissingArtifact { .. } => "MissingArtifact",
            Error::MissingAssignment(_) => "MissingAssignment",
            Error::ImageSetMismatch(_) => "ImageSetMismatch",
            Error::UnwritablePath { .. } => "UnwritablePath",
            Error::Io { .. } => "IoError",
            Error::Decode { .. } => "DecodeError",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path)
        } else {
            Error::Io { path, source }
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
