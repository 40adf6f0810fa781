use std::path::PathBuf;

use thiserror::Error;

use crate::types::{SampleId, SubjectId, TemplateId};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("subject {0} has no contributing records for its class center")]
    MissingCenter(SubjectId),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("degenerate vector (zero norm or non-finite entries)")]
    DegenerateVector,

    #[error("no impostor class center available (need at least two subjects)")]
    NoImpostor,

    #[error("sample {sample}: {source}")]
    AtSample {
        sample: SampleId,
        #[source]
        source: Box<Error>,
    },

    #[error("calibration pool is degenerate: {0}")]
    CalibrationDegenerate(&'static str),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("template {0} has no samples")]
    EmptyTemplate(TemplateId),

    #[error("sample {sample} has no {kind} score")]
    MissingScore {
        sample: SampleId,
        kind: &'static str,
    },

    #[error("correlation is undefined for constant input")]
    UndefinedCorrelation,

    #[error("validation targets are constant; Spearman correlation is undefined")]
    DegenerateTarget,

    #[error("training diverged at epoch {epoch} (non-finite loss)")]
    Divergence { epoch: usize },

    #[error("subject {0} has no comparand on one side of the pairing")]
    Pairing(SubjectId),

    #[error("bad magic bytes: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),

    #[error("truncated payload: need {expected} bytes, have {actual}")]
    Truncated { expected: u64, actual: u64 },

    #[error("{0} unexpected trailing bytes after payload")]
    TrailingBytes(u64),

    #[error("duplicate sample id {0}")]
    DuplicateSampleId(SampleId),

    #[error("records are not in ascending sample id order at sample {0}")]
    Unordered(SampleId),

    #[error("unknown role code {0}")]
    InvalidRole(u8),

    #[error("unknown flag bits {0:#x}")]
    InvalidFlags(u32),

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn at_sample(self, sample: SampleId) -> Self {
        Error::AtSample {
            sample,
            source: Box::new(self),
        }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
