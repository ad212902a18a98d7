use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("I/O error on {path}: {source}")]
    IoAt {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("NRRD: {0}")]
    Nrrd(String),

    #[error("payload length mismatch: expected {expected} bytes, found {actual}")]
    PayloadLength { expected: usize, actual: usize },

    #[error("unknown label code {code} at voxel {index}")]
    UnknownLabel { code: u8, index: usize },

    #[error("likelihood value {value} at voxel {index} outside [0, 1]")]
    NotLikelihood { index: usize, value: f32 },

    #[error("geometry mismatch: {0}")]
    GeometryMismatch(String),

    #[error("physical extent mismatch: {0}")]
    ExtentMismatch(String),

    #[error("empty mask: {0}")]
    EmptyMask(&'static str),

    #[error("box {lo:?}..={hi:?} outside volume dims {dims:?}")]
    BoxOutOfBounds {
        lo: [usize; 3],
        hi: [usize; 3],
        dims: [usize; 3],
    },

    #[error("linear interpolation is not defined for label volumes")]
    LinearOnLabels,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("no ground-truth lesions in the evaluated cases")]
    NoLesions,

    #[error("tumor did not fit inside the pancreas after {0} attempts")]
    PhantomFit(usize),

    #[error("{} case(s) failed:\n{}", .0.len(), .0.iter().map(|e| format!("  {e}")).collect::<Vec<_>>().join("\n"))]
    CaseFailures(Vec<Error>),

    #[error("case {case}: {source}")]
    Case {
        case: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io_at(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::IoAt {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_case(self, case: &str) -> Self {
        Error::Case {
            case: case.to_string(),
            source: Box::new(self),
        }
    }
}
