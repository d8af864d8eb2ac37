use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed manifest {path}: {reason}")]
    Manifest { path: PathBuf, reason: String },

    #[error("empty frame list in manifest {0}")]
    EmptyFrameList(PathBuf),

    #[error("unsupported PPM variant {magic:?} in {path} (only binary P6 is accepted)")]
    UnsupportedPpm { path: PathBuf, magic: String },

    #[error("malformed PPM header in {path}: {reason}")]
    PpmHeader { path: PathBuf, reason: String },

    #[error("truncated pixel data in {path}: expected {expected} bytes, found {found}")]
    TruncatedPixels {
        path: PathBuf,
        expected: usize,
        found: usize,
    },

    #[error("frame dimension mismatch: expected {expected_w}x{expected_h}, got {got_w}x{got_h}")]
    DimensionMismatch {
        expected_w: usize,
        expected_h: usize,
        got_w: usize,
        got_h: usize,
    },

    #[error(
        "dimensions not divisible by patch size: {width}x{height} with P={patch_size}; \
         re-encode the frames to a multiple of the patch size"
    )]
    NotDivisible {
        width: usize,
        height: usize,
        patch_size: usize,
    },

    #[error("invalid frame: {0}")]
    InvalidFrame(String),

    #[error("unknown scenario {0:?} (expected static, moving_square, noise or composite)")]
    UnknownScenario(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("half overflow: {0} is outside the binary16 finite range")]
    HalfOverflow(f32),

    #[error("cache shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("frame {frame} is out of order (last committed frame is {last})")]
    OutOfOrder { frame: usize, last: usize },

    #[error("frame {0} is already committed")]
    DuplicateFrame(usize),

    #[error("unknown source frame {0}")]
    UnknownSource(usize),

    #[error("frame {frame} cannot reuse frame {source_frame}: forward reference")]
    ForwardReference { frame: usize, source_frame: usize },

    #[error("unknown cache entry (frame {frame}, patch {patch}, layer {layer})")]
    UnknownEntry {
        frame: usize,
        patch: usize,
        layer: usize,
    },

    #[error("no attendable tokens")]
    NoAttendableTokens,

    #[error("attention row sums to {sum}, expected 1")]
    RowSum { sum: f64 },

    #[error("ledger does not cover live token {0}")]
    LedgerMismatch(usize),

    #[error("report serialization failed: {0}")]
    Serialize(String),

    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 1 configuration, 2 I/O, 3 internal invariant.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. }
            | Error::Manifest { .. }
            | Error::EmptyFrameList(_)
            | Error::UnsupportedPpm { .. }
            | Error::PpmHeader { .. }
            | Error::TruncatedPixels { .. }
            | Error::Serialize(_) => 2,
            Error::Invariant(_) | Error::RowSum { .. } | Error::LedgerMismatch(_) => 3,
            _ => 1,
        }
    }
}
