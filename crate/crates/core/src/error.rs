use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    #[error("resolution of {bits} bits is outside the supported range {min}..={max}")]
    InvalidResolution { bits: u32, min: u32, max: u32 },

    #[error("coordinate {coord:?} does not fit in {bits} bits per dimension")]
    CoordinateOutOfRange { coord: [i64; 3], bits: u32 },

    #[error("{path}:{line}: {message}")]
    Ply {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("point cloud is empty")]
    EmptyCloud,

    #[error("image shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("block ({m}, {n}) is outside a {width}x{height} image")]
    BlockOutOfRange {
        m: usize,
        n: usize,
        width: usize,
        height: usize,
    },

    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),

    #[error("weight blob holds {actual} bytes, architecture needs {expected}")]
    WeightLength { expected: usize, actual: usize },

    #[error("context histogram store is empty")]
    EmptyStore,

    #[error("cannot quantize pmf: {0}")]
    InvalidPmf(String),

    #[error("symbol {0} is outside the 16-symbol alphabet")]
    InvalidSymbol(u8),

    #[error("symbol and pmf sequences differ in length ({symbols} vs {pmfs})")]
    LengthMismatch { symbols: usize, pmfs: usize },

    #[error("arithmetic-coded stream is truncated")]
    TruncatedStream,

    #[error("{0} unread bytes after the end of the arithmetic-coded stream")]
    TrailingData(usize),

    #[error("corrupt frame payload: {0}")]
    CorruptPayload(String),

    #[error("bad bitstream: {0}")]
    Format(String),

    #[error("frame index {index} out of range for {count} frames")]
    FrameIndex { index: usize, count: usize },

    #[error("sequence has no frames")]
    EmptySequence,

    #[error("frame {0} has no points, bits per point is undefined")]
    ZeroPoints(usize),
}
