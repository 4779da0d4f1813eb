use std::path::PathBuf;

use crate::image::Channel;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("pixel ({row}, {col}) outside {width}x{height} frame")]
    OutOfBounds {
        row: usize,
        col: usize,
        width: usize,
        height: usize,
    },

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("geometry mismatch: {left:?} vs {right:?}")]
    GeometryMismatch {
        left: (usize, usize, usize),
        right: (usize, usize, usize),
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("lens distortion k1={k1}, k2={k2} is not monotone inside the frame")]
    NonMonotoneDistortion { k1: f64, k2: f64 },

    #[error("singular or ill-conditioned color matrix (condition number {condition})")]
    SingularMatrix { condition: f64 },

    #[error("channel {channel:?} has only {usable} usable bins (need {required}); occupancy {occupancy:?}")]
    InsufficientBins {
        channel: Channel,
        usable: usize,
        required: usize,
        occupancy: Vec<usize>,
    },

    #[error("negative modeled variance {variance} for channel {channel:?}")]
    NegativeVariance { channel: Channel, variance: f64 },

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("png: {0}")]
    Png(String),
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
