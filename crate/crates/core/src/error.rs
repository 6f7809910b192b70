use std::path::PathBuf;

use crate::{Doctor, Hospital};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("doctor {0} has already drawn every hospital")]
    ExhaustedDoctor(Doctor),

    #[error("malformed preference list for {owner}: {reason}")]
    MalformedPermutation { owner: String, reason: String },

    #[error("instance file line {line}: {reason}")]
    InstanceParse { line: usize, reason: String },

    #[error("market shape {num_doctors}x{num_hospitals} is invalid: {reason}")]
    InvalidShape {
        num_doctors: u32,
        num_hospitals: u32,
        reason: String,
    },

    #[error("loyalty {k} is outside [0, {max}]")]
    InvalidLoyalty { k: u64, max: u32 },

    #[error("instance with {num_doctors} doctors and {num_hospitals} hospitals exceeds the enumeration limit of {limit}")]
    SizeLimit {
        num_doctors: u32,
        num_hospitals: u32,
        limit: u32,
    },

    #[error("the run has already terminated")]
    Terminated,

    #[error("invalid matching: {0}")]
    InvalidMatching(String),

    #[error("matching pairs {0} and {1} conflict")]
    ConflictingPair(Doctor, Hospital),

    #[error("invalid experiment: {0}")]
    InvalidSpec(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
