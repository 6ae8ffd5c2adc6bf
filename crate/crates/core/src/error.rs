use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{field} out of range: {value}")]
    OutOfRange { field: &'static str, value: f64 },

    #[error("{field} is not finite")]
    NotFinite { field: &'static str },

    #[error("exposure shorter than dead time ({exposure_s} s <= {dead_time_s} s)")]
    ExposureShorterThanDeadTime { exposure_s: f64, dead_time_s: f64 },

    #[error("jitter_sigma must be smaller than dead_time ({sigma_s} s >= {dead_time_s} s)")]
    JitterTooLarge { sigma_s: f64, dead_time_s: f64 },

    #[error("exposure {exposure_s} s is not an integer multiple of bin width {bin_width_s} s")]
    ExposureNotBinMultiple { exposure_s: f64, bin_width_s: f64 },

    #[error("config line {line}: {message}")]
    ConfigSyntax { line: usize, message: String },

    #[error("config line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },

    #[error("config is missing required key `{0}`")]
    MissingKey(&'static str),

    #[error("exact count distribution needs {support} terms, above the cap of {cap}; use a smaller T/tau_d or the approximate model")]
    SupportTooLarge { support: u64, cap: u64 },

    #[error("insufficient detections: need at least 2, got {0}")]
    InsufficientDetections(usize),

    #[error("mean gap at or below dead time ({mean_gap_s} s <= {dead_time_s} s)")]
    MeanGapAtOrBelowDeadTime { mean_gap_s: f64, dead_time_s: f64 },

    #[error("count exceeds exposure capacity ({count} counts, capacity {capacity})")]
    CountExceedsCapacity { count: u64, capacity: u64 },

    #[error("all bins full, estimator diverges ({count} of {bins})")]
    AllBinsFull { count: u64, bins: u64 },

    #[error("count {count} outside admissible range {min}..={max}")]
    CountOutOfRange { count: u64, min: u64, max: u64 },

    #[error("invalid timestamps: {0}")]
    InvalidTrace(String),

    #[error("snr undefined: rmse must be positive and finite (got {0})")]
    InvalidRmse(f64),

    #[error("unknown model tag `{0}`")]
    UnknownModel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed PFM: {0}")]
    Pfm(String),

    #[error("malformed CSV: {0}")]
    Csv(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: png encoding failed: {source}", path.display())]
    Png {
        path: PathBuf,
        #[source]
        source: png::EncodingError,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
