use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("series of {len} samples is shorter than the smoothing window ({window})")]
    SignalTooShort { len: usize, window: usize },
    #[error("trajectory {callsign} is not sampled at a uniform 1 Hz")]
    IrregularSampling { callsign: String },
    #[error("invalid trajectory: {0}")]
    BadTrajectory(String),
    #[error("invalid coordinate ({lat}, {lon})")]
    BadCoordinate { lat: f64, lon: f64 },
    #[error("bearing between coincident points is undefined")]
    UndefinedBearing,
    #[error("time {t} is outside the trajectory span [{start}, {end}]")]
    OutOfRange { t: f64, start: f64, end: f64 },
    #[error("fewer than two track points in the history window")]
    EmptyWindow,
    #[error("target aircraft {0} is not among the supplied states")]
    TargetMissing(String),
    #[error("sample dropped: {0}")]
    SampleDropped(String),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("no training data")]
    NoData,
    #[error("ensemble category {0} has no members")]
    IncompleteEnsemble(String),
    #[error("unknown feature slot {0:?}")]
    BadSlot(String),
    #[error("predicted duration must be positive, got {0}")]
    BadDuration(f64),
    #[error("workload window must be positive, got {0}")]
    BadWindow(f64),
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error("malformed input {path}: {msg}")]
    Format { path: String, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn format(path: impl AsRef<std::path::Path>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.as_ref().display().to_string(),
            msg: msg.into(),
        }
    }

    /// True for failures caused by the filesystem rather than by the data.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_)) || matches!(self, Error::Csv(e) if e.is_io_error())
    }
}
