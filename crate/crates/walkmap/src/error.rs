//! Crate-wide error type.

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("bounds have zero area")]
    ZeroAreaBounds,
    #[error("grid resolution must be positive, got {0}")]
    NonPositiveResolution(f64),
    #[error("grid resolution {resolution_m} m exceeds bounds extent {extent_m} m")]
    ResolutionTooCoarse { resolution_m: f64, extent_m: f64 },
    #[error("coordinates must be finite")]
    NonFiniteCoordinate,
    #[error("path segment endpoints coincide")]
    DegeneratePath,
    #[error("polygon needs at least 3 vertices, got {0}")]
    DegeneratePolygon(usize),
    #[error("fraction {0} outside [0, 1]")]
    FractionOutOfRange(f64),
    #[error("wifi RSS {0} dBm outside [-100, 0]")]
    RssOutOfRange(f64),
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("cutoff {cutoff_hz} Hz at or above Nyquist for sample spacing {dt_ms} ms")]
    CutoffAboveNyquist { cutoff_hz: f64, dt_ms: i64 },
    #[error("timestamps must be strictly increasing (violation at index {0})")]
    NonMonotoneTimestamps(usize),
    #[error("invalid detector config: {0}")]
    InvalidDetectorConfig(String),
    #[error("invalid walk window: t_start {t_start_ms} ms >= t_end {t_end_ms} ms")]
    InvalidWalkWindow { t_start_ms: i64, t_end_ms: i64 },
    #[error(
        "event at {t_ms} ms outside walk window [{t_start_ms}, {t_end_ms}] \
         beyond the {tolerance_ms} ms clamp tolerance"
    )]
    OutsideWalkWindow {
        t_ms: i64,
        t_start_ms: i64,
        t_end_ms: i64,
        tolerance_ms: i64,
    },
    #[error("stride tagging unavailable: walk has no step events")]
    StrideTaggingUnavailable,
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(String),
    #[error("covariance factorization failed after jitter escalation{}",
            .feature.as_deref().map(|f| format!(" (feature '{f}')")).unwrap_or_default())]
    Factorization { feature: Option<String> },
    #[error("hyperparameter fit failed: {0}")]
    FitFailed(String),
    #[error("feature '{feature}' failed to train: {source}")]
    FeatureTraining {
        feature: String,
        #[source]
        source: Box<Error>,
    },
    #[error("no features with enough observations to train")]
    NoTrainableFeatures,
    #[error("unknown feature '{0}' in this map")]
    UnknownFeature(String),
    #[error("map contains no wifi models")]
    NoWifiModels,
    #[error("imputation applies to wifi features only, got '{0}'")]
    NotWifiFeature(String),
    #[error("no usable features: query does not intersect the valid feature set")]
    NoFix,
    #[error("test set is empty")]
    EmptyTestSet,
    #[error("path leaves the walkable area")]
    PathOutsideWalkable,
    #[error("invalid environment: {0}")]
    InvalidEnvironment(String),
    #[error("invalid survey plan: {0}")]
    InvalidPlan(String),
    #[error("scan time must be positive, got {0} ms")]
    NonPositiveScanTime(f64),
    #[error("{path}:{line}: {msg}")]
    Malformed {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("unsupported schema version {found} (this build reads version {expected})")]
    SchemaVersion { found: u32, expected: u32 },
    #[error("I/O error on {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
