use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate heading: forward axis within 1 degree of vertical")]
    DegenerateHeading,

    #[error("zero range: point coincides with the camera's horizontal position")]
    ZeroRange,

    #[error("degenerate allocentric frame: reference and facing coincide")]
    DegenerateFrame,

    #[error("empty trajectory")]
    EmptyTrajectory,

    #[error("empty track")]
    EmptyTrack,

    #[error("invalid microphone array: {0}")]
    InvalidArray(String),

    #[error("invalid audio clip: {0}")]
    InvalidClip(String),

    #[error("segment out of bounds: start {start}s duration {duration}s, clip length {clip}s")]
    SegmentOutOfBounds {
        start: f64,
        duration: f64,
        clip: f64,
    },

    #[error("silent segment: signal energy below the gate")]
    SilentSegment,

    #[error("undefined CDR: {0}")]
    UndefinedCdr(String),

    #[error("calibration failed: {0}")]
    CalibrationFailed(String),

    #[error("parse error at `{path}`: {message}")]
    Parse { path: String, message: String },

    #[error("clustering failed: all points classified as noise")]
    ClusterFailure,

    #[error("mode violation: {0}")]
    ModeViolation(String),

    #[error("unanswerable: {0}")]
    Unanswerable(String),

    #[error("missing template placeholder `{0}`")]
    MissingPlaceholder(String),

    #[error("evaluation input mismatch: {0}")]
    EvalMismatch(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("provider error: {0}")]
    Provider(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("wav error: {0}")]
    Wav(#[from] hound::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn parse(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
