use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("final depth {depth} is not positive")]
    InvalidDepth { depth: f64 },

    #[error("triangulation needs at least 2 rays, got {rays}")]
    NeedFallback { rays: usize },

    #[error("ray bundle is degenerate (condition number {condition:e})")]
    DegenerateRays { condition: f64 },

    #[error("quaternion mean has near-zero norm {norm:e}")]
    DegenerateAverage { norm: f64 },

    #[error("degenerate alignment: {0}")]
    DegenerateAlignment(String),

    #[error("joint projects behind the camera (depth {depth})")]
    BehindCamera { depth: f64 },

    #[error("invalid camera: {0}")]
    InvalidCamera(String),

    #[error("invalid body parameters: {0}")]
    InvalidBody(String),

    #[error("no valid head-pelvis pairs for scale estimation")]
    NoValidPairs,

    #[error("cannot stitch chunk {boundary} onto chunk {prev}: {reason}")]
    StitchFailure {
        prev: usize,
        boundary: usize,
        reason: String,
    },

    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("malformed input: {0}")]
    Input(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("{stage} stage failed: {source}")]
    Pipeline {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl Error {
    /// Process exit code: 2 for configuration, 4 for evaluation, 3 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } => 2,
            Error::Evaluation(_) => 4,
            Error::Pipeline { source, .. } if matches!(**source, Error::Config { .. }) => 2,
            _ => 3,
        }
    }
}
