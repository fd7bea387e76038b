use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point {t} lies outside the basis domain [{lo}, {hi}]")]
    Domain { t: f64, lo: f64, hi: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("data error{}: {message}", location(.row, .col))]
    Data {
        row: Option<usize>,
        col: Option<usize>,
        message: String,
    },

    #[error("parse error on line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("component {component} covariance is not positive-definite after ridge repair")]
    SingularCovariance { component: usize },

    #[error("component {component} starved: total responsibility {mass:e}")]
    StarvedComponent { component: usize, mass: f64 },

    #[error("all {} restarts failed: {}", .diagnostics.len(), .diagnostics.join("; "))]
    FitFailed { diagnostics: Vec<String> },

    #[error("estimated penalty slope {0:e} is not positive")]
    SlopeEstimation(f64),

    #[error("every g in the sweep failed: {}", .0.join("; "))]
    SweepFailed(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn location(row: &Option<usize>, col: &Option<usize>) -> String {
    match (row, col) {
        (Some(r), Some(c)) => format!(" at row {r}, column {c}"),
        (Some(r), None) => format!(" at row {r}"),
        (None, Some(c)) => format!(" at column {c}"),
        (None, None) => String::new(),
    }
}

impl Error {
    pub fn data(message: impl Into<String>) -> Self {
        Error::Data {
            row: None,
            col: None,
            message: message.into(),
        }
    }

    pub fn data_at(row: usize, col: Option<usize>, message: impl Into<String>) -> Self {
        Error::Data {
            row: Some(row),
            col,
            message: message.into(),
        }
    }

    /// True for failures caused by the input or its configuration rather
    /// than by the fitting procedure.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Domain { .. }
                | Error::Config(_)
                | Error::Data { .. }
                | Error::Parse { .. }
                | Error::InsufficientData(_)
                | Error::Io(_)
                | Error::Json(_)
        )
    }
}
