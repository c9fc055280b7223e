use thiserror::Error;

/// Errors surfaced by the simulator and decoder.
#[derive(Debug, Error)]
pub enum QncError {
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),

    #[error("no deployment with every node reaching the gateway after {attempts} attempts")]
    NonConvergence { attempts: usize },

    #[error("degenerate message ensemble: {0}")]
    Degenerate(String),

    #[error("pre-quantization value {value} on edge {edge} at t={t} exceeds q_max={q_max}")]
    OverflowViolation {
        edge: usize,
        t: usize,
        value: f64,
        q_max: f64,
    },

    #[error("decoder infeasible: distance to range {distance} exceeds radius {radius}")]
    Infeasible { distance: f64, radius: f64 },

    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),

    #[error("combinatorial budget exceeded: {0}")]
    BudgetExceeded(String),

    #[error("node {0} cannot reach the gateway")]
    UnreachableNode(usize),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("{context}: {source}")]
    Trial {
        context: String,
        #[source]
        source: Box<QncError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl QncError {
    pub fn with_context(self, context: impl Into<String>) -> Self {
        QncError::Trial {
            context: context.into(),
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, QncError>;
