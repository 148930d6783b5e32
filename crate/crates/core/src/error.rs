use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    /// A required column is missing from the input header.
    #[error("missing required column `{column}`")]
    Schema { column: String },

    /// A cell could not be parsed. `row` is the 1-based line number in the file.
    #[error("line {row}: cannot parse `{value}` in column `{column}`")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },

    /// A record violates a data invariant.
    #[error("subject `{subject_id}`: {invariant}")]
    Validation {
        subject_id: String,
        invariant: String,
    },

    /// Long-format transition rows are inconsistent.
    #[error("subject `{subject_id}`: {message}")]
    Format { subject_id: String, message: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("no events in the fitting sample")]
    NoEvents,

    /// The Cox information matrix is singular; `direction` is the eigenvector of
    /// the smallest eigenvalue, expressed over the model terms.
    #[error("singular information matrix (eigenvalue {eigenvalue:.3e}) along direction {direction:?} over terms {terms:?}")]
    SingularHessian {
        direction: Vec<f64>,
        eigenvalue: f64,
        terms: Vec<String>,
    },

    #[error("Newton-Raphson did not converge after {iterations} iterations (last beta {beta:?}, loglik {loglik})")]
    NonConvergence {
        iterations: usize,
        beta: Vec<f64>,
        loglik: f64,
    },

    #[error("arm {arm} has no subjects")]
    EmptyArm { arm: u8 },

    #[error("arm {arm} has {found} cluster(s); at least 2 are required")]
    TooFewClusters { arm: u8, found: usize },

    #[error("{failed} of {total} jackknife replicates failed; first failure: {}", diagnostics.first().map(String::as_str).unwrap_or("unknown"))]
    ReplicateFailures {
        failed: usize,
        total: usize,
        diagnostics: Vec<String>,
    },
}

impl Error {
    /// True for errors caused by malformed or inconsistent user input, as opposed
    /// to failures of the estimation itself.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Io(_)
                | Error::Csv(_)
                | Error::Json(_)
                | Error::Schema { .. }
                | Error::Parse { .. }
                | Error::Validation { .. }
                | Error::Format { .. }
                | Error::InvalidInput(_)
        )
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
