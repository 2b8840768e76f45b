use thiserror::Error;

/// Errors raised by recurrence construction, quadrature and diagnostics.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("arithmetic overflow computing {0}")]
    Overflow(String),

    #[error("measure degenerate at degree {degree}: {detail}")]
    Degenerate { degree: usize, detail: String },

    /// A matrix that must have full rank lost it (rank condition, singular Lambda, T_ii).
    #[error("rank deficiency at degree {degree}{}: {detail}", coord_suffix(*.coord))]
    RankDeficient {
        degree: usize,
        coord: Option<usize>,
        detail: String,
    },

    /// Cholesky breakdown of a Gram matrix. `degree` is the polynomial degree of the failing row.
    #[error("Gram matrix not numerically positive definite at degree {degree} (row {row})")]
    Conditioning { degree: usize, row: usize },

    #[error("consistency failure at degree {degree}: {detail}")]
    Consistency { degree: usize, detail: String },

    #[error("d=3 closure failed at degree {degree}: ||W^T W - I|| = {defect:e}")]
    ClosureFailure { degree: usize, defect: f64 },

    #[error("WOPP solver did not converge: residual {residual:e} after {iterations} iterations")]
    NonConvergence { residual: f64, iterations: usize },

    #[error("point cloud line {line}: {detail}")]
    Ingest { line: usize, detail: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn coord_suffix(coord: Option<usize>) -> String {
    match coord {
        Some(i) => format!(", coordinate {}", i + 1),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// True for failures caused by floating-point breakdown rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Degenerate { .. }
                | Error::RankDeficient { .. }
                | Error::Conditioning { .. }
                | Error::Consistency { .. }
                | Error::ClosureFailure { .. }
                | Error::NonConvergence { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
