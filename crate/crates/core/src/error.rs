use std::path::PathBuf;

/// Errors raised by the models, solvers and experiment harness.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("infeasible instance: {constraint} ({detail})")]
    Infeasible {
        constraint: &'static str,
        detail: String,
    },

    #[error("curve fit failed: {0}")]
    Fit(String),

    #[error("curve fit did not converge after {iterations} iterations (best cost {best_cost:e})")]
    FitNotConverged {
        iterations: usize,
        best_cost: f64,
        best: crate::eh_model::FitResult,
    },

    #[error("line search stagnated: no step down to {floor:e} reduced the residual norm {norm:e}")]
    Stagnation { floor: f64, norm: f64 },

    #[error("dual search hit its iteration cap ({iterations}); {violation}")]
    DualCap { iterations: usize, violation: String },

    #[error("enumeration budget exceeded: {needed} > {budget}")]
    Budget { needed: f64, budget: f64 },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
