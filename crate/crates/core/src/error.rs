use thiserror::Error;

/// Errors raised by the solver stack.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("singular triangular factor in {0}")]
    SingularFactor(&'static str),

    #[error("singular innovation covariance")]
    SingularInnovation,

    #[error("degenerate predicted covariance in smoothing gain")]
    DegeneratePrediction,

    #[error("degenerate observation while building filtering element")]
    DegenerateObservation,

    #[error("singular block while combining filtering elements")]
    CombinationSingular,

    #[error("linearization failed at t = {t} (time index {index}{})", iteration.map(|i| format!(", iteration {i}")).unwrap_or_default())]
    Linearization {
        t: f64,
        index: usize,
        iteration: Option<usize>,
    },

    #[error("initial derivatives unavailable: {0}")]
    TaylorInit(String),

    #[error("scan failed on elements {start}..={end}: {source}")]
    Scan {
        start: usize,
        end: usize,
        source: Box<Error>,
    },

    #[error("reference solution not converged: endpoint changed by {change:e} on halving the step")]
    ReferenceNotConverged { change: f64 },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_dim(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            actual,
        })
    }
}
