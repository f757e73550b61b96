use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("particle {particle} blew up at step {step}")]
    BlowUp { particle: usize, step: usize },

    #[error("root solver failed: {0}")]
    Solver(String),

    #[error("fixed point did not converge after {iters} iterations (last residual {last_residual:e})")]
    Convergence {
        iters: usize,
        last_residual: f64,
        residuals: Vec<f64>,
    },

    #[error("offline fit diverged at iteration {iter} (loss {loss})")]
    Divergence { iter: usize, loss: f64 },

    #[error("quadrature grid too narrow: endpoint weight {weight:e} exceeds {threshold:e}")]
    GridTooNarrow { weight: f64, threshold: f64 },

    #[error("degenerate test: {0}")]
    Degenerate(String),

    #[error("benchmark solve failed at subgrid index {index}: {source}")]
    AtSubgrid {
        index: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got })
    }
}
