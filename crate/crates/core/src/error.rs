use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// The adaptive Lipschitz rule kept failing; `f` is most likely not
    /// Lipschitz smooth around the current iterate.
    #[error("Lipschitz estimate overflowed after {updates} updates (L = {lipschitz:e}); f looks nonsmooth")]
    Nonsmooth { updates: usize, lipschitz: f64 },

    #[error("evaluation produced a non-finite value: {0}")]
    NonFinite(String),
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got })
    }
}
