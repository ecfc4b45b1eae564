use thiserror::Error;

/// Errors raised across the library. `is_validation` separates bad input
/// from numerical-contract failures so front ends can map them to exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0} vs {1} qubits")]
    Dimension(usize, usize),
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("resource limit: {0}")]
    Resource(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("degenerate commutator: [H_T, H_S] has vanishing norm")]
    DegenerateCommutator,
    #[error("no matching: s + lambda_dot * alpha = {0} is not negative")]
    NoMatching(f64),
    #[error("edge singularity: lambda_bar = {0} too close to an endpoint")]
    EdgeSingularity(f64),
    #[error("infeasible depth: {0}")]
    InfeasibleDepth(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Dimension(..) | Error::Validation(_) | Error::Resource(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
