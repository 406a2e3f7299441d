use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("malformed instance document: {0}")]
    Malformed(String),
    #[error("denominator x'Px = {0:e} is too close to zero")]
    DenominatorZero(f64),
    #[error("matrix is not positive semidefinite (smallest eigenvalue {0:e})")]
    NotPsd(f64),
    #[error("matrix is not positive definite (smallest eigenvalue {0:e})")]
    NotPd(f64),
    #[error("LDL factorization broke down at pivot {0}")]
    PivotBreakdown(usize),
    #[error("feasible set is empty")]
    Infeasible,
    #[error("feasible set is unbounded")]
    Unbounded,
    #[error("starting point is infeasible (violation {0:e})")]
    InfeasibleStart(f64),
    #[error("{patterns} sign patterns exceed the enumeration budget of {budget}")]
    RegionOverflow { patterns: u128, budget: u128 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid generator spec: {0}")]
    Generator(String),
    #[error("solver failed: {0}")]
    Solver(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
