use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-conforming mesh: {0}")]
    NonConforming(String),
    #[error("degenerate tetrahedron {tet}: volume {volume:e}")]
    Degenerate { tet: usize, volume: f64 },
    #[error("boundary tag error: {0}")]
    BoundaryTag(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("infeasible constraints ({context}): relative residual {residual:e}")]
    Infeasible { context: String, residual: f64 },
    #[error("feasibility check {check} failed on {location}: relative residual {residual:e}")]
    Feasibility { check: String, location: String, residual: f64 },
    #[error("matrix is not positive definite ({0})")]
    NotSpd(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
