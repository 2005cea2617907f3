use thiserror::Error;

#[derive(Clone, Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("no root: {0}")]
    NoRoot(String),
    #[error("Newton iteration for the implicit stages diverged (residual {residual:.3e} after {iterations} iterations)")]
    NewtonDiverged { residual: f64, iterations: usize },
    #[error("point outside the admissible crossing domain: {0}")]
    OutsideDomain(String),
    #[error("1 + p² vanishes at z0={z0}, lambda={lambda}")]
    SingularP { z0: f64, lambda: f64 },
    #[error("quadrature did not reach tolerance {tol:.1e} (estimate {estimate:.3e})")]
    QuadratureFail { tol: f64, estimate: f64 },
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
