use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("branch cut: {0}")]
    BranchCut(String),
    #[error("gamma pole at x = {0}")]
    Pole(f64),
    #[error("degenerate parameters: {0}")]
    DegenerateParameter(String),
    #[error("no convergence: {0}")]
    Convergence(String),
    #[error("outside domain: {0}")]
    Domain(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),
    #[error("resolution check failed: {0}")]
    Resolution(String),
    #[error("combinatorial budget exceeded: {0}")]
    Budget(String),
    #[error("missing cumulant of order {0}")]
    MissingCumulant(usize),
    #[error("cholesky factorization failed: {0}")]
    Cholesky(String),
    #[error("grid error: {0}")]
    Grid(String),
    #[error("fit failed: {0}")]
    Fit(String),
    #[error("out of range: {0}")]
    Range(String),
    #[error("io: {0}")]
    Io(String),
    #[error("cache format: {0}")]
    Cache(String),
}

impl Error {
    /// Module-qualified code, stable across releases.
    pub fn code(&self) -> &'static str {
        match self {
            Error::BranchCut(_) => "special_functions.branch_cut",
            Error::Pole(_) => "special_functions.pole",
            Error::DegenerateParameter(_) => "special_functions.degenerate_parameter",
            Error::Convergence(_) => "special_functions.convergence",
            Error::Domain(_) => "kernels.domain",
            Error::Precondition(_) => "closed_form.precondition",
            Error::InvalidParams(_) => "kernels.invalid_params",
            Error::Resolution(_) => "quadrature.resolution",
            Error::Budget(_) => "diagrams.budget",
            Error::MissingCumulant(_) => "diagrams.missing_cumulant",
            Error::Cholesky(_) => "simulate.cholesky",
            Error::Grid(_) => "simulate.grid",
            Error::Cache(_) => "simulate.cache",
            Error::Io(_) => "simulate.io",
            Error::Fit(_) => "analysis.fit",
            Error::Range(_) => "analysis.range",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
