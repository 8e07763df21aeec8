use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error(transparent)]
    Lattice(#[from] defectline::lattice::LatticeError),
    #[error(transparent)]
    Estimator(#[from] defectline::estimators::EstimatorError),
    #[error(transparent)]
    Renewal(#[from] defectline::renewal::RenewalError),
    #[error(transparent)]
    Geometry(#[from] defectline::geometry::GeometryError),
    #[error(transparent)]
    Oracle(#[from] defectline::oracle::OracleError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// Coarse family for the machine-readable error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Io(_) => "io",
            _ => "model",
        }
    }
}
