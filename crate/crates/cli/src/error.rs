use serde_json::json;
use specshape::apps::AppError;
use specshape::eigensolve::EigenError;
use specshape::experiment::ExperimentError;
use specshape::geometry::GeometryError;
use specshape::neural::NeuralError;
use specshape::spectral_ae::ModelError;
use thiserror::Error;

/// Failure classes with their process exit codes.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags or configuration (exit 1).
    #[error("{0}")]
    Config(String),
    /// Unreadable, malformed or inconsistent input data (exit 2).
    #[error("{0}")]
    Data(String),
    /// Solver or training failure on valid input (exit 3).
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Data(_) => "data",
            CliError::Numerical(_) => "numerical",
        }
    }

    /// The single-line JSON written to stderr.
    pub fn to_json(&self) -> String {
        json!({
            "error": {
                "kind": self.kind(),
                "exit_code": self.exit_code(),
                "message": self.to_string(),
            }
        })
        .to_string()
    }

    pub fn io(path: &std::path::Path, e: impl std::fmt::Display) -> CliError {
        CliError::Data(format!("{}: {e}", path.display()))
    }
}

impl From<GeometryError> for CliError {
    fn from(e: GeometryError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<EigenError> for CliError {
    fn from(e: EigenError) -> Self {
        match e {
            EigenError::Factorization { .. } | EigenError::NonConvergence { .. } => CliError::Numerical(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::InvalidConfig(_) => CliError::Config(e.to_string()),
            ModelError::NonFinite { .. } | ModelError::Diverged { .. } => CliError::Numerical(e.to_string()),
            ModelError::Neural(NeuralError::NonFinite { .. }) => CliError::Numerical(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<AppError> for CliError {
    fn from(e: AppError) -> Self {
        match e {
            AppError::Model(m) => m.into(),
            AppError::Eigen(m) => m.into(),
            AppError::Geometry(m) => m.into(),
            AppError::InvalidArgument(_) | AppError::WrongModelKind { .. } => CliError::Config(e.to_string()),
            AppError::Degenerate(_) => CliError::Data(e.to_string()),
            AppError::Diverged { .. } => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Geometry(m) => m.into(),
            ExperimentError::Eigen(m) => m.into(),
            ExperimentError::Model(m) => m.into(),
            ExperimentError::App(m) => m.into(),
            ExperimentError::Invalid(_) | ExperimentError::Store(_) => CliError::Data(e.to_string()),
        }
    }
}
