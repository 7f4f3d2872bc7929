use thiserror::Error;

/// Errors produced anywhere in the balance pipeline.
///
/// Variants are grouped by the exit class they map to: input problems
/// (schema, validation, invalid arguments), physically infeasible inputs,
/// and numerical failures.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("schema error at `{path}`: {message}")]
    Schema { path: String, message: String },

    #[error("validation error at `{path}`: {message}")]
    Validation { path: String, message: String },

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("degenerate load: normal force {0:.3e} is not positive")]
    DegenerateLoad(f64),

    #[error("feature unavailable: {0}")]
    FeatureUnavailable(String),

    #[error("stance infeasible: {0}")]
    StanceInfeasible(String),

    #[error("no valid impulse: every friction-cone generator is jammed")]
    NoValidImpulse,

    #[error("invalid impact direction: approach component {0:.3e} is not positive")]
    InvalidImpactDirection(f64),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("solver failure in stage `{stage}`: {message}")]
    SolverFailure { stage: String, message: String },
}

impl Error {
    pub fn validation(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Field path for schema/validation errors.
    pub fn field_path(&self) -> Option<&str> {
        match self {
            Error::Schema { path, .. } | Error::Validation { path, .. } => Some(path),
            _ => None,
        }
    }

    /// Coarse class used by front-ends to pick exit codes and HTTP statuses.
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidInput(_)
            | Error::Schema { .. }
            | Error::Validation { .. }
            | Error::InvalidImpactDirection(_)
            | Error::FeatureUnavailable(_) => ErrorClass::Input,
            Error::StanceInfeasible(_)
            | Error::NoValidImpulse
            | Error::DegenerateGeometry(_)
            | Error::DegenerateLoad(_) => ErrorClass::Infeasible,
            Error::NumericalFailure(_) | Error::SolverFailure { .. } => ErrorClass::Solver,
        }
    }

    /// Short machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid_input",
            Error::Schema { .. } => "schema_error",
            Error::Validation { .. } => "validation_error",
            Error::DegenerateGeometry(_) => "degenerate_geometry",
            Error::DegenerateLoad(_) => "degenerate_load",
            Error::FeatureUnavailable(_) => "feature_unavailable",
            Error::StanceInfeasible(_) => "stance_infeasible",
            Error::NoValidImpulse => "no_valid_impulse",
            Error::InvalidImpactDirection(_) => "invalid_impact_direction",
            Error::NumericalFailure(_) => "numerical_failure",
            Error::SolverFailure { .. } => "solver_failure",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Input,
    Infeasible,
    Solver,
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
