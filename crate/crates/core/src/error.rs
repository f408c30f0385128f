use thiserror::Error;

use crate::geometry::AngularCondition;

/// Errors produced by the modeling toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("zero-length direction vector")]
    ZeroDirection,

    #[error("infeasible geometry: {0}")]
    InfeasibleGeometry(String),

    #[error("no admissible slot pair for condition (alpha={}, omega={}): {reason}", .condition.alpha_deg(), .condition.omega_deg())]
    InfeasibleCondition {
        condition: AngularCondition,
        reason: String,
    },

    #[error("undefined hitpoint projection: {0}")]
    UndefinedProjection(String),

    #[error("invalid argument: {0}")]
    Usage(String),

    #[error("degenerate regression: {0}")]
    DegenerateRegression(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("malformed trial {trial}: {reason}")]
    MalformedTrial { trial: String, reason: String },

    #[error("plan shape: {0}")]
    PlanShape(String),

    #[error("{path}: {reason}")]
    Io { path: String, reason: String },

    #[error("{file}: missing header column `{column}`")]
    MissingHeader { file: String, column: String },

    #[error("{file} line {line}: malformed value `{value}` in column `{column}`")]
    MalformedNumber {
        file: String,
        line: u64,
        column: String,
        value: String,
    },

    #[error("{file} line {line}: sample references unknown trial {key}")]
    DanglingSample {
        file: String,
        line: u64,
        key: String,
    },

    #[error("{file} line {line}: sample time {t_s} does not increase for trial {key}")]
    NonMonotoneTime {
        file: String,
        line: u64,
        key: String,
        t_s: f64,
    },

    #[error("{file} line {line}: duplicate trial {key}")]
    DuplicateTrial {
        file: String,
        line: u64,
        key: String,
    },

    #[error("{file}: {reason}")]
    Format { file: String, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;
