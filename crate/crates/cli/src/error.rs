use serde::Serialize;
use thiserror::Error;

use horolab_core::chain::ChainError;
use horolab_core::cover::CoverError;
use horolab_core::graph::GraphError;
use horolab_core::lipschitz::LipschitzError;
use horolab_core::moebius::MoebiusError;
use horolab_core::slack::SlackError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("budget exceeded: {0}")]
    Budget(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Budget(_) => 3,
            CliError::Config(_) => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Validation(_) => "validation",
            CliError::Budget(_) => "budget",
            CliError::Config(_) => "configuration",
        }
    }
}

#[derive(Serialize)]
pub struct ErrorReport {
    pub kind: String,
    pub message: String,
    pub exit_code: i32,
}

impl From<GraphError> for CliError {
    fn from(e: GraphError) -> Self {
        match e {
            GraphError::BudgetBlowup { .. } | GraphError::WorkLimit { .. } => CliError::Budget(e.to_string()),
            GraphError::NegativeSlack { .. } => CliError::Config(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<LipschitzError> for CliError {
    fn from(e: LipschitzError) -> Self {
        match e {
            LipschitzError::NotLipschitz { .. } => CliError::Config(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<MoebiusError> for CliError {
    fn from(e: MoebiusError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<SlackError> for CliError {
    fn from(e: SlackError) -> Self {
        match e {
            SlackError::ConfigurationInvalid { .. } => CliError::Config(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<CoverError> for CliError {
    fn from(e: CoverError) -> Self {
        match e {
            CoverError::BudgetExceeded { .. } => CliError::Budget(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<ChainError> for CliError {
    fn from(e: ChainError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<crate::canon::CanonError> for CliError {
    fn from(e: crate::canon::CanonError) -> Self {
        CliError::Validation(e.to_string())
    }
}
