use serde::Serialize;

use dragwarp_core::pipeline::PipelineError;

/// A command failure: exit 2 for problems with the caller's input, exit 1
/// for everything else.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CliError {
    #[serde(skip)]
    pub internal: bool,
    pub error: String,
    pub detail: String,
}

impl CliError {
    pub fn user(code: impl Into<String>, detail: impl ToString) -> Self {
        Self {
            internal: false,
            error: code.into(),
            detail: detail.to_string(),
        }
    }

    pub fn internal(code: impl Into<String>, detail: impl ToString) -> Self {
        Self {
            internal: true,
            error: code.into(),
            detail: detail.to_string(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        if self.internal {
            1
        } else {
            2
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("error serializes")
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        CliError::user(e.code(), e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.error, self.detail)
    }
}

impl std::error::Error for CliError {}
