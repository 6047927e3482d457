use serde_json::json;

/// Failure classes, each with its own exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags or an inconsistent configuration.
    Usage(String),
    /// Unreadable, malformed or invalid input and output files.
    File(String),
    /// Solver or learning failure during a run.
    Solver(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::File(_) => 3,
            CliError::Solver(_) => 4,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::File(_) => "file",
            CliError::Solver(_) => "solver",
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::File(m) | CliError::Solver(m) => m,
        }
    }

    /// Single-line JSON for stderr.
    pub fn to_json_line(&self) -> String {
        json!({ "error": self.kind(), "message": self.message(), "exit_code": self.exit_code() }).to_string()
    }
}

impl From<voltgrid::feeder::FeederError> for CliError {
    fn from(e: voltgrid::feeder::FeederError) -> Self {
        CliError::File(e.to_string())
    }
}

impl From<voltgrid::sim::SimError> for CliError {
    fn from(e: voltgrid::sim::SimError) -> Self {
        use voltgrid::sim::SimError;
        match e {
            SimError::Config(_) => CliError::Usage(e.to_string()),
            SimError::Drl(voltgrid::drl::DrlError::Config(_)) => CliError::Usage(e.to_string()),
            SimError::Io(..) | SimError::Trace(_) => CliError::File(e.to_string()),
            SimError::Solver { .. } | SimError::Agent { .. } | SimError::Drl(_) => CliError::Solver(e.to_string()),
        }
    }
}

pub fn file_error(path: &std::path::Path, e: impl std::fmt::Display) -> CliError {
    CliError::File(format!("{}: {e}", path.display()))
}
