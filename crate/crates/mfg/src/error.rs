use serde_json::json;

/// Failure of a command, mapped to a process exit code.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CliError {
    /// Exit code 1.
    #[error("configuration error in `{field}`: {message}")]
    Config { field: String, message: String },
    /// Exit code 1.
    #[error("i/o error: {0}")]
    Io(String),
    /// Exit code 2.
    #[error("solver did not converge: {0}")]
    NonConvergence(String),
    /// Exit code 3.
    #[error("Monte Carlo budget insufficient: {0}")]
    McBudget(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::Io(_) => 1,
            CliError::NonConvergence(_) => 2,
            CliError::McBudget(_) => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config { .. } => "config",
            CliError::Io(_) => "io",
            CliError::NonConvergence(_) => "non_convergence",
            CliError::McBudget(_) => "mc_budget",
        }
    }

    /// Machine-readable error record.
    pub fn record(&self) -> serde_json::Value {
        let field = match self {
            CliError::Config { field, .. } => Some(field.as_str()),
            _ => None,
        };
        json!({
            "error": self.kind(),
            "exit_code": self.exit_code(),
            "field": field,
            "message": self.to_string(),
        })
    }
}

impl From<levy_mfg_core::Error> for CliError {
    fn from(e: levy_mfg_core::Error) -> Self {
        use levy_mfg_core::Error as E;
        match e {
            E::InvalidParameter { name, reason } => CliError::Config { field: name.into(), message: reason.into() },
            E::BarrierOrder { .. } | E::DegenerateUnboundedVariation => CliError::Config { field: "barriers".into(), message: e.to_string() },
            E::WrongFamily(_) => CliError::Config { field: "model.family".into(), message: e.to_string() },
            E::OutsideClosedForm(_) => CliError::Config { field: "cost".into(), message: e.to_string() },
            E::InsufficientSamples { .. } | E::ResourceLimit { .. } => CliError::McBudget(e.to_string()),
            E::RootResidual { .. } | E::NoConvergence { .. } | E::Numerical(_) => CliError::NonConvergence(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
