use std::fmt;

use symbar_core::{GroupError, PricingError, SdeError, TransformError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error{}: {message}", Location(*.line, .key.as_deref()))]
    Config { line: Option<usize>, key: Option<String>, message: String },
    #[error("group error: {0}")]
    Group(GroupError),
    #[error("untrusted estimate: {0}")]
    Untrusted(String),
    #[error("{0}")]
    Other(String),
}

struct Location<'a>(Option<usize>, Option<&'a str>);

impl fmt::Display for Location<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(line) = self.0 {
            write!(f, " at line {line}")?;
        }
        if let Some(key) = self.1 {
            write!(f, " ({key})")?;
        }
        Ok(())
    }
}

impl CliError {
    pub fn config(line: Option<usize>, key: Option<&str>, message: &str) -> Self {
        CliError::Config { line, key: key.map(str::to_string), message: message.to_string() }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Untrusted(_) => 3,
            CliError::Group(_) => 4,
            CliError::Other(_) => 1,
        }
    }
}

impl From<GroupError> for CliError {
    fn from(e: GroupError) -> Self {
        CliError::Group(e)
    }
}

impl From<SdeError> for CliError {
    fn from(e: SdeError) -> Self {
        match e {
            SdeError::Group(g) => CliError::Group(g),
            SdeError::InvalidParameter(p) => CliError::config(None, None, &format!("invalid model parameter {p}")),
            SdeError::Structure(s) => CliError::config(None, None, &s),
            other => CliError::Other(other.to_string()),
        }
    }
}

impl From<TransformError> for CliError {
    fn from(e: TransformError) -> Self {
        match e {
            TransformError::Group(g) => CliError::Group(g),
            TransformError::Sde(s) => s.into(),
            other => CliError::Other(other.to_string()),
        }
    }
}

impl From<PricingError> for CliError {
    fn from(e: PricingError) -> Self {
        match e {
            PricingError::Group(g) => CliError::Group(g),
            PricingError::Sde(s) => s.into(),
            PricingError::Transform(t) => t.into(),
            PricingError::StartOutside => CliError::config(None, Some("model.x0"), "start point is not strictly inside the barrier region"),
            PricingError::Domain(d) => CliError::config(None, None, &d),
            other => CliError::Other(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Other(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Other(e.to_string())
    }
}
