//! Failures split by exit code.

use std::fmt;

/// Configuration problems exit with 2, data problems with 1.
#[derive(Debug)]
pub enum Failure {
    Config(anyhow::Error),
    Data(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Data(_) => 1,
        }
    }

    /// Prefix the message, keeping the kind.
    pub fn context(self, ctx: impl fmt::Display) -> Failure {
        match self {
            Failure::Config(e) => Failure::Config(anyhow::anyhow!("{ctx}: {e:#}")),
            Failure::Data(e) => Failure::Data(anyhow::anyhow!("{ctx}: {e:#}")),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(e) => write!(f, "configuration error: {e:#}"),
            Failure::Data(e) => write!(f, "error: {e:#}"),
        }
    }
}

impl From<cdrscore::Error> for Failure {
    fn from(e: cdrscore::Error) -> Failure {
        if e.is_config_error() {
            Failure::Config(e.into())
        } else {
            Failure::Data(e.into())
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Failure {
        Failure::Data(e.into())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Failure {
        Failure::Data(e.into())
    }
}
