//! Command failures grouped by exit code.

use std::fmt;
use std::process::ExitCode;

use qarank::error::{ConfigError, CorpusError};
use qarank::Error;

#[derive(Debug)]
pub enum Failure {
    /// Bad flags or configuration.
    Usage(String),
    /// Unreadable, malformed or inconsistent input files.
    Data(String),
    /// Anything that goes wrong after the inputs were accepted.
    Runtime(String),
}

impl Failure {
    pub fn kind(&self) -> &'static str {
        match self {
            Failure::Usage(_) => "usage",
            Failure::Data(_) => "data",
            Failure::Runtime(_) => "runtime",
        }
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Runtime(_) => 3,
        })
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Runtime(m) => m,
        }
    }
}

/// `error kind=<kind> message=<text>` on a single line.
impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let message: String = self
            .message()
            .chars()
            .map(|c| if c.is_control() { ' ' } else { c })
            .collect();
        write!(f, "error kind={} message={}", self.kind(), message.trim())
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Corpus(e) => e.into(),
            Error::Config(e) => e.into(),
            Error::Checkpoint(_) | Error::Io { .. } => Failure::Data(e.to_string()),
            Error::Layer(_) | Error::Similarity(_) | Error::Invalid(_) => {
                Failure::Runtime(e.to_string())
            }
        }
    }
}

impl From<CorpusError> for Failure {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::ExhaustedAnswerSpace => Failure::Runtime(e.to_string()),
            _ => Failure::Data(e.to_string()),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Usage(e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_line_with_kind() {
        let f = Failure::Data("a\nb\tc".into());
        assert_eq!(f.to_string(), "error kind=data message=a b c");
    }

    #[test]
    fn errors_map_to_exit_classes() {
        let f: Failure = Error::from(CorpusError::NoDocuments).into();
        assert_eq!(f.kind(), "data");
        let f: Failure = Error::from(ConfigError::UnknownKey("x".into())).into();
        assert_eq!(f.kind(), "usage");
        let f: Failure = Error::Invalid("x".into()).into();
        assert_eq!(f.kind(), "runtime");
    }
}
