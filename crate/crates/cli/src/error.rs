use std::fmt;

use margin_attr::engine::EngineError;
use margin_attr::evaluation::EvalError;
use margin_attr::oracles::OracleError;
use margin_attr::report::ReportError;
use margin_attr::vocab::VocabError;

/// A failure with its process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, inputs or preconditions; exit 1.
    Config(String),
    /// Oracle unreachable or misbehaving; exit 2.
    Oracle(String),
    /// Something that should not happen did; exit 3.
    Invariant(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Oracle(_) => 2,
            CliError::Invariant(_) => 3,
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        CliError::Config(message.into())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) | CliError::Oracle(m) | CliError::Invariant(m) => f.write_str(m),
        }
    }
}

impl From<VocabError> for CliError {
    fn from(e: VocabError) -> Self {
        CliError::Config(e.to_string())
    }
}

fn oracle_kind(e: &OracleError) -> fn(String) -> CliError {
    match e {
        OracleError::Unavailable(_)
        | OracleError::Protocol(_)
        | OracleError::InvalidDistribution(_)
        | OracleError::VocabMismatch(_) => CliError::Oracle,
        OracleError::EmptyClass(_)
        | OracleError::EmptyCorpus
        | OracleError::InvalidParameter(_) => CliError::Config,
        OracleError::InvalidRequest(_) => CliError::Invariant,
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        oracle_kind(&e)(e.to_string())
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        let kind = match (&e, e.oracle_error()) {
            (_, Some(o)) => oracle_kind(o),
            (EngineError::OracleArity { .. }, None) => CliError::Oracle,
            _ => CliError::Config,
        };
        kind(e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Engine(e) => e.into(),
            EvalError::Oracle(e) => e.into(),
            EvalError::EmptyDistribution(_) => CliError::Oracle(e.to_string()),
            EvalError::TooFewPoints(_)
            | EvalError::NotIncreasing
            | EvalError::LengthMismatch(..) => CliError::Invariant(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        CliError::Invariant(e.to_string())
    }
}
