use std::fmt;
use std::process::ExitCode;

/// Why a subcommand stopped; determines the process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureKind {
    /// Bad arguments, configuration or input files.
    Input,
    /// A provider call failed (transport, authentication, exhausted retries).
    Provider,
    /// An internal consistency check did not hold.
    Invariant,
}

impl FailureKind {
    pub fn exit_code(self) -> ExitCode {
        ExitCode::from(match self {
            FailureKind::Input => 2,
            FailureKind::Provider => 3,
            FailureKind::Invariant => 4,
        })
    }
}

#[derive(Debug)]
pub struct Failure {
    pub kind: FailureKind,
    pub error: anyhow::Error,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

pub type CmdResult<T = ()> = Result<T, Failure>;

pub fn input_error(msg: impl fmt::Display) -> Failure {
    Failure {
        kind: FailureKind::Input,
        error: anyhow::anyhow!("{msg}"),
    }
}

pub fn provider_error(msg: impl fmt::Display) -> Failure {
    Failure {
        kind: FailureKind::Provider,
        error: anyhow::anyhow!("{msg}"),
    }
}

/// Fails with [`FailureKind::Invariant`] unless `cond` holds.
pub fn ensure(cond: bool, msg: impl FnOnce() -> String) -> CmdResult {
    if cond {
        Ok(())
    } else {
        Err(Failure {
            kind: FailureKind::Invariant,
            error: anyhow::anyhow!("invariant violated: {}", msg()),
        })
    }
}

/// Tags an error with a failure kind and context message.
pub trait Classify<T> {
    fn input(self, context: impl fmt::Display) -> CmdResult<T>;
    fn invariant(self, context: impl fmt::Display) -> CmdResult<T>;
}

impl<T, E> Classify<T> for Result<T, E>
where
    E: Into<anyhow::Error>,
{
    fn input(self, context: impl fmt::Display) -> CmdResult<T> {
        self.map_err(|e| Failure {
            kind: FailureKind::Input,
            error: e.into().context(context.to_string()),
        })
    }

    fn invariant(self, context: impl fmt::Display) -> CmdResult<T> {
        self.map_err(|e| Failure {
            kind: FailureKind::Invariant,
            error: e.into().context(context.to_string()),
        })
    }
}
