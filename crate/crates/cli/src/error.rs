use thiserror::Error;

/// Failures the user can fix by changing the invocation; they exit with
/// status 2. Everything else is a runtime failure (status 1).
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
}

/// Exit status for an error chain.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.chain().any(|e| matches!(e.downcast_ref::<CliError>(), Some(CliError::Usage(_)))) {
        2
    } else {
        1
    }
}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    CliError::Usage(msg.into()).into()
}
