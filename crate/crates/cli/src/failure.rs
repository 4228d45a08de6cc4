//! Error classification for exit codes: 1 for anything the user can fix, 2 for the rest.

use std::fmt;

#[derive(Debug)]
pub enum Failure {
    /// Bad spec, flags, paths or input data.
    User(anyhow::Error),
    /// Numerical breakdown or a broken invariant inside the optimizer.
    Internal(anyhow::Error),
}

pub type CliResult<T> = Result<T, Failure>;

impl Failure {
    pub fn user(msg: impl fmt::Display) -> Self {
        Failure::User(anyhow::anyhow!("{msg}"))
    }

    pub fn internal(msg: impl fmt::Display) -> Self {
        Failure::Internal(anyhow::anyhow!("{msg}"))
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::User(_) => 1,
            Failure::Internal(_) => 2,
        }
    }

    /// Prefixes the message, keeping the classification.
    pub fn context(self, ctx: impl fmt::Display + Send + Sync + 'static) -> Self {
        match self {
            Failure::User(e) => Failure::User(e.context(ctx)),
            Failure::Internal(e) => Failure::Internal(e.context(ctx)),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (kind, e) = match self {
            Failure::User(e) => ("error", e),
            Failure::Internal(e) => ("internal error", e),
        };
        write!(f, "{kind}: {e:#}")
    }
}

impl From<spread_core::Error> for Failure {
    fn from(e: spread_core::Error) -> Self {
        use spread_core::Error as E;
        match e {
            E::InvalidArgument(_) | E::UnknownProblem(_) | E::Dataset { .. } | E::Checkpoint(_) | E::Io(_) | E::Csv(_) => {
                Failure::User(e.into())
            }
            _ => Failure::Internal(e.into()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::User(e.into())
    }
}
