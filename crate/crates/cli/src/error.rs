use std::fmt;

/// Failure classified by exit code: bad input is the caller's problem (2),
/// everything else is a runtime failure (1).
#[derive(Debug)]
pub enum CliError {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn usage(e: impl Into<anyhow::Error>) -> Self {
        Self::Usage(e.into())
    }

    pub fn runtime(e: impl Into<anyhow::Error>) -> Self {
        Self::Runtime(e.into())
    }

    pub fn code(&self) -> u8 {
        match self {
            Self::Usage(_) => 2,
            Self::Runtime(_) => 1,
        }
    }

    pub fn context(self, msg: impl fmt::Display + Send + Sync + 'static) -> Self {
        match self {
            Self::Usage(e) => Self::Usage(e.context(msg)),
            Self::Runtime(e) => Self::Runtime(e.context(msg)),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Usage(e) | Self::Runtime(e) => {
                if f.alternate() {
                    write!(f, "{e:#}")
                } else {
                    write!(f, "{e}")
                }
            }
        }
    }
}

/// Core errors that stem from the inputs map to usage; numeric trouble and
/// I/O during a run map to runtime.
impl From<duet::Error> for CliError {
    fn from(e: duet::Error) -> Self {
        use duet::Error::*;
        match e {
            Config(_) | ShapeMismatch(_) | Checkpoint(_) | TokenOutOfRange { .. }
            | ModalityMismatch { .. } | InvalidSequence(_) | MissingTarget(_)
            | LengthMismatch(_) | Empty(_) => Self::usage(e),
            _ => Self::runtime(e),
        }
    }
}
