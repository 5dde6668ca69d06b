use std::fmt::Display;
use std::process::ExitCode;

/// A failed command together with the exit status it maps to.
#[derive(Debug)]
pub enum Failure {
    Usage(anyhow::Error),
    Data(anyhow::Error),
    Internal(anyhow::Error),
}

impl Failure {
    pub fn code(&self) -> ExitCode {
        match self {
            Failure::Usage(_) => ExitCode::from(1),
            Failure::Data(_) => ExitCode::from(2),
            Failure::Internal(_) => ExitCode::from(3),
        }
    }

    pub fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Usage(e) | Failure::Data(e) | Failure::Internal(e) => e,
        }
    }
}

pub type Outcome<T = ()> = Result<T, Failure>;

/// Attaches context and an exit class to any error.
pub trait Classify<T> {
    fn usage(self, context: impl Display + Send + Sync + 'static) -> Outcome<T>;
    fn data(self, context: impl Display + Send + Sync + 'static) -> Outcome<T>;
    fn internal(self, context: impl Display + Send + Sync + 'static) -> Outcome<T>;
}

impl<T, E> Classify<T> for Result<T, E>
where
    E: Into<anyhow::Error>,
{
    fn usage(self, context: impl Display + Send + Sync + 'static) -> Outcome<T> {
        self.map_err(|e| Failure::Usage(e.into().context(context)))
    }

    fn data(self, context: impl Display + Send + Sync + 'static) -> Outcome<T> {
        self.map_err(|e| Failure::Data(e.into().context(context)))
    }

    fn internal(self, context: impl Display + Send + Sync + 'static) -> Outcome<T> {
        self.map_err(|e| Failure::Internal(e.into().context(context)))
    }
}
