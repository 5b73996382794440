use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("column `{0}` not found in dataset")]
    MissingColumn(String),

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("singular design: {0}")]
    SingularDesign(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("sample too small: n = {n} but {needed} instruments/regressors require n > {needed}")]
    UndersizedSample { n: usize, needed: usize },

    #[error("sampler diverged at iteration {iteration}: {what}")]
    SamplerDivergence { iteration: usize, what: String },

    #[error("chains too short for diagnostics: {got} draws, at least {needed} required")]
    InsufficientDraws { got: usize, needed: usize },

    #[error("degenerate bootstrap variance ({0:e})")]
    DegenerateVariance(f64),

    #[error("{file}: row {row}, column `{column}`: {message}")]
    Parse {
        file: PathBuf,
        row: usize,
        column: String,
        message: String,
    },

    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Coarse classification used by the command line front end for exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Numerical,
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidArgument(_) | Error::Precondition(_) | Error::Manifest { .. } => {
                ErrorClass::Usage
            }
            Error::MissingColumn(_)
            | Error::DegenerateSample(_)
            | Error::Domain(_)
            | Error::UndersizedSample { .. }
            | Error::Parse { .. }
            | Error::Io(_)
            | Error::Csv(_) => ErrorClass::Data,
            Error::SingularDesign(_)
            | Error::SamplerDivergence { .. }
            | Error::InsufficientDraws { .. }
            | Error::DegenerateVariance(_) => ErrorClass::Numerical,
            Error::Context { source, .. } => source.class(),
        }
    }

    /// Innermost error, skipping context annotations.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }
}

pub(crate) trait ResultExt<T> {
    fn context_with<F: FnOnce() -> String>(self, f: F) -> Result<T>;
}

impl<T> ResultExt<T> for Result<T> {
    fn context_with<F: FnOnce() -> String>(self, f: F) -> Result<T> {
        self.map_err(|e| e.context(f()))
    }
}
