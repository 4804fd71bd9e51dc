use std::fmt;

/// Errors produced by the simulation and analysis pipeline.
///
/// The variants map one-to-one onto the CLI exit codes (see [`Error::exit_code`]).
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument is outside the operation's domain.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// A scenario or measurement configuration cannot be realized.
    #[error("configuration error: {0}")]
    Config(String),

    /// Fewer correlation peaks than expected could be separated.
    #[error("resolution error: {0}")]
    Resolution(String),

    /// Peaks cannot be assigned unambiguously.
    #[error("ambiguity error: {0}")]
    Ambiguity(String),

    /// The Gaussian peak fit failed.
    #[error("fit error: {0}")]
    Fit(String),

    /// Phase unwrapping failed because the wavelength grid is too coarse.
    #[error("unwrap error: {0}")]
    Unwrap(String),

    /// The frequency step of the DGD estimator is too large.
    #[error("step error: {0}")]
    Step(String),

    /// A stored trace or text file is malformed.
    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    /// A failure inside the measurement pipeline, annotated with where it happened.
    #[error("at {context}: {source}")]
    Pipeline {
        context: PipelineContext,
        #[source]
        source: Box<Error>,
    },
}

/// Location inside a scenario run.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineContext {
    pub temperature_c: f64,
    pub group: Vec<u32>,
}

impl fmt::Display for PipelineContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "T={} degC, cores {:?}", self.temperature_c, self.group)
    }
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn in_context(self, temperature_c: f64, group: &[u32]) -> Self {
        Error::Pipeline {
            context: PipelineContext {
                temperature_c,
                group: group.to_vec(),
            },
            source: Box::new(self),
        }
    }

    /// The innermost error, skipping pipeline context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Pipeline { source, .. } => source.root(),
            other => other,
        }
    }

    /// Process exit code for this error class.
    ///
    /// | code | class |
    /// |------|-------|
    /// | 3 | configuration / parameter / format |
    /// | 4 | resolution |
    /// | 5 | ambiguity |
    /// | 6 | fit / unwrap / step |
    /// | 7 | I/O |
    pub fn exit_code(&self) -> i32 {
        match self.root() {
            Error::Parameter(_) | Error::Config(_) | Error::Format(_) => 3,
            Error::Resolution(_) => 4,
            Error::Ambiguity(_) => 5,
            Error::Fit(_) | Error::Unwrap(_) | Error::Step(_) => 6,
            Error::Io(_) => 7,
            Error::Pipeline { .. } => unreachable!("root() strips pipeline wrappers"),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
