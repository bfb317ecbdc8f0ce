use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config: {0}")]
    Config(String),
    #[error("missing artifact {}; run the `{stage}` stage first", path.display())]
    MissingArtifact { path: PathBuf, stage: &'static str },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },
    #[error(transparent)]
    Core(#[from] ppgage_core::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Stable short name printed with every failure.
    pub fn code(&self) -> &'static str {
        use ppgage_core::Error as C;
        match self {
            Error::Config(_) => "config",
            Error::MissingArtifact { .. } => "missing-artifact",
            Error::Io { .. } => "io",
            Error::Format { .. } => "format",
            Error::Core(C::InvalidInput(_)) => "invalid-input",
            Error::Core(C::NonFiniteLoss { .. }) => "non-finite-loss",
            Error::Core(C::NoEvents | C::Collinear(_) | C::Undefined(_)) => "statistics",
            Error::Core(C::Format(_)) => "format",
            Error::Core(C::Io(_)) => "io",
        }
    }

    /// Process exit status. 2 is left to argument parsing.
    pub fn exit_code(&self) -> i32 {
        match self.code() {
            "config" => 3,
            "missing-artifact" => 4,
            "io" => 5,
            "format" => 6,
            "invalid-input" => 7,
            "non-finite-loss" => 8,
            "statistics" => 9,
            _ => 1,
        }
    }
}

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
    let path = path.into();
    move |source| Error::Io { path, source }
}
