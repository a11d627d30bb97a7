use std::fmt;
use std::io;
use std::path::{Path, PathBuf};

pub const EXIT_ARGUMENT: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_RUNTIME: i32 = 4;

#[derive(Debug)]
pub enum CliError {
    Arg(String),
    Io { path: PathBuf, source: io::Error },
    Lib(tensorm::Error),
}

impl CliError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Library error raised while reading or writing `path`.
    pub fn at(path: &Path, err: tensorm::Error) -> Self {
        match err {
            tensorm::Error::Io(source) => CliError::io(path, source),
            tensorm::Error::Parse { location, message } => CliError::Lib(tensorm::Error::Parse {
                location: format!("{}: {location}", path.display()),
                message,
            }),
            other => CliError::Lib(other),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Arg(_) | CliError::Lib(tensorm::Error::InvalidArgument(_)) => EXIT_ARGUMENT,
            CliError::Io { .. } | CliError::Lib(tensorm::Error::Io(_) | tensorm::Error::Parse { .. }) => EXIT_IO,
            CliError::Lib(_) => EXIT_RUNTIME,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Arg(msg) => write!(f, "{msg}"),
            CliError::Io { path, source } => write!(f, "{}: {source}", path.display()),
            CliError::Lib(err) => write!(f, "{err}"),
        }
    }
}

impl From<tensorm::Error> for CliError {
    fn from(err: tensorm::Error) -> Self {
        CliError::Lib(err)
    }
}
