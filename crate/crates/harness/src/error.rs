use std::path::{Path, PathBuf};

/// Harness failures with stable classes and exit codes.
#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] layerkv::Error),
    #[error("config file {path}: {message}")]
    ConfigFile { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Format {
        path: PathBuf,
        #[source]
        source: FormatError,
    },
    #[error("{0}")]
    Manifest(String),
    #[error("{0}")]
    Plot(String),
}

/// Malformed binary input, located by byte offset.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("at byte offset {offset}: {message}")]
pub struct FormatError {
    pub offset: usize,
    pub message: String,
}

pub type Result<T> = std::result::Result<T, HarnessError>;

impl HarnessError {
    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    pub fn format(path: impl AsRef<Path>, source: FormatError) -> Self {
        Self::Format {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    /// Stable machine-readable class.
    pub fn class(&self) -> &'static str {
        match self {
            Self::Usage(_) => "usage",
            Self::Core(e) => e.class(),
            Self::ConfigFile { .. } => "config",
            Self::Io { .. } => "io",
            Self::Format { .. } => "format",
            Self::Manifest(_) => "manifest",
            Self::Plot(_) => "plot",
        }
    }

    /// 2 for usage errors, 3 for configuration violations, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self.class() {
            "usage" => 2,
            "config" => 3,
            _ => 1,
        }
    }

    /// Single-line rendering: `error class=<class> message=<json string>`.
    pub fn line(&self) -> String {
        let msg = serde_json::to_string(&self.to_string()).expect("strings serialize");
        format!("error class={} message={msg}", self.class())
    }
}
