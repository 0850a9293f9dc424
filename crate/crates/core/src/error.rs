use std::path::PathBuf;

/// Errors produced by the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("overlap undefined: {0}")]
    UndefinedOverlap(String),

    #[error("no convergence: {0}")]
    Convergence(String),

    #[error("Stokes reduction underdetermined: {0}")]
    Determinacy(String),

    #[error("aperture not covered: {missing_fraction:.4} of the annulus lies outside the map")]
    Coverage { missing_fraction: f64 },

    #[error("ill-conditioned fit (condition estimate {condition:.3e}): {detail}")]
    Conditioning { condition: f64, detail: String },

    #[error("angular grid undersampled: {0}")]
    Sampling(String),

    #[error("invalid Zernike index n={n}, m={m}")]
    ZernikeIndex { n: u32, m: i32 },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {msg}")]
    Image { path: PathBuf, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}
