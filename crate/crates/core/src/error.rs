use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("no quantum defect entry for series L={l}, j={j_doubled}/2")]
    MissingDefect { l: u32, j_doubled: u32 },

    #[error("invalid quantum numbers: {0}")]
    InvalidState(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("model error: {0}")]
    Model(String),

    #[error("close pair: atoms {a} and {b} are {distance_um:.3} µm apart (floor {floor_um} µm)")]
    ClosePair {
        a: usize,
        b: usize,
        distance_um: f64,
        floor_um: f64,
    },

    #[error("resource error: {0}")]
    Resource(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("ensemble error: {failed} of {total} shots failed (first: {first})")]
    Ensemble {
        failed: usize,
        total: usize,
        first: String,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short category name used for process exit codes and logs.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Config(_) | Error::MissingDefect { .. } | Error::Parse { .. } => "config",
            Error::InvalidState(_) | Error::Domain(_) => "domain",
            Error::Numerical(_) => "numerical",
            Error::Model(_) => "model",
            Error::ClosePair { .. } => "geometry",
            Error::Resource(_) => "resource",
            Error::Ensemble { .. } => "ensemble",
            Error::Io(_) => "io",
        }
    }
}
