use std::path::PathBuf;

use thiserror::Error;

use crate::model::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("insufficient oversampling: grid size {grid_size} < 2 x {harmonics} harmonics")]
    InsufficientOversampling { grid_size: usize, harmonics: usize },

    #[error("invalid scene: {}", join_violations(.0))]
    InvalidScene(Vec<Violation>),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("aliased depth {depth} m: unambiguous range is {range} m")]
    AliasedDepth { depth: f64, range: f64 },

    #[error("grid index {index} out of range 0..{grid_size}")]
    IndexOutOfRange { index: usize, grid_size: usize },

    #[error("input error: {0}")]
    Input(String),

    #[error("pixel ({x}, {y}): {source}")]
    Pixel {
        x: usize,
        y: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("rank-deficient least-squares system (column {column})")]
    RankDeficient { column: usize },

    #[error("brute-force search too large: C({grid_size}, {k}) exceeds {limit}")]
    SearchTooLarge { grid_size: usize, k: usize, limit: u64 },

    #[error("cannot read {}: {source}", .path.display())]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot write {}: {source}", .path.display())]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed {what} in {}: {message}", .path.display())]
    Parse {
        what: &'static str,
        path: PathBuf,
        message: String,
    },
}

/// Coarse classification used to pick a process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    InputData,
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Config(_)
            | Error::InsufficientOversampling { .. }
            | Error::SearchTooLarge { .. }
            | Error::Write { .. } => ErrorCategory::Config,
            Error::Pixel { source, .. } => source.category(),
            _ => ErrorCategory::InputData,
        }
    }

    pub(crate) fn at_pixel(self, x: usize, y: usize) -> Error {
        Error::Pixel {
            x,
            y,
            source: Box::new(self),
        }
    }
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}
