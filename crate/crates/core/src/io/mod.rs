//! File formats: event logs, run configuration and CSV tables.
//!
//! All numbers are written as plain decimal text with `.` separators and LF
//! line endings; floats use the shortest representation that parses back to
//! the same value, so every format round-trips exactly.

mod config;
mod events;
mod tables;

pub use config::{
    load_config, parse_config, CorpuscularConfig, PolarizationConfig, ReferenceKind, RunConfig, StatsConfig,
};
pub use events::{read_events, write_events, EventLog, EVENTS_FORMAT_VERSION};
pub use tables::{
    read_distribution, read_ensemble, read_histogram, write_band, write_distribution, write_ensemble, write_histogram,
    write_table, fmt_f64, Table,
};

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported format version `{found}` (expected `{expected}`)")]
    Version { found: String, expected: String },
    #[error("line {line}: time {time_ps} ps precedes the previous record")]
    Unsorted { line: usize, time_ps: i64 },
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("config digest mismatch: header says {header}, config hashes to {computed}")]
    Digest { header: String, computed: String },
    #[error("config parse error: {0}")]
    ConfigParse(String),
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("config validation failed: {0}")]
    ConfigValidation(String),
}

impl IoError {
    fn file(path: &std::path::Path, source: std::io::Error) -> Self {
        IoError::File {
            path: path.to_path_buf(),
            source,
        }
    }
}

fn malformed(line: usize, reason: impl Into<String>) -> IoError {
    IoError::Malformed {
        line,
        reason: reason.into(),
    }
}
