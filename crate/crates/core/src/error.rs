use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

/// A single violated configuration invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: &'static str,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

fn join(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid configuration: {}", join(.0))]
    Invalid(Vec<Violation>),

    #[error("unknown configuration key `{key}`{}", line_suffix(*.line))]
    UnknownKey { key: String, line: Option<usize> },

    #[error("cannot parse value `{value}` for `{key}`{}", line_suffix(*.line))]
    BadValue {
        key: String,
        value: String,
        line: Option<usize>,
    },

    #[error("malformed line {line}: expected key = value")]
    Syntax { line: usize },

    #[error("cannot read configuration file {}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn line_suffix(line: Option<usize>) -> String {
    match line {
        Some(l) => format!(" (line {l})"),
        None => String::new(),
    }
}

impl ConfigError {
    pub fn violations(&self) -> &[Violation] {
        match self {
            ConfigError::Invalid(v) => v,
            _ => &[],
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("binomial bound needs at least one trial")]
    NoTrials,
    #[error("successes ({successes}) exceed trials ({trials})")]
    SuccessesExceedTrials { successes: u64, trials: u64 },
    #[error("confidence epsilon {0} outside (0, 1)")]
    BadEpsilon(f64),
    #[error("probability {0} outside [0, 1]")]
    OutOfRange(f64),
}

#[derive(Debug, Error)]
pub enum OptimizeError {
    #[error("infeasible search bounds: {0}")]
    InfeasibleBounds(String),
}

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("failed writing {}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("failed writing {}: {source}", .path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}
