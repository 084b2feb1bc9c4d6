use std::fmt;
use std::path::PathBuf;

use crate::oracle::LpStatus;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// One failed scenario invariant.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub home: Option<usize>,
    pub step: Option<usize>,
    pub field: String,
    pub message: String,
}

impl Violation {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            home: None,
            step: None,
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn at_home(mut self, home: usize) -> Self {
        self.home = Some(home);
        self
    }

    pub fn at_step(mut self, step: usize) -> Self {
        self.step = Some(step);
        self
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(home) = self.home {
            write!(f, "home {home}, ")?;
        }
        if let Some(step) = self.step {
            write!(f, "step {step}, ")?;
        }
        write!(f, "{}: {}", self.field, self.message)
    }
}

fn join_violations(v: &[Violation]) -> String {
    let shown: Vec<String> = v.iter().take(8).map(ToString::to_string).collect();
    let mut out = shown.join("; ");
    if v.len() > 8 {
        out.push_str(&format!("; ... ({} more)", v.len() - 8));
    }
    out
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("length mismatch for {what}: expected {expected}, got {got}")]
    LengthMismatch {
        what: String,
        expected: usize,
        got: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },

    #[error("scenario failed validation ({} violations): {}", .0.len(), join_violations(.0))]
    Validation(Vec<Violation>),

    #[error("infeasible scenario: home {home}, day {day}, step {step}: {message}")]
    InfeasibleScenario {
        home: usize,
        day: usize,
        step: usize,
        message: String,
    },

    #[error("demonstrator replay mismatch at step {step}, home {home}: {field} differs by {error:e}")]
    ReplayMismatch {
        step: usize,
        home: usize,
        field: &'static str,
        error: f64,
    },

    #[error("linear program not solved: {status:?} during {phase}")]
    Lp { status: LpStatus, phase: &'static str },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(file: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            file: file.into(),
            line,
            message: message.into(),
        }
    }
}
