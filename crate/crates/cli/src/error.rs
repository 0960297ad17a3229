use std::fmt;

use serde::Serialize;
use thinnet_core::{GraphError, MeshError, SolverError};

/// Process exit codes.
pub mod code {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 2;
    pub const GRAPH: i32 = 3;
    pub const SOLVER: i32 = 4;
    pub const CERTIFICATION: i32 = 5;
    pub const IO: i32 = 6;
}

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    /// Bad flags or configuration.
    Usage(String),
    /// Invalid graph file or group string.
    Graph(String),
    /// Solver or mesher failure.
    Solver(String),
    /// A result could not be certified; the document is still written.
    Certification(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => code::USAGE,
            CliError::Graph(_) => code::GRAPH,
            CliError::Solver(_) => code::SOLVER,
            CliError::Certification(_) => code::CERTIFICATION,
            CliError::Io(_) => code::IO,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Graph(_) => "graph",
            CliError::Solver(_) => "solver",
            CliError::Certification(_) => "certification",
            CliError::Io(_) => "io",
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m)
            | CliError::Graph(m)
            | CliError::Solver(m)
            | CliError::Certification(m)
            | CliError::Io(m) => m,
        }
    }

    /// One-line JSON diagnostic for the error stream.
    pub fn diagnostic(&self) -> String {
        #[derive(Serialize)]
        struct Diag<'a> {
            error: &'a str,
            code: i32,
            message: &'a str,
        }
        serde_json::to_string(&Diag { error: self.kind(), code: self.exit_code(), message: self.message() })
            .expect("plain strings serialize")
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind(), self.message())
    }
}

impl std::error::Error for CliError {}

impl From<GraphError> for CliError {
    fn from(e: GraphError) -> Self {
        CliError::Graph(e.to_string())
    }
}

impl From<SolverError> for CliError {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::Graph(g) => g.into(),
            other => CliError::Solver(other.to_string()),
        }
    }
}

impl From<MeshError> for CliError {
    fn from(e: MeshError) -> Self {
        match e {
            MeshError::InvalidParameter(_) | MeshError::UnsupportedRegime => CliError::Usage(e.to_string()),
            MeshError::PortIncompatible { .. } => CliError::Graph(e.to_string()),
            MeshError::Solver(s) => s.into(),
            other => CliError::Solver(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
