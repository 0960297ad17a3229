use thiserror::Error;

/// Errors raised while building or validating a metric graph.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("graph description could not be parsed: {0}")]
    Parse(String),
    #[error("graph has no edges")]
    Empty,
    #[error("duplicate {kind} id `{id}`")]
    DuplicateId { kind: &'static str, id: String },
    #[error("edge `{edge}` has non-positive or non-finite length {length}")]
    NonPositiveLength { edge: String, length: f64 },
    #[error("edge `{edge}` references unknown vertex `{vertex}`")]
    DanglingEndpoint { edge: String, vertex: String },
    #[error("density of edge `{edge}` is not strictly positive (value {value} at x = {x})")]
    NonPositiveDensity { edge: String, x: f64, value: f64 },
    #[error("density polynomial of edge `{edge}` has degree {degree}, the maximum is {max}")]
    DensityDegree { edge: String, degree: usize, max: usize },
    #[error("graph is disconnected (vertex `{vertex}` is unreachable)")]
    Disconnected { vertex: String },
    #[error("vertex `{vertex}` has invalid volume {vol}")]
    InvalidVolume { vertex: String, vol: f64 },
    #[error("invalid vertex condition: {0}")]
    Condition(String),
    #[error("invalid scaling regime: {0}")]
    Regime(String),
}

/// Errors raised by the graph eigenvalue solvers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("edge {edge} has a variable density; use the transfer-matrix formulation")]
    VariableDensity { edge: usize },
    #[error("scan grid of {points} points exceeds the budget of {budget}")]
    ScanBudget { points: usize, budget: usize },
    #[error("tolerance {tol:e} is below the floating-point floor {floor:e}")]
    TolTooSmall { tol: f64, floor: f64 },
    #[error("ODE integrator exceeded its step budget on an edge")]
    IntegratorBudget,
    #[error("matrix dimension {dim} exceeds the budget of {budget}")]
    DimensionBudget { dim: usize, budget: usize },
    #[error("eigensolver did not converge: {0}")]
    NoConvergence(String),
    #[error("matrix factorization failed: {0}")]
    Factorization(String),
    #[error("missing vertex spectra for the non-decaying regime")]
    MissingVertexSpectra,
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Errors raised by the manifold discretization.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("invalid mesh parameters: {0}")]
    InvalidParameter(String),
    #[error("port incompatibility at vertex {vertex}: {reason}")]
    PortIncompatible { vertex: usize, reason: String },
    #[error("mesh has {nodes} nodes, the budget is {budget}")]
    Budget { nodes: usize, budget: usize },
    #[error("non-positive quadrature weight in patch {patch}")]
    BadMetric { patch: usize },
    #[error("the non-decaying regime has no manifold discretization")]
    UnsupportedRegime,
    #[error(transparent)]
    Solver(#[from] SolverError),
}
