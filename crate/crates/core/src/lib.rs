//! Spectra of quantum graphs, Floquet band structures of periodic graphs, and
//! numerical convergence studies of thin graph-like manifolds.

pub mod eigs;
pub mod error;
pub mod fd;
pub mod floquet;
pub mod graph;
pub mod limit;
pub mod manifold;
pub mod regime;
pub mod secular;
pub mod sparse;
pub mod spectrum;
pub mod transfer;

pub use error::{GraphError, MeshError, SolverError};
pub use graph::{
    build_metric_graph, DensityProfile, EdgeEnd, EdgeRecord, GraphSpec, HalfEdge, LocalCondition, LooseEnd,
    MetricGraph, VertexCondition, VertexRecord,
};
pub use regime::{RegimeTag, ScalingRegime};
pub use secular::{eigenvalues_borderline, eigenvalues_secular, secular_matrix, PhaseAssignment, SecularSystem};
pub use spectrum::{Spectrum, SpectrumEntry};
pub use transfer::{transfer_matrix_edge, transfer_matrix_edge_uv};
pub use fd::eigenvalues_fd;
pub use limit::limit_spectrum;
pub use floquet::{
    band_structure_borderline, band_structure_kirchhoff, dispersion_range, find_gaps, theta_sampled_bands, BandModel,
    BandStructure, FlatBand, Gap, GapReport, GroupSpec,
};
pub use manifold::{
    assemble, build_mesh, convergence_study, lowest_eigenvalues, AssembledPair, ConvergenceReport, HPolicy,
    ManifoldMesh, MeshOptions, Patch, PatchKind, StudyOptions,
};
