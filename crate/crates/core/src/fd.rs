//! Finite-difference reference solver for graph eigenvalues.
//!
//! Every edge is cut into cells of length about `1/n`. Interior nodes belong to
//! one edge, vertex nodes are shared by all incident edges, which imposes
//! continuity. The scheme is the three-point stencil written as linear
//! elements with lumped mass, so the vertex rows carry the weighted flux
//! balance automatically:
//!
//! * stiffness `p(x_{i+1/2}) / h` per cell, mass `p(x_i) h / 2` per cell end;
//! * a delta coupling adds `k` to the vertex stiffness;
//! * the borderline coupling adds `vol` to the vertex mass;
//! * Dirichlet vertices are removed from the unknowns.

use crate::eigs::{lowest_generalized, EigOptions};
use crate::error::SolverError;
use crate::graph::{LocalCondition, MetricGraph, VertexCondition};
use crate::sparse::{CsrMatrix, SkylineLdl};
use crate::spectrum::Spectrum;

/// Default limit on the number of unknowns.
pub const DEFAULT_FD_BUDGET: usize = 2_000_000;

/// Discretized pair `A u = lambda M u` with diagonal `M`.
#[derive(Debug, Clone)]
pub struct FdProblem {
    pub stiffness: CsrMatrix,
    pub mass: Vec<f64>,
}

pub fn discretize(graph: &MetricGraph, cond: VertexCondition, n_per_unit: usize) -> Result<FdProblem, SolverError> {
    if n_per_unit < 16 {
        return Err(SolverError::InvalidArgument(format!("need n >= 16, got {n_per_unit}")));
    }
    graph.check_condition(cond)?;
    let nv = graph.num_vertices();
    let local: Vec<LocalCondition> = (0..nv).map(|k| graph.local_condition(k, cond)).collect();

    let mut dim = 0usize;
    let mut vnode = vec![usize::MAX; nv];
    for k in 0..nv {
        if local[k] != LocalCondition::Dirichlet {
            vnode[k] = dim;
            dim += 1;
        }
    }
    let cells: Vec<usize> =
        graph.edges().iter().map(|e| ((n_per_unit as f64 * e.length).round() as usize).max(2)).collect();
    let total: usize = dim + cells.iter().map(|c| c - 1).sum::<usize>();
    if total > DEFAULT_FD_BUDGET {
        return Err(SolverError::DimensionBudget { dim: total, budget: DEFAULT_FD_BUDGET });
    }

    let mut mass = vec![0.0; total];
    let mut t: Vec<(usize, usize, f64)> = Vec::with_capacity(4 * total);
    for (j, e) in graph.edges().iter().enumerate() {
        let nc = cells[j];
        let h = e.length / nc as f64;
        let first_interior = dim;
        dim += nc - 1;
        // node index of point i along the edge, or None for a removed vertex
        let node = |i: usize| -> Option<usize> {
            if i == 0 {
                Some(vnode[e.init]).filter(|&v| v != usize::MAX)
            } else if i == nc {
                Some(vnode[e.fin]).filter(|&v| v != usize::MAX)
            } else {
                Some(first_interior + i - 1)
            }
        };
        for c in 0..nc {
            let x0 = c as f64 * h;
            let k = e.density.eval(x0 + 0.5 * h) / h;
            let (a, b) = (node(c), node(c + 1));
            if let Some(a) = a {
                t.push((a, a, k));
                mass[a] += 0.5 * h * e.density.eval(x0);
            }
            if let Some(b) = b {
                t.push((b, b, k));
                mass[b] += 0.5 * h * e.density.eval(x0 + h);
            }
            if let (Some(a), Some(b)) = (a, b) {
                t.push((a, b, -k));
                t.push((b, a, -k));
            }
        }
    }
    for k in 0..nv {
        match local[k] {
            LocalCondition::Delta(kappa) => t.push((vnode[k], vnode[k], kappa)),
            LocalCondition::Borderline(vol) => mass[vnode[k]] += vol,
            _ => {}
        }
    }
    Ok(FdProblem { stiffness: CsrMatrix::from_triplets(total, &t), mass })
}

/// Lowest finite-difference eigenvalues up to `cutoff`.
pub fn eigenvalues_fd(
    graph: &MetricGraph,
    cond: VertexCondition,
    n_per_unit: usize,
    cutoff: f64,
) -> Result<Spectrum, SolverError> {
    if !(cutoff > 0.0) {
        return Err(SolverError::InvalidArgument(format!("cutoff {cutoff} must be positive")));
    }
    let prob = discretize(graph, cond, n_per_unit)?;
    let n = prob.mass.len();
    // inertia of A - cutoff M counts the eigenvalues below the cutoff
    let shifted: Vec<f64> = prob.mass.iter().map(|m| cutoff * m).collect();
    let count = SkylineLdl::factor(&prob.stiffness, &shifted)?.negative_count();
    if count == 0 {
        return Ok(Spectrum::empty(cutoff));
    }

    // a negative delta strength can push eigenvalues below zero
    let min_vertex_mass = prob.mass.iter().copied().fold(f64::INFINITY, f64::min);
    let neg: f64 = (0..graph.num_vertices())
        .map(|k| match graph.local_condition(k, cond) {
            LocalCondition::Delta(kappa) if kappa < 0.0 => -kappa,
            _ => 0.0,
        })
        .sum();
    let opts = EigOptions { shift: -1.0 - neg / min_vertex_mass, ..Default::default() };
    let pairs = lowest_generalized(&prob.stiffness, &prob.mass, count.min(n), &opts)?;
    let values: Vec<(f64, f64)> = pairs
        .values
        .iter()
        .zip(&pairs.residuals)
        .map(|(&l, &r)| (if l.abs() < 1e-10 { 0.0 } else { l }, r))
        .collect();
    Ok(Spectrum::from_values(&values, cutoff, 1e-8))
}
