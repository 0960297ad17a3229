//! Spectra of the limit operators of thin manifolds, per scaling regime.

use crate::error::SolverError;
use crate::graph::{MetricGraph, VertexCondition};
use crate::regime::{RegimeTag, ScalingRegime};
use crate::secular::{eigenvalues_borderline, eigenvalues_secular, SecularSystem};
use crate::spectrum::{Spectrum, MERGE_RTOL};

/// Root tolerance used for limit spectra.
pub const LIMIT_TOL: f64 = 1e-12;

/// Predicted limit spectrum up to `cutoff`.
///
/// * fast: Kirchhoff Laplacian of the graph;
/// * slow: `0` with multiplicity `|K|` together with the Dirichlet spectra of
///   the edges;
/// * borderline: energy-dependent coupling with the vertex volumes of `graph`;
/// * nondecay: Dirichlet edge spectra together with the closed vertex spectra,
///   taken from `vertex_spectra` or else from the vertex records.
pub fn limit_spectrum(
    graph: &MetricGraph,
    regime: &ScalingRegime,
    vertex_spectra: Option<&[Vec<f64>]>,
    cutoff: f64,
) -> Result<Spectrum, SolverError> {
    if !(cutoff > 0.0) || !cutoff.is_finite() {
        return Err(SolverError::InvalidArgument(format!("cutoff {cutoff} must be positive")));
    }
    regime.validate(crate::regime::DIM)?;
    match regime.tag {
        RegimeTag::Fast => {
            let sys = SecularSystem::new(graph, VertexCondition::Kirchhoff)?;
            eigenvalues_secular(&sys, cutoff, LIMIT_TOL)
        }
        RegimeTag::Slow => {
            let zeros = Spectrum::from_values(&vec![(0.0, 0.0); graph.num_vertices()], cutoff, MERGE_RTOL);
            Ok(zeros.merge(&dirichlet(graph, cutoff)?))
        }
        RegimeTag::Borderline => {
            let sys = SecularSystem::new(graph, VertexCondition::Borderline)?;
            eigenvalues_borderline(&sys, cutoff, LIMIT_TOL)
        }
        RegimeTag::Nondecay => {
            let lists: Vec<Vec<f64>> = match vertex_spectra {
                Some(v) => v.to_vec(),
                None => graph
                    .vertices()
                    .iter()
                    .map(|v| v.spectrum.clone())
                    .collect::<Option<Vec<_>>>()
                    .ok_or(SolverError::MissingVertexSpectra)?,
            };
            if lists.len() != graph.num_vertices() {
                return Err(SolverError::MissingVertexSpectra);
            }
            let mut out = dirichlet(graph, cutoff)?;
            for list in &lists {
                if list.iter().any(|x| !x.is_finite() || *x < 0.0) {
                    return Err(SolverError::InvalidArgument("vertex spectra must be finite and >= 0".into()));
                }
                let vals: Vec<(f64, f64)> = list.iter().map(|&x| (x, 0.0)).collect();
                out = out.merge(&Spectrum::from_values(&vals, cutoff, MERGE_RTOL));
            }
            Ok(out)
        }
    }
}

fn dirichlet(graph: &MetricGraph, cutoff: f64) -> Result<Spectrum, SolverError> {
    let sys = SecularSystem::new(graph, VertexCondition::DirichletDecoupled)?;
    eigenvalues_secular(&sys, cutoff, LIMIT_TOL)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn regime(tag: RegimeTag, alpha: f64) -> ScalingRegime {
        ScalingRegime::new(tag, alpha, 0.1).unwrap()
    }

    #[test]
    fn slow_single_edge() {
        let g = MetricGraph::interval(1.0).unwrap();
        let s = limit_spectrum(&g, &regime(RegimeTag::Slow, 0.25), None, 50.0).unwrap();
        assert_eq!(s.entries[0].lambda, 0.0);
        assert_eq!(s.entries[0].multiplicity, 2);
        let v = s.expanded();
        assert_eq!(v.len(), 4);
        assert!((v[2] - PI * PI).abs() < 1e-9);
        assert!((v[3] - 4.0 * PI * PI).abs() < 1e-9);
    }

    #[test]
    fn slow_equal_edges_stack_up() {
        let g = MetricGraph::star(3, 2.0).unwrap();
        let s = limit_spectrum(&g, &regime(RegimeTag::Slow, 0.25), None, 30.0).unwrap();
        assert_eq!(s.entries[0].multiplicity, 4);
        for (m, e) in s.entries[1..].iter().enumerate() {
            let k = (m + 1) as f64;
            assert!((e.lambda - PI * PI * k * k / 4.0).abs() < 1e-9);
            assert_eq!(e.multiplicity, 3);
        }
    }

    #[test]
    fn nondecay_merges_vertex_spectra() {
        let g = MetricGraph::interval(1.0).unwrap();
        let nu = 39.48;
        let vs = vec![vec![0.0, nu], vec![0.0, nu]];
        let s = limit_spectrum(&g, &regime(RegimeTag::Nondecay, 0.0), Some(&vs), 45.0).unwrap();
        // merge-sort oracle over the three lists
        let mut oracle = vec![0.0, nu, 0.0, nu, PI * PI, 4.0 * PI * PI];
        oracle.sort_by(f64::total_cmp);
        let got = s.expanded();
        assert_eq!(got.len(), oracle.len());
        for (a, b) in got.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-9);
        }
        assert_eq!(s.entries.iter().find(|e| e.lambda == nu).unwrap().multiplicity, 2);
        assert!(matches!(
            limit_spectrum(&g, &regime(RegimeTag::Nondecay, 0.0), None, 45.0),
            Err(SolverError::MissingVertexSpectra)
        ));
    }

    #[test]
    fn fast_is_kirchhoff_and_cutoff_is_checked() {
        let g = MetricGraph::star(3, 1.0).unwrap();
        let s = limit_spectrum(&g, &regime(RegimeTag::Fast, 1.0), None, 10.0).unwrap();
        assert_eq!(s.count(), 4);
        assert!(limit_spectrum(&g, &regime(RegimeTag::Fast, 1.0), None, 0.0).is_err());
    }
}
