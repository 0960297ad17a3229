//! Metric graphs: edges with lengths and densities glued at vertices.
//!
//! A [`MetricGraph`] is always validated: every edge has positive length and a
//! strictly positive density, endpoints exist, and the graph is connected.
//! Half-edge incidence is materialized at construction; a loop contributes two
//! half-edges (its initial and its final end) to its vertex.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::GraphError;

/// Highest polynomial degree accepted for a density profile.
pub const MAX_DENSITY_DEGREE: usize = 8;

/// Number of interior grid points used for the positivity check.
const POSITIVITY_GRID: usize = 1024;

/// Density `p(x)` on an edge, `x` measured from the initial vertex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DensityProfile {
    Constant(f64),
    /// Coefficients in ascending powers of `x`.
    Polynomial(Vec<f64>),
}

impl Default for DensityProfile {
    fn default() -> Self {
        DensityProfile::Constant(1.0)
    }
}

impl DensityProfile {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            DensityProfile::Constant(c) => *c,
            DensityProfile::Polynomial(c) => c.iter().rev().fold(0.0, |acc, &a| acc * x + a),
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            DensityProfile::Constant(_) => 0.0,
            DensityProfile::Polynomial(c) => c
                .iter()
                .enumerate()
                .skip(1)
                .rev()
                .fold(0.0, |acc, (k, &a)| acc * x + k as f64 * a),
        }
    }

    /// Value when the profile is constant on the edge.
    pub fn constant_value(&self) -> Option<f64> {
        match self {
            DensityProfile::Constant(c) => Some(*c),
            DensityProfile::Polynomial(c) => {
                if c.iter().skip(1).all(|&a| a == 0.0) {
                    Some(c.first().copied().unwrap_or(0.0))
                } else {
                    None
                }
            }
        }
    }

    /// Fibre radius of the thickened edge. In two dimensions the fibre has
    /// dimension one, so the radius equals the density.
    pub fn radius(&self, x: f64) -> f64 {
        self.eval(x)
    }

    fn degree(&self) -> usize {
        match self {
            DensityProfile::Constant(_) => 0,
            DensityProfile::Polynomial(c) => c.iter().rposition(|&a| a != 0.0).unwrap_or(0),
        }
    }

    fn check_positive(&self, edge: &str, length: f64) -> Result<(), GraphError> {
        if self.degree() > MAX_DENSITY_DEGREE {
            return Err(GraphError::DensityDegree {
                edge: edge.to_string(),
                degree: self.degree(),
                max: MAX_DENSITY_DEGREE,
            });
        }
        if let DensityProfile::Polynomial(c) = self {
            if c.is_empty() {
                return Err(GraphError::NonPositiveDensity { edge: edge.to_string(), x: 0.0, value: 0.0 });
            }
        }
        // endpoints are included by the grid (i = 0 and i = POSITIVITY_GRID + 1)
        for i in 0..=POSITIVITY_GRID + 1 {
            let x = length * i as f64 / (POSITIVITY_GRID + 1) as f64;
            let v = self.eval(x);
            if !(v > 0.0) || !v.is_finite() {
                return Err(GraphError::NonPositiveDensity { edge: edge.to_string(), x, value: v });
            }
        }
        Ok(())
    }
}

/// Boundary condition at degree-one vertices under the Kirchhoff condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LooseEnd {
    #[default]
    Neumann,
    Dirichlet,
}

impl FromStr for LooseEnd {
    type Err = GraphError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "neumann" => Ok(LooseEnd::Neumann),
            "dirichlet" => Ok(LooseEnd::Dirichlet),
            other => Err(GraphError::Condition(format!("unknown loose-end condition `{other}`"))),
        }
    }
}

/// Vertex conditions understood by the solvers.
///
/// All derivatives are taken on each edge in the direction pointing away from
/// the vertex, weighted by the density at the vertex:
///
/// * `Kirchhoff`: continuity and `sum p_j u_j' = 0`.
/// * `Delta(k)`: continuity and `sum p_j u_j' = k u(v)`.
/// * `DirichletDecoupled`: `u_j(v) = 0` on every incident edge.
/// * `Borderline`: continuity and `sum p_j u_j' = -lambda vol(v) u(v)`, with
///   `vol(v)` taken from the vertex record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VertexCondition {
    Kirchhoff,
    Delta(f64),
    DirichletDecoupled,
    Borderline,
}

impl Default for VertexCondition {
    fn default() -> Self {
        VertexCondition::Kirchhoff
    }
}

impl FromStr for VertexCondition {
    type Err = GraphError;
    /// Accepts `kirchhoff`, `delta:<k>`, `dirichlet` and `borderline`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        if let Some(rest) = lower.strip_prefix("delta:") {
            let k: f64 = rest
                .trim()
                .parse()
                .map_err(|_| GraphError::Condition(format!("bad delta strength `{rest}`")))?;
            if !k.is_finite() {
                return Err(GraphError::Condition(format!("bad delta strength `{rest}`")));
            }
            return Ok(VertexCondition::Delta(k));
        }
        match lower.as_str() {
            "kirchhoff" | "neumann" => Ok(VertexCondition::Kirchhoff),
            "dirichlet" => Ok(VertexCondition::DirichletDecoupled),
            "borderline" => Ok(VertexCondition::Borderline),
            other => Err(GraphError::Condition(format!("unknown vertex condition `{other}`"))),
        }
    }
}

impl fmt::Display for VertexCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VertexCondition::Kirchhoff => write!(f, "kirchhoff"),
            VertexCondition::Delta(k) => write!(f, "delta:{k}"),
            VertexCondition::DirichletDecoupled => write!(f, "dirichlet"),
            VertexCondition::Borderline => write!(f, "borderline"),
        }
    }
}

/// Condition actually imposed at one vertex once loose ends and vertex
/// volumes are taken into account.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LocalCondition {
    Kirchhoff,
    Delta(f64),
    Dirichlet,
    /// Energy-dependent coupling with the given vertex volume.
    Borderline(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EdgeEnd {
    Init,
    Fin,
}

/// One end of an edge as seen from the vertex it touches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HalfEdge {
    pub edge: usize,
    pub end: EdgeEnd,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VertexRecord {
    pub id: String,
    /// Vertex-volume parameter, used by the borderline coupling.
    pub vol: f64,
    /// Eigenvalues of the closed vertex manifold (non-decaying regime only).
    pub spectrum: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeRecord {
    pub id: String,
    pub init: usize,
    pub fin: usize,
    pub length: f64,
    pub density: DensityProfile,
}

impl EdgeRecord {
    pub fn is_loop(&self) -> bool {
        self.init == self.fin
    }

    pub fn vertex_at(&self, end: EdgeEnd) -> usize {
        match end {
            EdgeEnd::Init => self.init,
            EdgeEnd::Fin => self.fin,
        }
    }

    /// Coordinate of the given end along the edge.
    pub fn coord_at(&self, end: EdgeEnd) -> f64 {
        match end {
            EdgeEnd::Init => 0.0,
            EdgeEnd::Fin => self.length,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricGraph {
    vertices: Vec<VertexRecord>,
    edges: Vec<EdgeRecord>,
    incidence: Vec<Vec<HalfEdge>>,
    pub default_condition: VertexCondition,
    pub loose_end: LooseEnd,
}

impl MetricGraph {
    pub fn vertices(&self) -> &[VertexRecord] {
        &self.vertices
    }

    pub fn edges(&self) -> &[EdgeRecord] {
        &self.edges
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Half-edges meeting vertex `k`, ordered by edge index then end.
    pub fn half_edges(&self, k: usize) -> &[HalfEdge] {
        &self.incidence[k]
    }

    pub fn degree(&self, k: usize) -> usize {
        self.incidence[k].len()
    }

    pub fn total_length(&self) -> f64 {
        self.edges.iter().map(|e| e.length).sum()
    }

    pub fn min_length(&self) -> f64 {
        self.edges.iter().map(|e| e.length).fold(f64::INFINITY, f64::min)
    }

    pub fn max_length(&self) -> f64 {
        self.edges.iter().map(|e| e.length).fold(0.0, f64::max)
    }

    pub fn all_constant_density(&self) -> bool {
        self.edges.iter().all(|e| e.density.constant_value().is_some())
    }

    pub fn vertex_index(&self, id: &str) -> Option<usize> {
        self.vertices.iter().position(|v| v.id == id)
    }

    /// Returns a copy with new vertex volumes (same order as the vertices).
    pub fn with_vertex_volumes(&self, vols: &[f64]) -> Result<MetricGraph, GraphError> {
        assert_eq!(vols.len(), self.vertices.len(), "one volume per vertex");
        let mut g = self.clone();
        for (v, &vol) in g.vertices.iter_mut().zip(vols) {
            if !(vol >= 0.0) || !vol.is_finite() {
                return Err(GraphError::InvalidVolume { vertex: v.id.clone(), vol });
            }
            v.vol = vol;
        }
        Ok(g)
    }

    /// Resolve a global condition into the condition at vertex `k`.
    pub fn local_condition(&self, k: usize, cond: VertexCondition) -> LocalCondition {
        let deg_one = self.degree(k) == 1;
        match cond {
            VertexCondition::Kirchhoff => {
                if deg_one && self.loose_end == LooseEnd::Dirichlet {
                    LocalCondition::Dirichlet
                } else {
                    LocalCondition::Kirchhoff
                }
            }
            VertexCondition::Delta(kappa) => LocalCondition::Delta(kappa),
            VertexCondition::DirichletDecoupled => LocalCondition::Dirichlet,
            VertexCondition::Borderline => LocalCondition::Borderline(self.vertices[k].vol),
        }
    }

    /// Check that `cond` can be imposed on this graph.
    pub fn check_condition(&self, cond: VertexCondition) -> Result<(), GraphError> {
        if cond == VertexCondition::Borderline {
            for v in &self.vertices {
                if !(v.vol > 0.0) || !v.vol.is_finite() {
                    return Err(GraphError::InvalidVolume { vertex: v.id.clone(), vol: v.vol });
                }
            }
        }
        Ok(())
    }

    /// Interval `[0, length]` with two vertices `a` and `b`.
    pub fn interval(length: f64) -> Result<MetricGraph, GraphError> {
        GraphSpec::new()
            .vertex("a", 0.0)
            .vertex("b", 0.0)
            .edge("e", "a", "b", length)
            .build()
    }

    /// Star with a centre `c` and `arms` leaves, every arm of length `length`.
    pub fn star(arms: usize, length: f64) -> Result<MetricGraph, GraphError> {
        let mut spec = GraphSpec::new().vertex("c", 0.0);
        for i in 0..arms {
            let leaf = format!("v{}", i + 1);
            spec = spec.vertex(&leaf, 0.0).edge(&format!("e{}", i + 1), "c", &leaf, length);
        }
        spec.build()
    }

    /// One vertex carrying `loops` loops of length `length`.
    pub fn bouquet(loops: usize, length: f64) -> Result<MetricGraph, GraphError> {
        let mut spec = GraphSpec::new().vertex("o", 0.0);
        for i in 0..loops {
            spec = spec.edge(&format!("l{}", i + 1), "o", "o", length);
        }
        spec.build()
    }
}

/// Serializable description of a metric graph (the graph spec file).
///
/// ```toml
/// condition = "kirchhoff"   # kirchhoff | delta:<k> | dirichlet | borderline
/// loose_end = "neumann"     # neumann | dirichlet
///
/// [[vertex]]
/// id = "a"
/// vol = 0.5
///
/// [[edge]]
/// id = "e1"
/// from = "a"
/// to = "b"
/// length = 1.0
/// density = { polynomial = [1.0, 2.0, 1.0] }
/// ```
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loose_end: Option<String>,
    #[serde(default, rename = "vertex")]
    pub vertices: Vec<VertexSpec>,
    #[serde(default, rename = "edge")]
    pub edges: Vec<EdgeSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VertexSpec {
    pub id: String,
    #[serde(default)]
    pub vol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectrum: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeSpec {
    pub id: String,
    pub from: String,
    pub to: String,
    pub length: f64,
    #[serde(default)]
    pub density: DensityProfile,
}

impl GraphSpec {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_toml_str(s: &str) -> Result<Self, GraphError> {
        toml::from_str(s).map_err(|e| GraphError::Parse(e.to_string()))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("graph spec serializes")
    }

    pub fn vertex(mut self, id: &str, vol: f64) -> Self {
        self.vertices.push(VertexSpec { id: id.to_string(), vol, spectrum: None });
        self
    }

    pub fn edge(self, id: &str, from: &str, to: &str, length: f64) -> Self {
        self.edge_with_density(id, from, to, length, DensityProfile::Constant(1.0))
    }

    pub fn edge_with_density(mut self, id: &str, from: &str, to: &str, length: f64, density: DensityProfile) -> Self {
        self.edges.push(EdgeSpec {
            id: id.to_string(),
            from: from.to_string(),
            to: to.to_string(),
            length,
            density,
        });
        self
    }

    pub fn build(&self) -> Result<MetricGraph, GraphError> {
        build_metric_graph(self)
    }
}

/// Validate a graph description and materialize the half-edge incidence.
pub fn build_metric_graph(spec: &GraphSpec) -> Result<MetricGraph, GraphError> {
    let default_condition = match &spec.condition {
        Some(s) => s.parse()?,
        None => VertexCondition::Kirchhoff,
    };
    let loose_end = match &spec.loose_end {
        Some(s) => s.parse()?,
        None => LooseEnd::Neumann,
    };

    let mut index = BTreeMap::new();
    let mut vertices = Vec::with_capacity(spec.vertices.len());
    for v in &spec.vertices {
        if index.insert(v.id.clone(), vertices.len()).is_some() {
            return Err(GraphError::DuplicateId { kind: "vertex", id: v.id.clone() });
        }
        if !(v.vol >= 0.0) || !v.vol.is_finite() {
            return Err(GraphError::InvalidVolume { vertex: v.id.clone(), vol: v.vol });
        }
        vertices.push(VertexRecord { id: v.id.clone(), vol: v.vol, spectrum: v.spectrum.clone() });
    }
    if spec.edges.is_empty() {
        return Err(GraphError::Empty);
    }

    let mut seen_edges = BTreeMap::new();
    let mut edges = Vec::with_capacity(spec.edges.len());
    for e in &spec.edges {
        if seen_edges.insert(e.id.clone(), ()).is_some() {
            return Err(GraphError::DuplicateId { kind: "edge", id: e.id.clone() });
        }
        if !(e.length > 0.0) || !e.length.is_finite() {
            return Err(GraphError::NonPositiveLength { edge: e.id.clone(), length: e.length });
        }
        let lookup = |id: &str| {
            index
                .get(id)
                .copied()
                .ok_or_else(|| GraphError::DanglingEndpoint { edge: e.id.clone(), vertex: id.to_string() })
        };
        let init = lookup(&e.from)?;
        let fin = lookup(&e.to)?;
        e.density.check_positive(&e.id, e.length)?;
        edges.push(EdgeRecord { id: e.id.clone(), init, fin, length: e.length, density: e.density.clone() });
    }

    let mut incidence = vec![Vec::new(); vertices.len()];
    for (j, e) in edges.iter().enumerate() {
        incidence[e.init].push(HalfEdge { edge: j, end: EdgeEnd::Init });
        incidence[e.fin].push(HalfEdge { edge: j, end: EdgeEnd::Fin });
    }

    // connectivity by breadth-first search from vertex 0
    let mut reached = vec![false; vertices.len()];
    let mut queue = VecDeque::from([0usize]);
    reached[0] = true;
    while let Some(k) = queue.pop_front() {
        for h in &incidence[k] {
            let e = &edges[h.edge];
            for w in [e.init, e.fin] {
                if !reached[w] {
                    reached[w] = true;
                    queue.push_back(w);
                }
            }
        }
    }
    if let Some(k) = reached.iter().position(|&r| !r) {
        return Err(GraphError::Disconnected { vertex: vertices[k].id.clone() });
    }

    Ok(MetricGraph { vertices, edges, incidence, default_condition, loose_end })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smallest_graph() {
        let g = MetricGraph::interval(1.0).unwrap();
        assert_eq!(g.num_edges(), 1);
        assert_eq!(g.num_vertices(), 2);
        assert_eq!(g.half_edges(0).len(), 1);
        assert_eq!(g.half_edges(1).len(), 1);
    }

    #[test]
    fn loop_contributes_two_half_edges() {
        let g = MetricGraph::bouquet(1, 1.0).unwrap();
        assert_eq!(g.num_edges(), 1);
        assert_eq!(g.num_vertices(), 1);
        let h = g.half_edges(0);
        assert_eq!(h.len(), 2);
        assert_ne!(h[0], h[1]);
        assert_eq!(h[0].edge, h[1].edge);
    }

    #[test]
    fn three_star() {
        let g = MetricGraph::star(3, 1.0).unwrap();
        assert_eq!(g.num_edges(), 3);
        assert_eq!(g.num_vertices(), 4);
        let centre: Vec<usize> = g.half_edges(0).iter().map(|h| h.edge).collect();
        assert_eq!(centre, vec![0, 1, 2]);
        assert_eq!(g.total_length(), 3.0);
    }

    #[test]
    fn rejects_bad_input() {
        let bad_len = GraphSpec::new().vertex("a", 0.0).vertex("b", 0.0).edge("e", "a", "b", 0.0);
        assert!(matches!(bad_len.build(), Err(GraphError::NonPositiveLength { .. })));

        let dangling = GraphSpec::new().vertex("a", 0.0).edge("e", "a", "z", 1.0);
        assert!(matches!(dangling.build(), Err(GraphError::DanglingEndpoint { .. })));

        let negative = GraphSpec::new().vertex("a", 0.0).vertex("b", 0.0).edge_with_density(
            "e",
            "a",
            "b",
            1.0,
            DensityProfile::Polynomial(vec![1.0, -3.0]),
        );
        assert!(matches!(negative.build(), Err(GraphError::NonPositiveDensity { .. })));

        let split = GraphSpec::new()
            .vertex("a", 0.0)
            .vertex("b", 0.0)
            .vertex("c", 0.0)
            .edge("e", "a", "b", 1.0);
        assert!(matches!(split.build(), Err(GraphError::Disconnected { .. })));

        assert!(matches!(GraphSpec::new().vertex("a", 0.0).build(), Err(GraphError::Empty)));
    }

    #[test]
    fn narrow_negative_dip_is_caught() {
        // (x - 1/2)^2 - 1e-4 is negative on a window of width 0.02
        let p = DensityProfile::Polynomial(vec![0.25 - 1e-4, -1.0, 1.0]);
        assert!(p.check_positive("e", 1.0).is_err());
    }

    #[test]
    fn polynomial_evaluation() {
        let p = DensityProfile::Polynomial(vec![1.0, 2.0, 1.0]);
        assert_eq!(p.eval(1.0), 4.0);
        assert_eq!(p.derivative(1.0), 4.0);
        assert_eq!(p.constant_value(), None);
        assert_eq!(DensityProfile::Polynomial(vec![2.0, 0.0]).constant_value(), Some(2.0));
    }

    #[test]
    fn parse_toml_and_reject_unknown_keys() {
        let text = r#"
condition = "delta:2.5"
loose_end = "dirichlet"

[[vertex]]
id = "a"
vol = 0.5

[[vertex]]
id = "b"

[[edge]]
id = "e"
from = "a"
to = "b"
length = 2.0
density = { polynomial = [1.0, 1.0] }
"#;
        let g = GraphSpec::from_toml_str(text).unwrap().build().unwrap();
        assert_eq!(g.default_condition, VertexCondition::Delta(2.5));
        assert_eq!(g.loose_end, LooseEnd::Dirichlet);
        assert_eq!(g.vertices()[0].vol, 0.5);
        assert_eq!(g.edges()[0].density.eval(1.0), 2.0);

        let unknown = text.replace("length = 2.0", "length = 2.0\ncolour = \"red\"");
        assert!(matches!(GraphSpec::from_toml_str(&unknown), Err(GraphError::Parse(_))));
    }

    #[test]
    fn condition_parsing() {
        assert_eq!("Kirchhoff".parse::<VertexCondition>().unwrap(), VertexCondition::Kirchhoff);
        assert_eq!("delta:-1".parse::<VertexCondition>().unwrap(), VertexCondition::Delta(-1.0));
        assert!("delta:x".parse::<VertexCondition>().is_err());
        assert!("robin".parse::<VertexCondition>().is_err());
    }

    #[test]
    fn loose_end_resolution() {
        let mut g = MetricGraph::star(3, 1.0).unwrap();
        assert_eq!(g.local_condition(1, VertexCondition::Kirchhoff), LocalCondition::Kirchhoff);
        g.loose_end = LooseEnd::Dirichlet;
        assert_eq!(g.local_condition(1, VertexCondition::Kirchhoff), LocalCondition::Dirichlet);
        assert_eq!(g.local_condition(0, VertexCondition::Kirchhoff), LocalCondition::Kirchhoff);
    }

    #[test]
    fn borderline_needs_positive_volume() {
        let g = MetricGraph::interval(1.0).unwrap();
        assert!(g.check_condition(VertexCondition::Borderline).is_err());
        let g = g.with_vertex_volumes(&[1.0, 1.0]).unwrap();
        assert!(g.check_condition(VertexCondition::Borderline).is_ok());
    }
}
