//! Discretization of two-dimensional graph-like manifolds.
//!
//! Every patch carries parameter coordinates `(X, Y)` and a diagonal metric
//! `a^2 dX^2 + b^2 dY^2` sampled at its nodes. Edge strips use `X = x` along
//! the edge and `Y` across the fibre `F = [-1, 1]`, with `a = 1` and
//! `b = eps r_j(x)`. Vertex patches are regular polygons with sides of
//! parameter length two, cut into one quadrilateral per side (corner, side
//! midpoint, centre, previous midpoint), and carry a conformal factor
//! `a = b = rho`. Bottlenecks are strips whose longitudinal and transversal
//! factors interpolate between the vertex scale and the edge.
//!
//! The energy `int (b/a) u_X^2 + (a/b) u_Y^2 dX dY` is integrated with
//! bilinear isoparametric elements and 2x2 Gauss points; the mass is lumped by
//! nodal quadrature of `a b |J|`. Patches share global node numbers along
//! their interfaces, which glues them conformingly.

use std::collections::HashMap;
use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eigs::{lowest_generalized, EigOptions};
use crate::error::{MeshError, SolverError};
use crate::graph::{EdgeEnd, LooseEnd, MetricGraph};
use crate::limit::limit_spectrum;
use crate::regime::{RegimeTag, ScalingRegime};
use crate::sparse::{write_diagonal_triplets, write_triplets, CsrMatrix};
use crate::spectrum::Spectrum;

/// Volume of the fibre `F = [-1, 1]`.
pub const VOL_F: f64 = 2.0;

/// Default node budget of a mesh.
pub const DEFAULT_MESH_BUDGET: usize = 400_000;

/// Cells on the longitudinal rise of a bottleneck.
const RISE_CELLS: usize = 8;

/// Minimum cells on the funnel of a bottleneck.
const MIN_FUNNEL_CELLS: usize = 8;

fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PatchKind {
    Edge { edge: usize },
    Vertex { vertex: usize },
    Bottleneck { edge: usize, end: EdgeEnd },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub kind: PatchKind,
    /// Global node number of every local node.
    pub nodes: Vec<usize>,
    /// Parameter coordinates of every local node.
    pub coords: Vec<[f64; 2]>,
    /// Longitudinal metric factor at every local node.
    pub a: Vec<f64>,
    /// Transversal metric factor at every local node.
    pub b: Vec<f64>,
    /// Local corner indices of every quadrilateral cell.
    pub quads: Vec<[usize; 4]>,
    /// Cell counts `(nx, ny)` of a structured patch; `(sides, ny)` for vertices.
    pub grid: (usize, usize),
}

impl Patch {
    /// Metric area `int a b dX dY` by the nodal quadrature used for the mass.
    pub fn metric_area(&self) -> f64 {
        self.quads
            .iter()
            .map(|q| {
                let jac = corner_jacobians(&self.coords, q);
                (0..4).map(|c| self.a[q[c]] * self.b[q[c]] * jac[c]).sum::<f64>()
            })
            .sum()
    }
}

/// Two patch boundaries identified node by node.
#[derive(Debug, Clone, PartialEq)]
pub struct Interface {
    pub patch_a: usize,
    pub nodes_a: Vec<usize>,
    pub patch_b: usize,
    pub nodes_b: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldMesh {
    pub patches: Vec<Patch>,
    pub interfaces: Vec<Interface>,
    pub num_nodes: usize,
    /// Global nodes carrying a Dirichlet condition.
    pub dirichlet: Vec<usize>,
    pub regime: ScalingRegime,
    pub h: f64,
    /// Transversal cell count shared by every port.
    pub ny: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshOptions {
    pub budget: usize,
    /// Vertex scale factor: `rho_v = kappa_v eps^alpha` in the slow and
    /// borderline regimes.
    pub kappa_v: f64,
}

impl Default for MeshOptions {
    fn default() -> Self {
        MeshOptions { budget: DEFAULT_MESH_BUDGET, kappa_v: 0.5 }
    }
}

/// Radius profile of a bottleneck, `s = 0` at the vertex.
///
/// On the funnel `[0, delta_+]` the factor `r` decreases geometrically from
/// `rho_v` to `eps r_-` along a smoothstep, with `a = r` (conformally flat).
/// Then `r = eps r_-` while `a` rises from `eps r_-` to one over a stretch of
/// length `tau = min(delta_0, eps^2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BottleneckProfile {
    pub rho_v: f64,
    pub edge_radius: f64,
    pub delta_plus: f64,
    pub tau: f64,
}

impl BottleneckProfile {
    pub fn new(regime: &ScalingRegime, kappa_v: f64, r_minus: f64) -> Self {
        let eps = regime.eps;
        BottleneckProfile {
            rho_v: kappa_v * regime.vertex_scale(),
            edge_radius: eps * r_minus,
            delta_plus: regime.delta_plus(),
            tau: regime.delta0().min(eps * eps),
        }
    }

    pub fn length(&self) -> f64 {
        self.delta_plus + self.tau
    }

    pub fn r(&self, s: f64) -> f64 {
        let t = smoothstep(s / self.delta_plus);
        self.edge_radius * (self.rho_v / self.edge_radius).powf(1.0 - t)
    }

    pub fn a(&self, s: f64) -> f64 {
        if s <= self.delta_plus {
            self.r(s)
        } else {
            self.edge_radius + (1.0 - self.edge_radius) * smoothstep((s - self.delta_plus) / self.tau)
        }
    }

    /// Checks the envelope `a <= eps^alpha` away from the edge end (`a <= 1`
    /// within `delta_0` of it), `eps r_- <= r <= eps^alpha` on the funnel and
    /// `eps r_- <= r <= eps r_+` beyond it, on `samples` points.
    pub fn within_envelope(&self, regime: &ScalingRegime, samples: usize) -> bool {
        let ea = regime.vertex_scale();
        let len = self.length();
        let tol = 1e-12;
        (0..=samples).all(|i| {
            let s = len * i as f64 / samples as f64;
            let (a, r) = (self.a(s), self.r(s));
            let a_ok = if s <= len - regime.delta0() { a <= ea + tol } else { a <= 1.0 + tol };
            let r_hi = if s <= self.delta_plus { ea } else { regime.eps * regime.r_plus.max(self.edge_radius / regime.eps) };
            a_ok && r >= self.edge_radius - tol && r <= r_hi + tol
        })
    }
}

struct Builder {
    patches: Vec<Patch>,
    interfaces: Vec<Interface>,
    next: usize,
    budget: usize,
}

impl Builder {
    fn alloc(&mut self, n: usize) -> Result<Vec<usize>, MeshError> {
        let ids: Vec<usize> = (self.next..self.next + n).collect();
        self.next += n;
        if self.next > self.budget {
            return Err(MeshError::Budget { nodes: self.next, budget: self.budget });
        }
        Ok(ids)
    }

    /// Structured strip `[x_0, x_n] x [-1, 1]`. `first`/`last` give the global
    /// ids of the end columns when they are shared. Returns the patch index.
    #[allow(clippy::too_many_arguments)]
    fn strip(
        &mut self,
        kind: PatchKind,
        xs: &[f64],
        ny: usize,
        a: &dyn Fn(f64) -> f64,
        b: &dyn Fn(f64) -> f64,
        first: Option<&[usize]>,
        last: Option<&[usize]>,
    ) -> Result<usize, MeshError> {
        let nx = xs.len() - 1;
        let cols = ny + 1;
        let inner = (nx + 1 - first.is_some() as usize - last.is_some() as usize) * cols;
        let mut fresh = self.alloc(inner)?.into_iter();
        let mut nodes = Vec::with_capacity((nx + 1) * cols);
        let mut coords = Vec::with_capacity((nx + 1) * cols);
        let mut av = Vec::with_capacity((nx + 1) * cols);
        let mut bv = Vec::with_capacity((nx + 1) * cols);
        for (i, &x) in xs.iter().enumerate() {
            for j in 0..cols {
                let y = -1.0 + 2.0 * j as f64 / ny as f64;
                let id = match (i, first, last) {
                    (0, Some(f), _) => f[j],
                    (i, _, Some(l)) if i == nx => l[j],
                    _ => fresh.next().expect("allocated enough nodes"),
                };
                nodes.push(id);
                coords.push([x, y]);
                av.push(a(x));
                bv.push(b(x));
            }
        }
        let mut quads = Vec::with_capacity(nx * ny);
        for i in 0..nx {
            for j in 0..ny {
                let p = i * cols + j;
                quads.push([p, p + cols, p + cols + 1, p + 1]);
            }
        }
        self.patches.push(Patch { kind, nodes, coords, a: av, b: bv, quads, grid: (nx, ny) });
        Ok(self.patches.len() - 1)
    }

    /// Regular polygon vertex patch. Returns the patch index and, per side, the
    /// local node indices from corner `k` to corner `k + 1`.
    fn polygon(
        &mut self,
        vertex: usize,
        sides: usize,
        ny: usize,
        rho: &dyn Fn([f64; 2]) -> f64,
    ) -> Result<(usize, Vec<Vec<usize>>), MeshError> {
        let half = ny / 2;
        let circ = 1.0 / (PI / sides as f64).sin();
        let corner = |k: usize| {
            let phi = PI / 2.0 + 2.0 * PI * (k % sides) as f64 / sides as f64;
            [circ * phi.cos(), circ * phi.sin()]
        };
        let mid = |k: usize| {
            let (p, q) = (corner(k), corner(k + 1));
            [(p[0] + q[0]) / 2.0, (p[1] + q[1]) / 2.0]
        };

        let mut index: HashMap<(i64, i64), usize> = HashMap::new();
        let mut coords: Vec<[f64; 2]> = Vec::new();
        let mut quad_grid: Vec<Vec<usize>> = Vec::with_capacity(sides);
        let key = |x: [f64; 2]| ((x[0] * 1e9).round() as i64, (x[1] * 1e9).round() as i64);
        for k in 0..sides {
            let (p, m, c, mp) = (corner(k), mid(k), [0.0, 0.0], mid(k + sides - 1));
            let mut g = Vec::with_capacity((half + 1) * (half + 1));
            for i in 0..=half {
                for j in 0..=half {
                    let (s, t) = (i as f64 / half as f64, j as f64 / half as f64);
                    let w = [(1.0 - s) * (1.0 - t), s * (1.0 - t), s * t, (1.0 - s) * t];
                    let x = [
                        w[0] * p[0] + w[1] * m[0] + w[2] * c[0] + w[3] * mp[0],
                        w[0] * p[1] + w[1] * m[1] + w[2] * c[1] + w[3] * mp[1],
                    ];
                    let id = *index.entry(key(x)).or_insert_with(|| {
                        coords.push(x);
                        coords.len() - 1
                    });
                    g.push(id);
                }
            }
            quad_grid.push(g);
        }
        let at = |k: usize, i: usize, j: usize| quad_grid[k][i * (half + 1) + j];
        let mut quads = Vec::new();
        for k in 0..sides {
            for i in 0..half {
                for j in 0..half {
                    quads.push([at(k, i, j), at(k, i + 1, j), at(k, i + 1, j + 1), at(k, i, j + 1)]);
                }
            }
        }
        // side k runs P_k -> M_k inside quad k, then M_k -> P_{k+1} inside quad k+1
        let side_nodes: Vec<Vec<usize>> = (0..sides)
            .map(|k| {
                let next = (k + 1) % sides;
                let mut v: Vec<usize> = (0..=half).map(|i| at(k, i, 0)).collect();
                v.extend((0..half).rev().map(|j| at(next, 0, j)));
                v
            })
            .collect();

        let nodes = self.alloc(coords.len())?;
        let r: Vec<f64> = coords.iter().map(|&x| rho(x)).collect();
        self.patches.push(Patch {
            kind: PatchKind::Vertex { vertex },
            nodes,
            coords,
            a: r.clone(),
            b: r,
            quads,
            grid: (sides, ny),
        });
        Ok((self.patches.len() - 1, side_nodes))
    }
}

/// Sides of the vertex polygon and the side used by each incident half-edge.
fn polygon_layout(degree: usize) -> (usize, Vec<usize>) {
    match degree {
        1 => (4, vec![0]),
        2 => (4, vec![0, 2]),
        d => (d, (0..d).collect()),
    }
}

/// Builds the mesh of the thin manifold around `graph` at spacing `h`.
pub fn build_mesh(graph: &MetricGraph, regime: &ScalingRegime, h: f64) -> Result<ManifoldMesh, MeshError> {
    build_mesh_with(graph, regime, h, &MeshOptions::default())
}

pub fn build_mesh_with(
    graph: &MetricGraph,
    regime: &ScalingRegime,
    h: f64,
    opts: &MeshOptions,
) -> Result<ManifoldMesh, MeshError> {
    regime.validate(crate::regime::DIM).map_err(SolverError::from)?;
    if regime.tag == RegimeTag::Nondecay {
        return Err(MeshError::UnsupportedRegime);
    }
    if !(h > 0.0) || !h.is_finite() {
        return Err(MeshError::InvalidParameter(format!("spacing h = {h} must be positive")));
    }
    if !(opts.kappa_v > 0.0) {
        return Err(MeshError::InvalidParameter("vertex scale factor must be positive".into()));
    }
    for e in graph.edges() {
        if ((e.length / h).round() as usize) < 8 {
            return Err(MeshError::InvalidParameter(format!(
                "edge `{}` of length {} gets fewer than 8 cells at h = {h}",
                e.id, e.length
            )));
        }
    }
    let eps = regime.eps;
    let r_max = graph
        .edges()
        .iter()
        .flat_map(|e| (0..=64).map(move |i| e.density.radius(e.length * i as f64 / 64.0)))
        .fold(0.0, f64::max);
    let ny = (2 * (eps * r_max / h).ceil() as usize).max(4);

    let mut b = Builder { patches: Vec::new(), interfaces: Vec::new(), next: 0, budget: opts.budget };
    // global ids of the column where each half-edge's strip meets its vertex
    let mut ports: HashMap<(usize, EdgeEnd), Vec<usize>> = HashMap::new();
    let mut dirichlet = Vec::new();

    let slow_like = matches!(regime.tag, RegimeTag::Slow | RegimeTag::Borderline);
    for k in 0..graph.num_vertices() {
        let hs = graph.half_edges(k).to_vec();
        let deg = hs.len();
        if !slow_like && deg == 1 {
            continue;
        }
        let end_radius = |he: &crate::graph::HalfEdge| {
            let e = &graph.edges()[he.edge];
            e.density.radius(e.coord_at(he.end))
        };
        let (sides, side_of) = polygon_layout(deg);
        let (patch, side_nodes) = if slow_like {
            let rho_v = opts.kappa_v * regime.vertex_scale();
            b.polygon(k, sides, ny, &|_| rho_v)?
        } else {
            let r_port = end_radius(&hs[0]);
            if let Some(bad) = hs.iter().find(|he| (end_radius(he) - r_port).abs() > 1e-12 * r_port) {
                return Err(MeshError::PortIncompatible {
                    vertex: k,
                    reason: format!(
                        "fibre radii {} and {} differ at the vertex; ports of one polygon must match",
                        r_port,
                        end_radius(bad)
                    ),
                });
            }
            let apothem = 1.0 / (PI / sides as f64).tan();
            let normals: Vec<[f64; 2]> = (0..sides)
                .map(|s| {
                    let phi = PI / 2.0 + 2.0 * PI * (s as f64 + 0.5) / sides as f64;
                    [phi.cos(), phi.sin()]
                })
                .collect();
            let edge_rho = eps * r_port;
            let inner_rho = regime.vertex_scale();
            let rho = move |x: [f64; 2]| {
                let d = normals.iter().map(|n| apothem - (x[0] * n[0] + x[1] * n[1])).fold(f64::INFINITY, f64::min);
                edge_rho + (inner_rho - edge_rho) * smoothstep(d / apothem)
            };
            b.polygon(k, sides, ny, &rho)?
        };
        for (i, he) in hs.iter().enumerate() {
            let local = &side_nodes[side_of[i]];
            let global: Vec<usize> = local.iter().map(|&l| b.patches[patch].nodes[l]).collect();
            if slow_like {
                let e = &graph.edges()[he.edge];
                let prof = BottleneckProfile::new(regime, opts.kappa_v, e.density.radius(e.coord_at(he.end)));
                let nf = MIN_FUNNEL_CELLS.max((prof.delta_plus / (2.0 / ny as f64)).ceil() as usize);
                let mut xs: Vec<f64> = (0..=nf).map(|i| prof.delta_plus * i as f64 / nf as f64).collect();
                xs.extend((1..=RISE_CELLS).map(|i| prof.delta_plus + prof.tau * i as f64 / RISE_CELLS as f64));
                let bn = b.strip(
                    PatchKind::Bottleneck { edge: he.edge, end: he.end },
                    &xs,
                    ny,
                    &|s| prof.a(s),
                    &|s| prof.r(s),
                    Some(&global),
                    None,
                )?;
                b.interfaces.push(Interface {
                    patch_a: patch,
                    nodes_a: local.clone(),
                    patch_b: bn,
                    nodes_b: (0..=ny).collect(),
                });
                let nxb = xs.len() - 1;
                let far: Vec<usize> = (0..=ny).map(|j| b.patches[bn].nodes[nxb * (ny + 1) + j]).collect();
                ports.insert((he.edge, he.end), far);
                // record which patch owns the port column for the interface below
                b.interfaces.push(Interface {
                    patch_a: bn,
                    nodes_a: (0..=ny).map(|j| nxb * (ny + 1) + j).collect(),
                    patch_b: usize::MAX,
                    nodes_b: Vec::new(),
                });
            } else {
                ports.insert((he.edge, he.end), global);
                b.interfaces.push(Interface {
                    patch_a: patch,
                    nodes_a: local.clone(),
                    patch_b: usize::MAX,
                    nodes_b: Vec::new(),
                });
            }
        }
    }

    // pending interfaces (patch_b = MAX) are completed when the strip exists
    let mut pending: HashMap<Vec<usize>, usize> = HashMap::new();
    for (i, itf) in b.interfaces.iter().enumerate() {
        if itf.patch_b == usize::MAX {
            let ids: Vec<usize> = itf.nodes_a.iter().map(|&l| b.patches[itf.patch_a].nodes[l]).collect();
            pending.insert(ids, i);
        }
    }

    for (j, e) in graph.edges().iter().enumerate() {
        let nx = (e.length / h).round() as usize;
        let xs: Vec<f64> = (0..=nx).map(|i| e.length * i as f64 / nx as f64).collect();
        let first = ports.get(&(j, EdgeEnd::Init)).cloned();
        let last = ports.get(&(j, EdgeEnd::Fin)).cloned();
        let dens = e.density.clone();
        let p = b.strip(
            PatchKind::Edge { edge: j },
            &xs,
            ny,
            &|_| 1.0,
            &|x| eps * dens.radius(x),
            first.as_deref(),
            last.as_deref(),
        )?;
        for (col, ids) in [(0, &first), (nx, &last)] {
            if let Some(ids) = ids {
                let i = pending[ids];
                b.interfaces[i].patch_b = p;
                b.interfaces[i].nodes_b = (0..=ny).map(|r| col * (ny + 1) + r).collect();
            }
        }
        if !slow_like && graph.loose_end == LooseEnd::Dirichlet {
            for (end, col) in [(EdgeEnd::Init, 0), (EdgeEnd::Fin, nx)] {
                if graph.degree(e.vertex_at(end)) == 1 {
                    dirichlet.extend((0..=ny).map(|r| b.patches[p].nodes[col * (ny + 1) + r]));
                }
            }
        }
    }
    dirichlet.sort_unstable();
    dirichlet.dedup();

    Ok(ManifoldMesh {
        patches: b.patches,
        interfaces: b.interfaces,
        num_nodes: b.next,
        dirichlet,
        regime: *regime,
        h,
        ny,
    })
}

impl ManifoldMesh {
    /// Largest relative mismatch across all interfaces of the metric length of
    /// interface segments and of the tangential metric factor at shared nodes.
    /// Fails if an interface pairs different global nodes.
    pub fn conformity_defect(&self) -> Result<f64, MeshError> {
        let mut worst: f64 = 0.0;
        for itf in &self.interfaces {
            let (pa, pb) = (&self.patches[itf.patch_a], &self.patches[itf.patch_b]);
            if itf.nodes_a.len() != itf.nodes_b.len() {
                return Err(MeshError::InvalidParameter("interface sides differ in length".into()));
            }
            for (&la, &lb) in itf.nodes_a.iter().zip(&itf.nodes_b) {
                if pa.nodes[la] != pb.nodes[lb] {
                    return Err(MeshError::InvalidParameter("interface pairs different nodes".into()));
                }
            }
            let seg = |p: &Patch, l: &[usize]| -> Vec<(f64, f64)> {
                l.windows(2)
                    .map(|w| {
                        let (x0, x1) = (p.coords[w[0]], p.coords[w[1]]);
                        let (dx, dy) = (x1[0] - x0[0], x1[1] - x0[1]);
                        let a = 0.5 * (p.a[w[0]] + p.a[w[1]]);
                        let b = 0.5 * (p.b[w[0]] + p.b[w[1]]);
                        let len = ((a * dx).powi(2) + (b * dy).powi(2)).sqrt();
                        let weight = if dy.abs() >= dx.abs() { b } else { a };
                        (len, weight)
                    })
                    .collect()
            };
            for ((la, wa), (lb, wb)) in seg(pa, &itf.nodes_a).into_iter().zip(seg(pb, &itf.nodes_b)) {
                worst = worst.max((la - lb).abs() / la.max(lb)).max((wa - wb).abs() / wa.max(wb));
            }
        }
        Ok(worst)
    }

    /// Total metric area of the vertex patch of vertex `k`, if present.
    pub fn vertex_area(&self, k: usize) -> Option<f64> {
        self.patches
            .iter()
            .find(|p| p.kind == PatchKind::Vertex { vertex: k })
            .map(Patch::metric_area)
    }
}

/// Stiffness and lumped mass on the free nodes.
#[derive(Debug, Clone)]
pub struct AssembledPair {
    pub stiffness: CsrMatrix,
    pub mass: Vec<f64>,
    pub n: usize,
}

impl AssembledPair {
    /// Text export in the triplet format: stiffness and mass.
    pub fn export_triplets(&self) -> (String, String) {
        (write_triplets(&self.stiffness), write_diagonal_triplets(&self.mass))
    }
}

fn corner_jacobians(coords: &[[f64; 2]], q: &[usize; 4]) -> [f64; 4] {
    let refc = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)];
    let mut out = [0.0; 4];
    for (c, &(s, t)) in refc.iter().enumerate() {
        out[c] = jacobian(coords, q, s, t).0.abs();
    }
    out
}

/// Determinant, inverse-transpose rows and shape-function gradients at `(s, t)`.
fn jacobian(coords: &[[f64; 2]], q: &[usize; 4], s: f64, t: f64) -> (f64, [[f64; 4]; 2]) {
    let dns = [-(1.0 - t) / 4.0, (1.0 - t) / 4.0, (1.0 + t) / 4.0, -(1.0 + t) / 4.0];
    let dnt = [-(1.0 - s) / 4.0, -(1.0 + s) / 4.0, (1.0 + s) / 4.0, (1.0 - s) / 4.0];
    let (mut xs, mut ys, mut xt, mut yt) = (0.0, 0.0, 0.0, 0.0);
    for c in 0..4 {
        let p = coords[q[c]];
        xs += dns[c] * p[0];
        ys += dns[c] * p[1];
        xt += dnt[c] * p[0];
        yt += dnt[c] * p[1];
    }
    let det = xs * yt - ys * xt;
    // physical gradients: [N_X; N_Y] = J^-T [N_s; N_t]
    let mut g = [[0.0; 4]; 2];
    for c in 0..4 {
        g[0][c] = (yt * dns[c] - ys * dnt[c]) / det;
        g[1][c] = (-xt * dns[c] + xs * dnt[c]) / det;
    }
    (det, g)
}

fn patch_contributions(p: &Patch, patch_index: usize) -> Result<(Vec<(usize, usize, f64)>, Vec<(usize, f64)>), MeshError> {
    let gp = 1.0 / 3f64.sqrt();
    let mut trip = Vec::with_capacity(16 * p.quads.len());
    let mut mass = Vec::with_capacity(4 * p.quads.len());
    for q in &p.quads {
        let mut k = [[0.0; 4]; 4];
        for &s in &[-gp, gp] {
            for &t in &[-gp, gp] {
                let (det, g) = jacobian(&p.coords, q, s, t);
                let w = [(1.0 - s) * (1.0 - t) / 4.0, (1.0 + s) * (1.0 - t) / 4.0, (1.0 + s) * (1.0 + t) / 4.0, (1.0 - s) * (1.0 + t) / 4.0];
                let a: f64 = (0..4).map(|c| w[c] * p.a[q[c]]).sum();
                let b: f64 = (0..4).map(|c| w[c] * p.b[q[c]]).sum();
                if !(a > 0.0 && b > 0.0) || det == 0.0 || !det.is_finite() {
                    return Err(MeshError::BadMetric { patch: patch_index });
                }
                let (dx, dy) = (b / a, a / b);
                let jw = det.abs();
                for i in 0..4 {
                    for j in 0..4 {
                        k[i][j] += jw * (dx * g[0][i] * g[0][j] + dy * g[1][i] * g[1][j]);
                    }
                }
            }
        }
        for i in 0..4 {
            for j in 0..4 {
                trip.push((p.nodes[q[i]], p.nodes[q[j]], k[i][j]));
            }
        }
        let jac = corner_jacobians(&p.coords, q);
        for c in 0..4 {
            let m = p.a[q[c]] * p.b[q[c]] * jac[c];
            if !(m > 0.0) {
                return Err(MeshError::BadMetric { patch: patch_index });
            }
            mass.push((p.nodes[q[c]], m));
        }
    }
    Ok((trip, mass))
}

/// Assembles stiffness and lumped mass. Patches are processed in parallel and
/// merged in patch order.
pub fn assemble(mesh: &ManifoldMesh) -> Result<AssembledPair, MeshError> {
    let parts: Vec<_> = mesh
        .patches
        .par_iter()
        .enumerate()
        .map(|(i, p)| patch_contributions(p, i))
        .collect::<Result<_, _>>()?;
    let n = mesh.num_nodes;
    let mut trip = Vec::new();
    let mut mass = vec![0.0; n];
    for (t, m) in parts {
        trip.extend(t);
        for (i, v) in m {
            mass[i] += v;
        }
    }
    let full = CsrMatrix::from_triplets(n, &trip);
    if mesh.dirichlet.is_empty() {
        return Ok(AssembledPair { stiffness: full, mass, n });
    }
    let mut removed = vec![false; n];
    for &d in &mesh.dirichlet {
        removed[d] = true;
    }
    let keep: Vec<usize> = (0..n).filter(|&i| !removed[i]).collect();
    let stiffness = full.restrict(&keep);
    let mass = keep.iter().map(|&i| mass[i]).collect();
    Ok(AssembledPair { stiffness, mass, n: keep.len() })
}

/// The `k` lowest eigenvalues of the assembled pair (more if the `k`-th one
/// belongs to a cluster).
pub fn lowest_eigenvalues(pair: &AssembledPair, k: usize, tol: f64, seed: u64) -> Result<Spectrum, MeshError> {
    let opts = EigOptions { tol, seed, ..Default::default() };
    let r = lowest_generalized(&pair.stiffness, &pair.mass, k, &opts)?;
    let values: Vec<(f64, f64)> = r.values.iter().zip(&r.residuals).map(|(&l, &res)| (l.max(0.0), res)).collect();
    let cutoff = values.iter().map(|v| v.0).fold(0.0, f64::max);
    Ok(Spectrum::from_values(&values, cutoff, 1e-12))
}

/// Spacing policy of a convergence study: every mesh is solved at `h` and at
/// `h / 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HPolicy {
    pub h: f64,
}

impl Default for HPolicy {
    fn default() -> Self {
        HPolicy { h: 0.01 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudyOptions {
    pub mesh: MeshOptions,
    pub tol: f64,
    pub seed: u64,
}

impl Default for StudyOptions {
    fn default() -> Self {
        StudyOptions { mesh: MeshOptions::default(), tol: 1e-9, seed: 0 }
    }
}

/// One row of a convergence study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub eps: f64,
    pub h: f64,
    pub nodes: usize,
    /// First `k` eigenvalues at spacing `h`.
    pub coarse: Vec<f64>,
    /// First `k` eigenvalues at spacing `h / 2`.
    pub fine: Vec<f64>,
    /// `|fine - coarse|` per index.
    pub self_convergence: Vec<f64>,
    /// `|fine - limit|` per index.
    pub deviation: Vec<f64>,
    /// `deviation / limit`, or the plain deviation when the limit is zero.
    pub relative_deviation: Vec<f64>,
    pub certified: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub regime: RegimeTag,
    pub alpha: f64,
    pub k: usize,
    pub eps: Vec<f64>,
    /// Vertex volumes used for the borderline limit.
    pub vertex_volumes: Option<Vec<f64>>,
    /// First `k` limit eigenvalues.
    pub limit: Vec<f64>,
    pub rows: Vec<StudyRow>,
    /// Per index: deviation strictly decreasing along the `eps` list, over
    /// rows where the index is certified.
    pub monotone: Vec<bool>,
}

/// Zero eigenvalues computed below this bound count as exact.
const ZERO_EIGENVALUE: f64 = 1e-8;

/// Vertex-volume parameters of the borderline limit: vertex patch area over
/// `eps^(2 alpha) vol F`. With a constant conformal factor this does not
/// depend on `eps`.
pub fn borderline_vertex_volumes(graph: &MetricGraph, regime: &ScalingRegime, opts: &MeshOptions) -> Result<Vec<f64>, MeshError> {
    let h = graph.min_length() / 8.0;
    let mesh = build_mesh_with(graph, regime, h.min(0.05), opts)?;
    let scale = regime.eps.powf(2.0 * regime.alpha) * VOL_F;
    (0..graph.num_vertices())
        .map(|k| {
            mesh.vertex_area(k)
                .map(|a| a / scale)
                .ok_or_else(|| MeshError::InvalidParameter(format!("vertex {k} has no patch")))
        })
        .collect()
}

/// Runs the mesh at `h` and `h/2` for every `eps` and compares the first `k`
/// eigenvalues with the limit spectrum of the regime.
pub fn convergence_study(
    graph: &MetricGraph,
    tag: RegimeTag,
    alpha: f64,
    eps_list: &[f64],
    k: usize,
    policy: HPolicy,
    opts: &StudyOptions,
) -> Result<ConvergenceReport, MeshError> {
    if eps_list.is_empty() || eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(MeshError::InvalidParameter("eps list must be nonempty and strictly decreasing".into()));
    }
    if k == 0 {
        return Err(MeshError::InvalidParameter("k must be positive".into()));
    }
    if tag == RegimeTag::Nondecay {
        return Err(MeshError::UnsupportedRegime);
    }
    let regimes: Vec<ScalingRegime> = eps_list
        .iter()
        .map(|&e| ScalingRegime::new(tag, alpha, e).map_err(|e| MeshError::InvalidParameter(e.to_string())))
        .collect::<Result<_, _>>()?;

    let (limit_graph, vols) = if tag == RegimeTag::Borderline {
        let v = borderline_vertex_volumes(graph, &regimes[0], &opts.mesh)?;
        (graph.with_vertex_volumes(&v).map_err(SolverError::from)?, Some(v))
    } else {
        (graph.clone(), None)
    };

    // enough cutoff for k limit eigenvalues
    let mut cutoff = 50.0;
    let limit = loop {
        let s = limit_spectrum(&limit_graph, &regimes[0], None, cutoff)?;
        if s.count() >= k {
            break s.expanded()[..k].to_vec();
        }
        cutoff *= 4.0;
        if cutoff > 1e8 {
            return Err(MeshError::InvalidParameter("limit spectrum has fewer than k eigenvalues".into()));
        }
    };

    let jobs: Vec<(usize, f64)> =
        (0..regimes.len()).flat_map(|i| [(i, policy.h), (i, policy.h / 2.0)]).collect();
    let solved: Vec<(Vec<f64>, usize)> = jobs
        .par_iter()
        .map(|&(i, h)| {
            let mesh = build_mesh_with(graph, &regimes[i], h, &opts.mesh)?;
            let pair = assemble(&mesh)?;
            let s = lowest_eigenvalues(&pair, k, opts.tol, opts.seed)?;
            Ok((s.expanded()[..k].to_vec(), pair.n))
        })
        .collect::<Result<_, MeshError>>()?;

    let mut rows = Vec::new();
    for (i, &eps) in eps_list.iter().enumerate() {
        let (coarse, _) = &solved[2 * i];
        let (fine, nodes) = &solved[2 * i + 1];
        let mut sc = Vec::new();
        let mut dev = Vec::new();
        let mut rel = Vec::new();
        let mut cert = Vec::new();
        for j in 0..k {
            let s = (fine[j] - coarse[j]).abs();
            let zero_kernel = limit[j] == 0.0 && fine[j].abs() <= ZERO_EIGENVALUE && coarse[j].abs() <= ZERO_EIGENVALUE;
            let d = if zero_kernel { 0.0 } else { (fine[j] - limit[j]).abs() };
            sc.push(s);
            dev.push(d);
            rel.push(if limit[j] > 0.0 { d / limit[j] } else { d });
            cert.push(zero_kernel || s <= 0.1 * d);
        }
        rows.push(StudyRow {
            eps,
            h: policy.h,
            nodes: *nodes,
            coarse: coarse.clone(),
            fine: fine.clone(),
            self_convergence: sc,
            deviation: dev,
            relative_deviation: rel,
            certified: cert,
        });
    }
    let monotone = (0..k)
        .map(|j| {
            let d: Vec<f64> = rows.iter().filter(|r| r.certified[j]).map(|r| r.deviation[j]).collect();
            d.windows(2).all(|w| w[1] < w[0] || (w[0] == 0.0 && w[1] == 0.0))
        })
        .collect();

    Ok(ConvergenceReport {
        regime: tag,
        alpha,
        k,
        eps: eps_list.to_vec(),
        vertex_volumes: vols,
        limit,
        rows,
        monotone,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{DensityProfile, GraphSpec};

    fn fast(eps: f64) -> ScalingRegime {
        ScalingRegime::new(RegimeTag::Fast, 1.0, eps).unwrap()
    }

    #[test]
    fn single_edge_is_one_strip() {
        let g = MetricGraph::interval(1.0).unwrap();
        let m = build_mesh(&g, &fast(0.1), 0.01).unwrap();
        assert_eq!(m.patches.len(), 1);
        assert_eq!(m.patches[0].grid, (100, 20));
        assert!(m.patches[0].b.iter().all(|&w| (w - 0.1).abs() < 1e-15));
    }

    #[test]
    fn star_fast_regime_layout() {
        let g = MetricGraph::star(3, 1.0).unwrap();
        let m = build_mesh(&g, &fast(0.1), 0.02).unwrap();
        let vertex = m.patches.iter().filter(|p| matches!(p.kind, PatchKind::Vertex { .. })).count();
        let edges = m.patches.iter().filter(|p| matches!(p.kind, PatchKind::Edge { .. })).count();
        assert_eq!((vertex, edges), (1, 3));
        let vp = m.patches.iter().find(|p| matches!(p.kind, PatchKind::Vertex { .. })).unwrap();
        assert!(vp.a.iter().all(|&r| (r - 0.1).abs() < 1e-15));
        assert_eq!(m.interfaces.len(), 3);
        assert!(m.conformity_defect().unwrap() < 1e-12);
    }

    #[test]
    fn slow_regime_layout_and_envelope() {
        let g = MetricGraph::interval(1.0).unwrap();
        let r = ScalingRegime::new(RegimeTag::Slow, 0.25, 0.05).unwrap();
        let m = build_mesh(&g, &r, 0.02).unwrap();
        let count = |f: fn(&PatchKind) -> bool| m.patches.iter().filter(|p| f(&p.kind)).count();
        assert_eq!(count(|k| matches!(k, PatchKind::Edge { .. })), 1);
        assert_eq!(count(|k| matches!(k, PatchKind::Bottleneck { .. })), 2);
        assert_eq!(count(|k| matches!(k, PatchKind::Vertex { .. })), 2);
        assert!(m.conformity_defect().unwrap() < 1e-12);
        let prof = BottleneckProfile::new(&r, 0.5, 1.0);
        assert!(prof.within_envelope(&r, 10_000));
        assert!((prof.r(0.0) - 0.5 * 0.05f64.powf(0.25)).abs() < 1e-15);
        assert!((prof.r(prof.length()) - 0.05).abs() < 1e-15);
        assert!((prof.a(prof.length()) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn unequal_ports_are_rejected() {
        let g = GraphSpec::new()
            .vertex("c", 0.0)
            .vertex("a", 0.0)
            .vertex("b", 0.0)
            .vertex("d", 0.0)
            .edge("e1", "c", "a", 1.0)
            .edge("e2", "c", "b", 1.0)
            .edge_with_density("e3", "c", "d", 1.0, DensityProfile::Constant(2.0))
            .build()
            .unwrap();
        assert!(matches!(build_mesh(&g, &fast(0.1), 0.05), Err(MeshError::PortIncompatible { vertex: 0, .. })));
    }

    #[test]
    fn nondecay_has_no_mesh() {
        let g = MetricGraph::interval(1.0).unwrap();
        let r = ScalingRegime::new(RegimeTag::Nondecay, 0.0, 0.1).unwrap();
        assert!(matches!(build_mesh(&g, &r, 0.01), Err(MeshError::UnsupportedRegime)));
    }

    #[test]
    fn budget_is_enforced() {
        let g = MetricGraph::interval(1.0).unwrap();
        let opts = MeshOptions { budget: 100, ..Default::default() };
        assert!(matches!(build_mesh_with(&g, &fast(0.1), 0.01, &opts), Err(MeshError::Budget { .. })));
    }

    #[test]
    fn flat_rectangle_matrix() {
        let g = MetricGraph::interval(1.0).unwrap();
        let m = build_mesh(&g, &fast(0.1), 0.125).unwrap();
        let pair = assemble(&m).unwrap();
        // a, b constant: stiffness = standard bilinear matrix with coefficients
        // (b/a) = 0.1 along x and (a/b) = 10 along y
        let (hx, hy) = (0.125, 0.5);
        let ky = 10.0 * hx / hy;
        let kx = 0.1 * hy / hx;
        let corner_diag = kx / 3.0 + ky / 3.0;
        assert!((pair.stiffness.get(0, 0) - corner_diag).abs() < 1e-12);
        let total: f64 = pair.mass.iter().sum();
        assert!((total - 2.0 * 0.1).abs() < 1e-12);
    }

    #[test]
    fn borderline_volume_of_square_vertex() {
        let g = MetricGraph::interval(1.0).unwrap();
        let r = ScalingRegime::new(RegimeTag::Borderline, 0.5, 0.1).unwrap();
        let v = borderline_vertex_volumes(&g, &r, &MeshOptions::default()).unwrap();
        assert!((v[0] - 0.5).abs() < 1e-12 && (v[1] - 0.5).abs() < 1e-12);
    }
}
