//! Secular determinants and root scanning for graph eigenvalues.
//!
//! On edge `j` an eigenfunction is written through its data at the initial
//! vertex, `u(0) = a_j` and `p u'(0) = omega b_j`. For constant density this is
//! the usual `A cos(omega x) + B sin(omega x)` Ansatz with `A = a_j` and
//! `B = b_j / p_j`. Each vertex contributes one row per incident half-edge:
//! continuity rows plus one condition row, or one Dirichlet row per half-edge.
//! Derivatives in condition rows point away from the vertex and are divided by
//! `omega`, so every entry stays bounded as `omega` grows.
//!
//! For Floquet problems the final end of edge `j` is read through the phase
//! `exp(-i theta_j)`, i.e. `u_j(l_j) = exp(i theta_j) u(fin)` and likewise for
//! the flux.

use std::f64::consts::PI;

use nalgebra::{DMatrix, Matrix2};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::SolverError;
use crate::graph::{EdgeEnd, LocalCondition, MetricGraph, VertexCondition};
use crate::spectrum::Spectrum;
use crate::transfer::{constant_transfer, transfer_matrix_edge};

/// Smallest tolerance accepted by the root finders.
pub const TOL_FLOOR: f64 = 1e-14;

/// Default limit on the number of scan points.
pub const DEFAULT_SCAN_BUDGET: usize = 4_000_000;

/// Relative singular-value threshold for accepting a dip as a root.
const DIP_THRESHOLD: f64 = 1e-6;

/// Relative half-width of the band around edge Dirichlet eigenvalues where
/// the eigenvalue count is not evaluated.
pub const COUNT_GUARD: f64 = 1e-6;

/// Relative rank threshold of the `omega = 0` system.
const ZERO_RANK_RTOL: f64 = 1e-10;

/// Per-edge Floquet phases `theta_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseAssignment(pub Vec<f64>);

impl PhaseAssignment {
    pub fn zeros(n: usize) -> Self {
        PhaseAssignment(vec![0.0; n])
    }
}

#[derive(Debug, Clone)]
pub struct SecularSystem {
    graph: MetricGraph,
    cond: VertexCondition,
    phases: Option<PhaseAssignment>,
    /// Scan step divisor: step = pi / (factor * max length).
    pub step_factor: f64,
    /// Fixed bound on the entry size, used to make singular values relative.
    scale: f64,
    pub scan_budget: usize,
}

impl SecularSystem {
    pub fn new(graph: &MetricGraph, cond: VertexCondition) -> Result<Self, SolverError> {
        graph.check_condition(cond)?;
        // entries are products of trigonometric terms with p or 1/p
        let scale = graph
            .edges()
            .iter()
            .flat_map(|e| [e.density.eval(0.0), e.density.eval(e.length)])
            .fold(1.0f64, |m, p| m.max(p).max(1.0 / p));
        Ok(SecularSystem {
            scale,
            graph: graph.clone(),
            cond,
            phases: None,
            step_factor: 40.0,
            scan_budget: DEFAULT_SCAN_BUDGET,
        })
    }

    pub fn with_phases(mut self, phases: PhaseAssignment) -> Result<Self, SolverError> {
        if phases.0.len() != self.graph.num_edges() {
            return Err(SolverError::InvalidArgument(format!(
                "{} phases given for {} edges",
                phases.0.len(),
                self.graph.num_edges()
            )));
        }
        if phases.0.iter().any(|t| !t.is_finite()) {
            return Err(SolverError::InvalidArgument("non-finite phase".into()));
        }
        self.phases = Some(phases);
        Ok(self)
    }

    pub fn graph(&self) -> &MetricGraph {
        &self.graph
    }

    pub fn condition(&self) -> VertexCondition {
        self.cond
    }

    pub fn dim(&self) -> usize {
        2 * self.graph.num_edges()
    }

    /// True when all phase factors are real (`theta` in `{0, pi}` mod `2 pi`).
    pub fn is_real(&self) -> bool {
        match &self.phases {
            None => true,
            Some(p) => p.0.iter().all(|t| t.sin().abs() < 1e-15),
        }
    }

    fn phase_factor(&self, edge: usize) -> Complex64 {
        match &self.phases {
            None => Complex64::new(1.0, 0.0),
            Some(p) => Complex64::from_polar(1.0, -p.0[edge]),
        }
    }

    /// Edge transfer matrices at `omega`, closed form where possible.
    fn transfers(&self, omega: f64) -> Result<Vec<Matrix2<f64>>, SolverError> {
        self.graph
            .edges()
            .iter()
            .map(|e| match e.density.constant_value() {
                Some(c) => Ok(constant_transfer(c, e.length, omega)),
                None => transfer_matrix_edge(&e.density, e.length, omega),
            })
            .collect()
    }

    /// System matrix for any density; dispatches on the density kind.
    pub fn matrix(&self, omega: f64) -> Result<DMatrix<Complex64>, SolverError> {
        let t = self.transfers(omega)?;
        Ok(self.assemble(omega, &t))
    }

    fn assemble(&self, omega: f64, t: &[Matrix2<f64>]) -> DMatrix<Complex64> {
        let g = &self.graph;
        let n = self.dim();
        let mut m = DMatrix::<Complex64>::zeros(n, n);
        let s = if omega > 0.0 { omega } else { 1.0 };
        let one = Complex64::new(1.0, 0.0);

        // (value, flux / s) coefficient pairs over (a_j, b_j) for one half-edge
        let half = |edge: usize, end: EdgeEnd| -> ([Complex64; 2], [Complex64; 2]) {
            match end {
                EdgeEnd::Init => ([one, Complex64::new(0.0, 0.0)], [Complex64::new(0.0, 0.0), one]),
                EdgeEnd::Fin => {
                    let tm = &t[edge];
                    let ph = self.phase_factor(edge);
                    let v = [ph * tm[(0, 0)], ph * (tm[(0, 1)] * s)];
                    let f = [ph * (-tm[(1, 0)] / s), ph * (-tm[(1, 1)])];
                    (v, f)
                }
            }
        };

        let mut row = 0;
        for k in 0..g.num_vertices() {
            let hs = g.half_edges(k);
            let local = g.local_condition(k, self.cond);
            if local == LocalCondition::Dirichlet {
                for h in hs {
                    let (v, _) = half(h.edge, h.end);
                    m[(row, 2 * h.edge)] += v[0];
                    m[(row, 2 * h.edge + 1)] += v[1];
                    row += 1;
                }
                continue;
            }
            let (v0, _) = half(hs[0].edge, hs[0].end);
            for h in &hs[1..] {
                let (v, _) = half(h.edge, h.end);
                m[(row, 2 * h.edge)] += v[0];
                m[(row, 2 * h.edge + 1)] += v[1];
                m[(row, 2 * hs[0].edge)] -= v0[0];
                m[(row, 2 * hs[0].edge + 1)] -= v0[1];
                row += 1;
            }
            let coef = match local {
                LocalCondition::Kirchhoff => 0.0,
                LocalCondition::Delta(kappa) => -kappa / s,
                LocalCondition::Borderline(vol) => omega * omega * vol / s,
                LocalCondition::Dirichlet => unreachable!(),
            };
            let norm = 1.0 / coef.abs().max(1.0);
            for h in hs {
                let (_, f) = half(h.edge, h.end);
                m[(row, 2 * h.edge)] += f[0] * norm;
                m[(row, 2 * h.edge + 1)] += f[1] * norm;
            }
            m[(row, 2 * hs[0].edge)] += v0[0] * (coef * norm);
            m[(row, 2 * hs[0].edge + 1)] += v0[1] * (coef * norm);
            row += 1;
        }
        debug_assert_eq!(row, n);
        m
    }

    /// Singular values of the system matrix, in descending order.
    fn singular_values(&self, omega: f64) -> Result<Vec<f64>, SolverError> {
        let m = self.matrix(omega)?;
        let mut sv: Vec<f64> = if self.is_real() {
            let r = m.map(|z| z.re);
            r.svd(false, false).singular_values.iter().copied().collect()
        } else {
            m.svd(false, false).singular_values.iter().copied().collect()
        };
        sv.sort_by(|a, b| b.total_cmp(a));
        Ok(sv)
    }

    /// Smallest singular value relative to the entry scale. The largest
    /// singular value is not used: the whole matrix can vanish at a root.
    fn rel_sigma_min(&self, omega: f64) -> Result<f64, SolverError> {
        let sv = self.singular_values(omega)?;
        Ok(sv[sv.len() - 1] / self.scale)
    }

    fn real_det(&self, omega: f64) -> Result<f64, SolverError> {
        Ok(self.matrix(omega)?.map(|z| z.re).determinant())
    }

    /// Exact number of eigenvalues strictly below `omega^2`, for constant
    /// densities. On every edge the eigenvalues with Dirichlet data at both
    /// ends are counted in closed form; the remaining ones are the negative
    /// eigenvalues of the Hermitian vertex form obtained by extending vertex
    /// values into solutions on the edges. Returns `None` for variable
    /// densities and within a relative distance [`COUNT_GUARD`] of an edge
    /// Dirichlet eigenvalue, where the vertex form has a pole.
    pub fn count_below(&self, omega: f64) -> Option<usize> {
        let g = &self.graph;
        let nv = g.num_vertices();
        let local: Vec<LocalCondition> = (0..nv).map(|k| g.local_condition(k, self.cond)).collect();
        let mut index = vec![usize::MAX; nv];
        let mut free = 0;
        for k in 0..nv {
            if local[k] != LocalCondition::Dirichlet {
                index[k] = free;
                free += 1;
            }
        }
        let mut form = DMatrix::<Complex64>::zeros(free, free);
        let mut dirichlet_count = 0usize;
        for (j, e) in g.edges().iter().enumerate() {
            let c = e.density.constant_value()?;
            let turns = omega * e.length / PI;
            if turns.round() >= 1.0 && (turns - turns.round()).abs() < COUNT_GUARD * turns {
                return None;
            }
            dirichlet_count += turns.ceil().max(1.0) as usize - 1;
            let t = constant_transfer(c, e.length, omega);
            let t12 = t[(0, 1)];
            // theta-twisted value at the final end: u(l) = exp(i theta) u(fin)
            let theta = -self.phase_factor(j).arg();
            let (a, b) = (index[e.init], index[e.fin]);
            if e.is_loop() {
                if a != usize::MAX {
                    // (2 cos(omega l) - 2 cos(theta)) / t12 without cancellation
                    let wl = omega * e.length;
                    let num = -4.0 * ((wl + theta) / 2.0).sin() * ((wl - theta) / 2.0).sin();
                    form[(a, a)] += num / t12;
                }
                continue;
            }
            let twist = Complex64::from_polar(1.0, theta);
            if a != usize::MAX {
                form[(a, a)] += t[(0, 0)] / t12;
            }
            if b != usize::MAX {
                form[(b, b)] += t[(1, 1)] / t12;
            }
            if a != usize::MAX && b != usize::MAX {
                form[(a, b)] -= twist / t12;
                form[(b, a)] -= twist.conj() / t12;
            }
        }
        for k in 0..nv {
            let i = index[k];
            match local[k] {
                LocalCondition::Delta(kappa) => form[(i, i)] += kappa,
                LocalCondition::Borderline(vol) => form[(i, i)] -= omega * omega * vol,
                _ => {}
            }
        }
        let negative = if free == 0 {
            0
        } else {
            form.symmetric_eigenvalues().iter().filter(|&&x| x < 0.0).count()
        };
        Some(dirichlet_count + negative)
    }

    /// Edge Dirichlet eigenvalues `m pi / l_j` in `[lo, hi]`.
    fn dirichlet_points(&self, lo: f64, hi: f64) -> Vec<f64> {
        let mut pts: Vec<f64> = self
            .graph
            .edges()
            .iter()
            .flat_map(|e| {
                let first = (lo * e.length / PI).ceil().max(1.0) as usize;
                let last = (hi * e.length / PI).floor() as usize;
                (first..=last).map(move |m| m as f64 * PI / e.length)
            })
            .collect();
        pts.sort_by(f64::total_cmp);
        pts
    }

    /// Number of relative singular values at or below `thr`.
    fn nullity(&self, omega: f64, thr: f64) -> Result<usize, SolverError> {
        let sv = self.singular_values(omega)?;
        Ok(sv.iter().filter(|&&x| x / self.scale <= thr).count())
    }
}

/// Secular matrix `T(omega)` for constant densities.
pub fn secular_matrix(sys: &SecularSystem, omega: f64) -> Result<DMatrix<Complex64>, SolverError> {
    if !(omega >= 0.0) || !omega.is_finite() {
        return Err(SolverError::InvalidArgument(format!("omega = {omega} must be >= 0")));
    }
    if let Some(j) = sys.graph.edges().iter().position(|e| e.density.constant_value().is_none()) {
        return Err(SolverError::VariableDensity { edge: j });
    }
    sys.matrix(omega)
}

#[derive(Debug, Clone, Copy)]
struct Root {
    omega: f64,
    width: f64,
}

fn bisect(sys: &SecularSystem, mut lo: f64, mut hi: f64, mut dlo: f64, tol: f64) -> Result<Root, SolverError> {
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let dm = sys.real_det(mid)?;
        if dm == 0.0 {
            return Ok(Root { omega: mid, width: 0.0 });
        }
        if dm.signum() == dlo.signum() {
            lo = mid;
            dlo = dm;
        } else {
            hi = mid;
        }
    }
    Ok(Root { omega: 0.5 * (lo + hi), width: hi - lo })
}

/// Golden-section minimization of the relative smallest singular value.
fn golden(sys: &SecularSystem, mut a: f64, mut b: f64, tol: f64) -> Result<(Root, f64), SolverError> {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = sys.rel_sigma_min(c)?;
    let mut fd = sys.rel_sigma_min(d)?;
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            if c <= a || c >= d {
                break;
            }
            fc = sys.rel_sigma_min(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            if d >= b || d <= c {
                break;
            }
            fd = sys.rel_sigma_min(d)?;
        }
    }
    let (w, f) = if fc <= fd { (c, fc) } else { (d, fd) };
    Ok((Root { omega: w, width: b - a }, f))
}

/// Multiplicity of `lambda = 0` from the rank of the `omega = 0` system.
fn zero_multiplicity(sys: &SecularSystem) -> Result<usize, SolverError> {
    sys.nullity(0.0, ZERO_RANK_RTOL)
}

/// Scans `[0, omega_max]` for roots. With `counted` set, dips are returned
/// unrefined: the eigenvalue count resolves them afterwards.
fn scan(
    sys: &SecularSystem,
    omega_max: f64,
    step: f64,
    tol: f64,
    counted: bool,
) -> Result<Vec<(f64, f64, usize)>, SolverError> {
    let npts = (omega_max / step).ceil() as usize + 2;
    if npts > sys.scan_budget {
        return Err(SolverError::ScanBudget { points: npts, budget: sys.scan_budget });
    }
    let real = sys.is_real();
    let grid: Vec<f64> = (0..=npts).map(|i| i as f64 * step).collect();
    // index 0 is omega = 0, where the trigonometric system degenerates
    let samples: Vec<(f64, f64)> = grid
        .par_iter()
        .enumerate()
        .map(|(i, &w)| {
            if i == 0 {
                return Ok((f64::INFINITY, 0.0));
            }
            let s = sys.rel_sigma_min(w)?;
            let d = if real { sys.real_det(w)? } else { 0.0 };
            Ok((s, d))
        })
        .collect::<Result<_, SolverError>>()?;

    enum Cand {
        Exact(f64),
        Bracket(f64, f64, f64),
        Dip(f64, f64),
    }
    let mut cands = Vec::new();
    for i in 1..grid.len() {
        if real {
            let d0 = samples[i].1;
            if d0 == 0.0 {
                cands.push(Cand::Exact(grid[i]));
            } else if i + 1 < grid.len() {
                let d1 = samples[i + 1].1;
                if d1 != 0.0 && d0.signum() != d1.signum() {
                    cands.push(Cand::Bracket(grid[i], grid[i + 1], d0));
                }
            }
        }
        if i + 1 < grid.len() {
            let (sp, sc, sn) = (samples[i - 1].0, samples[i].0, samples[i + 1].0);
            if sc < sp && sc <= sn {
                cands.push(Cand::Dip(grid[i - 1], grid[i + 1]));
            }
        }
    }

    let refined: Vec<Option<Root>> = cands
        .par_iter()
        .map(|c| match *c {
            Cand::Exact(w) => Ok(Some(Root { omega: w, width: 0.0 })),
            Cand::Bracket(a, b, da) => bisect(sys, a, b, da, tol).map(Some),
            Cand::Dip(a, b) if counted => Ok(Some(Root { omega: 0.5 * (a + b), width: b - a })),
            Cand::Dip(a, b) => {
                let (r, f) = golden(sys, a.max(0.5 * step), b, tol)?;
                Ok(if f <= DIP_THRESHOLD { Some(r) } else { None })
            }
        })
        .collect::<Result<_, SolverError>>()?;
    let mut roots: Vec<Root> = refined.into_iter().flatten().filter(|r| r.omega > 0.0).collect();
    roots.sort_by(|a, b| a.omega.total_cmp(&b.omega));

    // sign-change and dip searches find the same simple roots; keep one
    let merge_dist = |w: f64| merge_distance(w, tol);
    let mut uniq: Vec<Root> = Vec::new();
    for r in roots {
        match uniq.last_mut() {
            Some(last) if r.omega - last.omega <= merge_dist(r.omega) => {
                if r.width < last.width {
                    *last = r;
                }
            }
            _ => uniq.push(r),
        }
    }

    let thr = (1e3 * tol).max(1e-9);
    uniq.par_iter()
        .filter(|r| r.omega <= omega_max)
        .map(|r| {
            let m = sys.nullity(r.omega, thr)?.max(1);
            Ok((r.omega, r.width, m))
        })
        .collect()
}

fn weyl_ok(sys: &SecularSystem, spec: &Spectrum, cutoff: f64) -> bool {
    let g = sys.graph();
    let n = spec.counting(cutoff) as f64;
    let weyl = g.total_length() / PI * cutoff.sqrt();
    (n - weyl).abs() <= 2.0 * (g.num_edges() + g.num_vertices()) as f64
}

/// Count at `omega`, or at a nearby point of `(lo, hi)` off the guard bands.
fn count_near(sys: &SecularSystem, omega: f64, lo: f64, hi: f64) -> Option<(f64, usize)> {
    let d = (hi - lo) / 16.0;
    std::iter::once(omega)
        .chain((1..8).flat_map(|j| [omega + j as f64 * d, omega - j as f64 * d]))
        .filter(|&w| w > lo && w < hi)
        .find_map(|w| sys.count_below(w).map(|n| (w, n)))
}

/// Roots in `(lo, hi)` by bisection on the eigenvalue count, which carries
/// the multiplicities.
fn isolate(
    sys: &SecularSystem,
    lo: f64,
    hi: f64,
    n_lo: usize,
    n_hi: usize,
    tol: f64,
    out: &mut Vec<(f64, f64, usize)>,
) -> Result<(), SolverError> {
    if n_hi <= n_lo {
        return Ok(());
    }
    if hi - lo <= tol {
        out.push((0.5 * (lo + hi), hi - lo, n_hi - n_lo));
        return Ok(());
    }
    match count_near(sys, 0.5 * (lo + hi), lo, hi) {
        Some((mid, n_mid)) => {
            let n_mid = n_mid.clamp(n_lo, n_hi);
            isolate(sys, lo, mid, n_lo, n_mid, tol, out)?;
            isolate(sys, mid, hi, n_mid, n_hi, tol, out)
        }
        None => {
            out.push(inside_guard(sys, lo, hi, tol)?);
            out.last_mut().expect("pushed").2 = n_hi - n_lo;
            Ok(())
        }
    }
}

/// Root in a window lying inside a guard band: the Dirichlet point itself
/// when the system is singular there, otherwise the singular-value minimum.
fn inside_guard(sys: &SecularSystem, lo: f64, hi: f64, tol: f64) -> Result<(f64, f64, usize), SolverError> {
    for d in sys.dirichlet_points(lo, hi) {
        if sys.rel_sigma_min(d)? <= DIP_THRESHOLD * 1e-3 {
            return Ok((d, 0.0, 1));
        }
    }
    let (r, _) = golden(sys, lo, hi, tol)?;
    Ok((r.omega, r.width, 1))
}

/// Checks scanned roots against the eigenvalue count and re-isolates every
/// window between neighbouring roots where the two disagree or the root is
/// not resolved to `tol`.
fn verify_by_count(
    sys: &SecularSystem,
    roots: Vec<(f64, f64, usize)>,
    omega_max: f64,
    step: f64,
    tol: f64,
) -> Result<Vec<(f64, f64, usize)>, SolverError> {
    let start = 1e-6 * step;
    let end = omega_max * (1.0 + 1e-10) + 1e-12;
    let mut marks = vec![start];
    for w in roots.windows(2) {
        marks.push(0.5 * (w[0].0 + w[1].0));
    }
    marks.push(end);
    let counts: Vec<Option<(f64, usize)>> = marks
        .par_iter()
        .enumerate()
        .map(|(i, &m)| {
            if i == 0 {
                sys.count_below(m).map(|n| (m, n))
            } else if i + 1 == marks.len() {
                // past the cutoff; roots found up there are dropped below
                count_near(sys, m + 1e-5 * m, m, m + 2e-5 * m)
            } else {
                count_near(sys, m, roots[i - 1].0, roots[i].0)
            }
        })
        .collect();
    // root i lies between marks i and i + 1
    let mut out = Vec::new();
    for i in 0..marks.len() - 1 {
        let inside = &roots[i..(i + 1).min(roots.len())];
        match (counts[i], counts[i + 1]) {
            (Some((lo, a)), Some((hi, b)))
                if b >= a && (b - a != inside.iter().map(|r| r.2).sum::<usize>() || inside.iter().any(|r| r.1 > tol)) =>
            {
                isolate(sys, lo, hi, a, b, tol, &mut out)?
            }
            _ => {
                for r in inside {
                    if r.1 <= tol {
                        out.push(*r);
                    } else {
                        // no count available here: refine the dip the slow way
                        let (root, f) = golden(sys, (r.0 - 0.5 * r.1).max(0.0), r.0 + 0.5 * r.1, tol)?;
                        if f <= DIP_THRESHOLD {
                            let m = sys.nullity(root.omega, (1e3 * tol).max(1e-9))?.max(1);
                            out.push((root.omega, root.width, m));
                        }
                    }
                }
            }
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    // a multiple root on an edge Dirichlet eigenvalue can come back in pieces
    let mut merged: Vec<(f64, f64, usize)> = Vec::with_capacity(out.len());
    for r in out {
        match merged.last_mut() {
            Some(last) if r.0 - last.0 <= merge_distance(r.0, tol) => {
                let m = last.2 + r.2;
                last.0 = (last.0 * last.2 as f64 + r.0 * r.2 as f64) / m as f64;
                last.1 = last.1.max(r.1).max(r.0 - last.0);
                last.2 = m;
            }
            _ => merged.push(r),
        }
    }
    merged.retain(|r| r.0 <= omega_max);
    Ok(merged)
}

/// Roots closer than this are taken as one.
fn merge_distance(omega: f64, tol: f64) -> f64 {
    (100.0 * tol).max(1e-9 * omega)
}

/// All eigenvalues in `[0, cutoff]` with multiplicities.
pub fn eigenvalues_secular(sys: &SecularSystem, cutoff: f64, tol: f64) -> Result<Spectrum, SolverError> {
    if !(cutoff > 0.0) || !cutoff.is_finite() {
        return Err(SolverError::InvalidArgument(format!("cutoff {cutoff} must be positive")));
    }
    if !(tol >= TOL_FLOOR) {
        return Err(SolverError::TolTooSmall { tol, floor: TOL_FLOOR });
    }
    let omega_max = cutoff.sqrt();
    let mut step = PI / (sys.step_factor * sys.graph().max_length());
    let zero = zero_multiplicity(sys)?;

    let mut best = None;
    for _attempt in 0..4 {
        let counted = sys.graph().all_constant_density();
        let mut roots = scan(sys, omega_max, step, tol, counted)?;
        if counted {
            roots = verify_by_count(sys, roots, omega_max, step, tol)?;
        }
        let mut values: Vec<(f64, f64)> = vec![(0.0, 0.0); zero];
        for (w, width, m) in roots {
            let res = 2.0 * w * width + width * width;
            values.extend(std::iter::repeat((w * w, res)).take(m));
        }
        let spec = Spectrum::from_values(&values, cutoff, 1e-12);
        let ok = weyl_ok(sys, &spec, cutoff);
        best = Some(spec);
        if ok {
            break;
        }
        step *= 0.5;
    }
    Ok(best.expect("at least one scan"))
}

/// Spectrum of the energy-dependent vertex coupling.
pub fn eigenvalues_borderline(sys: &SecularSystem, cutoff: f64, tol: f64) -> Result<Spectrum, SolverError> {
    if sys.condition() != VertexCondition::Borderline {
        return Err(SolverError::InvalidArgument(format!(
            "borderline solver called with the {} condition",
            sys.condition()
        )));
    }
    sys.graph().check_condition(VertexCondition::Borderline)?;
    eigenvalues_secular(sys, cutoff, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{GraphSpec, LooseEnd};

    fn interval() -> MetricGraph {
        MetricGraph::interval(1.0).unwrap()
    }

    fn det_abs(sys: &SecularSystem, w: f64) -> f64 {
        secular_matrix(sys, w).unwrap().determinant().norm()
    }

    #[test]
    fn neumann_interval_determinant() {
        let sys = SecularSystem::new(&interval(), VertexCondition::Kirchhoff).unwrap();
        assert_eq!(sys.dim(), 2);
        assert!(det_abs(&sys, PI) < 1e-14);
        assert!(det_abs(&sys, PI / 2.0) > 0.5);
    }

    #[test]
    fn star_kernel_at_half_pi() {
        let g = MetricGraph::star(3, 1.0).unwrap();
        let sys = SecularSystem::new(&g, VertexCondition::Kirchhoff).unwrap();
        let sv = sys.singular_values(PI / 2.0).unwrap();
        let small = sv.iter().filter(|&&s| s < 1e-12).count();
        assert_eq!(small, 2);
    }

    #[test]
    fn neumann_and_dirichlet_intervals() {
        let sys = SecularSystem::new(&interval(), VertexCondition::Kirchhoff).unwrap();
        let s = eigenvalues_secular(&sys, 100.0, 1e-12).unwrap();
        let expect = [0.0, PI * PI, 4.0 * PI * PI, 9.0 * PI * PI];
        assert_eq!(s.expanded().len(), 4);
        for (a, b) in s.expanded().iter().zip(expect) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }

        let sys = SecularSystem::new(&interval(), VertexCondition::DirichletDecoupled).unwrap();
        let s = eigenvalues_secular(&sys, 100.0, 1e-12).unwrap();
        let expect = [PI * PI, 4.0 * PI * PI, 9.0 * PI * PI];
        assert_eq!(s.expanded().len(), 3);
        for (a, b) in s.expanded().iter().zip(expect) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn loose_end_dirichlet_on_interval() {
        let mut g = interval();
        g.loose_end = LooseEnd::Dirichlet;
        let sys = SecularSystem::new(&g, VertexCondition::Kirchhoff).unwrap();
        let s = eigenvalues_secular(&sys, 50.0, 1e-12).unwrap();
        assert!((s.entries[0].lambda - PI * PI).abs() < 1e-9);
    }

    #[test]
    fn three_star_kirchhoff() {
        let g = MetricGraph::star(3, 1.0).unwrap();
        let sys = SecularSystem::new(&g, VertexCondition::Kirchhoff).unwrap();
        let s = eigenvalues_secular(&sys, 50.0, 1e-12).unwrap();
        let p2 = PI * PI;
        let expect = [(0.0, 1), (p2 / 4.0, 2), (p2, 1), (9.0 * p2 / 4.0, 2), (4.0 * p2, 1)];
        assert_eq!(s.entries.len(), expect.len(), "{s:?}");
        for (e, (l, m)) in s.entries.iter().zip(expect) {
            assert!((e.lambda - l).abs() < 1e-9);
            assert_eq!(e.multiplicity, m);
        }
    }

    #[test]
    fn loop_doubles() {
        let g = MetricGraph::bouquet(1, 1.0).unwrap();
        let sys = SecularSystem::new(&g, VertexCondition::Kirchhoff).unwrap();
        let s = eigenvalues_secular(&sys, 170.0, 1e-12).unwrap();
        let m: Vec<usize> = s.entries.iter().map(|e| e.multiplicity).collect();
        assert_eq!(m, vec![1, 2, 2]);
        assert!((s.entries[1].lambda - 4.0 * PI * PI).abs() < 1e-9);
    }

    #[test]
    fn delta_coupling_shifts_up() {
        let g = MetricGraph::star(3, 1.0).unwrap();
        let k = SecularSystem::new(&g, VertexCondition::Kirchhoff).unwrap();
        let d = SecularSystem::new(&g, VertexCondition::Delta(5.0)).unwrap();
        let sk = eigenvalues_secular(&k, 30.0, 1e-12).unwrap().expanded();
        let sd = eigenvalues_secular(&d, 30.0, 1e-12).unwrap().expanded();
        assert!(sd[0] > 0.0);
        for (a, b) in sk.iter().zip(&sd) {
            assert!(a <= &(b + 1e-9));
        }
    }

    #[test]
    fn borderline_interval_below_neumann() {
        let g = interval().with_vertex_volumes(&[1.0, 1.0]).unwrap();
        let sys = SecularSystem::new(&g, VertexCondition::Borderline).unwrap();
        let s = eigenvalues_borderline(&sys, 40.0, 1e-12).unwrap();
        assert_eq!(s.entries[0].lambda, 0.0);
        assert!(s.entries[1].lambda < PI * PI);
        assert!(s.entries[1].lambda > 0.0);
    }

    #[test]
    fn borderline_requires_volume() {
        assert!(SecularSystem::new(&interval(), VertexCondition::Borderline).is_err());
        let sys = SecularSystem::new(&interval(), VertexCondition::Kirchhoff).unwrap();
        assert!(eigenvalues_borderline(&sys, 10.0, 1e-10).is_err());
    }

    #[test]
    fn variable_density_is_rejected_by_closed_form() {
        let g = GraphSpec::new()
            .vertex("a", 0.0)
            .vertex("b", 0.0)
            .edge_with_density("e", "a", "b", 1.0, crate::graph::DensityProfile::Polynomial(vec![1.0, 1.0]))
            .build()
            .unwrap();
        let sys = SecularSystem::new(&g, VertexCondition::Kirchhoff).unwrap();
        assert!(matches!(secular_matrix(&sys, 1.0), Err(SolverError::VariableDensity { edge: 0 })));
        assert!(sys.matrix(1.0).is_ok());
    }

    #[test]
    fn count_matches_star_spectrum() {
        let g = MetricGraph::star(3, 1.0).unwrap();
        let sys = SecularSystem::new(&g, VertexCondition::Kirchhoff).unwrap();
        // {0, pi^2/4 (x2), pi^2, 9 pi^2/4 (x2), 4 pi^2}
        for (w, n) in [(0.1, 1), (1.0, 1), (2.0, 3), (3.0, 3), (4.0, 4), (5.0, 6), (6.5, 7)] {
            assert_eq!(sys.count_below(w), Some(n), "omega {w}");
        }
        let twisted = MetricGraph::bouquet(1, 1.0).unwrap();
        let sys = SecularSystem::new(&twisted, VertexCondition::Kirchhoff)
            .unwrap()
            .with_phases(PhaseAssignment(vec![PI / 2.0]))
            .unwrap();
        // eigenvalues (pi/2 + 2 pi m)^2 for all integers m
        assert_eq!(sys.count_below(1.0), Some(0));
        assert_eq!(sys.count_below(2.0), Some(1));
        assert_eq!(sys.count_below(5.0), Some(2));
    }

    #[test]
    fn close_pair_is_not_missed() {
        let g = GraphSpec::new()
            .vertex("v0", 0.0)
            .vertex("v1", 0.0)
            .vertex("v2", 0.0)
            .edge("e0", "v0", "v1", 1.0)
            .edge("e1", "v0", "v2", 1.125)
            .edge("e2", "v1", "v1", 1.125)
            .edge("e3", "v2", "v0", 1.25)
            .build()
            .unwrap();
        let sys = SecularSystem::new(&g, VertexCondition::Kirchhoff).unwrap();
        let s = eigenvalues_secular(&sys, 70.0, 1e-12).unwrap();
        let near: Vec<f64> = s.expanded().into_iter().filter(|l| (62.0..64.0).contains(l)).collect();
        assert_eq!(near.len(), 2, "{near:?}");
    }

    #[test]
    fn tolerance_floor() {
        let sys = SecularSystem::new(&interval(), VertexCondition::Kirchhoff).unwrap();
        assert!(matches!(eigenvalues_secular(&sys, 10.0, 1e-16), Err(SolverError::TolTooSmall { .. })));
    }
}
