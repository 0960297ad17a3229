//! Band structures of Cayley graphs of finitely generated abelian groups.
//!
//! The period cell is one vertex with `r` loops of length one, one per
//! generator. For the character `theta` the loop `k` carries the phase
//! `theta_k`, and away from `omega = l pi` the eigenvalues `lambda = omega^2`
//! solve `f(omega) = (1/r) sum_k cos(theta_k)` with `f = cos` (Kirchhoff) or
//! `f(omega) = cos(omega) - c omega sin(omega) / (2 r)` (borderline coupling
//! with vertex volume `c`). Bands are therefore `{omega^2 : f(omega) in
//! [m_min, 1]}`, and `omega = l pi` adds flat bands of multiplicity `r - 1`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GraphError, SolverError};
use crate::graph::{GraphSpec, MetricGraph, VertexCondition};
use crate::secular::{eigenvalues_secular, PhaseAssignment, SecularSystem};
use crate::spectrum::Spectrum;

/// `Gamma = Z^r0 x Z_p1^r1 x ...`. Order-one factors attach loops.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub r0: usize,
    /// `(order, multiplicity)` with distinct orders, sorted by order.
    pub torsion: Vec<(u32, usize)>,
}

impl GroupSpec {
    pub fn new(r0: usize, torsion: &[(u32, usize)]) -> Result<Self, GraphError> {
        if r0 == 0 {
            return Err(GraphError::Parse("the group needs at least one free factor Z".into()));
        }
        let mut t: Vec<(u32, usize)> = Vec::new();
        for &(p, r) in torsion {
            if p == 0 {
                return Err(GraphError::Parse("cyclic factor of order 0".into()));
            }
            if r == 0 {
                continue;
            }
            match t.iter_mut().find(|(q, _)| *q == p) {
                Some(e) => e.1 += r,
                None => t.push((p, r)),
            }
        }
        t.sort();
        Ok(GroupSpec { r0, torsion: t })
    }

    /// Number of generators `r = r0 + sum r_i`.
    pub fn rank(&self) -> usize {
        self.r0 + self.torsion.iter().map(|&(_, r)| r).sum::<usize>()
    }

    /// The same group with one more factor `Z_1` (one more loop per vertex).
    pub fn with_loop(&self) -> GroupSpec {
        let mut t = self.torsion.clone();
        t.push((1, 1));
        GroupSpec::new(self.r0, &t).expect("valid group stays valid")
    }

    /// Orders of the generators, `None` for free generators.
    pub fn generator_orders(&self) -> Vec<Option<u32>> {
        let mut v = vec![None; self.r0];
        for &(p, r) in &self.torsion {
            v.extend(std::iter::repeat(Some(p)).take(r));
        }
        v
    }

    /// The period cell: one vertex `o` with `r` unit loops.
    pub fn period_cell(&self, vol: f64) -> MetricGraph {
        let mut spec = GraphSpec::new().vertex("o", vol);
        for k in 0..self.rank() {
            spec = spec.edge(&format!("g{}", k + 1), "o", "o", 1.0);
        }
        spec.build().expect("period cell is a valid graph")
    }
}

/// Grammar (case-insensitive, whitespace ignored):
///
/// ```text
/// group  = factor { sep factor } ;
/// sep    = "x" | "×" | "*" ;
/// factor = "Z" [ "_" order ] [ "^" power ] ;
/// order  = digit { digit } ;      (order >= 1; Z_1 is a loop)
/// power  = digit { digit } ;      (power >= 0)
/// ```
///
/// At least one free factor `Z` is required.
impl FromStr for GroupSpec {
    type Err = GraphError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect::<String>().to_ascii_lowercase();
        if compact.is_empty() {
            return Err(GraphError::Parse("empty group".into()));
        }
        let bad = |m: String| GraphError::Parse(format!("group `{s}`: {m}"));
        let mut r0 = 0usize;
        let mut torsion = Vec::new();
        for factor in compact.split(['x', '×', '*']) {
            let rest = factor.strip_prefix('z').ok_or_else(|| bad(format!("factor `{factor}` must start with Z")))?;
            let (order_part, power_part) = match rest.find('^') {
                Some(i) => (&rest[..i], Some(&rest[i + 1..])),
                None => (rest, None),
            };
            let power: usize = match power_part {
                Some(p) => p.parse().map_err(|_| bad(format!("bad power `{p}`")))?,
                None => 1,
            };
            if order_part.is_empty() {
                r0 += power;
            } else {
                let o = order_part.strip_prefix('_').ok_or_else(|| bad(format!("bad factor `{factor}`")))?;
                let p: u32 = o.parse().map_err(|_| bad(format!("bad order `{o}`")))?;
                if p == 0 {
                    return Err(bad("order must be at least 1".into()));
                }
                torsion.push((p, power));
            }
        }
        GroupSpec::new(r0, &torsion).map_err(|e| match e {
            GraphError::Parse(m) => bad(m),
            other => other,
        })
    }
}

impl fmt::Display for GroupSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        parts.push(if self.r0 == 1 { "Z".to_string() } else { format!("Z^{}", self.r0) });
        for &(p, r) in &self.torsion {
            parts.push(if r == 1 { format!("Z_{p}") } else { format!("Z_{p}^{r}") });
        }
        f.write_str(&parts.join(" x "))
    }
}

/// Minimum of `cos` over the `p`-th roots of unity.
pub fn mu(p: u32) -> f64 {
    if p == 1 {
        1.0
    } else if p % 2 == 0 {
        -1.0
    } else {
        -(PI / p as f64).cos()
    }
}

/// Range `[m_min, 1]` of `(1/r) sum_k cos(theta_k)` over the dual group.
pub fn dispersion_range(g: &GroupSpec) -> (f64, f64) {
    let r = g.rank() as f64;
    let s: f64 = -(g.r0 as f64) + g.torsion.iter().map(|&(p, k)| k as f64 * mu(p)).sum::<f64>();
    ((s / r).max(-1.0), 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BandModel {
    Kirchhoff,
    /// Energy-dependent vertex coupling with vertex volume `c`.
    Borderline { c: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlatBand {
    pub lambda: f64,
    pub multiplicity: usize,
    /// True when the point lies outside every continuous band.
    pub isolated: bool,
}

/// Open spectral gap `(lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gap {
    pub lo: f64,
    pub hi: f64,
    /// Set when an isolated flat band lies strictly inside the interval.
    pub contains_flat: bool,
}

impl Gap {
    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, lambda: f64) -> bool {
        self.lo < lambda && lambda < self.hi
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandStructure {
    pub group: String,
    pub model: BandModel,
    pub cutoff: f64,
    /// Closed `lambda` intervals, sorted, disjoint, touching ones merged.
    pub bands: Vec<(f64, f64)>,
    pub flat_bands: Vec<FlatBand>,
    /// Points where two band branches meet without a gap.
    pub touching: Vec<f64>,
    /// Gaps ignoring flat bands, each flagged if it contains one.
    pub gaps: Vec<Gap>,
    /// Gaps with isolated flat bands removed, so they may split in two.
    pub spectral_gaps: Vec<Gap>,
}

impl BandStructure {
    /// Whether `lambda` lies in a band or on a flat band (within `tol` in `omega`).
    pub fn contains(&self, lambda: f64, tol_omega: f64) -> bool {
        let w = lambda.max(0.0).sqrt();
        let near = |x: f64| (x.sqrt() - w).abs() <= tol_omega;
        self.bands.iter().any(|&(a, b)| (lambda >= a && lambda <= b) || near(a) || near(b))
            || self.flat_bands.iter().any(|f| near(f.lambda))
    }
}

/// Gap report returned by [`find_gaps`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub gaps: Vec<Gap>,
    pub spectral_gaps: Vec<Gap>,
    pub touching: Vec<f64>,
}

/// Merges `omega` intervals into `lambda` bands and derives flat bands,
/// touching points and gaps.
fn assemble(g: &GroupSpec, model: BandModel, cutoff: f64, omega_bands: Vec<(f64, f64)>) -> BandStructure {
    let wmax = cutoff.sqrt();
    let mut ivals: Vec<(f64, f64)> = omega_bands
        .into_iter()
        .filter(|&(a, _)| a <= wmax)
        .map(|(a, b)| (a.max(0.0), b.min(wmax)))
        .collect();
    ivals.sort_by(|x, y| x.0.total_cmp(&y.0));

    let mut merged: Vec<(f64, f64)> = Vec::new();
    let mut touching = Vec::new();
    for (a, b) in ivals {
        match merged.last_mut() {
            Some(last) if a <= last.1 + 1e-12 => {
                if (a - last.1).abs() <= 1e-12 {
                    touching.push(a * a);
                }
                last.1 = last.1.max(b);
            }
            _ => merged.push((a, b)),
        }
    }
    let sq = |w: f64| if w >= wmax { cutoff } else { w * w };
    let bands: Vec<(f64, f64)> = merged.iter().map(|&(a, b)| (sq(a), sq(b))).collect();

    let r = g.rank();
    let mut flat_bands = Vec::new();
    if r >= 2 {
        let mut l = 1;
        while (l as f64 * PI) <= wmax {
            let w = l as f64 * PI;
            let inside = merged.iter().any(|&(a, b)| w >= a - 1e-12 && w <= b + 1e-12);
            flat_bands.push(FlatBand { lambda: w * w, multiplicity: r - 1, isolated: !inside });
            l += 1;
        }
    }

    let mut b = BandStructure {
        group: g.to_string(),
        model,
        cutoff,
        bands,
        flat_bands,
        touching,
        gaps: Vec::new(),
        spectral_gaps: Vec::new(),
    };
    let rep = find_gaps(&b);
    b.gaps = rep.gaps;
    b.spectral_gaps = rep.spectral_gaps;
    b
}

/// Closed-form Kirchhoff band structure up to `cutoff`.
///
/// With `a = arccos(m_min)` the branches are `omega in [l pi, l pi + a]` for
/// even `l` and `[(l + 1) pi - a, (l + 1) pi]` for odd `l`.
pub fn band_structure_kirchhoff(g: &GroupSpec, cutoff: f64) -> BandStructure {
    let (m, _) = dispersion_range(g);
    let a = m.acos();
    let wmax = cutoff.sqrt();
    let mut ivals = Vec::new();
    let mut l = 0usize;
    while (l as f64) * PI <= wmax + PI {
        let lp = l as f64 * PI;
        ivals.push(if l % 2 == 0 { (lp, lp + a) } else { (lp + PI - a, lp + PI) });
        l += 1;
    }
    assemble(g, BandModel::Kirchhoff, cutoff, ivals)
}

/// Scan step of the borderline dispersion function. `|f'| <= 1 + c(1 + omega)
/// / (2 r)`, so between two samples `f` moves by at most `1e-3` times that
/// bound, and a level crossing can only hide inside a window where `f` stays
/// within that distance of the level.
pub const BORDERLINE_STEP: f64 = 1e-3;

/// Maximum number of scan points of the borderline dispersion function.
pub const BORDERLINE_BUDGET: usize = 20_000_000;

/// `f(omega) = cos(omega) - c omega sin(omega) / (2 r)`.
pub fn borderline_dispersion(omega: f64, c: f64, r: usize) -> f64 {
    omega.cos() - c * omega * omega.sin() / (2.0 * r as f64)
}

fn refine_level(f: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64, level: f64) -> f64 {
    let mut flo = f(lo) - level;
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid) - level;
        if fm == 0.0 {
            return mid;
        }
        if (fm < 0.0) == (flo < 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Borderline band structure, found by scanning `f` on a grid of step
/// [`BORDERLINE_STEP`] and refining every crossing of `m_min` and `1` to
/// `1e-12` in `omega`.
pub fn band_structure_borderline(g: &GroupSpec, c: f64, cutoff: f64) -> Result<BandStructure, SolverError> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(SolverError::InvalidArgument(format!("coupling c = {c} must be positive")));
    }
    if !(cutoff > 0.0) || !cutoff.is_finite() {
        return Err(SolverError::InvalidArgument(format!("cutoff {cutoff} must be positive")));
    }
    let (m, _) = dispersion_range(g);
    let r = g.rank();
    let wmax = cutoff.sqrt();
    let npts = (wmax / BORDERLINE_STEP).ceil() as usize + 1;
    if npts > BORDERLINE_BUDGET {
        return Err(SolverError::ScanBudget { points: npts, budget: BORDERLINE_BUDGET });
    }
    let f = move |w: f64| borderline_dispersion(w, c, r);
    let inside = |w: f64| {
        let v = f(w);
        v >= m && v <= 1.0
    };

    let grid: Vec<f64> = (0..=npts).map(|i| (i as f64 * BORDERLINE_STEP).min(wmax + BORDERLINE_STEP)).collect();
    let values: Vec<f64> = grid.par_iter().map(|&w| f(w)).collect();
    let mut cuts: Vec<f64> = grid
        .par_windows(2)
        .zip(values.par_windows(2))
        .flat_map_iter(|(w, v)| {
            let mut out = Vec::new();
            for level in [m, 1.0] {
                let (a, b) = (v[0] - level, v[1] - level);
                if a != 0.0 && b != 0.0 && (a < 0.0) != (b < 0.0) {
                    out.push(refine_level(&f, w[0], w[1], level));
                } else if b == 0.0 {
                    out.push(w[1]);
                }
            }
            out
        })
        .collect();
    cuts.push(0.0);
    cuts.push(wmax);
    cuts.retain(|&w| w <= wmax);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|a, b| (*a - *b).abs() <= 1e-13);

    let mut ivals = Vec::new();
    for w in cuts.windows(2) {
        if w[1] > w[0] && inside(0.5 * (w[0] + w[1])) {
            ivals.push((w[0], w[1]));
        }
    }
    Ok(assemble(g, BandModel::Borderline { c }, cutoff, ivals))
}

/// Maximal open gaps in `(0, cutoff)`. A stretch running into the cutoff is
/// not reported, since its upper end is not a band edge.
pub fn find_gaps(b: &BandStructure) -> GapReport {
    let mut gaps = Vec::new();
    for w in b.bands.windows(2) {
        let (lo, hi) = (w[0].1, w[1].0);
        if hi > lo {
            let contains_flat = b.flat_bands.iter().any(|f| f.isolated && lo < f.lambda && f.lambda < hi);
            gaps.push(Gap { lo, hi, contains_flat });
        }
    }
    let mut spectral_gaps = Vec::new();
    for gap in &gaps {
        let mut lo = gap.lo;
        let mut pts: Vec<f64> = b.flat_bands.iter().filter(|f| gap.contains(f.lambda)).map(|f| f.lambda).collect();
        pts.sort_by(f64::total_cmp);
        for p in pts {
            spectral_gaps.push(Gap { lo, hi: p, contains_flat: false });
            lo = p;
        }
        spectral_gaps.push(Gap { lo, hi: gap.hi, contains_flat: false });
    }
    GapReport { gaps, spectral_gaps, touching: b.touching.clone() }
}

/// One dual-group sample and its eigenvalues.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaSample {
    pub theta: Vec<f64>,
    pub spectrum: Spectrum,
}

/// All characters of the sampling grid: `samples` points per free factor and
/// every root of unity for the cyclic factors.
pub fn theta_grid(g: &GroupSpec, samples: usize) -> Vec<Vec<f64>> {
    let mut grid: Vec<Vec<f64>> = vec![Vec::new()];
    for order in g.generator_orders() {
        let choices: Vec<f64> = match order {
            None => (0..samples).map(|i| 2.0 * PI * i as f64 / samples as f64).collect(),
            Some(p) => (0..p).map(|i| 2.0 * PI * i as f64 / p as f64).collect(),
        };
        grid = grid
            .into_iter()
            .flat_map(|t| {
                choices.iter().map(move |&c| {
                    let mut t = t.clone();
                    t.push(c);
                    t
                })
            })
            .collect();
    }
    grid
}

/// Solves the `theta`-periodic cell problem for every character of
/// [`theta_grid`] and returns the eigenvalues up to `cutoff`.
pub fn theta_sampled_bands(
    g: &GroupSpec,
    model: BandModel,
    samples: usize,
    cutoff: f64,
) -> Result<Vec<ThetaSample>, SolverError> {
    if samples < 16 {
        return Err(SolverError::InvalidArgument(format!("need at least 16 samples, got {samples}")));
    }
    let (cell, cond) = match model {
        BandModel::Kirchhoff => (g.period_cell(0.0), VertexCondition::Kirchhoff),
        BandModel::Borderline { c } => (g.period_cell(c), VertexCondition::Borderline),
    };
    let base = SecularSystem::new(&cell, cond)?;
    theta_grid(g, samples)
        .into_par_iter()
        .map(|theta| {
            let sys = base.clone().with_phases(PhaseAssignment(theta.clone()))?;
            let spectrum = eigenvalues_secular(&sys, cutoff, 1e-11)?;
            Ok(ThetaSample { theta, spectrum })
        })
        .collect()
}
