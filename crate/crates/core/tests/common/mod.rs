#![allow(dead_code)]

use proptest::prelude::*;
use thinnet_core::{GraphSpec, MetricGraph};

/// Edge list of a connected graph on `n` vertices: a random spanning tree
/// plus a few extra edges (loops allowed). Lengths are multiples of 1/8.
#[derive(Debug, Clone)]
pub struct RawGraph {
    pub n: usize,
    pub edges: Vec<(usize, usize, f64)>,
}

pub fn raw_graph(max_vertices: usize, max_extra: usize) -> impl Strategy<Value = RawGraph> {
    (2..=max_vertices)
        .prop_flat_map(move |n| {
            let parents: Vec<BoxedStrategy<usize>> = (1..n).map(|i| (0..i).boxed()).collect();
            let extra = prop::collection::vec((0..n, 0..n), 0..=max_extra);
            let lens = prop::collection::vec(4u32..=12, n - 1 + max_extra);
            (Just(n), parents, extra, lens)
        })
        .prop_map(|(n, parents, extra, lens)| {
            let mut edges: Vec<(usize, usize, f64)> = Vec::new();
            for (i, p) in parents.into_iter().enumerate() {
                edges.push((p, i + 1, lens[edges.len()] as f64 / 8.0));
            }
            for (a, b) in extra {
                edges.push((a, b, lens[edges.len()] as f64 / 8.0));
            }
            RawGraph { n, edges }
        })
}

impl RawGraph {
    /// Builds the graph with vertices listed in `vorder` and edges in `eorder`.
    pub fn build_permuted(&self, vorder: &[usize], eorder: &[usize]) -> MetricGraph {
        let mut spec = GraphSpec::new();
        for &v in vorder {
            spec = spec.vertex(&format!("v{v}"), 0.0);
        }
        for &e in eorder {
            let (a, b, l) = self.edges[e];
            spec = spec.edge(&format!("e{e}"), &format!("v{a}"), &format!("v{b}"), l);
        }
        spec.build().unwrap()
    }

    pub fn build(&self) -> MetricGraph {
        let v: Vec<usize> = (0..self.n).collect();
        let e: Vec<usize> = (0..self.edges.len()).collect();
        self.build_permuted(&v, &e)
    }
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

pub fn lasso() -> MetricGraph {
    GraphSpec::new()
        .vertex("a", 0.0)
        .vertex("b", 0.0)
        .edge("stick", "a", "b", 0.75)
        .edge("ring", "b", "b", 1.0)
        .build()
        .unwrap()
}

pub fn theta_graph() -> MetricGraph {
    GraphSpec::new()
        .vertex("a", 0.0)
        .vertex("b", 0.0)
        .edge("e1", "a", "b", 1.0)
        .edge("e2", "a", "b", 0.5)
        .edge("e3", "b", "a", 0.75)
        .build()
        .unwrap()
}
