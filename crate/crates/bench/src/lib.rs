//! Fixtures shared by the benchmarks in `benches/`.

use thinnet_core::{GraphSpec, MetricGraph};

/// Stick of length 3/4 ending in a unit loop.
pub fn lasso() -> MetricGraph {
    GraphSpec::new().vertex("t", 0.0).vertex("k", 0.0).edge("s", "t", "k", 0.75).edge("r", "k", "k", 1.0).build().unwrap()
}

/// Two vertices joined by three edges of different lengths.
pub fn theta_graph() -> MetricGraph {
    GraphSpec::new()
        .vertex("a", 0.0)
        .vertex("b", 0.0)
        .edge("e1", "a", "b", 1.0)
        .edge("e2", "a", "b", 0.5)
        .edge("e3", "a", "b", 0.75)
        .build()
        .unwrap()
}
