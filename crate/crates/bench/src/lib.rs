//! Fixtures shared by the criterion benchmarks in `benches/`.

use meshfd_core::{generate_scattered, Bounds, NodeSet, PointSource, RunConfig};

pub fn scattered_cloud(count: usize) -> NodeSet {
    generate_scattered(2, count, &Bounds::unit(2), PointSource::LowDiscrepancy).expect("valid cloud")
}

/// Five-point Poisson pipeline on an `n x n` interval grid.
pub fn five_point(n: usize) -> RunConfig {
    RunConfig::from_toml(&format!(
        r#"
        [problem]
        preset = "poisson2d"
        [nodes]
        kind = "grid"
        n_per_axis = {}
        [patches]
        centers = {{ kind = "interior-nodes" }}
        selector = {{ kind = "range", radius_h = 1.2 }}
        space = {{ kind = "poly", degree = 2, sublist = [[0, 0], [1, 0], [0, 1], [2, 0], [0, 2]] }}
        "#,
        n + 1
    ))
    .expect("valid config")
}

/// Polyharmonic RBF-FD Poisson pipeline on `count` scattered interior nodes.
pub fn rbf_fd(count: usize, k: usize) -> RunConfig {
    RunConfig::from_toml(&format!(
        r#"
        [problem]
        preset = "poisson2d"
        [nodes]
        kind = "scattered"
        count = {count}
        [patches]
        selector = {{ kind = "knn", k = {k} }}
        space = {{ kind = "polyharmonic", exponent = 3.0, augmentation_degree = 2 }}
        "#
    ))
    .expect("valid config")
}
