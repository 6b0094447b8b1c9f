//! Shared fixtures for the benchmarks.

use tisgm::{make_params, ScalarMap};

/// Parameter points used across benchmarks: one in the uniqueness regime,
/// one in the coexistence regime and one at larger tree order.
pub fn bench_points() -> Vec<(f64, u32)> {
    vec![(1.2, 2), (1.6, 2), (2.0, 5)]
}

pub fn scalar_map(theta: f64, k: u32) -> ScalarMap {
    ScalarMap::new(make_params(theta, k).expect("valid benchmark parameters"))
}
