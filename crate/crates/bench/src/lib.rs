//! Helpers shared by the benchmarks.

use std::path::PathBuf;

use dtmsteps::{parse_problem, CauchyProblem};

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

/// Loads a fixture with truncation order `order`.
pub fn fixture(name: &str, order: usize) -> CauchyProblem {
    let text = std::fs::read_to_string(fixture_path(name)).expect("fixture exists");
    let mut p = parse_problem(&text).expect("fixture parses");
    p.trunc_order = order;
    p
}
