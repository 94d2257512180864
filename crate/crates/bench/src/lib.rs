//! Shared fixtures for the benchmarks.

use num_complex::Complex64;
use twostate_core::io::config::{ExperimentConfig, GridConfig};
use twostate_core::pipeline::pair_coefficients;
use twostate_core::{CoefficientSet, WaveguideGrid};

pub struct Fixture {
    pub grid: WaveguideGrid,
    pub coefficients: CoefficientSet,
}

/// Default experiment on an `nodes × axis_nodes` grid with the perturbed
/// coefficient of the default pair.
pub fn fixture(nodes: usize, axis_nodes: usize) -> Fixture {
    let mut cfg = ExperimentConfig::default();
    cfg.grid = GridConfig {
        nodes,
        axis_nodes,
        ..GridConfig::default()
    };
    let grid = cfg.grid().expect("benchmark grid");
    let (coefficients, _) = pair_coefficients(&cfg, &grid).expect("benchmark coefficients");
    Fixture { grid, coefficients }
}

/// Smooth deterministic interior vector of length `dim`.
pub fn interior_vector(dim: usize) -> Vec<Complex64> {
    (0..dim)
        .map(|k| {
            let t = k as f64 / dim as f64;
            Complex64::new((7.0 * t).sin(), (3.0 * t).cos())
        })
        .collect()
}
