//! Fixtures shared by the benchmarks.

use vfp_core::experiments::{preset, ExperimentConfig, Setup};

/// The first test configuration with a given mesh and Hermite truncation.
pub fn config(n_cells: usize, n_modes: usize) -> ExperimentConfig {
    preset("test1")
        .expect("built-in preset")
        .with_overrides(&[format!("mesh.n_cells={n_cells}"), format!("scheme.n_modes={n_modes}")])
        .expect("valid overrides")
}

pub fn setup(n_cells: usize, n_modes: usize) -> Setup {
    Setup::new(&config(n_cells, n_modes)).expect("fixture setup")
}
