//! Shared fixtures for the benchmarks.

use fracfit_core::presets::design1;
use fracfit_core::{gen_synthetic, normalize, Dataset, SimGrid};

/// Four noise-free Design 1 traces of 50 points each, normalized.
pub fn recovery_datasets() -> Vec<Dataset> {
    let grid = SimGrid::new(9.8, 0.2).expect("valid grid");
    (0..4)
        .map(|seed| {
            let raw =
                gen_synthetic(&design1(), &grid, 30.0, 1, 0.0, seed).expect("preset simulates");
            normalize(&raw).expect("raw data")
        })
        .collect()
}
