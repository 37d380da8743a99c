//! Fixed workloads shared by the benchmarks.

use tsbpca_core::eval::{generate, SyntheticSpec};
use tsbpca_core::Dataset;

/// The stationary spectrum used throughout the tests.
pub const SPECTRUM: [f64; 6] = [5.0, 3.0, 1.0, 0.5, 0.2, 0.1];

/// `instances × length × 6` stationary data with a fixed rotation.
pub fn stationary(instances: usize, length: usize) -> Dataset {
    let spec = SyntheticSpec::stationary(instances, length, SPECTRUM.to_vec(), 21);
    generate(&spec, 21).expect("fixed spec is valid")
}

/// `instances × length × vars` data with spectrum `0.8^i`, for sweeps over K.
pub fn geometric(instances: usize, length: usize, vars: usize) -> Dataset {
    let eig = (0..vars).map(|i| 0.8f64.powi(i as i32)).collect();
    let spec = SyntheticSpec::stationary(instances, length, eig, 22);
    generate(&spec, 22).expect("fixed spec is valid")
}
