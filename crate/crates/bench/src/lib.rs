//! Shared fixtures for the benchmarks.

use nls_tmodel::spectral::{initial_condition, ModePartition};
use nls_tmodel::Complex64;

/// Resolved-mode counts exercised by every benchmark group.
pub const SIZES: [usize; 4] = [16, 32, 64, 128];

/// Resolved-band Gaussian initial data at amplitude 1.8.
pub fn resolved_initial(n: usize) -> (ModePartition, Vec<Complex64>) {
    let partition = ModePartition::new(n, 5).expect("valid partition");
    let state = initial_condition(1.8, &partition)
        .expect("initial condition")
        .restricted(&partition.resolved());
    (partition, state.modes.into_coeffs())
}

/// Full-band Gaussian initial data at amplitude 1.8.
pub fn full_initial(n: usize) -> (ModePartition, Vec<Complex64>) {
    let partition = ModePartition::new(n, 5).expect("valid partition");
    let state = initial_condition(1.8, &partition).expect("initial condition");
    (partition, state.modes.into_coeffs())
}
