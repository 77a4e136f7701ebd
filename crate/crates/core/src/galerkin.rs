//! The full Galerkin-truncated system on `F ∪ G`.

use num_complex::Complex64;

use crate::integrator::OdeSystem;
use crate::spectral::{ModePartition, QuinticConvolver};

/// Right-hand side of the full Galerkin system on `F ∪ G`.
#[derive(Clone)]
pub struct FullGalerkin {
    partition: ModePartition,
    conv: QuinticConvolver,
}

impl FullGalerkin {
    pub fn new(partition: ModePartition) -> Self {
        let full = partition.full();
        let conv = QuinticConvolver::new(full.clone(), full).expect("full mode set is non-empty");
        Self { partition, conv }
    }

    pub fn partition(&self) -> &ModePartition {
        &self.partition
    }

    pub fn grid_size(&self) -> usize {
        self.conv.grid_size()
    }
}

impl OdeSystem for FullGalerkin {
    fn rhs(&mut self, _t: f64, y: &[Complex64], dy: &mut [Complex64]) {
        let (lo, _) = self.partition.full_bounds();
        self.conv.apply(lo, y, dy, true);
    }
}
