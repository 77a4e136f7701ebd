//! Pseudospectral solvers for the 1D critical focusing nonlinear Schrödinger
//! equation `i u_t + u_xx + |u|⁴u = 0` on `[0, 2π]` with periodic boundary
//! conditions.
//!
//! Two systems are provided: the full Galerkin truncation on `K` modes and
//! the t-model reduced system on the `N = K/5` resolved modes, whose memory
//! term drains mass out of the resolved range once the solution develops a
//! singularity. Both are advanced with an adaptive RKF45 integrator and
//! measured with the tools in [`diagnostics`].

// negated comparisons are used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod galerkin;
pub mod integrator;
pub mod spectral;
pub mod tmodel;

pub use num_complex::Complex64;

pub use diagnostics::{DiagnosticsRecord, EjectionEvent, GroundStateReference};
pub use error::{Error, Result};
pub use experiment::{RunManifest, SolverConfig, SolverKind};
pub use galerkin::FullGalerkin;
pub use integrator::{OdeSystem, StepControl, TrajectoryRecord};
pub use spectral::{ModeBand, ModePartition, ModeSet, PhysicalField, SpectralState};
pub use tmodel::{TModel, TModelRhsBreakdown};
