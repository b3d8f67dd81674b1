//! Tensor-based semi-blind receivers for MIMO links assisted by a
//! beyond-diagonal reconfigurable surface.
//!
//! The crate covers the tensor kernels, the signal model and its synthetic
//! generators, the PAKRON and TALS-TUCKER receivers, closed-form
//! identifiability checks and a seeded Monte-Carlo harness.

pub mod config;
pub mod error;
pub mod experiments;
pub mod fixture;
pub mod identifiability;
pub mod receivers;
pub mod seed;
pub mod signal;
pub mod tensor;

pub use config::{ChannelKind, ChannelSpec, DesignKind, SolverKnobs, SystemConfig};
pub use error::{Error, Result};
pub use experiments::{nmse_aligned, run_sweep, run_trial, Alignment, SweepReport, TrialResult};
pub use fixture::Fixture;
pub use receivers::{ReceiverKind, ReceiverOutput};
pub use tensor::{c64, ComplexMatrix, ComplexTensor};
