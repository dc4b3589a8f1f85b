//! Training sequence design for MIMO channel estimation.
//!
//! Sequences are designed by majorization-minimization for either the
//! Bayesian MMSE or the conditional mutual information between the channel
//! and the received training signal, under a unimodular constraint or
//! per-antenna energy and PAR limits. [`squarem`] accelerates either update.
//! [`harness`] runs seeded Monte Carlo sweeps against random-phase baselines.

pub mod criteria;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod mm;
pub mod model;
pub mod par;
pub mod squarem;
pub mod verify;

pub use criteria::{Criterion, Direction};
pub use error::{Error, Result};
pub use mm::{solve, SolveOptions, SolveTrace, Termination};
pub use model::{Scenario, Sequence, SequenceConfig};
pub use squarem::{solve_accelerated, AccelOptions};
