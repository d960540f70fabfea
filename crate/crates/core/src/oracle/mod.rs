//! Independent validation engines.
//!
//! Nothing here reuses the closed-form machinery it is meant to check:
//! [`chain`] samples connection times directly and [`density`] multiplies
//! out dense 16×16 density matrices.

pub mod chain;
pub mod density;

pub use chain::{simulate_chain, simulate_trial, ChainStats, TrialRecord};
pub use density::{dejmps_oracle, DensityMatrix4, OracleOutput, PreRotation};
