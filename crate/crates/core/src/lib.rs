//! Secret-key rates for a double-heralded quantum repeater chain.
//!
//! The crate is split the same way the calculation is:
//!
//! * [`state`]: Bell-diagonal and Werner states, binary entropy, the secret
//!   fraction and composition of the per-section error factors.
//! * [`link`]: per-section physics (connection probability, waiting window,
//!   dark counts, post-selection).
//! * [`order_stats`]: geometric attempt times and the order statistics of `n`
//!   sections connecting in parallel.
//! * [`keyrate`]: decoherence accumulation, the delta-optimised key rate and
//!   the inter-repeater distance search.
//! * [`distill`]: the DEJMPS map, the distillation schedule and the distilled
//!   key-rate lower bound.
//! * [`oracle`]: independent Monte Carlo and density-matrix engines used to
//!   validate everything above.
//! * [`checks`]: analytic-vs-oracle comparison suites.

pub mod checks;
pub mod distill;
pub mod error;
pub mod keyrate;
pub mod link;
pub mod oracle;
pub mod order_stats;
pub mod state;

pub use error::{Error, Result};
