use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    #[error("parameter `{name}` = {value} is out of range: {reason}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("invalid Bell-diagonal state: {0}")]
    InvalidState(String),

    #[error("section count must be at least 1")]
    ZeroSections,

    #[error("order-statistic table has no entry for rank {rank} (table covers 1..={len})")]
    MissingOrderStat { rank: usize, len: usize },

    #[error("time step must be at least 1, got {0}")]
    InvalidStep(u64),

    #[error("empty grid for `{0}`")]
    EmptyGrid(&'static str),

    #[error("a single section already has x = {x_single:.6} < {threshold}; the chain never reaches the distillation regime")]
    BelowDistillationRegime { x_single: f64, threshold: f64 },

    #[error("appending a single fresh section degrades x by {factor:.6} < {threshold}; the distillation cycle cannot close")]
    CycleCannotClose { factor: f64, threshold: f64 },

    #[error("chain of {n} sections is shorter than the first distillation point n_L = {n_l}")]
    BeforeDistillation { n: usize, n_l: usize },

    #[error("no distillation is needed: x never drops below {threshold} within {searched} sections")]
    NoDistillationNeeded { threshold: f64, searched: usize },
}

pub(crate) fn check_unit(name: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            name,
            value,
            reason: "must lie in [0, 1]",
        })
    }
}

pub(crate) fn check_positive(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            name,
            value,
            reason: "must be > 0",
        })
    }
}
