//! DEJMPS distillation and the distilled key-rate lower bound.
//!
//! The thresholds below are Werner parameters `x`, not fidelities: a chain is
//! distilled at the last station before `x` would fall under 0.69, one round
//! lifts `ρ_W(0.69)` to roughly `ρ_W(0.74)`, and a block of fresh sections may
//! be appended while it degrades `x` by no more than a factor 0.93
//! (`0.74 × 0.93 ≈ 0.69`).

use serde::Serialize;

use crate::error::{Error, Result};
use crate::keyrate::{scan_delta, secret_key_rate, ChainParams, KeyRateResult, RawRateSource, SurvivalConvention};
use crate::oracle::density::PreRotation;
use crate::state::{
    compose_error_factors, secret_fraction, secret_fraction_literal, werner_state, BellDiagonalState, WernerParam,
};

/// Werner parameter at which a chain is distilled.
pub const DISTILL_THRESHOLD: f64 = 0.69;
/// Largest tolerated degradation factor of an appended block.
pub const SEGMENT_THRESHOLD: f64 = 0.93;
/// Rounded survival per initial pair.
pub const ROUNDED_SURVIVAL: f64 = 0.37;
/// Upper limit of the breakpoint search, in sections.
pub const SEARCH_CAP: usize = 1 << 16;

/// Bell weights as seen after the pre-rotation. The DEJMPS rotation
/// exchanges `Φ−` and `Ψ−` and fixes the other two.
fn rotated(s: &BellDiagonalState, rotation: PreRotation) -> [f64; 4] {
    let w = s.weights();
    match rotation {
        PreRotation::Dejmps => [w[0], w[3], w[2], w[1]],
        PreRotation::Identity => w,
    }
}

/// One round of DEJMPS on Bell-diagonal pairs `a` (kept) and `b` (measured).
///
/// Returns the kept pair, expressed in the rotated frame, and the
/// probability that the two target measurements agree.
pub fn dejmps_map(a: &BellDiagonalState, b: &BellDiagonalState, rotation: PreRotation) -> Result<(BellDiagonalState, f64)> {
    let a = rotated(a, rotation);
    let b = rotated(b, rotation);
    let success = (a[0] + a[1]) * (b[0] + b[1]) + (a[2] + a[3]) * (b[2] + b[3]);
    if success <= 0.0 {
        return Err(Error::InvalidState("pairs never agree".into()));
    }
    let out = [
        a[0] * b[0] + a[1] * b[1],
        a[0] * b[1] + a[1] * b[0],
        a[2] * b[2] + a[3] * b[3],
        a[2] * b[3] + a[3] * b[2],
    ];
    Ok((BellDiagonalState::from_unnormalized(out)?, success))
}

/// `(ρ11 + ρ22)² + (ρ33 + ρ44)²` for two identical pairs, with `ρ_ii` the Bell
/// weights after the pre-rotation.
pub fn distill_success_prob(s: &BellDiagonalState, rotation: PreRotation) -> f64 {
    let r = rotated(s, rotation);
    (r[0] + r[1]).powi(2) + (r[2] + r[3]).powi(2)
}

/// The Werner state with the same fidelity as `s`, which can only carry more error.
pub fn werner_replace(s: &BellDiagonalState) -> WernerParam {
    WernerParam::from_fidelity(s.max_weight())
}

/// Fraction of initial pairs kept after one round on `ρ_W(0.69)`: half the success probability.
pub fn survival_factor(convention: SurvivalConvention) -> f64 {
    match convention {
        SurvivalConvention::Exact => {
            let w = werner_state(WernerParam::new(DISTILL_THRESHOLD).expect("constant in range"));
            distill_success_prob(&w, PreRotation::Dejmps) / 2.0
        }
        SurvivalConvention::Rounded => ROUNDED_SURVIVAL,
    }
}

/// Where distillation rounds happen along a chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DistillSchedule {
    /// Sections connected before the first round.
    pub n_l: usize,
    /// Sections appended between subsequent rounds.
    pub n_s: usize,
}

impl DistillSchedule {
    /// `⌈(n − n_L + 1) / n_S⌉` for `n >= n_L`, zero before that.
    pub fn rounds(&self, n: usize) -> usize {
        if n < self.n_l {
            0
        } else {
            (n - self.n_l + 1).div_ceil(self.n_s)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DistillPlan {
    /// `x` stays above the threshold for every chain up to `searched` sections.
    NotNeeded { searched: usize },
    Schedule(DistillSchedule),
}

/// `x` of an undistilled chain of `n` sections.
pub fn undistilled_x(p: &ChainParams, n: usize) -> Result<f64> {
    let chain = p.with_sections(n);
    let table = chain.order_stats()?;
    compose_error_factors(&chain.error_factors(&table)?, n)
}

/// Degradation of a held pair when a fresh block of `m` sections is joined to it:
/// `m` gates (m − 1 internal plus the join) times the block's other factors.
pub fn segment_factor(p: &ChainParams, m: usize) -> Result<f64> {
    let chain = p.with_sections(m);
    let table = chain.order_stats()?;
    let f = chain.error_factors(&table)?;
    let m_i = i32::try_from(m).unwrap_or(i32::MAX);
    Ok((f.dark_count * f.mode_mismatch * f.gate).powi(m_i) * f.decoherence)
}

/// Largest `n` in `1..=SEARCH_CAP` with `g(n) >= threshold`, for `g` non-increasing.
/// `None` when even `g(SEARCH_CAP)` passes; `Some(0)` when `g(1)` fails.
fn last_above<G: Fn(usize) -> Result<f64>>(g: G, threshold: f64) -> Result<Option<usize>> {
    if g(1)? < threshold {
        return Ok(Some(0));
    }
    let mut good = 1;
    let mut bad = loop {
        let probe = (good * 2).min(SEARCH_CAP);
        if g(probe)? < threshold {
            break probe;
        }
        if probe == SEARCH_CAP {
            return Ok(None);
        }
        good = probe;
    };
    while bad - good > 1 {
        let mid = good + (bad - good) / 2;
        if g(mid)? >= threshold {
            good = mid;
        } else {
            bad = mid;
        }
    }
    Ok(Some(good))
}

fn is_lossless(p: &ChainParams) -> Result<bool> {
    Ok(p.x_ga == 1.0
        && p.x_mm == 1.0
        && crate::link::dark_count_factor(&p.link)? == 1.0
        && crate::keyrate::decoherence_rate(p) == 0.0)
}

/// Finds `n_L` (last `n` with `x(n) >= 0.69`) and `n_S` (last `m` with a
/// block degradation `>= 0.93`).
pub fn compute_breakpoints(p: &ChainParams) -> Result<DistillPlan> {
    p.validate()?;
    let x_single = undistilled_x(p, 1)?;
    if x_single < DISTILL_THRESHOLD {
        return Err(Error::BelowDistillationRegime {
            x_single,
            threshold: DISTILL_THRESHOLD,
        });
    }
    if is_lossless(p)? {
        return Ok(DistillPlan::NotNeeded { searched: usize::MAX });
    }
    let Some(n_l) = last_above(|n| undistilled_x(p, n), DISTILL_THRESHOLD)? else {
        return Ok(DistillPlan::NotNeeded { searched: SEARCH_CAP });
    };
    let n_s = match last_above(|m| segment_factor(p, m), SEGMENT_THRESHOLD)? {
        Some(0) => {
            return Err(Error::CycleCannotClose {
                factor: segment_factor(p, 1)?,
                threshold: SEGMENT_THRESHOLD,
            })
        }
        Some(m) => m,
        None => SEARCH_CAP,
    };
    Ok(DistillPlan::Schedule(DistillSchedule { n_l, n_s }))
}

/// Lower bound on the key rate of a chain distilled according to its schedule.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistilledRate {
    pub schedule: DistillSchedule,
    pub rounds: usize,
    /// Raw rate the bound starts from (Hz).
    pub raw_rate: f64,
    pub survival: f64,
    /// `1 − 2h(0.155)` as evaluated, possibly negative.
    pub bracket_literal: f64,
    pub bracket: f64,
    pub key_rate_literal: f64,
    /// Hz, clamped at zero.
    pub key_rate: f64,
}

/// `K >= K_raw · s^⌈(n − n_L + 1)/n_S⌉ · [1 − 2h((1 − 0.69)/2)]` for the chain's `n`.
pub fn distilled_key_rate(p: &ChainParams) -> Result<DistilledRate> {
    let schedule = match compute_breakpoints(p)? {
        DistillPlan::Schedule(s) => s,
        DistillPlan::NotNeeded { searched } => {
            return Err(Error::NoDistillationNeeded {
                threshold: DISTILL_THRESHOLD,
                searched,
            })
        }
    };
    distilled_key_rate_with(p, schedule)
}

pub fn distilled_key_rate_with(p: &ChainParams, schedule: DistillSchedule) -> Result<DistilledRate> {
    if p.n < schedule.n_l {
        return Err(Error::BeforeDistillation {
            n: p.n,
            n_l: schedule.n_l,
        });
    }
    let raw_chain = match p.conventions.raw_source {
        RawRateSource::FullChain => *p,
        RawRateSource::LongestBlock => p.with_sections(schedule.n_l),
    };
    let table = raw_chain.order_stats()?;
    let raw_rate = scan_delta(&raw_chain, &table)?
        .iter()
        .map(|d| d.raw_rate)
        .fold(0.0, f64::max);
    let rounds = schedule.rounds(p.n);
    let survival = survival_factor(p.conventions.survival);
    let pinned = WernerParam::new(DISTILL_THRESHOLD).expect("constant in range");
    let bracket_literal = secret_fraction_literal(pinned, p.conventions.entropy);
    let bracket = secret_fraction(pinned, p.conventions.entropy);
    let factor = raw_rate * survival.powi(i32::try_from(rounds).unwrap_or(i32::MAX));
    Ok(DistilledRate {
        schedule,
        rounds,
        raw_rate,
        survival,
        bracket_literal,
        bracket,
        key_rate_literal: factor * bracket_literal,
        key_rate: factor * bracket,
    })
}

/// Key rate of a chain that distils when it has to.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "regime", rename_all = "kebab-case")]
pub enum DistillOutcome {
    /// Shorter than `n_L` (or never needing distillation): the undistilled rate.
    Direct(KeyRateResult),
    Distilled(DistilledRate),
    /// A single section is already below the distillation threshold.
    Unreachable { x_single: f64 },
}

impl DistillOutcome {
    pub fn key_rate(&self) -> f64 {
        match self {
            DistillOutcome::Direct(r) => r.key_rate,
            DistillOutcome::Distilled(d) => d.key_rate,
            DistillOutcome::Unreachable { .. } => 0.0,
        }
    }

    pub fn regime(&self) -> &'static str {
        match self {
            DistillOutcome::Direct(_) => "direct",
            DistillOutcome::Distilled(_) => "distilled",
            DistillOutcome::Unreachable { .. } => "unreachable",
        }
    }
}

pub fn key_rate_with_distillation(p: &ChainParams) -> Result<DistillOutcome> {
    match compute_breakpoints(p) {
        Err(Error::BelowDistillationRegime { x_single, .. }) => Ok(DistillOutcome::Unreachable { x_single }),
        Err(e) => Err(e),
        Ok(DistillPlan::Schedule(s)) if p.n >= s.n_l => Ok(DistillOutcome::Distilled(distilled_key_rate_with(p, s)?)),
        Ok(_) => Ok(DistillOutcome::Direct(secret_key_rate(p)?)),
    }
}
