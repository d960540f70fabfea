//! Bell-diagonal states, Werner parameters and the secret-fraction algebra.

use serde::{Deserialize, Serialize};

use crate::error::{check_unit, Error, Result};

const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Index of each Bell state in [`BellDiagonalState::weights`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Bell {
    PhiPlus = 0,
    PhiMinus = 1,
    PsiPlus = 2,
    PsiMinus = 3,
}

impl Bell {
    pub const ALL: [Bell; 4] = [Bell::PhiPlus, Bell::PhiMinus, Bell::PsiPlus, Bell::PsiMinus];
}

/// A two-qubit state diagonal in the Bell basis.
///
/// Weights are always ordered `(Φ+, Φ−, Ψ+, Ψ−)`. The target state of the
/// repeater chain is `Ψ+`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BellDiagonalState {
    weights: [f64; 4],
}

impl BellDiagonalState {
    /// Builds a state from `(Φ+, Φ−, Ψ+, Ψ−)` weights.
    pub fn new(weights: [f64; 4]) -> Result<Self> {
        for (i, w) in weights.iter().enumerate() {
            if !(0.0..=1.0).contains(w) {
                return Err(Error::InvalidState(format!(
                    "weight {i} = {w} is outside [0, 1]"
                )));
            }
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidState(format!(
                "weights sum to {sum}, expected 1"
            )));
        }
        Ok(Self { weights })
    }

    /// Builds a state from arbitrary nonnegative weights, rescaling them to sum to one.
    pub fn from_unnormalized(weights: [f64; 4]) -> Result<Self> {
        if weights.iter().any(|w| w.is_nan() || *w < 0.0 || !w.is_finite()) {
            return Err(Error::InvalidState(format!(
                "weights {weights:?} must be finite and nonnegative"
            )));
        }
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 {
            return Err(Error::InvalidState("weights sum to zero".into()));
        }
        Ok(Self {
            weights: weights.map(|w| w / sum),
        })
    }

    pub fn pure(bell: Bell) -> Self {
        let mut weights = [0.0; 4];
        weights[bell as usize] = 1.0;
        Self { weights }
    }

    pub fn maximally_mixed() -> Self {
        Self { weights: [0.25; 4] }
    }

    pub fn weights(&self) -> [f64; 4] {
        self.weights
    }

    pub fn weight(&self, bell: Bell) -> f64 {
        self.weights[bell as usize]
    }

    /// Overlap with the target `Ψ+`.
    pub fn fidelity(&self) -> f64 {
        self.weight(Bell::PsiPlus)
    }

    /// Largest Bell weight. Equals [`fidelity`](Self::fidelity) for Werner
    /// states with `x >= 0`.
    pub fn max_weight(&self) -> f64 {
        self.weights.iter().copied().fold(f64::MIN, f64::max)
    }
}

/// Werner parameter `x`: the probability that every operation in the chain succeeded.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct WernerParam(f64);

impl WernerParam {
    pub fn new(x: f64) -> Result<Self> {
        check_unit("x", x)?;
        Ok(Self(x))
    }

    /// Werner parameter of the state with the given `Ψ+` fidelity, clamped to `[0, 1]`.
    pub fn from_fidelity(fidelity: f64) -> Self {
        Self(((4.0 * fidelity - 1.0) / 3.0).clamp(0.0, 1.0))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// `(1 + 3x) / 4`
    pub fn fidelity(self) -> f64 {
        (1.0 + 3.0 * self.0) / 4.0
    }

    /// Symmetric bit/phase error rate `e = (1 - x) / 2`.
    pub fn error_rate(self) -> f64 {
        (1.0 - self.0) / 2.0
    }
}

/// `ρ_W(x) = x |Ψ+⟩⟨Ψ+| + (1 − x)/4 · 1`.
pub fn werner_state(x: WernerParam) -> BellDiagonalState {
    let noise = (1.0 - x.value()) / 4.0;
    let mut weights = [noise; 4];
    weights[Bell::PsiPlus as usize] = x.value() + noise;
    BellDiagonalState { weights }
}

/// Logarithm base used by the binary entropy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntropyBase {
    #[default]
    Two,
    Natural,
}

impl EntropyBase {
    fn ln_base(self) -> f64 {
        match self {
            EntropyBase::Two => std::f64::consts::LN_2,
            EntropyBase::Natural => 1.0,
        }
    }
}

/// `h(p) = −p log p − (1−p) log(1−p)` with `0 log 0 = 0`.
pub fn binary_entropy(p: f64, base: EntropyBase) -> Result<f64> {
    check_unit("p", p)?;
    let plogp = |v: f64| if v > 0.0 { v * v.ln() } else { 0.0 };
    Ok(-(plogp(p) + plogp(1.0 - p)) / base.ln_base())
}

/// Unclamped `1 − 2h(e)` with `e = (1 − x)/2`. Negative when the error rate is too high.
pub fn secret_fraction_literal(x: WernerParam, base: EntropyBase) -> f64 {
    let h = binary_entropy(x.error_rate(), base).expect("error rate of a valid x lies in [0, 1/2]");
    1.0 - 2.0 * h
}

/// Fraction of raw bits that survive error correction and privacy
/// amplification, clamped at zero.
pub fn secret_fraction(x: WernerParam, base: EntropyBase) -> f64 {
    secret_fraction_literal(x, base).max(0.0)
}

/// Per-section success factors entering the correction term of the key rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorFactors {
    /// No mistaken dark-count herald (per section).
    pub dark_count: f64,
    /// Mode mismatch between adjacent cavities (per section).
    pub mode_mismatch: f64,
    /// Brokered Bell measurement quality (per joining station).
    pub gate: f64,
    /// Nuclear-spin decoherence for the whole chain.
    pub decoherence: f64,
}

impl ErrorFactors {
    pub const IDEAL: ErrorFactors = ErrorFactors {
        dark_count: 1.0,
        mode_mismatch: 1.0,
        gate: 1.0,
        decoherence: 1.0,
    };

    pub fn validate(&self) -> Result<()> {
        check_unit("x_dc", self.dark_count)?;
        check_unit("x_mm", self.mode_mismatch)?;
        check_unit("x_ga", self.gate)?;
        check_unit("x_de", self.decoherence)
    }
}

/// `x_dc^n · x_mm^n · x_ga^(n−1) · x_de` for a chain of `n` sections.
pub fn compose_error_factors(factors: &ErrorFactors, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::ZeroSections);
    }
    factors.validate()?;
    let n_i = i32::try_from(n).unwrap_or(i32::MAX);
    Ok(factors.dark_count.powi(n_i)
        * factors.mode_mismatch.powi(n_i)
        * factors.gate.powi(n_i - 1)
        * factors.decoherence)
}
