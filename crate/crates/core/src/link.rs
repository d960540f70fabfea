//! Physics of a single elementary section between adjacent stations.

use serde::{Deserialize, Serialize};

use crate::error::{check_positive, check_unit, Error, Result};

/// Multiple of the emission timescale `τ_q` that detectors stay open for.
pub const WAITING_WINDOW_FACTOR: f64 = 5.0;

/// Physical parameters of one elementary section.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkParams {
    /// Inter-repeater distance `L0` (km).
    pub l0: f64,
    /// Fibre attenuation length (km).
    pub l_att: f64,
    /// Emission, collection and detection efficiency.
    pub eta: f64,
    /// Qubit pairs per station side.
    pub q: u32,
    /// Fraction of photons kept by post-selection.
    pub mu: f64,
    /// Excited-state decay timescale (s).
    pub tau_q: f64,
    /// Poissonian dark-count rate per detector (Hz).
    pub dark_rate: f64,
    /// Fold the probability of the photon arriving inside the waiting window into `eta`.
    #[serde(default)]
    pub capture_in_eta: bool,
}

impl Default for LinkParams {
    fn default() -> Self {
        Self {
            l0: 25.0,
            l_att: 25.0,
            eta: 0.9,
            q: 10,
            mu: 1.0,
            tau_q: 10e-9,
            dark_rate: 25.0,
            capture_in_eta: false,
        }
    }
}

impl LinkParams {
    pub fn validate(&self) -> Result<()> {
        check_positive("l0", self.l0)?;
        check_positive("l_att", self.l_att)?;
        check_unit("eta", self.eta)?;
        if self.q == 0 {
            return Err(Error::OutOfRange {
                name: "q",
                value: 0.0,
                reason: "must be at least 1",
            });
        }
        if !(self.mu > 0.0 && self.mu <= 1.0) {
            return Err(Error::OutOfRange {
                name: "mu",
                value: self.mu,
                reason: "must lie in (0, 1]",
            });
        }
        check_positive("tau_q", self.tau_q)?;
        if !(self.dark_rate >= 0.0 && self.dark_rate.is_finite()) {
            return Err(Error::OutOfRange {
                name: "dark_rate",
                value: self.dark_rate,
                reason: "must be finite and >= 0",
            });
        }
        Ok(())
    }

    /// Efficiency actually seen by the heralding detectors.
    pub fn effective_eta(&self) -> f64 {
        let capture = if self.capture_in_eta {
            capture_probability(self.tau_q)
        } else {
            1.0
        };
        self.eta * self.mu * capture
    }

    /// Success probability of one double-heralding attempt on a single qubit pair.
    pub fn single_pair_success(&self) -> f64 {
        let eta = self.effective_eta();
        0.5 * (-2.0 * self.l0 / self.l_att).exp() * eta * eta
    }
}

/// Probability that at least one of the `q` pairs connects in one attempt:
/// `1 − (1 − ½ e^{−2L0/L_att} (ημ)²)^q`.
pub fn connection_prob(p: &LinkParams) -> Result<f64> {
    p.validate()?;
    Ok(connection_prob_unchecked(p))
}

fn connection_prob_unchecked(p: &LinkParams) -> f64 {
    let s = p.single_pair_success();
    -(f64::from(p.q) * (-s).ln_1p()).exp_m1()
}

/// Detector waiting window `t_w = 5 τ_q`.
pub fn waiting_window(tau_q: f64) -> f64 {
    WAITING_WINDOW_FACTOR * tau_q
}

/// Probability an emitted photon arrives within the waiting window.
pub fn capture_probability(tau_q: f64) -> f64 {
    -(-waiting_window(tau_q) / tau_q).exp_m1()
}

/// Probability that neither detector fires a dark count in either heralding round.
pub fn dark_count_factor(p: &LinkParams) -> Result<f64> {
    p.validate()?;
    Ok((-4.0 * p.dark_rate * waiting_window(p.tau_q)).exp())
}

/// Smallest `q'` such that post-selecting a fraction `mu` of photons with
/// `q'` pairs still matches the connection probability of `base` at `μ = 1`.
pub fn qubits_for_postselect(base: &LinkParams, mu: f64) -> Result<u32> {
    let baseline = LinkParams { mu: 1.0, ..*base };
    baseline.validate()?;
    let candidate = LinkParams { mu, ..baseline };
    candidate.validate()?;

    let target = connection_prob_unchecked(&baseline);
    let mut q = baseline.q;
    loop {
        if connection_prob_unchecked(&LinkParams { q, ..candidate }) >= target {
            return Ok(q);
        }
        q = q.checked_add(1).ok_or(Error::OutOfRange {
            name: "mu",
            value: mu,
            reason: "no finite qubit count recovers the baseline rate",
        })?;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn link(l0: f64, eta: f64, q: u32, mu: f64) -> LinkParams {
        LinkParams {
            l0,
            eta,
            q,
            mu,
            ..LinkParams::default()
        }
    }

    #[test]
    fn connection_prob_examples() {
        let p = connection_prob(&link(1e-12, 1.0, 1, 1.0)).unwrap();
        assert!((p - 0.5).abs() < 1e-9);
        let p = connection_prob(&link(25.0, 1.0, 1, 1.0)).unwrap();
        assert!((p - 0.5 * (-2.0f64).exp()).abs() < 1e-15);
        assert!((p - 0.067_667_6).abs() < 1e-7);
        let p = connection_prob(&link(25.0, 0.9, 10, 1.0)).unwrap();
        let direct = 1.0 - (1.0 - 0.5 * (-2.0f64).exp() * 0.81).powi(10);
        assert!((p - direct).abs() < 1e-14);
        assert!((p - 0.431).abs() < 1e-3);
    }

    #[test]
    fn q_exponent_identity_on_grid() {
        for &l0 in &[1.0, 10.0, 25.0, 50.0, 100.0] {
            for &eta in &[0.1, 0.5, 0.9, 1.0] {
                let p1 = connection_prob(&link(l0, eta, 1, 1.0)).unwrap();
                for q in 1..=50 {
                    let pq = connection_prob(&link(l0, eta, q, 1.0)).unwrap();
                    let expected = 1.0 - (1.0 - p1).powi(q as i32);
                    assert!((pq - expected).abs() < 1e-12, "l0={l0} eta={eta} q={q}");
                }
            }
        }
    }

    #[test]
    fn connection_prob_monotone_on_grid() {
        let base = link(25.0, 0.9, 10, 1.0);
        let p0 = connection_prob(&base).unwrap();
        assert!(connection_prob(&LinkParams { q: 11, ..base }).unwrap() > p0);
        assert!(connection_prob(&LinkParams { eta: 0.95, ..base }).unwrap() > p0);
        assert!(connection_prob(&LinkParams { mu: 0.9, ..base }).unwrap() < p0);
        assert!(connection_prob(&LinkParams { l_att: 30.0, ..base }).unwrap() > p0);
        assert!(connection_prob(&LinkParams { l0: 26.0, ..base }).unwrap() < p0);
        let mut prev = 1.0;
        for i in 1..200 {
            let p = connection_prob(&link(i as f64, 0.9, 10, 1.0)).unwrap();
            assert!(p < prev);
            prev = p;
        }
    }

    #[test]
    fn invalid_link_rejected() {
        assert!(connection_prob(&link(0.0, 0.9, 10, 1.0)).is_err());
        assert!(connection_prob(&link(25.0, 1.1, 10, 1.0)).is_err());
        assert!(connection_prob(&link(25.0, 0.9, 0, 1.0)).is_err());
        assert!(connection_prob(&link(25.0, 0.9, 10, 0.0)).is_err());
        let bad = LinkParams {
            dark_rate: -1.0,
            ..LinkParams::default()
        };
        assert!(dark_count_factor(&bad).is_err());
    }

    #[test]
    fn waiting_window_examples() {
        assert!((waiting_window(10e-9) - 50e-9).abs() < 1e-21);
        assert_eq!(waiting_window(1.0), 5.0);
        assert!((capture_probability(10e-9) - (1.0 - (-5.0f64).exp())).abs() < 1e-15);
        assert!((capture_probability(1.0) - 0.993_262_05).abs() < 1e-8);
    }

    #[test]
    fn dark_count_examples() {
        let p = LinkParams {
            dark_rate: 0.0,
            ..LinkParams::default()
        };
        assert_eq!(dark_count_factor(&p).unwrap(), 1.0);
        let p = LinkParams {
            dark_rate: 25.0,
            tau_q: 10e-9,
            ..LinkParams::default()
        };
        let infidelity = 1.0 - dark_count_factor(&p).unwrap();
        assert!((infidelity - 5e-6).abs() < 1e-10);
        assert!(infidelity < 1e-5);
        let p = LinkParams {
            dark_rate: 1e6,
            tau_q: 10e-9,
            ..LinkParams::default()
        };
        assert!((dark_count_factor(&p).unwrap() - (-0.2f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn dark_count_monotone() {
        let mut prev = 1.0;
        for i in 1..100 {
            let p = LinkParams {
                dark_rate: i as f64 * 1e4,
                ..LinkParams::default()
            };
            let f = dark_count_factor(&p).unwrap();
            assert!(f > 0.0 && f < prev);
            prev = f;
        }
        let mut prev = 1.0;
        for i in 1..100 {
            let p = LinkParams {
                dark_rate: 1e5,
                tau_q: i as f64 * 1e-9,
                ..LinkParams::default()
            };
            let f = dark_count_factor(&p).unwrap();
            assert!(f > 0.0 && f < prev);
            prev = f;
        }
    }

    #[test]
    fn capture_flag_lowers_eta() {
        let mut p = LinkParams::default();
        let plain = connection_prob(&p).unwrap();
        p.capture_in_eta = true;
        let folded = connection_prob(&p).unwrap();
        assert!(folded < plain);
        assert!((p.effective_eta() - 0.9 * (1.0 - (-5.0f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn postselect_identity_at_unit_mu() {
        for q in 1..30 {
            let base = link(25.0, 0.9, q, 1.0);
            assert_eq!(qubits_for_postselect(&base, 1.0).unwrap(), q);
        }
    }

    #[test]
    fn postselect_half_single_pair_brute_force() {
        let base = link(25.0, 0.9, 1, 1.0);
        let s = 0.5 * (-2.0f64).exp() * 0.81;
        let brute = (1..10_000)
            .find(|&k| 1.0 - (1.0 - s / 4.0).powi(k) >= s)
            .unwrap() as u32;
        assert_eq!(qubits_for_postselect(&base, 0.5).unwrap(), brute);
    }

    #[test]
    fn postselect_debye_waller_factor() {
        let base = link(25.0, 0.9, 10, 1.0);
        let q = qubits_for_postselect(&base, 0.4).unwrap();
        let factor = f64::from(q) / 10.0;
        assert!((6.0..=8.0).contains(&factor), "q' = {q}");
        let target = connection_prob(&base).unwrap();
        assert!(connection_prob(&LinkParams { q, mu: 0.4, ..base }).unwrap() >= target);
        assert!(connection_prob(&LinkParams { q: q - 1, mu: 0.4, ..base }).unwrap() < target);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn postselect_recovers_baseline(
                mu in 0.05f64..=1.0, q in 1u32..20, l0 in 1.0f64..60.0, eta in 0.1f64..=1.0
            ) {
                let base = link(l0, eta, q, 1.0);
                let qp = qubits_for_postselect(&base, mu).unwrap();
                prop_assert!(qp >= q);
                let target = connection_prob(&base).unwrap();
                let recovered = connection_prob(&LinkParams { q: qp, mu, ..base }).unwrap();
                prop_assert!(recovered >= target);
            }
        }
    }
}
