//! Geometric attempt times and order statistics over parallel sections.
//!
//! Each section retries its double-heralding attempt once per time step and
//! succeeds with probability `p_c`, so its connection time is geometric on
//! `{1, 2, ...}`. For `n` independent sections `T_1 <= ... <= T_n` are the
//! order statistics; `T_n` is the time the whole chain is connected.

use serde::Serialize;

use crate::error::{check_positive, Error, Result};

/// Default tail bound for truncating the infinite sums (in steps).
pub const DEFAULT_TOL: f64 = 1e-10;

/// Geometric law of the step at which a single section connects.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AttemptDistribution {
    p_c: f64,
    ln_fail: f64,
}

impl AttemptDistribution {
    pub fn new(p_c: f64) -> Result<Self> {
        if !(p_c > 0.0 && p_c <= 1.0) {
            return Err(Error::OutOfRange {
                name: "p_c",
                value: p_c,
                reason: "must lie in (0, 1]",
            });
        }
        Ok(Self {
            p_c,
            ln_fail: (-p_c).ln_1p(),
        })
    }

    pub fn p_c(&self) -> f64 {
        self.p_c
    }

    /// `P(T > t) = (1 − p_c)^t`
    fn survival(&self, t: u64) -> f64 {
        if t == 0 {
            1.0
        } else {
            (self.ln_fail * t as f64).exp()
        }
    }

    pub fn mean(&self) -> f64 {
        1.0 / self.p_c
    }
}

/// `f_t = (1 − p_c)^(t−1) p_c`
pub fn attempt_pmf(d: &AttemptDistribution, t: u64) -> Result<f64> {
    if t < 1 {
        return Err(Error::InvalidStep(t));
    }
    Ok(d.survival(t - 1) * d.p_c)
}

/// `F_t = 1 − (1 − p_c)^t`, with `F_0 = 0`.
pub fn attempt_cdf(d: &AttemptDistribution, t: u64) -> f64 {
    1.0 - d.survival(t)
}

/// `P(T_n = t) = F_t^n − F_{t−1}^n`
pub fn max_stat_pmf(n: usize, t: u64, d: &AttemptDistribution) -> Result<f64> {
    if n == 0 {
        return Err(Error::ZeroSections);
    }
    if t < 1 {
        return Err(Error::InvalidStep(t));
    }
    Ok(max_stat_cdf(n, t, d) - max_stat_cdf(n, t - 1, d))
}

/// `P(T_n <= t) = F_t^n`
pub fn max_stat_cdf(n: usize, t: u64, d: &AttemptDistribution) -> f64 {
    let f = attempt_cdf(d, t);
    if f <= 0.0 {
        0.0
    } else {
        (n as f64 * f.ln()).exp()
    }
}

/// `ln C(n, j)` for `j = 0..=n` via the multiplicative recurrence.
fn ln_binomials(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    out.push(acc);
    for j in 1..=n {
        acc += ((n - j + 1) as f64).ln() - (j as f64).ln();
        out.push(acc);
    }
    out
}

/// Cumulative sums `Σ_{j<=m} C(n,j) S^j F^(n−j)` for `m = 0..=n`, where `S`
/// is the probability that a section is still unconnected and `F = 1 − S`.
/// Entry `n − k` is `P(T_k <= t)`.
fn cumulative_binomial(ln_binom: &[f64], ln_s: f64, s: f64, f: f64) -> Vec<f64> {
    let n = ln_binom.len() - 1;
    let ln_f = f.ln();
    let mut acc = 0.0;
    ln_binom
        .iter()
        .enumerate()
        .map(|(j, lc)| {
            let term = if (j > 0 && s <= 0.0) || (j < n && f <= 0.0) {
                0.0
            } else {
                let a = if j == 0 { 0.0 } else { j as f64 * ln_s };
                let b = if j == n { 0.0 } else { (n - j) as f64 * ln_f };
                (lc + a + b).exp()
            };
            acc += term;
            acc
        })
        .collect()
}

/// Expected order statistics `⟨T_1⟩ ... ⟨T_n⟩` for `n` parallel sections.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderStatTable {
    means: Vec<f64>,
    p_c: f64,
    /// Last time step included in the truncated sum.
    pub t_max: u64,
}

impl OrderStatTable {
    /// Evaluates
    /// `⟨T_k⟩ = Σ_t t Σ_{j=0}^{n−k} C(n,j) [(1−F_t)^j F_t^(n−j) − (1−F_t+f_t)^j (F_t−f_t)^(n−j)]`
    /// for every `k` at once, stopping once `n (1 − F_t)(t + 1/p_c) < tol`.
    pub fn new(n: usize, d: &AttemptDistribution, tol: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::ZeroSections);
        }
        check_positive("tol", tol)?;
        let ln_binom = ln_binomials(n);
        let mut means = vec![0.0; n];
        let mut prev = cumulative_binomial(&ln_binom, 0.0, 1.0, 0.0);
        let mut t: u64 = 0;
        loop {
            t += 1;
            let s = d.survival(t);
            let cur = cumulative_binomial(&ln_binom, d.ln_fail * t as f64, s, 1.0 - s);
            for (k, mean) in means.iter_mut().enumerate() {
                // rank k+1 uses the partial sum up to j = n − (k+1)
                let m = n - (k + 1);
                *mean += t as f64 * (cur[m] - prev[m]);
            }
            prev = cur;
            let tail = n as f64 * s * (t as f64 + d.mean());
            if tail < tol {
                break;
            }
        }
        Ok(Self {
            means,
            p_c: d.p_c,
            t_max: t,
        })
    }

    pub fn sections(&self) -> usize {
        self.means.len()
    }

    pub fn p_c(&self) -> f64 {
        self.p_c
    }

    /// `⟨T_k⟩` for rank `k` in `1..=n`.
    pub fn get(&self, k: usize) -> Result<f64> {
        if k == 0 || k > self.means.len() {
            return Err(Error::MissingOrderStat {
                rank: k,
                len: self.means.len(),
            });
        }
        Ok(self.means[k - 1])
    }

    /// `⟨T_n⟩`
    pub fn mean_max(&self) -> f64 {
        *self.means.last().expect("table is never empty")
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    /// Sum of `⟨T_k⟩` over the inclusive rank range `lo..=hi`; empty when `lo > hi`.
    pub fn sum_range(&self, lo: usize, hi: usize) -> Result<f64> {
        if lo > hi {
            return Ok(0.0);
        }
        (lo..=hi).map(|k| self.get(k)).sum()
    }
}

/// `⟨T_k⟩` for a single rank, within `tol` of the exact value.
pub fn expected_order_stat(n: usize, k: usize, d: &AttemptDistribution, tol: f64) -> Result<f64> {
    if k == 0 || k > n {
        return Err(Error::MissingOrderStat { rank: k, len: n });
    }
    OrderStatTable::new(n, d, tol)?.get(k)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(p: f64) -> AttemptDistribution {
        AttemptDistribution::new(p).unwrap()
    }

    #[test]
    fn pmf_examples() {
        assert_eq!(attempt_pmf(&dist(1.0), 1).unwrap(), 1.0);
        assert!((attempt_pmf(&dist(0.5), 3).unwrap() - 0.125).abs() < 1e-15);
        assert_eq!(attempt_pmf(&dist(0.5), 0), Err(Error::InvalidStep(0)));
        for &p in &[0.05, 0.3, 0.431, 0.9] {
            let total: f64 = (1..2000).map(|t| attempt_pmf(&dist(p), t).unwrap()).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cdf_examples() {
        assert_eq!(attempt_cdf(&dist(0.3), 0), 0.0);
        assert!((attempt_cdf(&dist(0.5), 2) - 0.75).abs() < 1e-15);
        for &p in &[0.1, 0.431, 0.9] {
            let d = dist(p);
            for t in 1..100 {
                let diff = attempt_cdf(&d, t) - attempt_cdf(&d, t - 1);
                assert!((diff - attempt_pmf(&d, t).unwrap()).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn zero_probability_rejected() {
        assert!(AttemptDistribution::new(0.0).is_err());
        assert!(AttemptDistribution::new(1.5).is_err());
    }

    #[test]
    fn closed_form_small_cases() {
        let p = 0.5;
        let d = dist(p);
        assert!((expected_order_stat(1, 1, &d, DEFAULT_TOL).unwrap() - 2.0).abs() < 1e-9);
        // E[max] = 2/p − 1/(1 − (1−p)^2), E[min] = 1/(1 − (1−p)^2)
        let e_min = 1.0 / (1.0 - (1.0 - p) * (1.0 - p));
        let e_max = 2.0 / p - e_min;
        assert!((e_max - 8.0 / 3.0).abs() < 1e-15);
        assert!((expected_order_stat(2, 2, &d, DEFAULT_TOL).unwrap() - e_max).abs() < 1e-9);
        assert!((expected_order_stat(2, 1, &d, DEFAULT_TOL).unwrap() - e_min).abs() < 1e-9);
        let t = OrderStatTable::new(2, &d, DEFAULT_TOL).unwrap();
        assert!((t.get(1).unwrap() + t.get(2).unwrap() - 4.0).abs() < 1e-9);
    }

    #[test]
    fn certain_connection_is_one_step() {
        let t = OrderStatTable::new(7, &dist(1.0), DEFAULT_TOL).unwrap();
        assert!(t.means().iter().all(|&m| (m - 1.0).abs() < 1e-15));
        assert_eq!(t.t_max, 1);
    }

    #[test]
    fn rank_out_of_range() {
        assert!(expected_order_stat(3, 0, &dist(0.5), DEFAULT_TOL).is_err());
        assert!(expected_order_stat(3, 4, &dist(0.5), DEFAULT_TOL).is_err());
        assert!(OrderStatTable::new(0, &dist(0.5), DEFAULT_TOL).is_err());
    }

    #[test]
    fn max_pmf_examples() {
        let d = dist(0.5);
        assert!((max_stat_pmf(2, 1, &d).unwrap() - 0.25).abs() < 1e-15);
        assert!((max_stat_pmf(2, 2, &d).unwrap() - 0.3125).abs() < 1e-15);
        for t in 1..50 {
            let a = max_stat_pmf(1, t, &dist(0.3)).unwrap();
            let b = attempt_pmf(&dist(0.3), t).unwrap();
            assert!((a - b).abs() < 1e-15);
        }
        assert!(max_stat_pmf(0, 1, &d).is_err());
        assert!(max_stat_pmf(2, 0, &d).is_err());
    }

    #[test]
    fn max_pmf_normalised() {
        for n in [1usize, 2, 5, 10, 40, 100] {
            for &p in &[0.05, 0.1, 0.431, 0.9, 1.0] {
                let d = dist(p);
                let total: f64 = (1..5000).map(|t| max_stat_pmf(n, t, &d).unwrap()).sum();
                assert!((total - 1.0).abs() < 1e-12, "n={n} p={p}");
            }
        }
    }

    #[test]
    fn sum_of_means_is_n_over_p() {
        for n in 1..=30 {
            for &p in &[0.05, 0.1, 0.25, 0.431, 0.9] {
                let t = OrderStatTable::new(n, &dist(p), DEFAULT_TOL).unwrap();
                let total: f64 = t.means().iter().sum();
                assert!((total - n as f64 / p).abs() < 1e-7 * n as f64, "n={n} p={p}");
            }
        }
    }

    #[test]
    fn means_monotone_in_rank_and_n() {
        for &p in &[0.1, 0.431, 0.9] {
            let d = dist(p);
            let mut prev: Option<OrderStatTable> = None;
            for n in 1..=20 {
                let t = OrderStatTable::new(n, &d, DEFAULT_TOL).unwrap();
                for w in t.means().windows(2) {
                    assert!(w[1] >= w[0] - 1e-12);
                }
                if let Some(prev) = &prev {
                    // rank counted from the top: T_{n−i} of n+1 sections >= T_{n−1−i} of n
                    for i in 0..n - 1 {
                        assert!(t.get(n - i).unwrap() >= prev.get(n - 1 - i).unwrap() - 1e-12);
                    }
                    // and the minimum shrinks
                    assert!(t.get(1).unwrap() <= prev.get(1).unwrap() + 1e-12);
                }
                prev = Some(t);
            }
        }
    }

    #[test]
    fn max_rank_matches_pmf_sum() {
        for n in [1usize, 3, 8, 25] {
            for &p in &[0.1, 0.431, 0.9] {
                let d = dist(p);
                let analytic = expected_order_stat(n, n, &d, DEFAULT_TOL).unwrap();
                let direct: f64 = (1..20_000)
                    .map(|t| t as f64 * max_stat_pmf(n, t, &d).unwrap())
                    .sum();
                assert!((analytic - direct).abs() < 2.0 * DEFAULT_TOL + 1e-12, "n={n} p={p}");
            }
        }
    }

    #[test]
    fn large_chain_is_finite() {
        let t = OrderStatTable::new(400, &dist(0.2), DEFAULT_TOL).unwrap();
        assert!(t.means().iter().all(|m| m.is_finite()));
        let total: f64 = t.means().iter().sum();
        assert!((total - 400.0 / 0.2).abs() < 1e-6);
    }
}
