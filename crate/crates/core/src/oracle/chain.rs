//! Seeded Monte Carlo of `n` sections connecting in parallel.
//!
//! Trial `i` draws from its own ChaCha8 stream: the generator is keyed by
//! `seed` and `set_stream(i)` selects the substream, so any trial can be
//! replayed on its own and the totals do not depend on thread scheduling.
//! All accumulators are integers, which keeps the parallel reduction exact.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::Result;
use crate::keyrate::{ChainParams, DecoherenceTerm};

/// One sampled run of the chain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TrialRecord {
    /// Step at which each section connected, in section order.
    pub section_steps: Vec<u64>,
    /// The same steps sorted: `T_(1) <= ... <= T_(n)`.
    pub order_stats: Vec<u64>,
    /// Twice the odd-first worst-case idle exposure, in steps.
    pub exposure_x2: i64,
}

impl TrialRecord {
    pub fn completion_step(&self) -> u64 {
        *self.order_stats.last().expect("at least one section")
    }

    pub fn completed_by(&self, t_f: u64) -> bool {
        self.completion_step() <= t_f
    }

    pub fn exposure(&self) -> f64 {
        self.exposure_x2 as f64 / 2.0
    }
}

/// `n/2 + T_(n) + Σ_{k>=k_u} T_(k) − Σ_{k<=k_l} T_(k)`, doubled so it stays integral.
fn worst_case_exposure_x2(sorted: &[u64], term: DecoherenceTerm) -> i64 {
    let n = sorted.len();
    let k_l = n.div_ceil(2);
    let k_u = (n + 2) / 2 + 1;
    let t = |k: usize| sorted[k - 1] as i64;
    let upper: i64 = (k_u..=n).map(t).sum();
    let lower: i64 = (1..=k_l).map(t).sum();
    let extra = match term {
        DecoherenceTerm::Printed => 0,
        DecoherenceTerm::ExtraN => 2 * n as i64,
    };
    n as i64 + 2 * t(n) + 2 * upper - 2 * lower + extra
}

fn trial_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn draw_steps<R: Rng>(rng: &mut R, geometric: &Geometric, n: usize) -> Vec<u64> {
    // Geometric counts failures before the first success.
    (0..n).map(|_| geometric.sample(rng) + 1).collect()
}

/// Replays trial `index` of the run keyed by `seed`.
pub fn simulate_trial(p: &ChainParams, seed: u64, index: u64) -> Result<TrialRecord> {
    let p_c = p.connection_prob()?;
    let geometric = Geometric::new(p_c).expect("p_c validated to lie in (0, 1]");
    Ok(run_trial(&geometric, p.n, seed, index, p.conventions.decoherence))
}

fn run_trial(geometric: &Geometric, n: usize, seed: u64, index: u64, term: DecoherenceTerm) -> TrialRecord {
    let mut rng = trial_rng(seed, index);
    let section_steps = draw_steps(&mut rng, geometric, n);
    let mut order_stats = section_steps.clone();
    order_stats.sort_unstable();
    let exposure_x2 = worst_case_exposure_x2(&order_stats, term);
    TrialRecord {
        section_steps,
        order_stats,
        exposure_x2,
    }
}

#[derive(Debug, Clone, Default)]
struct Accumulator {
    sum: Vec<u64>,
    sum_sq: Vec<u128>,
    exposure_sum: i128,
    exposure_sum_sq: i128,
    /// `hist[t]` counts trials whose last section connected at step `t`.
    completion_hist: Vec<u64>,
}

impl Accumulator {
    fn new(n: usize) -> Self {
        Self {
            sum: vec![0; n],
            sum_sq: vec![0; n],
            ..Default::default()
        }
    }

    fn push(&mut self, record: &TrialRecord) {
        for (k, &t) in record.order_stats.iter().enumerate() {
            self.sum[k] += t;
            self.sum_sq[k] += u128::from(t) * u128::from(t);
        }
        let e = i128::from(record.exposure_x2);
        self.exposure_sum += e;
        self.exposure_sum_sq += e * e;
        let t_n = record.completion_step() as usize;
        if self.completion_hist.len() <= t_n {
            self.completion_hist.resize(t_n + 1, 0);
        }
        self.completion_hist[t_n] += 1;
    }

    fn merge(mut self, other: Self) -> Self {
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            *a += b;
        }
        for (a, b) in self.sum_sq.iter_mut().zip(&other.sum_sq) {
            *a += b;
        }
        self.exposure_sum += other.exposure_sum;
        self.exposure_sum_sq += other.exposure_sum_sq;
        if self.completion_hist.len() < other.completion_hist.len() {
            self.completion_hist.resize(other.completion_hist.len(), 0);
        }
        for (a, b) in self.completion_hist.iter_mut().zip(&other.completion_hist) {
            *a += b;
        }
        self
    }
}

/// Empirical statistics of a batch of trials.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainStats {
    pub n: usize,
    pub trials: u64,
    pub seed: u64,
    pub p_c: f64,
    /// Empirical `⟨T_k⟩`, `k = 1..=n`.
    pub mean: Vec<f64>,
    /// Standard error of each entry of `mean`.
    pub stderr: Vec<f64>,
    /// Mean of the worst-case decoherence bracket (steps).
    pub bracket_mean: f64,
    pub bracket_stderr: f64,
    /// `completion_hist[t]` = number of trials with `T_n = t`.
    pub completion_hist: Vec<u64>,
    step_seconds: f64,
}

impl ChainStats {
    /// Empirical `P(T_n <= t)`.
    pub fn completion_fraction(&self, t_f: u64) -> f64 {
        let hits: u64 = self
            .completion_hist
            .iter()
            .take((t_f as usize).saturating_add(1))
            .sum();
        hits as f64 / self.trials as f64
    }

    /// Standard error of [`completion_fraction`](Self::completion_fraction).
    pub fn completion_stderr(&self, t_f: u64) -> f64 {
        let f = self.completion_fraction(t_f);
        (f * (1.0 - f) / self.trials as f64).sqrt()
    }

    /// Completed end-to-end pairs per second when Alice and Bob measure at `t_f`.
    pub fn raw_rate(&self, t_f: u64) -> f64 {
        self.completion_fraction(t_f) / (self.step_seconds * t_f as f64)
    }

    pub fn raw_rate_stderr(&self, t_f: u64) -> f64 {
        self.completion_stderr(t_f) / (self.step_seconds * t_f as f64)
    }

    /// Largest gap between the empirical cdf of `T_n` and `cdf(t)`.
    pub fn ks_distance<F: Fn(u64) -> f64>(&self, cdf: F) -> f64 {
        let mut acc = 0u64;
        let mut worst: f64 = 0.0;
        for (t, &count) in self.completion_hist.iter().enumerate() {
            acc += count;
            let emp = acc as f64 / self.trials as f64;
            worst = worst.max((emp - cdf(t as u64)).abs());
            if t > 0 {
                let emp_before = (acc - count) as f64 / self.trials as f64;
                worst = worst.max((emp_before - cdf(t as u64 - 1)).abs());
            }
        }
        worst
    }
}

fn mean_and_stderr(sum: f64, sum_sq: f64, count: f64) -> (f64, f64) {
    let mean = sum / count;
    if count < 2.0 {
        return (mean, 0.0);
    }
    let var = ((sum_sq - sum * sum / count) / (count - 1.0)).max(0.0);
    (mean, (var / count).sqrt())
}

/// Runs `trials` seeded trials of the chain's connection process.
pub fn simulate_chain(p: &ChainParams, trials: u64, seed: u64) -> Result<ChainStats> {
    p.validate()?;
    let trials = trials.max(1);
    let p_c = p.connection_prob()?;
    let geometric = Geometric::new(p_c).expect("p_c validated to lie in (0, 1]");
    let n = p.n;
    let term = p.conventions.decoherence;

    let acc = (0..trials)
        .into_par_iter()
        .fold(
            || Accumulator::new(n),
            |mut acc, i| {
                acc.push(&run_trial(&geometric, n, seed, i, term));
                acc
            },
        )
        .reduce(|| Accumulator::new(n), Accumulator::merge);

    let count = trials as f64;
    let (mean, stderr): (Vec<f64>, Vec<f64>) = acc
        .sum
        .iter()
        .zip(&acc.sum_sq)
        .map(|(&s, &sq)| mean_and_stderr(s as f64, sq as f64, count))
        .unzip();
    let (b_mean, b_se) = mean_and_stderr(acc.exposure_sum as f64, acc.exposure_sum_sq as f64, count);

    Ok(ChainStats {
        n,
        trials,
        seed,
        p_c,
        mean,
        stderr,
        bracket_mean: b_mean / 2.0,
        bracket_stderr: b_se / 2.0,
        completion_hist: acc.completion_hist,
        step_seconds: p.step_seconds(),
    })
}
