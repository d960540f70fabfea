//! Decoherence accumulation, the delta-optimised secret-key rate and the
//! search over inter-repeater distance.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_positive, check_unit, Error, Result};
use crate::link::{connection_prob, dark_count_factor, LinkParams};
use crate::order_stats::{max_stat_pmf, AttemptDistribution, OrderStatTable, DEFAULT_TOL};
use crate::state::{
    compose_error_factors, secret_fraction, secret_fraction_literal, EntropyBase, ErrorFactors,
    WernerParam,
};

/// Light in fibre, km/s.
pub const DEFAULT_FIBRE_SPEED: f64 = 2.0e5;

/// Duration of one connection attempt used by the raw rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepConvention {
    /// `L0 / c`
    #[default]
    OneWay,
    /// `2 L0 / c`
    RoundTrip,
}

/// Which terms make up the decoherence exponent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecoherenceTerm {
    /// `n/2 + ⟨T_n⟩ + Σ upper − Σ lower`
    #[default]
    Printed,
    /// The printed bracket plus a separate additive `n`.
    ExtraN,
}

/// Per-round survival factor used by the distilled rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SurvivalConvention {
    /// Half the DEJMPS success probability on `ρ_W(0.69)` (≈ 0.369).
    #[default]
    Exact,
    /// The rounded 0.37.
    Rounded,
}

/// How qubits are counted when normalising a rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QubitCounting {
    /// `2 q (n + 1)`: every station, endpoints included, holds `q` pairs on each side.
    #[default]
    BothSides,
    /// `q (n + 1)`
    OneSide,
}

/// Which chain the distilled rate takes its raw rate from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RawRateSource {
    #[default]
    FullChain,
    /// The longest block connected without distillation (`n_L` sections).
    LongestBlock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Conventions {
    pub entropy: EntropyBase,
    pub step: StepConvention,
    pub decoherence: DecoherenceTerm,
    pub survival: SurvivalConvention,
    pub counting: QubitCounting,
    pub raw_source: RawRateSource,
}

/// A chain of `n` identical elementary sections.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainParams {
    pub link: LinkParams,
    pub n: usize,
    /// Nuclear-spin T2 (s). May be infinite.
    pub tau_d: f64,
    /// Signal speed in fibre (km/s).
    pub c: f64,
    pub x_ga: f64,
    pub x_mm: f64,
    /// Largest buffer `δ` (steps) scanned when choosing the measurement time.
    pub delta_max: u32,
    /// Replace the computed connection probability.
    pub pc_override: Option<f64>,
    pub conventions: Conventions,
}

impl Default for ChainParams {
    fn default() -> Self {
        Self {
            link: LinkParams::default(),
            n: 10,
            tau_d: 1.0,
            c: DEFAULT_FIBRE_SPEED,
            x_ga: 0.99,
            x_mm: 0.999,
            delta_max: 10,
            pc_override: None,
            conventions: Conventions::default(),
        }
    }
}

impl ChainParams {
    pub fn validate(&self) -> Result<()> {
        self.link.validate()?;
        if self.n == 0 {
            return Err(Error::ZeroSections);
        }
        check_positive("tau_d", self.tau_d)?;
        check_positive("c", self.c)?;
        if !self.c.is_finite() {
            return Err(Error::OutOfRange {
                name: "c",
                value: self.c,
                reason: "must be finite",
            });
        }
        check_unit("x_ga", self.x_ga)?;
        check_unit("x_mm", self.x_mm)?;
        if let Some(p) = self.pc_override {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::OutOfRange {
                    name: "pc_override",
                    value: p,
                    reason: "must lie in (0, 1]",
                });
            }
        }
        Ok(())
    }

    pub fn with_sections(&self, n: usize) -> Self {
        Self { n, ..*self }
    }

    pub fn with_l0(&self, l0: f64) -> Self {
        Self {
            link: LinkParams { l0, ..self.link },
            ..*self
        }
    }

    /// Every error factor set to one and no decoherence.
    pub fn ideal(mut self) -> Self {
        self.x_ga = 1.0;
        self.x_mm = 1.0;
        self.link.dark_rate = 0.0;
        self.tau_d = f64::INFINITY;
        self
    }

    pub fn connection_prob(&self) -> Result<f64> {
        self.validate()?;
        match self.pc_override {
            Some(p) => Ok(p),
            None => connection_prob(&self.link),
        }
    }

    pub fn attempts(&self) -> Result<AttemptDistribution> {
        AttemptDistribution::new(self.connection_prob()?)
    }

    pub fn order_stats(&self) -> Result<OrderStatTable> {
        OrderStatTable::new(self.n, &self.attempts()?, DEFAULT_TOL)
    }

    /// Physical duration of one raw-rate step (s).
    pub fn step_seconds(&self) -> f64 {
        match self.conventions.step {
            StepConvention::OneWay => self.link.l0 / self.c,
            StepConvention::RoundTrip => 2.0 * self.link.l0 / self.c,
        }
    }

    /// The dark-count, mode-mismatch and gate factors plus `x_de` from `table`.
    pub fn error_factors(&self, table: &OrderStatTable) -> Result<ErrorFactors> {
        Ok(ErrorFactors {
            dark_count: dark_count_factor(&self.link)?,
            mode_mismatch: self.x_mm,
            gate: self.x_ga,
            decoherence: decoherence_factor(self, table)?,
        })
    }
}

/// `(k_u, k_l) = (⌈(n+1)/2 + 1⌉, ⌊(n+1)/2⌋)`
pub fn decoherence_ranks(n: usize) -> (usize, usize) {
    let half = (n as f64 + 1.0) / 2.0;
    ((half + 1.0).ceil() as usize, half.floor() as usize)
}

/// The bracket `n/2 + ⟨T_n⟩ + Σ_{k=k_u}^n ⟨T_k⟩ − Σ_{k=1}^{k_l} ⟨T_k⟩` in steps,
/// for the worst case where all odd-numbered sections connect first.
pub fn decoherence_bracket(n: usize, table: &OrderStatTable, term: DecoherenceTerm) -> Result<f64> {
    if n == 0 {
        return Err(Error::ZeroSections);
    }
    if table.sections() < n {
        return Err(Error::MissingOrderStat {
            rank: n,
            len: table.sections(),
        });
    }
    let (k_u, k_l) = decoherence_ranks(n);
    let mut bracket = n as f64 / 2.0 + table.get(n)? + table.sum_range(k_u, n)? - table.sum_range(1, k_l)?;
    if term == DecoherenceTerm::ExtraN {
        bracket += n as f64;
    }
    Ok(bracket)
}

/// `x_de = exp(−(2 L0 / (c τ_d)) · bracket)`
pub fn decoherence_factor(p: &ChainParams, table: &OrderStatTable) -> Result<f64> {
    let bracket = decoherence_bracket(p.n, table, p.conventions.decoherence)?;
    Ok((-decoherence_rate(p) * bracket).exp())
}

/// Decay exponent per step of bracket, `2 L0 / (c τ_d)`.
pub fn decoherence_rate(p: &ChainParams) -> f64 {
    2.0 * p.link.l0 / (p.c * p.tau_d)
}

/// Decoherence if every section connected at once: `exp(−n L0 / (c τ_d))`.
pub fn naive_decoherence_factor(p: &ChainParams) -> f64 {
    (-(p.n as f64) * p.link.l0 / (p.c * p.tau_d)).exp()
}

/// One point of the buffer scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeltaPoint {
    pub delta: u32,
    pub t_f: u64,
    /// `P(T_n <= t_f)`
    pub completion_fraction: f64,
    /// Hz
    pub raw_rate: f64,
}

/// Raw rate `Σ_{t=1}^{t_f} P(T_n = t) / (step · t_f)` for every `δ` in `0..=delta_max`,
/// where `t_f = ⌈⟨T_n⟩ + δ⌉`.
pub fn scan_delta(p: &ChainParams, table: &OrderStatTable) -> Result<Vec<DeltaPoint>> {
    let d = AttemptDistribution::new(table.p_c())?;
    let mean_max = table.mean_max();
    let step = p.step_seconds();
    // t_f only grows with δ, so the completion sum is carried forward.
    let mut summed_to = 0u64;
    let mut completion = 0.0;
    let mut points = Vec::with_capacity(p.delta_max as usize + 1);
    for delta in 0..=p.delta_max {
        let t_f = (mean_max + f64::from(delta)).ceil().max(1.0) as u64;
        while summed_to < t_f {
            summed_to += 1;
            completion += max_stat_pmf(p.n, summed_to, &d)?;
        }
        points.push(DeltaPoint {
            delta,
            t_f,
            completion_fraction: completion,
            raw_rate: completion / (step * t_f as f64),
        });
    }
    Ok(points)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KeyRateResult {
    pub p_c: f64,
    pub mean_t_n: f64,
    /// Raw end-to-end pair rate at the chosen buffer (Hz).
    pub raw_rate: f64,
    pub completion_fraction: f64,
    pub factors: ErrorFactors,
    /// Composed Werner parameter of the end-to-end state.
    pub x_total: f64,
    pub secret_fraction: f64,
    /// `1 − 2h(e)` before clamping at zero.
    pub secret_fraction_literal: f64,
    /// Secret-key rate (Hz).
    pub key_rate: f64,
    pub delta_opt: u32,
    pub t_f: u64,
}

/// Secret-key rate of an undistilled chain, maximised over the buffer `δ`.
pub fn secret_key_rate(p: &ChainParams) -> Result<KeyRateResult> {
    let table = p.order_stats()?;
    secret_key_rate_with_table(p, &table)
}

pub fn secret_key_rate_with_table(p: &ChainParams, table: &OrderStatTable) -> Result<KeyRateResult> {
    p.validate()?;
    let factors = p.error_factors(table)?;
    let x_total = compose_error_factors(&factors, p.n)?;
    let x = WernerParam::new(x_total.clamp(0.0, 1.0))?;
    let sf = secret_fraction(x, p.conventions.entropy);
    let sf_literal = secret_fraction_literal(x, p.conventions.entropy);

    let scan = scan_delta(p, table)?;
    let mut best = scan[0];
    let mut best_k = best.raw_rate * sf;
    for point in &scan[1..] {
        let k = point.raw_rate * sf;
        if k > best_k {
            best = *point;
            best_k = k;
        }
    }

    Ok(KeyRateResult {
        p_c: table.p_c(),
        mean_t_n: table.mean_max(),
        raw_rate: best.raw_rate,
        completion_fraction: best.completion_fraction,
        factors,
        x_total,
        secret_fraction: sf,
        secret_fraction_literal: sf_literal,
        key_rate: best_k,
        delta_opt: best.delta,
        t_f: best.t_f,
    })
}

/// Upper bound `1 / (step · ⌈⟨T_n⟩⌉)` on the raw rate at any buffer.
pub fn raw_rate_ceiling(p: &ChainParams, table: &OrderStatTable) -> f64 {
    1.0 / (p.step_seconds() * table.mean_max().ceil().max(1.0))
}

/// Best grid point found by an inter-repeater distance search.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Optimum<T> {
    pub l0: f64,
    pub n: usize,
    pub value: f64,
    pub detail: T,
}

/// Evaluates `eval` at every `L0` in the grid with `n = round(total / L0)`
/// and keeps the first maximiser. Grid points that would leave fewer than one
/// section are skipped.
pub fn optimize_l0_by<T, F>(template: &ChainParams, total_distance: f64, l0_grid: &[f64], eval: F) -> Result<Optimum<T>>
where
    T: Send,
    F: Fn(&ChainParams) -> Result<(f64, T)> + Sync,
{
    if l0_grid.is_empty() {
        return Err(Error::EmptyGrid("l0"));
    }
    check_positive("total_distance", total_distance)?;
    let candidates: Vec<(f64, usize)> = l0_grid
        .iter()
        .map(|&l0| (l0, (total_distance / l0).round() as usize))
        .filter(|&(_, n)| n >= 1)
        .collect();
    if candidates.is_empty() {
        return Err(Error::EmptyGrid("l0 (no grid point gives n >= 1)"));
    }
    let evaluated: Vec<Optimum<T>> = candidates
        .par_iter()
        .map(|&(l0, n)| {
            let params = template.with_l0(l0).with_sections(n);
            let (value, detail) = eval(&params)?;
            Ok(Optimum { l0, n, value, detail })
        })
        .collect::<Result<_>>()?;

    let mut iter = evaluated.into_iter();
    let mut best = iter.next().expect("candidates is nonempty");
    for cand in iter {
        if cand.value > best.value {
            best = cand;
        }
    }
    Ok(best)
}

/// The `L0` in the grid with the highest undistilled key rate.
pub fn optimize_l0(template: &ChainParams, total_distance: f64, l0_grid: &[f64]) -> Result<Optimum<KeyRateResult>> {
    optimize_l0_by(template, total_distance, l0_grid, |p| {
        let r = secret_key_rate(p)?;
        Ok((r.key_rate, r))
    })
}

/// Number of qubits the chain uses under the configured counting convention.
pub fn qubit_count(p: &ChainParams) -> f64 {
    let per_station = match p.conventions.counting {
        QubitCounting::BothSides => 2.0,
        QubitCounting::OneSide => 1.0,
    };
    per_station * f64::from(p.link.q) * (p.n as f64 + 1.0)
}

/// Key rate per qubit (Hz).
pub fn normalized_rate(r: &KeyRateResult, p: &ChainParams) -> f64 {
    r.key_rate / qubit_count(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::chain::simulate_chain;
    use crate::order_stats::max_stat_cdf;

    fn params(n: usize) -> ChainParams {
        ChainParams {
            n,
            ..ChainParams::default()
        }
    }

    #[test]
    fn decoherence_ranks_examples() {
        assert_eq!(decoherence_ranks(1), (2, 1));
        assert_eq!(decoherence_ranks(2), (3, 1));
        assert_eq!(decoherence_ranks(3), (3, 2));
        assert_eq!(decoherence_ranks(4), (4, 2));
        assert_eq!(decoherence_ranks(10), (7, 5));
    }

    #[test]
    fn no_decoherence_for_infinite_t2() {
        let p = ChainParams {
            tau_d: f64::INFINITY,
            ..params(10)
        };
        let table = p.order_stats().unwrap();
        assert_eq!(decoherence_factor(&p, &table).unwrap(), 1.0);
    }

    #[test]
    fn single_section_decoherence() {
        let p = params(1);
        let table = p.order_stats().unwrap();
        let expected = (-p.link.l0 / (p.c * p.tau_d)).exp();
        assert!((decoherence_factor(&p, &table).unwrap() - expected).abs() < 1e-15);
        assert_eq!(decoherence_bracket(1, &table, DecoherenceTerm::Printed).unwrap(), 0.5);
        assert_eq!(decoherence_bracket(1, &table, DecoherenceTerm::ExtraN).unwrap(), 1.5);
    }

    #[test]
    fn missing_table_entries_rejected() {
        let table = params(3).order_stats().unwrap();
        assert!(decoherence_factor(&params(5), &table).is_err());
    }

    #[test]
    fn four_section_bracket_matches_monte_carlo() {
        let p = ChainParams {
            pc_override: Some(0.5),
            ..params(4)
        };
        let table = p.order_stats().unwrap();
        let analytic = decoherence_bracket(4, &table, DecoherenceTerm::Printed).unwrap();
        let sim = simulate_chain(&p, 100_000, 7).unwrap();
        let (mean, se) = (sim.bracket_mean, sim.bracket_stderr);
        assert!((analytic - mean).abs() < 3.0 * se, "analytic {analytic} mc {mean} ± {se}");
        let rate = decoherence_rate(&p);
        let x_mc = (-rate * mean).exp();
        let x_an = decoherence_factor(&p, &table).unwrap();
        assert!((x_mc / x_an - 1.0).abs() < 0.01);
    }

    #[test]
    fn deterministic_single_link() {
        let p = ChainParams {
            pc_override: Some(1.0),
            delta_max: 0,
            ..params(1).ideal()
        };
        let r = secret_key_rate(&p).unwrap();
        assert_eq!(r.completion_fraction, 1.0);
        assert!((r.raw_rate - 8000.0).abs() < 1e-9);
        assert_eq!(r.key_rate, r.raw_rate);
        assert_eq!(r.t_f, 1);
    }

    #[test]
    fn round_trip_step_halves_raw_rate() {
        let mut p = ChainParams {
            pc_override: Some(1.0),
            delta_max: 0,
            ..params(1).ideal()
        };
        p.conventions.step = StepConvention::RoundTrip;
        assert!((secret_key_rate(&p).unwrap().raw_rate - 4000.0).abs() < 1e-9);
    }

    #[test]
    fn low_x_gives_zero_key() {
        let p = ChainParams {
            x_ga: 0.7,
            ..params(3)
        };
        let r = secret_key_rate(&p).unwrap();
        assert!(r.x_total <= 0.78);
        assert!(r.raw_rate > 0.0);
        assert_eq!(r.key_rate, 0.0);
        assert_eq!(r.delta_opt, 0);
        assert!(r.secret_fraction_literal < 0.0);
    }

    #[test]
    fn representative_chain() {
        let r = secret_key_rate(&params(10)).unwrap();
        assert!(r.key_rate > 0.0);
        assert!((r.p_c - 0.430_901_352_5).abs() < 1e-9);
        // independent scan of F_{t_f}^n / t_f
        let p_c = r.p_c;
        let f_n = |t: u64| (1.0 - (1.0 - p_c).powi(t as i32)).powi(10);
        let start = r.mean_t_n.ceil() as u64;
        let best_tf = (start..=start + 10)
            .max_by(|a, b| (f_n(*a) / *a as f64).total_cmp(&(f_n(*b) / *b as f64)))
            .unwrap();
        assert_eq!(r.t_f, best_tf);
        assert!((r.completion_fraction - f_n(best_tf)).abs() < 1e-12);
    }

    #[test]
    fn delta_scan_properties() {
        for n in [1usize, 2, 5, 10, 20, 40] {
            let p = params(n);
            let table = p.order_stats().unwrap();
            let scan = scan_delta(&p, &table).unwrap();
            let r = secret_key_rate_with_table(&p, &table).unwrap();
            let ceiling = raw_rate_ceiling(&p, &table);
            for w in scan.windows(2) {
                assert!(w[1].completion_fraction >= w[0].completion_fraction);
            }
            for point in &scan {
                assert!(point.raw_rate <= ceiling * (1.0 + 1e-12));
                assert!(r.key_rate >= point.raw_rate * r.secret_fraction);
                let d = AttemptDistribution::new(table.p_c()).unwrap();
                assert!((point.completion_fraction - max_stat_cdf(n, point.t_f, &d)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn raw_rate_vanishes_for_large_buffers() {
        let p = ChainParams {
            delta_max: 100_000,
            ..params(5)
        };
        let table = p.order_stats().unwrap();
        let scan = scan_delta(&p, &table).unwrap();
        assert!(scan.last().unwrap().raw_rate < 1e-3 * scan[0].raw_rate);
    }

    #[test]
    fn ideal_chain_key_equals_raw() {
        for n in [1usize, 3, 10, 30] {
            let r = secret_key_rate(&params(n).ideal()).unwrap();
            assert_eq!(r.x_total, 1.0);
            assert_eq!(r.key_rate, r.raw_rate);
        }
    }

    #[test]
    fn key_rate_non_increasing_in_n() {
        let mut prev = f64::INFINITY;
        for n in 1..=30 {
            let r = secret_key_rate(&params(n)).unwrap();
            assert!(r.key_rate <= prev, "n = {n}");
            prev = r.key_rate;
        }
    }

    #[test]
    fn optimize_single_point_grid() {
        let opt = optimize_l0(&ChainParams::default(), 200.0, &[25.0]).unwrap();
        assert_eq!(opt.l0, 25.0);
        assert_eq!(opt.n, 8);
        assert!(optimize_l0(&ChainParams::default(), 200.0, &[]).is_err());
    }

    #[test]
    fn optimize_is_exhaustive() {
        let template = ChainParams {
            x_ga: 0.99,
            ..ChainParams::default()
        };
        let grid = [10.0, 25.0, 50.0];
        let opt = optimize_l0(&template, 500.0, &grid).unwrap();
        let values: Vec<f64> = grid
            .iter()
            .map(|&l0| {
                let n = (500.0 / l0).round() as usize;
                secret_key_rate(&template.with_l0(l0).with_sections(n)).unwrap().key_rate
            })
            .collect();
        let max = values.iter().copied().fold(f64::MIN, f64::max);
        assert_eq!(opt.value, max);
        let idx = values.iter().position(|&v| v == max).unwrap();
        assert_eq!(opt.l0, grid[idx]);
    }

    #[test]
    fn optimum_shifts_to_longer_sections_with_distance() {
        let template = ChainParams {
            x_ga: 0.999,
            ..ChainParams::default()
        };
        let grid: Vec<f64> = (1..=30).map(|i| 2.0 * i as f64).collect();
        let short = optimize_l0(&template, 100.0, &grid).unwrap();
        let long = optimize_l0(&template, 1000.0, &grid).unwrap();
        assert!(short.l0 < long.l0, "short {} long {}", short.l0, long.l0);
        assert!(short.l0 <= grid[grid.len() / 3]);
    }

    #[test]
    fn normalisation() {
        let p = ChainParams {
            pc_override: Some(1.0),
            delta_max: 0,
            link: LinkParams {
                q: 1,
                ..LinkParams::default()
            },
            ..params(1)
        }
        .ideal();
        let r = secret_key_rate(&p).unwrap();
        assert!((normalized_rate(&r, &p) - 2000.0).abs() < 1e-9);
        let doubled = ChainParams {
            link: LinkParams { q: 2, ..p.link },
            ..p
        };
        assert!((normalized_rate(&r, &doubled) - 1000.0).abs() < 1e-9);
        let mut one_side = p;
        one_side.conventions.counting = QubitCounting::OneSide;
        assert!((normalized_rate(&r, &one_side) - 4000.0).abs() < 1e-9);
    }

    #[test]
    fn naive_decoherence_for_long_chain() {
        let p = ChainParams {
            tau_d: 1.0,
            link: LinkParams {
                l0: 25.0,
                ..LinkParams::default()
            },
            ..params(100)
        };
        let naive = naive_decoherence_factor(&p);
        assert!((naive - (-0.0125f64).exp()).abs() < 1e-15);
        assert!(1.0 - naive > 1e-3);
    }
}
