//! One function per subcommand. Each is a pure function of its [`RunConfig`].

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use repeater_core::checks::{run_all, CheckConfig, CheckReport, DejmpsMapFn};
use repeater_core::distill::{compute_breakpoints, key_rate_with_distillation, DistillOutcome, DistillPlan};
use repeater_core::keyrate::{
    naive_decoherence_factor, optimize_l0_by, qubit_count, secret_key_rate, ChainParams, KeyRateResult,
};
use repeater_core::link::qubits_for_postselect;
use repeater_core::oracle::simulate_chain;
use repeater_core::Error as ModelError;

use crate::config::{invalid, RunConfig};
use crate::error::CliError;

/// Gate factors swept by `sweep` unless overridden.
pub const SWEEP_X_GA: [f64; 2] = [0.95, 0.99];
/// Gate factors optimised by `optimize` unless overridden.
pub const OPTIMIZE_X_GA: [f64; 3] = [0.95, 0.99, 0.999];
/// Infidelity the naive decoherence estimate is usually quoted at.
pub const QUOTED_NAIVE_INFIDELITY: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateRow {
    pub n: usize,
    pub l0_km: f64,
    pub p_c: f64,
    pub mean_t_n: f64,
    pub delta_opt: u32,
    pub t_f: u64,
    pub completion_fraction: f64,
    pub raw_rate_hz: f64,
    pub x_dc: f64,
    pub x_mm: f64,
    pub x_ga: f64,
    /// `x_ga^(n−1)`
    pub x_ga_total: f64,
    pub x_de: f64,
    pub x_de_naive: f64,
    pub x_total: f64,
    pub secret_fraction: f64,
    pub secret_fraction_literal: f64,
    pub key_rate_hz: f64,
}

pub struct RateOutput {
    pub row: RateRow,
    pub report: String,
}

pub fn cmd_rate(cfg: &RunConfig) -> Result<RateOutput, CliError> {
    let p = &cfg.chain;
    let r: KeyRateResult = secret_key_rate(p).map_err(invalid)?;
    let n_i = i32::try_from(p.n).unwrap_or(i32::MAX);
    let row = RateRow {
        n: p.n,
        l0_km: p.link.l0,
        p_c: r.p_c,
        mean_t_n: r.mean_t_n,
        delta_opt: r.delta_opt,
        t_f: r.t_f,
        completion_fraction: r.completion_fraction,
        raw_rate_hz: r.raw_rate,
        x_dc: r.factors.dark_count,
        x_mm: r.factors.mode_mismatch,
        x_ga: r.factors.gate,
        x_ga_total: r.factors.gate.powi(n_i - 1),
        x_de: r.factors.decoherence,
        x_de_naive: naive_decoherence_factor(p),
        x_total: r.x_total,
        secret_fraction: r.secret_fraction,
        secret_fraction_literal: r.secret_fraction_literal,
        key_rate_hz: r.key_rate,
    };
    let report = rate_report(&row);
    Ok(RateOutput { row, report })
}

fn rate_report(r: &RateRow) -> String {
    let mut s = String::new();
    let n = r.n;
    let _ = writeln!(s, "chain: n = {n}, L0 = {} km", r.l0_km);
    let _ = writeln!(s, "p_c = {:.6}, <T_n> = {:.6} steps", r.p_c, r.mean_t_n);
    let _ = writeln!(
        s,
        "delta = {}, t_f = {}, P(T_n <= t_f) = {:.6}",
        r.delta_opt, r.t_f, r.completion_fraction
    );
    let _ = writeln!(s, "raw rate = {:.6} Hz", r.raw_rate_hz);
    let _ = writeln!(s, "factors:");
    let _ = writeln!(s, "  x_dc^n       = {:.9}  (x_dc = {:.9})", r.x_dc.powi(n as i32), r.x_dc);
    let _ = writeln!(s, "  x_mm^n       = {:.9}  (x_mm = {})", r.x_mm.powi(n as i32), r.x_mm);
    let _ = writeln!(s, "  x_ga^(n-1)   = {:.9}  (x_ga = {})", r.x_ga_total, r.x_ga);
    let _ = writeln!(s, "  x_de (worst) = {:.9}", r.x_de);
    let _ = writeln!(
        s,
        "  x_de (naive exp(-n L0/(c tau_d))) = {:.9}  (1 - {:.3e}; quoted estimate 1 - {:.0e})",
        r.x_de_naive,
        1.0 - r.x_de_naive,
        QUOTED_NAIVE_INFIDELITY
    );
    let _ = writeln!(s, "x_total = {:.9}", r.x_total);
    let _ = writeln!(
        s,
        "secret fraction = {:.9} (unclamped {:.9})",
        r.secret_fraction, r.secret_fraction_literal
    );
    let _ = writeln!(s, "K = {:.6} Hz", r.key_rate_hz);
    s
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub distance_km: f64,
    pub l0_km: f64,
    pub n: usize,
    pub x_ga: f64,
    pub distill: bool,
    /// `direct`, `distilled`, `unreachable` or `no-sections`
    pub regime: &'static str,
    pub key_rate_hz: f64,
    pub key_rate_literal_hz: Option<f64>,
    pub raw_rate_hz: Option<f64>,
    pub secret_fraction: Option<f64>,
    pub x_total: Option<f64>,
    pub delta_opt: Option<u32>,
    pub t_f: Option<u64>,
    pub n_l: Option<usize>,
    pub n_s: Option<usize>,
    pub rounds: Option<usize>,
}

fn sections(distance: f64, l0: f64) -> usize {
    (distance / l0).round() as usize
}

impl SweepRow {
    fn empty(distance_km: f64, l0_km: f64, n: usize, x_ga: f64, distill: bool, regime: &'static str) -> Self {
        Self {
            distance_km,
            l0_km,
            n,
            x_ga,
            distill,
            regime,
            key_rate_hz: 0.0,
            key_rate_literal_hz: None,
            raw_rate_hz: None,
            secret_fraction: None,
            x_total: None,
            delta_opt: None,
            t_f: None,
            n_l: None,
            n_s: None,
            rounds: None,
        }
    }

    fn direct(mut self, r: &KeyRateResult) -> Self {
        self.regime = "direct";
        self.key_rate_hz = r.key_rate;
        self.key_rate_literal_hz = Some(r.raw_rate * r.secret_fraction_literal);
        self.raw_rate_hz = Some(r.raw_rate);
        self.secret_fraction = Some(r.secret_fraction);
        self.x_total = Some(r.x_total);
        self.delta_opt = Some(r.delta_opt);
        self.t_f = Some(r.t_f);
        self
    }
}

fn sweep_point(template: &ChainParams, distance: f64, l0: f64, x_ga: f64, distill: bool) -> Result<SweepRow, CliError> {
    let n = sections(distance, l0);
    let row = SweepRow::empty(distance, l0, n, x_ga, distill, "no-sections");
    if n == 0 {
        return Ok(row);
    }
    let p = ChainParams { x_ga, ..template.with_l0(l0).with_sections(n) };
    if !distill {
        return Ok(row.direct(&secret_key_rate(&p).map_err(invalid)?));
    }
    Ok(match key_rate_with_distillation(&p).map_err(invalid)? {
        DistillOutcome::Direct(r) => row.direct(&r),
        DistillOutcome::Unreachable { .. } => SweepRow { regime: "unreachable", ..row },
        DistillOutcome::Distilled(d) => SweepRow {
            regime: "distilled",
            key_rate_hz: d.key_rate,
            key_rate_literal_hz: Some(d.key_rate_literal),
            raw_rate_hz: Some(d.raw_rate),
            secret_fraction: Some(d.bracket),
            n_l: Some(d.schedule.n_l),
            n_s: Some(d.schedule.n_s),
            rounds: Some(d.rounds),
            ..row
        },
    })
}

/// Rows ordered by distance, then `L0`, then `x_ga`, then distillation off/on.
pub fn cmd_sweep(cfg: &RunConfig) -> Result<Vec<SweepRow>, CliError> {
    let mut grid = Vec::new();
    for &d in &cfg.distances {
        for &l0 in &cfg.l0_grid {
            for &x_ga in &cfg.x_ga_grid {
                for distill in [false, true] {
                    grid.push((d, l0, x_ga, distill));
                }
            }
        }
    }
    grid.par_iter()
        .map(|&(d, l0, x_ga, distill)| sweep_point(&cfg.chain, d, l0, x_ga, distill))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizeRow {
    pub distance_km: f64,
    pub x_ga: f64,
    pub distill: bool,
    pub best_l0_km: Option<f64>,
    pub n: Option<usize>,
    pub regime: &'static str,
    pub key_rate_hz: f64,
    /// Key rate divided by the number of qubits in the chain.
    pub normalized_rate_hz: f64,
}

fn optimize_point(template: &ChainParams, grid: &[f64], distance: f64, x_ga: f64, distill: bool) -> Result<OptimizeRow, CliError> {
    let template = ChainParams { x_ga, ..*template };
    let best = optimize_l0_by(&template, distance, grid, |p| {
        if distill {
            let o = key_rate_with_distillation(p)?;
            Ok((o.key_rate(), o.regime()))
        } else {
            Ok((secret_key_rate(p)?.key_rate, "direct"))
        }
    });
    match best {
        Ok(best) => {
            let p = template.with_l0(best.l0).with_sections(best.n);
            Ok(OptimizeRow {
                distance_km: distance,
                x_ga,
                distill,
                best_l0_km: Some(best.l0),
                n: Some(best.n),
                regime: best.detail,
                key_rate_hz: best.value,
                normalized_rate_hz: best.value / qubit_count(&p),
            })
        }
        Err(ModelError::EmptyGrid(_)) => Ok(OptimizeRow {
            distance_km: distance,
            x_ga,
            distill,
            best_l0_km: None,
            n: None,
            regime: "no-sections",
            key_rate_hz: 0.0,
            normalized_rate_hz: 0.0,
        }),
        Err(e) => Err(invalid(e)),
    }
}

/// Rows ordered by distance, then `x_ga`, then distillation off/on.
pub fn cmd_optimize(cfg: &RunConfig) -> Result<Vec<OptimizeRow>, CliError> {
    let mut grid = Vec::new();
    for &d in &cfg.distances {
        for &x_ga in &cfg.x_ga_grid {
            for distill in [false, true] {
                grid.push((d, x_ga, distill));
            }
        }
    }
    grid.par_iter()
        .map(|&(d, x_ga, distill)| optimize_point(&cfg.chain, &cfg.l0_grid, d, x_ga, distill))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InsetRow {
    pub mu: f64,
    pub q_prime: u32,
    /// `q' / q`
    pub factor: f64,
}

pub fn cmd_inset(cfg: &RunConfig) -> Result<Vec<InsetRow>, CliError> {
    let base = cfg.chain.link;
    cfg.mu_grid
        .iter()
        .map(|&mu| {
            let q_prime = qubits_for_postselect(&base, mu).map_err(invalid)?;
            Ok(InsetRow {
                mu,
                q_prime,
                factor: f64::from(q_prime) / f64::from(base.q),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScheduleRow {
    pub n: usize,
    pub l0_km: f64,
    pub x_ga: f64,
    /// `schedule`, `not-needed`, `unreachable` or `cannot-close`
    pub plan: &'static str,
    pub n_l: Option<usize>,
    pub n_s: Option<usize>,
    pub rounds: Option<usize>,
    /// Sections searched before concluding no distillation is needed.
    pub searched: Option<usize>,
}

pub fn cmd_distill_schedule(cfg: &RunConfig) -> Result<Vec<ScheduleRow>, CliError> {
    let p = &cfg.chain;
    let mut row = ScheduleRow {
        n: p.n,
        l0_km: p.link.l0,
        x_ga: p.x_ga,
        plan: "schedule",
        n_l: None,
        n_s: None,
        rounds: None,
        searched: None,
    };
    match compute_breakpoints(p) {
        Ok(DistillPlan::Schedule(s)) => {
            row.n_l = Some(s.n_l);
            row.n_s = Some(s.n_s);
            row.rounds = Some(s.rounds(p.n));
        }
        Ok(DistillPlan::NotNeeded { searched }) => {
            row.plan = "not-needed";
            row.searched = Some(searched);
        }
        Err(ModelError::BelowDistillationRegime { .. }) => row.plan = "unreachable",
        Err(ModelError::CycleCannotClose { .. }) => row.plan = "cannot-close",
        Err(e) => return Err(invalid(e)),
    }
    Ok(vec![row])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulateRow {
    pub k: usize,
    pub n: usize,
    pub p_c: f64,
    pub trials: u64,
    pub seed: u64,
    pub analytic_mean: f64,
    pub mc_mean: f64,
    pub mc_stderr: f64,
    /// `(mc − analytic) / stderr`
    pub z: f64,
}

/// Seeded Monte Carlo of every order statistic next to its analytic mean.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<Vec<SimulateRow>, CliError> {
    let p = &cfg.chain;
    let table = p.order_stats().map_err(invalid)?;
    let stats = simulate_chain(p, cfg.trials, cfg.seed).map_err(invalid)?;
    (1..=p.n)
        .map(|k| {
            let analytic = table.get(k).map_err(invalid)?;
            let (mean, se) = (stats.mean[k - 1], stats.stderr[k - 1]);
            let z = if se > 0.0 { (mean - analytic) / se } else { 0.0 };
            Ok(SimulateRow {
                k,
                n: p.n,
                p_c: stats.p_c,
                trials: cfg.trials,
                seed: cfg.seed,
                analytic_mean: analytic,
                mc_mean: mean,
                mc_stderr: se,
                z,
            })
        })
        .collect()
}

pub fn check_config(cfg: &RunConfig) -> CheckConfig {
    CheckConfig {
        trials: cfg.trials,
        seed: cfg.seed,
        template: cfg.chain,
        ..CheckConfig::default()
    }
}

/// Runs every analytic-vs-oracle suite with `map` standing in for the distillation map.
pub fn cmd_check(cfg: &RunConfig, map: DejmpsMapFn) -> Result<CheckReport, CliError> {
    run_all(&check_config(cfg), map).map_err(invalid)
}
