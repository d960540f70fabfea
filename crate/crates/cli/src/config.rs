//! Flag and config-file ingestion.
//!
//! Every setting can come from a command-line flag or from a flat config
//! file whose keys are the flag names. Flags win over the file, the file
//! wins over built-in defaults.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Deserialize;

use repeater_core::keyrate::{ChainParams, DecoherenceTerm, QubitCounting, RawRateSource, StepConvention, SurvivalConvention};
use repeater_core::state::EntropyBase;
use repeater_core::Error as ModelError;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// Parses a kebab-case enum value the same way the config file does.
fn kebab<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    T::deserialize(serde::de::value::StrDeserializer::<serde::de::value::Error>::new(s)).map_err(|e| e.to_string())
}

/// Every overridable setting. Field names double as config-file keys.
#[derive(Debug, Clone, Default, PartialEq, Args, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct Settings {
    /// Number of elementary sections
    #[arg(long)]
    pub n: Option<usize>,
    /// Inter-repeater distance (km)
    #[arg(long)]
    pub l0: Option<f64>,
    /// Fibre attenuation length (km)
    #[arg(long)]
    pub l_att: Option<f64>,
    /// Emission, collection and detection efficiency
    #[arg(long)]
    pub eta: Option<f64>,
    /// Qubit pairs per station side
    #[arg(long)]
    pub q: Option<u32>,
    /// Fraction of photons kept by post-selection
    #[arg(long)]
    pub mu: Option<f64>,
    /// Emission timescale (s)
    #[arg(long)]
    pub tau_q: Option<f64>,
    /// Detector dark-count rate (Hz)
    #[arg(long)]
    pub dark_rate: Option<f64>,
    /// Memory coherence time (s)
    #[arg(long)]
    pub tau_d: Option<f64>,
    /// Signal speed in fibre (km/s)
    #[arg(long)]
    pub c: Option<f64>,
    /// Gate quality factor per swapping station
    #[arg(long)]
    pub x_ga: Option<f64>,
    /// Mode-mismatch factor per section
    #[arg(long)]
    pub x_mm: Option<f64>,
    /// Largest measurement-time buffer scanned (steps)
    #[arg(long)]
    pub delta_max: Option<u32>,
    /// Use this connection probability instead of the link model
    #[arg(long)]
    pub pc_override: Option<f64>,
    /// Perfect gates, no mode mismatch, no dark counts, no decoherence
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub ideal: Option<bool>,
    /// Perfect gates, no mode mismatch, no dark counts; decoherence kept
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub ideal_gates: Option<bool>,
    /// Fold the waiting-window capture probability into eta
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub capture_in_eta: Option<bool>,
    /// Logarithm base of the binary entropy [two, natural]
    #[arg(long, value_parser = kebab::<EntropyBase>)]
    pub entropy_base: Option<EntropyBase>,
    /// Duration of one raw-rate step [one-way, round-trip]
    #[arg(long, value_parser = kebab::<StepConvention>)]
    pub step: Option<StepConvention>,
    /// Use the rounded 0.37 survival per distillation round
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub rounded_survival: Option<bool>,
    /// Decoherence exponent [printed, extra-n]
    #[arg(long, value_parser = kebab::<DecoherenceTerm>)]
    pub decoherence_term: Option<DecoherenceTerm>,
    /// Qubit counting for normalised rates [both-sides, one-side]
    #[arg(long, value_parser = kebab::<QubitCounting>)]
    pub counting: Option<QubitCounting>,
    /// Raw rate used by the distilled key rate [full-chain, longest-block]
    #[arg(long, value_parser = kebab::<RawRateSource>)]
    pub raw_source: Option<RawRateSource>,

    /// Total distances (km), comma separated
    #[arg(long, value_delimiter = ',')]
    pub distances: Option<Vec<f64>>,
    /// Inter-repeater distances (km), comma separated
    #[arg(long, value_delimiter = ',')]
    pub l0_grid: Option<Vec<f64>>,
    /// Gate quality factors, comma separated
    #[arg(long, value_delimiter = ',')]
    pub x_ga_grid: Option<Vec<f64>>,
    /// Post-selection fractions, comma separated
    #[arg(long, value_delimiter = ',')]
    pub mu_grid: Option<Vec<f64>>,

    /// Monte Carlo trials
    #[arg(long)]
    pub trials: Option<u64>,
    /// Monte Carlo seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write the table here instead of stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

/// Shared by every subcommand.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Flat JSON or TOML file whose keys are flag names
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub settings: Settings,
}

macro_rules! layer {
    ($top:expr, $bottom:expr; $($field:ident),* $(,)?) => {
        Settings { $($field: $top.$field.or($bottom.$field)),* }
    };
}

impl Settings {
    /// `self` where set, `fallback` otherwise.
    pub fn over(self, fallback: Settings) -> Settings {
        layer!(self, fallback;
            n, l0, l_att, eta, q, mu, tau_q, dark_rate, tau_d, c, x_ga, x_mm, delta_max,
            pc_override, ideal, ideal_gates, capture_in_eta, entropy_base, step, rounded_survival,
            decoherence_term, counting, raw_source, distances, l0_grid, x_ga_grid, mu_grid,
            trials, seed, out, format,
        )
    }
}

pub fn read_config_file(path: &Path) -> Result<Settings, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let is_toml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"));
    let parsed = if is_toml {
        toml::from_str(&text).map_err(|e| e.message().to_string())
    } else {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|message| CliError::ConfigFile {
        path: path.to_path_buf(),
        message,
    })
}

/// Flags layered over the config file (if any).
pub fn resolve(common: &CommonArgs) -> Result<Settings, CliError> {
    let file = match &common.config {
        Some(path) => read_config_file(path)?,
        None => Settings::default(),
    };
    Ok(common.settings.clone().over(file))
}

/// Fully resolved inputs of one command.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub chain: ChainParams,
    pub distances: Vec<f64>,
    pub l0_grid: Vec<f64>,
    pub x_ga_grid: Vec<f64>,
    pub mu_grid: Vec<f64>,
    pub trials: u64,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub format: Format,
}

pub const DEFAULT_TRIALS: u64 = 100_000;
pub const DEFAULT_SEED: u64 = 1;

pub fn default_distances() -> Vec<f64> {
    (1..=20).map(|i| f64::from(i) * 100.0).collect()
}

pub fn default_l0_grid() -> Vec<f64> {
    (1..=12).map(|i| f64::from(i) * 5.0).collect()
}

pub fn default_mu_grid() -> Vec<f64> {
    (1..=20).map(|i| f64::from(i) * 0.05).collect()
}

fn field_of(err: &ModelError) -> String {
    match err {
        ModelError::OutOfRange { name, .. } => name.replace('_', "-"),
        ModelError::ZeroSections => "n".into(),
        ModelError::EmptyGrid(name) => name.replace('_', "-"),
        _ => "config".into(),
    }
}

pub(crate) fn invalid(err: ModelError) -> CliError {
    CliError::Config {
        field: field_of(&err),
        message: err.to_string(),
    }
}

fn nonempty(name: &str, grid: Vec<f64>) -> Result<Vec<f64>, CliError> {
    if grid.is_empty() {
        return Err(CliError::Config {
            field: name.into(),
            message: "grid must not be empty".into(),
        });
    }
    if let Some(bad) = grid.iter().find(|v| !v.is_finite()) {
        return Err(CliError::Config {
            field: name.into(),
            message: format!("grid value {bad} is not finite"),
        });
    }
    Ok(grid)
}

impl RunConfig {
    /// Defaults, then the `ideal` presets, then every explicit setting.
    pub fn from_settings(s: Settings, x_ga_default: &[f64]) -> Result<Self, CliError> {
        let mut p = ChainParams::default();
        if s.ideal.unwrap_or(false) {
            p = p.ideal();
        } else if s.ideal_gates.unwrap_or(false) {
            p.x_ga = 1.0;
            p.x_mm = 1.0;
            p.link.dark_rate = 0.0;
        }

        macro_rules! set {
            ($($src:ident => $($dst:ident).+),* $(,)?) => {
                $(if let Some(v) = s.$src { p.$($dst).+ = v; })*
            };
        }
        set!(
            n => n, l0 => link.l0, l_att => link.l_att, eta => link.eta, q => link.q,
            mu => link.mu, tau_q => link.tau_q, dark_rate => link.dark_rate, tau_d => tau_d,
            c => c, x_ga => x_ga, x_mm => x_mm, delta_max => delta_max,
            capture_in_eta => link.capture_in_eta, entropy_base => conventions.entropy,
            step => conventions.step, decoherence_term => conventions.decoherence,
            counting => conventions.counting, raw_source => conventions.raw_source,
        );
        if s.pc_override.is_some() {
            p.pc_override = s.pc_override;
        }
        if s.rounded_survival.unwrap_or(false) {
            p.conventions.survival = SurvivalConvention::Rounded;
        }
        p.validate().map_err(invalid)?;

        let x_ga_grid = nonempty("x-ga-grid", s.x_ga_grid.unwrap_or_else(|| x_ga_default.to_vec()))?;
        if let Some(bad) = x_ga_grid.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(CliError::Config {
                field: "x-ga-grid".into(),
                message: format!("{bad} is outside [0, 1]"),
            });
        }
        let mu_grid = nonempty("mu-grid", s.mu_grid.unwrap_or_else(default_mu_grid))?;
        if let Some(bad) = mu_grid.iter().find(|m| !(**m > 0.0 && **m <= 1.0)) {
            return Err(CliError::Config {
                field: "mu-grid".into(),
                message: format!("{bad} is outside (0, 1]"),
            });
        }
        let trials = s.trials.unwrap_or(DEFAULT_TRIALS);
        if trials == 0 {
            return Err(CliError::Config {
                field: "trials".into(),
                message: "must be at least 1".into(),
            });
        }

        Ok(Self {
            chain: p,
            distances: nonempty("distances", s.distances.unwrap_or_else(default_distances))?,
            l0_grid: nonempty("l0-grid", s.l0_grid.unwrap_or_else(default_l0_grid))?,
            x_ga_grid,
            mu_grid,
            trials,
            seed: s.seed.unwrap_or(DEFAULT_SEED),
            out: s.out,
            format: s.format.unwrap_or_default(),
        })
    }
}
