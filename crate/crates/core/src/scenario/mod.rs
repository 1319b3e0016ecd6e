//! Scenario files: TOML documents that describe one reproducible run.
//!
//! A scenario names its `kind` and carries the section that kind needs:
//!
//! | kind                | sections                     |
//! |---------------------|------------------------------|
//! | `two_state`         | `two_state`, `packet`        |
//! | `kernels`           | `bath`, `kernels`            |
//! | `qbm_fourier`       | `bath`, `qbm`                |
//! | `qbm_records`       | `bath`, `qbm` (+ `window`)   |
//! | `info_count`        | `bath`, `info`               |
//! | `generic_histories` | `histories`                  |
//!
//! Unknown keys are rejected. Missing required keys are reported by name.

mod output;
mod run;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{BathMode, OscillatorBath, SpectralDensity};
use crate::records::{frequency_ladder, DEFAULT_DECOHERENCE_THRESHOLD};
use crate::two_state::TwoStateModelConfig;

pub use output::{write_atomic, Cell, Table};
pub use run::{compute, run, RunOptions, RunOutput, RunReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    TwoState,
    Kernels,
    QbmFourier,
    QbmRecords,
    InfoCount,
    GenericHistories,
}

impl ScenarioKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScenarioKind::TwoState => "two_state",
            ScenarioKind::Kernels => "kernels",
            ScenarioKind::QbmFourier => "qbm_fourier",
            ScenarioKind::QbmRecords => "qbm_records",
            ScenarioKind::InfoCount => "info_count",
            ScenarioKind::GenericHistories => "generic_histories",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl OutputFormat {
    pub fn extension(&self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "default_tolerance")]
    pub decoherence: f64,
    #[serde(default = "default_tolerance")]
    pub records: f64,
}

fn default_tolerance() -> f64 {
    crate::histories::DEFAULT_TOLERANCE
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            decoherence: default_tolerance(),
            records: default_tolerance(),
        }
    }
}

/// Initial particle packet for `two_state`; lengths in box units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PacketConfig {
    pub center: f64,
    pub width: f64,
    #[serde(default)]
    pub momentum: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OhmicConfig {
    pub m_gamma: f64,
    pub cutoff: f64,
}

/// Modes on `omega_n = n pi / tau` with common mass and coupling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LadderConfig {
    pub count: usize,
    pub mass: f64,
    pub coupling: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathConfig {
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "one")]
    pub hbar: f64,
    /// `[mass, omega, coupling]` per mode.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub modes: Vec<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ohmic: Option<OhmicConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ladder: Option<LadderConfig>,
}

fn one() -> f64 {
    1.0
}

impl BathConfig {
    fn validate(&self) -> Result<()> {
        let sources = [!self.modes.is_empty(), self.ohmic.is_some(), self.ladder.is_some()];
        if sources.iter().filter(|s| **s).count() != 1 {
            return Err(Error::validation("bath", "give exactly one of `modes`, `ohmic` or `ladder`"));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(Error::validation("bath.temperature", format!("must be >= 0, got {}", self.temperature)));
        }
        if !(self.hbar > 0.0 && self.hbar.is_finite()) {
            return Err(Error::validation("bath.hbar", format!("must be positive, got {}", self.hbar)));
        }
        Ok(())
    }

    pub fn bath_modes(&self, tau: Option<f64>) -> Result<Vec<BathMode>> {
        if let Some(l) = self.ladder {
            let tau = tau.ok_or_else(|| Error::validation("bath.ladder", "a frequency ladder needs a horizon `tau`"))?;
            return frequency_ladder(tau, l.count, l.mass, l.coupling).map_err(|e| keyed("bath.ladder", e));
        }
        if self.ohmic.is_some() {
            return Err(Error::validation("bath.ohmic", "this scenario kind needs discrete `modes`"));
        }
        self.modes
            .iter()
            .map(|&[m, w, c]| BathMode::new(m, w, c))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| keyed("bath.modes", e))
    }

    pub fn oscillator_bath(&self, tau: Option<f64>) -> Result<OscillatorBath> {
        OscillatorBath::new(self.bath_modes(tau)?, self.temperature, self.hbar).map_err(|e| keyed("bath", e))
    }

    pub fn spectral_density(&self, tau: Option<f64>) -> Result<SpectralDensity> {
        match self.ohmic {
            Some(o) => SpectralDensity::ohmic(o.m_gamma, o.cutoff, self.temperature, self.hbar).map_err(|e| keyed("bath.ohmic", e)),
            None => Ok(SpectralDensity::Discrete(self.oscillator_bath(tau)?)),
        }
    }
}

/// Kernel lags `s_k = k s_max / (points - 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelGrid {
    pub s_max: f64,
    pub points: usize,
}

impl KernelGrid {
    pub fn lags(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![0.0];
        }
        (0..self.points).map(|k| k as f64 * self.s_max / (self.points - 1) as f64).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    Position,
    Momentum,
    PhaseSpace,
}

/// Record window centered on the record expected for the first path of each pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowConfig {
    pub kind: WindowKind,
    /// Half-width in position (or momentum for `momentum`).
    pub half_width: f64,
    /// Momentum half-width of a `phase_space` cell.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub momentum_half_width: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QbmConfig {
    pub tau: f64,
    /// Number of grid intervals on `[0, tau]`.
    pub grid: usize,
    #[serde(default = "one_usize")]
    pub pairs: usize,
    #[serde(default = "one")]
    pub path_amplitude: f64,
    /// Coarse-graining widths per mode; a single entry applies to every mode.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub widths: Vec<f64>,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<WindowConfig>,
}

fn one_usize() -> usize {
    1
}

fn default_threshold() -> f64 {
    DEFAULT_DECOHERENCE_THRESHOLD
}

impl QbmConfig {
    fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::validation("qbm.tau", format!("must be positive, got {}", self.tau)));
        }
        if self.grid < 2 {
            return Err(Error::validation("qbm.grid", format!("need at least 2 intervals, got {}", self.grid)));
        }
        if self.pairs == 0 {
            return Err(Error::validation("qbm.pairs", "need at least one path pair"));
        }
        if let Some(w) = self.widths.iter().find(|w| !(**w > 0.0)) {
            return Err(Error::validation("qbm.widths", format!("widths must be positive, got {w}")));
        }
        if let Some(win) = self.window {
            if !(win.half_width > 0.0) {
                return Err(Error::validation("qbm.window.half_width", "must be positive"));
            }
            if win.kind == WindowKind::PhaseSpace && !win.momentum_half_width.is_some_and(|p| p > 0.0) {
                return Err(Error::validation(
                    "qbm.window.momentum_half_width",
                    "a phase_space window needs a positive momentum half-width",
                ));
            }
        }
        Ok(())
    }

    pub fn width_for(&self, mode: usize) -> Option<f64> {
        match self.widths.len() {
            0 => None,
            1 => Some(self.widths[0]),
            _ => self.widths.get(mode).copied(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InfoConfig {
    pub box_length: f64,
    pub tau: f64,
    /// Fourier-cell width used for the `(L tau / Delta)^2` history count.
    pub delta: f64,
    /// Temperatures to sweep; empty means the bath temperature.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub temperatures: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisChoice {
    #[default]
    Computational,
    /// Eigenbasis of the Hamiltonian, ascending energies.
    Energy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistoriesConfig {
    pub dim: usize,
    pub times: Vec<f64>,
    /// Basis-index groups of the family used at every time.
    pub groups: Vec<Vec<usize>>,
    #[serde(default)]
    pub basis: BasisChoice,
    #[serde(default = "one")]
    pub hbar: f64,
    /// Real symmetric Hamiltonian rows; random from the seed when empty.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub hamiltonian: Vec<Vec<f64>>,
    /// Real amplitudes of the initial state; random from the seed when empty.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub state: Vec<f64>,
}

impl HistoriesConfig {
    fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::validation("histories.dim", "must be positive"));
        }
        if self.times.is_empty() {
            return Err(Error::validation("histories.times", "need at least one time"));
        }
        if self.times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::validation("histories.times", "times must increase strictly"));
        }
        if !self.hamiltonian.is_empty() && (self.hamiltonian.len() != self.dim || self.hamiltonian.iter().any(|r| r.len() != self.dim)) {
            return Err(Error::validation("histories.hamiltonian", format!("need {0} rows of {0} entries", self.dim)));
        }
        if !self.state.is_empty() && self.state.len() != self.dim {
            return Err(Error::validation("histories.state", format!("need {} amplitudes", self.dim)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub kind: ScenarioKind,
    #[serde(default)]
    pub format: OutputFormat,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tolerance: Tolerances,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub two_state: Option<TwoStateModelConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub packet: Option<PacketConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bath: Option<BathConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernels: Option<KernelGrid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qbm: Option<QbmConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub info: Option<InfoConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub histories: Option<HistoriesConfig>,
}

fn keyed(key: &str, e: Error) -> Error {
    match e {
        Error::InvalidInput(message) => Error::validation(key, message),
        other => other,
    }
}

fn require<'a, T>(section: &'a Option<T>, key: &str) -> Result<&'a T> {
    section
        .as_ref()
        .ok_or_else(|| Error::validation(key, format!("section `[{key}]` is required for this kind")))
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(Error::validation("name", "must not be empty"));
        }
        if !self.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
            return Err(Error::validation("name", "use ASCII letters, digits, `_` or `-`"));
        }
        for (key, v) in [("tolerance.decoherence", self.tolerance.decoherence), ("tolerance.records", self.tolerance.records)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::validation(key, format!("must be positive, got {v}")));
            }
        }
        match self.kind {
            ScenarioKind::TwoState => {
                let cfg = require(&self.two_state, "two_state")?;
                cfg.validate().map_err(|e| match e {
                    Error::Validation { key, message } => Error::validation(format!("two_state.{key}"), message),
                    other => other,
                })?;
                if let Some(p) = self.packet {
                    if !(p.width > 0.0) {
                        return Err(Error::validation("packet.width", "must be positive"));
                    }
                }
            }
            ScenarioKind::Kernels => {
                require(&self.bath, "bath")?.validate()?;
                let grid = require(&self.kernels, "kernels")?;
                if grid.points == 0 || !(grid.s_max >= 0.0 && grid.s_max.is_finite()) {
                    return Err(Error::validation("kernels", "need points >= 1 and a finite s_max >= 0"));
                }
            }
            ScenarioKind::QbmFourier | ScenarioKind::QbmRecords => {
                let bath = require(&self.bath, "bath")?;
                bath.validate()?;
                let qbm = require(&self.qbm, "qbm")?;
                qbm.validate()?;
                let modes = bath.bath_modes(Some(qbm.tau))?;
                if qbm.widths.len() > 1 && qbm.widths.len() != modes.len() {
                    return Err(Error::validation("qbm.widths", format!("give 1 or {} widths", modes.len())));
                }
                if self.kind == ScenarioKind::QbmRecords && qbm.window.is_none() {
                    return Err(Error::validation("qbm.window", "qbm_records needs a record window"));
                }
            }
            ScenarioKind::InfoCount => {
                let bath = require(&self.bath, "bath")?;
                bath.validate()?;
                let info = require(&self.info, "info")?;
                for (key, v) in [("info.box_length", info.box_length), ("info.tau", info.tau), ("info.delta", info.delta)] {
                    if !(v > 0.0 && v.is_finite()) {
                        return Err(Error::validation(key, format!("must be positive, got {v}")));
                    }
                }
                if let Some(t) = info.temperatures.iter().find(|t| !(**t >= 0.0 && t.is_finite())) {
                    return Err(Error::validation("info.temperatures", format!("must be >= 0, got {t}")));
                }
                bath.bath_modes(Some(info.tau))?;
            }
            ScenarioKind::GenericHistories => require(&self.histories, "histories")?.validate()?,
        }
        Ok(())
    }

    /// Canonical TOML form; parsing it gives back the same scenario.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::invalid(format!("cannot serialize scenario: {e}")))
    }
}

/// 1-based line and column of a byte offset.
fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

fn missing_field(message: &str) -> Option<String> {
    let rest = message.split("missing field `").nth(1)?;
    Some(rest.split('`').next()?.to_string())
}

pub fn parse_scenario_str(text: &str) -> Result<Scenario> {
    let scenario: Scenario = toml::from_str(text).map_err(|e| {
        let message = e.message().trim().to_string();
        if let Some(field) = missing_field(&message) {
            return Error::validation(field, message);
        }
        let (line, column) = e.span().map_or((0, 0), |s| line_column(text, s.start));
        Error::Parse { line, column, message }
    })?;
    scenario.validate()?;
    Ok(scenario)
}

pub fn parse_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_scenario_str(&text)
}

/// Scenario files shipped with the crate, `(name, canonical TOML)`.
pub const GOLDEN_SCENARIOS: [(&str, &str); 6] = [
    ("two_state_default", include_str!("../../scenarios/two_state_default.toml")),
    ("kernels_ohmic", include_str!("../../scenarios/kernels_ohmic.toml")),
    ("info_count_T0", include_str!("../../scenarios/info_count_T0.toml")),
    ("qbm_fourier_ladder", include_str!("../../scenarios/qbm_fourier_ladder.toml")),
    ("qbm_records_single", include_str!("../../scenarios/qbm_records_single.toml")),
    ("generic_conserved", include_str!("../../scenarios/generic_conserved.toml")),
];

pub fn golden_scenario(name: &str) -> Option<Scenario> {
    GOLDEN_SCENARIOS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| parse_scenario_str(text).expect("shipped scenarios parse"))
}
