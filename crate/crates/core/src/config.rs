//! Scenario parameters.
//!
//! The on-disk format is TOML with the sections `[waveform]`, `[channel]`,
//! `[pa]`, `[circuit]`, `[optimizer]` and `[sweep]`. Omitted keys take their
//! default values, unknown keys are rejected. Command-line overrides of the
//! form `section.key=value` are applied on top of the file before validation.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::units::{db_to_linear, dbm_to_w};
use crate::waveform::MappingScheme;

/// The default scenario as shipped with the crate.
pub const DEFAULT_SCENARIO_TOML: &str = include_str!("../data/default_scenario.toml");

const SUPPORTED_QAM: [u32; 4] = [4, 16, 64, 256];

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Parse { line: Option<usize>, message: String },
    #[error("bad override `{entry}`: {message}")]
    Override { entry: String, message: String },
    #[error("invalid `{field}`: {constraint}")]
    Invalid { field: &'static str, constraint: String },
}

fn invalid(field: &'static str, constraint: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field, constraint: constraint.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WaveformConfig {
    /// Stored for reference; no model depends on it.
    pub carrier_frequency_hz: f64,
    pub subcarrier_spacing_hz: f64,
    pub num_resource_blocks: usize,
    /// Allocated tones M (also the DFT-spread size).
    pub allocated_tones: usize,
    /// FFT size N.
    pub fft_size: usize,
    pub bandwidth_hz: f64,
    pub modulation_order: u32,
    pub mapping: MappingScheme,
    /// Extra null tones on each side of DC for the split-localized mapping.
    pub dc_guard_tones: usize,
    /// Oversampling of the PA/EVM chain.
    pub oversample: usize,
}

impl Default for WaveformConfig {
    fn default() -> Self {
        Self {
            carrier_frequency_hz: 3.5e9,
            subcarrier_spacing_hz: 15e3,
            num_resource_blocks: 100,
            allocated_tones: 1200,
            fft_size: 2048,
            bandwidth_hz: 20e6,
            modulation_order: 64,
            mapping: MappingScheme::SplitLocalized,
            dc_guard_tones: 0,
            oversample: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelStatsMode {
    /// Median eigenvalues over many flat 2x2 draws.
    Median,
    /// A single representative draw.
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    pub profile: String,
    pub delay_spread_ns: f64,
    /// Informational: fading is drawn independently per OFDM symbol.
    pub speed_kmh: f64,
    pub noise_psd_dbm_hz: f64,
    pub noise_figure_db: f64,
    pub large_scale_gain_db: f64,
    pub num_tx_antennas: usize,
    pub num_rx_antennas: usize,
    /// Per-subcarrier SNR of the link-level EVM chain, referenced to PA output power.
    pub link_snr_db: f64,
    /// Number of flat 2x2 draws behind the median channel statistics.
    pub stats_draws: usize,
    pub channel_stats: ChannelStatsMode,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            profile: "TDL-C".into(),
            delay_spread_ns: 300.0,
            speed_kmh: 100.0,
            noise_psd_dbm_hz: -174.0,
            noise_figure_db: 7.0,
            large_scale_gain_db: -110.0,
            num_tx_antennas: 2,
            num_rx_antennas: 2,
            link_snr_db: 45.0,
            stats_draws: 1000,
            channel_stats: ChannelStatsMode::Median,
        }
    }
}

impl ChannelConfig {
    /// N0 in W/Hz, thermal density plus noise figure.
    pub fn noise_psd_w_per_hz(&self) -> f64 {
        dbm_to_w(self.noise_psd_dbm_hz + self.noise_figure_db)
    }

    /// Large-scale gain G as a linear power ratio.
    pub fn large_scale_gain(&self) -> f64 {
        db_to_linear(self.large_scale_gain_db)
    }
}

/// Power-amplifier parameters: saturation, modified-Rapp shape and drain efficiency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PaProfile {
    pub p_sat_dbm: f64,
    pub smoothness: f64,
    pub am_pm_alpha_rad: f64,
    pub am_pm_beta: f64,
    pub am_pm_q1: f64,
    pub am_pm_q2: f64,
    /// Drain efficiency at saturation.
    pub eta_sat: f64,
}

impl Default for PaProfile {
    fn default() -> Self {
        Self {
            p_sat_dbm: 44.0,
            smoothness: 3.0,
            am_pm_alpha_rad: 190.0 * std::f64::consts::PI / 180.0,
            am_pm_beta: 0.1,
            am_pm_q1: 3.8,
            am_pm_q2: 2.5,
            eta_sat: 0.45,
        }
    }
}

impl PaProfile {
    pub fn p_sat_w(&self) -> f64 {
        dbm_to_w(self.p_sat_dbm)
    }
}

/// Static RF front-end power draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CircuitProfile {
    pub p_lo_w: f64,
    pub p_filt_w: f64,
    pub p_mix_w: f64,
    pub p_dac_w: f64,
    pub p_pa_idle_w: f64,
}

impl Default for CircuitProfile {
    fn default() -> Self {
        Self { p_lo_w: 0.5, p_filt_w: 0.02, p_mix_w: 0.38, p_dac_w: 3.5, p_pa_idle_w: 3.5 }
    }
}

impl CircuitProfile {
    /// Power of one active transmit chain, excluding the PA's RF-dependent draw.
    pub fn per_chain_w(&self) -> f64 {
        self.p_filt_w + self.p_mix_w + self.p_dac_w + self.p_pa_idle_w
    }

    /// Circuit power with `active_chains` transmit chains switched on.
    pub fn total_w(&self, active_chains: usize) -> f64 {
        self.p_lo_w + active_chains as f64 * self.per_chain_w()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub overhead_factor: f64,
    /// EVM requirement that sets the minimum backoff of every mode.
    pub evm_requirement_db: f64,
    /// Skip the EVM search and use this CP-OFDM minimum backoff.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b_min_cp_db: Option<f64>,
    /// Skip the EVM search and use this DFT-s-OFDM minimum backoff.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b_min_dft_db: Option<f64>,
    pub backoff_search_max_db: f64,
    pub backoff_tolerance_db: f64,
    /// Also scan a backoff grid above b_min to confirm b_min maximizes EE.
    pub validate_backoff_grid: bool,
    pub backoff_grid_step_db: f64,
    pub max_iterations: usize,
    /// Stopping tolerance of the power iteration, relative to P_max.
    pub tolerance_rel: f64,
    /// Backoff at which the drain efficiency of a mode is evaluated.
    pub efficiency_at: EfficiencyPoint,
}

/// Where the drain-efficiency law is evaluated for RU power.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EfficiencyPoint {
    /// At the mode's minimum EVM-compliant backoff (PA sized for its peaks).
    MinimumBackoff,
    /// At the PA's actual output backoff `10 log10(P_sat / P_TX)`.
    OperatingPoint,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            overhead_factor: 0.9,
            evm_requirement_db: -31.0,
            b_min_cp_db: None,
            b_min_dft_db: None,
            backoff_search_max_db: 20.0,
            backoff_tolerance_db: 0.05,
            validate_backoff_grid: false,
            backoff_grid_step_db: 0.5,
            max_iterations: 1000,
            tolerance_rel: 1e-9,
            efficiency_at: EfficiencyPoint::MinimumBackoff,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub trials: usize,
    pub seed: u64,
    /// EVM constraint of the backoff experiments.
    pub evm_constraint_db: f64,
    pub backoffs_db: Vec<f64>,
    pub constellation_backoff_db: f64,
    pub papr_symbols: usize,
    pub papr_oversample: usize,
    pub papr_modulation_order: u32,
    pub papr_mapping: MappingScheme,
    pub se_min: f64,
    pub se_max: f64,
    pub se_points: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            trials: 500,
            seed: 1,
            evm_constraint_db: -28.0,
            backoffs_db: (2..=12).map(f64::from).collect(),
            constellation_backoff_db: 5.0,
            papr_symbols: 100_000,
            papr_oversample: 4,
            papr_modulation_order: 4,
            papr_mapping: MappingScheme::Localized,
            se_min: 0.25,
            se_max: 14.0,
            se_points: 40,
        }
    }
}

impl SweepConfig {
    /// Evenly spaced spectral-efficiency targets.
    pub fn se_grid(&self) -> Vec<f64> {
        linspace(self.se_min, self.se_max, self.se_points)
    }
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// The full parameter record. Immutable once loaded.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub waveform: WaveformConfig,
    pub channel: ChannelConfig,
    pub pa: PaProfile,
    pub circuit: CircuitProfile,
    pub optimizer: OptimizerConfig,
    pub sweep: SweepConfig,
}

/// The evaluation setup: 15 kHz numerology, 100 RB, 64QAM over TDL-C, QPA3505 PA.
pub fn default_scenario() -> ScenarioConfig {
    ScenarioConfig::default()
}

/// Load a scenario file and apply `section.key=value` overrides.
pub fn load_scenario<P: AsRef<Path>>(path: P, overrides: &[String]) -> Result<ScenarioConfig, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
    parse_scenario(&text, overrides)
}

/// Same as [`load_scenario`] for in-memory text.
pub fn parse_scenario(text: &str, overrides: &[String]) -> Result<ScenarioConfig, ConfigError> {
    // First pass keeps line information for errors in the file itself.
    let mut cfg: ScenarioConfig = toml::from_str(text).map_err(|e| parse_error(text, &e))?;
    if !overrides.is_empty() {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| parse_error(text, &e))?;
        for entry in overrides {
            apply_override(&mut table, entry)?;
        }
        cfg = ScenarioConfig::deserialize(toml::Value::Table(table)).map_err(|e| ConfigError::Parse {
            line: None,
            message: e.message().to_string(),
        })?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn parse_error(text: &str, e: &toml::de::Error) -> ConfigError {
    let line = e.span().map(|span| text[..span.start.min(text.len())].matches('\n').count() + 1);
    ConfigError::Parse { line, message: e.message().to_string() }
}

fn apply_override(table: &mut toml::Table, entry: &str) -> Result<(), ConfigError> {
    let bad = |message: &str| ConfigError::Override { entry: entry.to_string(), message: message.to_string() };
    let (key, raw) = entry.split_once('=').ok_or_else(|| bad("expected key=value"))?;
    let (section, field) = key.trim().split_once('.').ok_or_else(|| bad("expected section.key"))?;
    let raw = raw.trim();
    // Bare words that are not valid TOML (e.g. `localized`) are taken as strings.
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let section_table = table
        .entry(section.to_string())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()))
        .as_table_mut()
        .ok_or_else(|| bad("section is not a table"))?;
    section_table.insert(field.to_string(), value);
    Ok(())
}

impl ScenarioConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario config always serializes")
    }

    /// Noise power over the bandwidth, N0·B, in watts.
    pub fn noise_power_w(&self) -> f64 {
        self.channel.noise_psd_w_per_hz() * self.waveform.bandwidth_hz
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let w = &self.waveform;
        if !(w.subcarrier_spacing_hz > 0.0) {
            return Err(invalid("waveform.subcarrier_spacing_hz", "must be > 0"));
        }
        if w.fft_size < 2 {
            return Err(invalid("waveform.fft_size", "must be >= 2"));
        }
        if w.allocated_tones != 12 * w.num_resource_blocks {
            return Err(invalid(
                "waveform.allocated_tones",
                format!(
                    "M = {} must equal 12 x num_resource_blocks = {}",
                    w.allocated_tones,
                    12 * w.num_resource_blocks
                ),
            ));
        }
        if w.allocated_tones == 0 || w.allocated_tones > w.fft_size {
            return Err(invalid(
                "waveform.allocated_tones",
                format!("M = {} must be in 1..=N ({})", w.allocated_tones, w.fft_size),
            ));
        }
        if !(w.bandwidth_hz > 0.0) {
            return Err(invalid("waveform.bandwidth_hz", "B must be > 0"));
        }
        if !SUPPORTED_QAM.contains(&w.modulation_order) {
            return Err(invalid("waveform.modulation_order", "must be one of 4, 16, 64, 256"));
        }
        if w.oversample == 0 {
            return Err(invalid("waveform.oversample", "must be >= 1"));
        }
        if w.mapping == MappingScheme::SplitLocalized {
            if !w.allocated_tones.is_multiple_of(2) {
                return Err(invalid("waveform.allocated_tones", "split-localized mapping needs an even M"));
            }
            if w.allocated_tones + 1 + 2 * w.dc_guard_tones > w.fft_size {
                return Err(invalid("waveform.dc_guard_tones", "M plus DC guard exceeds the FFT size"));
            }
        }

        let c = &self.channel;
        if c.profile != "TDL-C" {
            return Err(invalid("channel.profile", "only \"TDL-C\" is bundled"));
        }
        if !(c.delay_spread_ns >= 0.0) || !c.delay_spread_ns.is_finite() {
            return Err(invalid("channel.delay_spread_ns", "must be finite and >= 0"));
        }
        if !(c.noise_psd_w_per_hz() > 0.0) {
            return Err(invalid("channel.noise_psd_dbm_hz", "N0 must be > 0"));
        }
        if !(c.large_scale_gain() > 0.0) || !c.large_scale_gain_db.is_finite() {
            return Err(invalid("channel.large_scale_gain_db", "G must be finite and > 0"));
        }
        if c.num_tx_antennas != 2 || c.num_rx_antennas != 2 {
            return Err(invalid("channel.num_tx_antennas", "only the 2x2 configuration is modelled"));
        }
        if !c.link_snr_db.is_finite() {
            return Err(invalid("channel.link_snr_db", "must be finite"));
        }
        if c.stats_draws == 0 {
            return Err(invalid("channel.stats_draws", "must be >= 1"));
        }

        let p = &self.pa;
        if !p.p_sat_dbm.is_finite() {
            return Err(invalid("pa.p_sat_dbm", "must be finite"));
        }
        if !(p.smoothness > 0.0) {
            return Err(invalid("pa.smoothness", "s must be > 0"));
        }
        if !(p.eta_sat > 0.0 && p.eta_sat <= 1.0) {
            return Err(invalid("pa.eta_sat", "must lie in (0, 1]"));
        }
        if !(p.am_pm_beta > 0.0) {
            return Err(invalid("pa.am_pm_beta", "must be > 0"));
        }

        let k = &self.circuit;
        for (field, v) in [
            ("circuit.p_lo_w", k.p_lo_w),
            ("circuit.p_filt_w", k.p_filt_w),
            ("circuit.p_mix_w", k.p_mix_w),
            ("circuit.p_dac_w", k.p_dac_w),
            ("circuit.p_pa_idle_w", k.p_pa_idle_w),
        ] {
            if !(v >= 0.0) {
                return Err(invalid(field, "must be >= 0"));
            }
        }

        let o = &self.optimizer;
        if !(o.overhead_factor > 0.0 && o.overhead_factor <= 1.0) {
            return Err(invalid("optimizer.overhead_factor", "must lie in (0, 1]"));
        }
        if !(o.evm_requirement_db < 0.0) {
            return Err(invalid("optimizer.evm_requirement_db", "must be negative"));
        }
        for (field, v) in [("optimizer.b_min_cp_db", o.b_min_cp_db), ("optimizer.b_min_dft_db", o.b_min_dft_db)] {
            if let Some(b) = v {
                if !(b >= 0.0) {
                    return Err(invalid(field, "must be >= 0"));
                }
            }
        }
        if !(o.backoff_search_max_db > 0.0 && o.backoff_tolerance_db > 0.0 && o.backoff_grid_step_db > 0.0) {
            return Err(invalid("optimizer.backoff_search_max_db", "search bounds and steps must be > 0"));
        }
        if o.max_iterations == 0 || !(o.tolerance_rel > 0.0) {
            return Err(invalid("optimizer.max_iterations", "iteration cap and tolerance must be > 0"));
        }

        let s = &self.sweep;
        if s.trials == 0 {
            return Err(invalid("sweep.trials", "must be >= 1"));
        }
        if !(s.evm_constraint_db < 0.0) {
            return Err(invalid("sweep.evm_constraint_db", "must be negative"));
        }
        if s.backoffs_db.iter().any(|b| !(*b >= 0.0)) {
            return Err(invalid("sweep.backoffs_db", "backoffs must be >= 0"));
        }
        if s.papr_oversample == 0 || s.papr_symbols == 0 {
            return Err(invalid("sweep.papr_oversample", "PAPR oversampling and symbol count must be >= 1"));
        }
        if !SUPPORTED_QAM.contains(&s.papr_modulation_order) {
            return Err(invalid("sweep.papr_modulation_order", "must be one of 4, 16, 64, 256"));
        }
        if !(s.se_min >= 0.0 && s.se_max > s.se_min) || s.se_points == 0 {
            return Err(invalid("sweep.se_min", "need 0 <= se_min < se_max and se_points >= 1"));
        }
        Ok(())
    }
}

impl fmt::Display for ScenarioConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_toml())
    }
}
