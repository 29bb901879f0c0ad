//! Scenario files: TOML ingestion, validation and canonical emission.
//!
//! Units at this boundary are km, dB and dBm; everything handed to the core
//! library is SI.

use std::fmt;
use std::path::Path;

use leo_coverage::metrics::dbm_to_watts;
use leo_coverage::simkit::{ChannelPartition, WalkerParams};
use leo_coverage::{
    Decomposition, FadingModel, GeometryParams, LaplaceNormalization, NetworkParams, PathLoss, RadioParams,
    ScenarioConfig,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{origin}: cannot read: {source}")]
    Io {
        origin: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{origin}:{line}:{column}: {message}")]
    Parse {
        origin: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("{origin}{}: {key}: {message}", .line.map(|l| format!(":{l}")).unwrap_or_default())]
    Invalid {
        origin: String,
        line: Option<usize>,
        key: String,
        message: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FadingName {
    Rayleigh,
    #[serde(alias = "nonfading")]
    NonFading,
}

impl FadingName {
    fn model(self) -> FadingModel {
        match self {
            FadingName::Rayleigh => FadingModel::Rayleigh,
            FadingName::NonFading => FadingModel::NonFading,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionName {
    /// Equal groups when `K | N`, balanced groups otherwise.
    #[default]
    Auto,
    Equal,
    Balanced,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    ThresholdDb,
    NChannels,
    AltitudeKm,
    UserLatitudeDeg,
}

impl fmt::Display for SweepVariable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepVariable::ThresholdDb => "threshold_db",
            SweepVariable::NChannels => "n_channels",
            SweepVariable::AltitudeKm => "altitude_km",
            SweepVariable::UserLatitudeDeg => "user_latitude_deg",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Output {
    AnalyticCoverage,
    AnalyticRate,
    McCoverage,
    McRate,
}

impl Output {
    pub fn name(self) -> &'static str {
        match self {
            Output::AnalyticCoverage => "analytic_coverage",
            Output::AnalyticRate => "analytic_rate",
            Output::McCoverage => "mc_coverage",
            Output::McRate => "mc_rate",
        }
    }

    pub fn is_mc(self) -> bool {
        matches!(self, Output::McCoverage | Output::McRate)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Bpp,
    Walker,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Bpp => "bpp",
            Kind::Walker => "walker",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationName {
    #[default]
    ConditionalNormalized,
    PaperLiteral,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecompositionName {
    #[default]
    InsideIntegral,
    Factored,
}

fn default_earth_radius() -> f64 {
    6371.0
}
fn default_ref_km() -> f64 {
    1.0
}
fn default_fading() -> FadingName {
    FadingName::Rayleigh
}
fn default_phasing() -> u32 {
    1
}
fn default_trials() -> u64 {
    100_000
}
fn default_seed() -> u64 {
    1
}
fn default_outputs() -> Vec<Output> {
    vec![Output::AnalyticCoverage]
}
fn default_kinds() -> Vec<Kind> {
    vec![Kind::Bpp]
}
fn default_abs_tol() -> f64 {
    1e-10
}
fn default_rel_tol() -> f64 {
    1e-9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    #[serde(default = "default_earth_radius")]
    pub earth_radius_km: f64,
    pub altitude_km: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadioSection {
    pub p_serve_w: f64,
    /// Defaults to `p_serve_w`.
    #[serde(default)]
    pub p_interf_w: Option<f64>,
    pub noise_dbm: f64,
    pub alpha: f64,
    #[serde(default = "default_ref_km")]
    pub path_loss_ref_km: f64,
    #[serde(default = "default_fading")]
    pub serving_fading: FadingName,
    #[serde(default = "default_fading")]
    pub interfering_fading: FadingName,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub n_sats: f64,
    pub n_channels: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WalkerSection {
    pub inclination_deg: f64,
    pub n_planes: u32,
    pub sats_per_plane: u32,
    #[serde(default = "default_phasing")]
    pub phasing: u32,
    #[serde(default)]
    pub user_latitude_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSection {
    #[serde(default = "default_trials")]
    pub n_trials: u64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub partition: PartitionName,
}

impl Default for McSection {
    fn default() -> Self {
        Self {
            n_trials: default_trials(),
            seed: default_seed(),
            partition: PartitionName::Auto,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
    #[serde(default = "default_outputs")]
    pub outputs: Vec<Output>,
    #[serde(default = "default_kinds")]
    pub kinds: Vec<Kind>,
    /// Threshold used when the swept variable is something else.
    #[serde(default)]
    pub threshold_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericsSection {
    #[serde(default = "default_abs_tol")]
    pub abs_tol: f64,
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    #[serde(default)]
    pub normalization: NormalizationName,
    #[serde(default)]
    pub decomposition: DecompositionName,
}

impl Default for NumericsSection {
    fn default() -> Self {
        Self {
            abs_tol: default_abs_tol(),
            rel_tol: default_rel_tol(),
            normalization: NormalizationName::default(),
            decomposition: DecompositionName::default(),
        }
    }
}

/// The file as written, with defaults filled in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub geometry: GeometrySection,
    pub radio: RadioSection,
    pub network: NetworkSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub walker: Option<WalkerSection>,
    #[serde(default)]
    pub mc: McSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub numerics: NumericsSection,
}

/// A validated scenario together with its sweep and simulation settings.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub raw: RawConfig,
    pub scenario: ScenarioConfig,
    pub walker: Option<WalkerParams>,
    pub user_latitude_deg: f64,
}

impl LoadedConfig {
    /// Channel split used by the simulator for `n` satellites on `k`
    /// channels.
    pub fn partition(&self, n: f64, k: u32) -> ChannelPartition {
        match self.raw.mc.partition {
            PartitionName::Equal => ChannelPartition::Equal,
            PartitionName::Balanced => ChannelPartition::Balanced,
            PartitionName::Auto => {
                if n.fract() == 0.0 && (n as u64).is_multiple_of(u64::from(k)) {
                    ChannelPartition::Equal
                } else {
                    ChannelPartition::Balanced
                }
            }
        }
    }
}

pub fn load_config(path: &Path) -> Result<LoadedConfig, ConfigError> {
    let origin = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        origin: origin.clone(),
        source,
    })?;
    parse_config(&text, &origin)
}

pub fn parse_config(text: &str, origin: &str) -> Result<LoadedConfig, ConfigError> {
    let mut raw: RawConfig = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map(|s| line_col(text, s.start)).unwrap_or((1, 1));
        ConfigError::Parse {
            origin: origin.to_string(),
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    raw.radio.p_interf_w.get_or_insert(raw.radio.p_serve_w);
    build(raw, text, origin)
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map(|i| i + 1).unwrap_or(0) + 1;
    (line, column)
}

/// 1-based line of `key` inside `[section]`, or of the section header.
fn locate(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    let mut header = None;
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if let Some(name) = t.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            current = name.trim().to_string();
            if current == section {
                header = Some(i + 1);
            }
            continue;
        }
        if current == section {
            if let Some(rest) = t.strip_prefix(key) {
                if rest.trim_start().starts_with('=') {
                    return Some(i + 1);
                }
            }
        }
    }
    header
}

fn build(raw: RawConfig, text: &str, origin: &str) -> Result<LoadedConfig, ConfigError> {
    let invalid = |section: &str, key: &str, message: String| ConfigError::Invalid {
        origin: origin.to_string(),
        line: locate(text, section, key),
        key: format!("{section}.{key}"),
        message,
    };

    let g = &raw.geometry;
    let geom = GeometryParams::from_km(g.earth_radius_km, g.altitude_km)
        .map_err(|e| invalid("geometry", "altitude_km", e.to_string()))?;

    let n = &raw.network;
    let net = NetworkParams::new(n.n_sats, n.n_channels).map_err(|e| {
        let key = if e.to_string().contains("n_sats (") { "n_channels" } else { "n_sats" };
        invalid("network", key, e.to_string())
    })?;

    let r = &raw.radio;
    if !(r.path_loss_ref_km > 0.0 && r.path_loss_ref_km.is_finite()) {
        return Err(invalid("radio", "path_loss_ref_km", "must be positive".into()));
    }
    let path_loss =
        PathLoss::new(r.alpha, r.path_loss_ref_km * 1000.0).map_err(|e| invalid("radio", "alpha", e.to_string()))?;
    if !r.noise_dbm.is_finite() {
        return Err(invalid("radio", "noise_dbm", "must be finite".into()));
    }
    let p_interf = r.p_interf_w.unwrap_or(r.p_serve_w);
    let radio = RadioParams::new(
        r.p_serve_w,
        p_interf,
        dbm_to_watts(r.noise_dbm),
        path_loss,
        r.serving_fading.model(),
        r.interfering_fading.model(),
    )
    .map_err(|e| {
        let msg = e.to_string();
        let key = if msg.contains("p_interf") {
            "p_interf_w"
        } else if msg.contains("p_serve") {
            "p_serve_w"
        } else if msg.contains("noise") {
            "noise_dbm"
        } else {
            "alpha"
        };
        invalid("radio", key, msg)
    })?;

    let num = &raw.numerics;
    if !(num.abs_tol > 0.0 && num.abs_tol.is_finite()) {
        return Err(invalid("numerics", "abs_tol", "must be positive".into()));
    }
    if !(num.rel_tol > 0.0 && num.rel_tol < 1.0) {
        return Err(invalid("numerics", "rel_tol", "must lie in (0, 1)".into()));
    }
    let mut scenario = ScenarioConfig::new(geom, net, radio).map_err(|e| invalid("radio", "alpha", e.to_string()))?;
    scenario.quad.abs_tol = num.abs_tol;
    scenario.quad.rel_tol = num.rel_tol;
    scenario.laplace_normalization = match num.normalization {
        NormalizationName::ConditionalNormalized => LaplaceNormalization::ConditionalNormalized,
        NormalizationName::PaperLiteral => LaplaceNormalization::PaperLiteral,
    };
    scenario.decomposition = match num.decomposition {
        DecompositionName::InsideIntegral => Decomposition::InsideIntegral,
        DecompositionName::Factored => Decomposition::FactoredOutsideIntegral,
    };
    scenario
        .validate()
        .map_err(|e| invalid("numerics", "abs_tol", e.to_string()))?;

    let (walker, user_latitude_deg) = match &raw.walker {
        Some(w) => {
            if !(-90.0..=90.0).contains(&w.user_latitude_deg) {
                return Err(invalid("walker", "user_latitude_deg", "must lie in [-90, 90]".into()));
            }
            let params = WalkerParams::new(w.inclination_deg, w.n_planes, w.sats_per_plane, w.phasing, geom)
                .map_err(|e| {
                    let msg = e.to_string();
                    let key = if msg.contains("inclination") {
                        "inclination_deg"
                    } else if msg.contains("phasing") {
                        "phasing"
                    } else {
                        "n_planes"
                    };
                    invalid("walker", key, msg)
                })?;
            if params.n_sats() < n.n_channels as usize {
                return Err(invalid(
                    "walker",
                    "sats_per_plane",
                    format!("{} satellites cannot fill {} channels", params.n_sats(), n.n_channels),
                ));
            }
            (Some(params), w.user_latitude_deg)
        }
        None => (None, 0.0),
    };

    if raw.mc.n_trials == 0 {
        return Err(invalid("mc", "n_trials", "must be at least 1".into()));
    }

    if let Some(s) = &raw.sweep {
        validate_sweep(s, &raw, walker.is_some(), &invalid)?;
    }

    Ok(LoadedConfig {
        raw,
        scenario,
        walker,
        user_latitude_deg,
    })
}

fn validate_sweep(
    s: &SweepSection,
    raw: &RawConfig,
    has_walker: bool,
    invalid: &dyn Fn(&str, &str, String) -> ConfigError,
) -> Result<(), ConfigError> {
    if s.values.is_empty() {
        return Err(invalid("sweep", "values", "must not be empty".into()));
    }
    if s.values.iter().any(|v| !v.is_finite()) {
        return Err(invalid("sweep", "values", "must be finite".into()));
    }
    if s.values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid("sweep", "values", "must be strictly increasing".into()));
    }
    match s.variable {
        SweepVariable::ThresholdDb => {}
        SweepVariable::NChannels => {
            for &v in &s.values {
                if !(v >= 1.0 && v.fract() == 0.0 && v <= raw.network.n_sats) {
                    return Err(invalid(
                        "sweep",
                        "values",
                        format!("channel count {v} must be an integer in [1, n_sats]"),
                    ));
                }
            }
        }
        SweepVariable::AltitudeKm => {
            if s.values[0] <= 0.0 {
                return Err(invalid("sweep", "values", "altitudes must be positive".into()));
            }
        }
        SweepVariable::UserLatitudeDeg => {
            if s.values[0] < -90.0 || s.values[s.values.len() - 1] > 90.0 {
                return Err(invalid("sweep", "values", "latitudes must lie in [-90, 90]".into()));
            }
        }
    }
    if !s.threshold_db.is_finite() {
        return Err(invalid("sweep", "threshold_db", "must be finite".into()));
    }
    if s.outputs.is_empty() {
        return Err(invalid("sweep", "outputs", "must not be empty".into()));
    }
    if s.outputs.iter().any(|o| o.is_mc()) && s.kinds.is_empty() {
        return Err(invalid("sweep", "kinds", "Monte Carlo outputs need at least one kind".into()));
    }
    if s.kinds.contains(&Kind::Walker) && !has_walker {
        return Err(invalid("sweep", "kinds", "walker kind requires a [walker] section".into()));
    }
    for (i, o) in s.outputs.iter().enumerate() {
        if s.outputs[..i].contains(o) {
            return Err(invalid("sweep", "outputs", format!("{} listed twice", o.name())));
        }
    }
    for (i, k) in s.kinds.iter().enumerate() {
        if s.kinds[..i].contains(k) {
            return Err(invalid("sweep", "kinds", format!("{} listed twice", k.name())));
        }
    }
    Ok(())
}

/// Canonical TOML for a loaded configuration; reloading it yields the same
/// fingerprint.
pub fn emit_config(cfg: &LoadedConfig) -> String {
    toml::to_string(&cfg.raw).expect("configuration serializes")
}

/// Hex SHA-256 of the canonical configuration and the seed.
pub fn fingerprint(cfg: &LoadedConfig, seed: u64) -> String {
    let mut h = Sha256::new();
    h.update(emit_config(cfg).as_bytes());
    h.update(b"\nseed = ");
    h.update(seed.to_string().as_bytes());
    hex::encode(h.finalize())
}
