//! Experiment configuration: declarative TOML in, a validated run plan out.
//!
//! A config names exactly one protocol plus optional sweep axes. The run plan
//! enumerates the cartesian product of the axes in the fixed order voltage,
//! power, delay, near-resonant toggle; per-run RNG streams are keyed by that
//! run index, so the plan order is part of the reproducibility contract.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use chargesim::model::{ChargeModelParams, ChargeState, LaserChannel, LaserColor, NEAR_RESONANT_DETUNING_MHZ};
use chargesim::photonics::DetectorParams;
use chargesim::sequence::{protocols, PulseSequence, Segment, Window, NS_PER_MS};

/// Default profiles shipped with the binary; a `profiles.toml` next to the
/// config file takes precedence.
pub const DEFAULT_PROFILES: &str = include_str!("../../../configs/profiles.toml");

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: Box<toml::de::Error>,
    },
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSection,
    #[serde(default)]
    pub detector: DetectorSection,
    pub protocol: ProtocolSection,
    #[serde(default)]
    pub sweep: SweepSection,
    pub run: RunSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// Profile name looked up in the profiles file.
    pub profile: String,
    /// Explicit profiles file path, relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profiles_file: Option<String>,
    #[serde(default, skip_serializing_if = "ModelOverrides::is_empty")]
    pub overrides: ModelOverrides,
}

/// Per-field overrides applied on top of the named profile.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_rad_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zpl_branching: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_0_mhz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_sat_uw: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_max_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_ion_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub green_exc_hz_per_uw: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hole_gen_green: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hole_gen_resonant: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hole_gen_near_resonant: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_capture: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_half_v: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_field_ion_v: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_field_ion_hz: Option<f64>,
}

impl ModelOverrides {
    pub fn is_empty(&self) -> bool {
        self == &ModelOverrides::default()
    }

    pub fn apply(&self, mut p: ChargeModelParams) -> ChargeModelParams {
        macro_rules! set {
            ($field:ident) => {
                if let Some(v) = self.$field {
                    p.$field = v;
                }
            };
        }
        set!(gamma_rad_hz);
        set!(zpl_branching);
        set!(gamma_0_mhz);
        set!(p_sat_uw);
        set!(r_max_hz);
        set!(k_ion_hz);
        set!(green_exc_hz_per_uw);
        set!(c_capture);
        set!(v_half_v);
        set!(f_max);
        set!(v_field_ion_v);
        set!(k_field_ion_hz);
        if let Some(v) = self.hole_gen_green {
            p.hole_gen.green = v;
        }
        if let Some(v) = self.hole_gen_resonant {
            p.hole_gen.resonant = v;
        }
        if let Some(v) = self.hole_gen_near_resonant {
            p.hole_gen.near_resonant = v;
        }
        p
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSection {
    #[serde(default = "defaults::efficiency")]
    pub efficiency: f64,
    #[serde(default = "defaults::dark_rate_hz")]
    pub dark_rate_hz: f64,
    #[serde(default)]
    pub dead_time_ns: u64,
}

impl Default for DetectorSection {
    fn default() -> Self {
        DetectorSection {
            efficiency: defaults::efficiency(),
            dark_rate_hz: defaults::dark_rate_hz(),
            dead_time_ns: 0,
        }
    }
}

impl DetectorSection {
    pub fn to_params(&self) -> DetectorParams {
        DetectorParams {
            efficiency: self.efficiency,
            dark_rate_hz: self.dark_rate_hz,
            dead_time_ns: self.dead_time_ns,
        }
    }
}

mod defaults {
    pub fn efficiency() -> f64 {
        0.18
    }
    pub fn dark_rate_hz() -> f64 {
        700.0
    }
    pub fn working_power() -> f64 {
        chargesim::sequence::protocols::WORKING_POWER_UW
    }
    pub fn green_power() -> f64 {
        chargesim::sequence::protocols::GREEN_POWER_UW
    }
    pub fn recovery_power() -> f64 {
        chargesim::sequence::protocols::RECOVERY_POWER_UW
    }
    pub fn decay_duration_ms() -> f64 {
        38.0
    }
    pub fn tau2_ms() -> f64 {
        10.0
    }
    pub fn on() -> bool {
        true
    }
    pub fn bin_width_us() -> f64 {
        100.0
    }
    pub fn out_dir() -> String {
        "artifacts".into()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProtocolSection {
    /// Single resonant pulse; the fluorescence decay is fitted over the
    /// whole period.
    Decay {
        #[serde(default = "defaults::working_power")]
        readout_uw: f64,
        #[serde(default = "defaults::decay_duration_ms")]
        duration_ms: f64,
        #[serde(default)]
        voltage_v: f64,
    },
    /// Green initialization, centered probe, dark gap, long resonant readout.
    InitReadout {
        #[serde(default = "defaults::working_power")]
        probe_uw: f64,
        #[serde(default = "defaults::green_power")]
        green_uw: f64,
        #[serde(default = "defaults::working_power")]
        readout_uw: f64,
        #[serde(default)]
        voltage_v: f64,
    },
    /// Two resonant pulses separated by a delay, optional near-resonant beam
    /// in every segment.
    Recovery {
        #[serde(default = "defaults::tau2_ms")]
        tau2_ms: f64,
        #[serde(default = "defaults::on")]
        near_resonant_on: bool,
        #[serde(default)]
        voltage_v: f64,
        #[serde(default = "defaults::recovery_power")]
        resonant_uw: f64,
        #[serde(default = "defaults::recovery_power")]
        near_resonant_uw: f64,
        #[serde(default = "defaults::green_power")]
        green_uw: f64,
    },
    /// Detuning scan of the resonant line; one scan per power axis value.
    Ple {
        #[serde(default = "defaults::working_power")]
        resonant_uw: f64,
        #[serde(default = "defaults::green_power")]
        green_uw: f64,
        #[serde(default)]
        voltage_v: f64,
        detunings_mhz: Vec<f64>,
    },
    /// Explicit segment list for ad-hoc sequences; histogram output only.
    Segments {
        segments: Vec<SegmentSection>,
        #[serde(default)]
        voltage_stepped: bool,
    },
}

impl ProtocolSection {
    pub fn kind_name(&self) -> &'static str {
        match self {
            ProtocolSection::Decay { .. } => "decay",
            ProtocolSection::InitReadout { .. } => "init_readout",
            ProtocolSection::Recovery { .. } => "recovery",
            ProtocolSection::Ple { .. } => "ple",
            ProtocolSection::Segments { .. } => "segments",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentSection {
    pub duration_ms: f64,
    #[serde(default)]
    pub voltage_v: f64,
    #[serde(default)]
    pub channels: Vec<ChannelSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSection {
    pub color: LaserColor,
    pub power_uw: f64,
    /// Detuning from the readout transition; near-resonant channels default
    /// to their standard offset, others to resonance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detuning_mhz: Option<f64>,
}

impl ChannelSection {
    fn to_channel(&self) -> LaserChannel {
        let detuning = self.detuning_mhz.unwrap_or(match self.color {
            LaserColor::NearResonant => NEAR_RESONANT_DETUNING_MHZ,
            _ => 0.0,
        });
        LaserChannel { color: self.color, power_uw: self.power_uw, detuning_mhz: detuning }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub voltage_v: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power_uw: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau2_ms: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub near_resonant: Option<Vec<bool>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimMode {
    /// Two-state bright/dark walk with the excited state adiabatically
    /// eliminated; the default for sweeps.
    #[default]
    Reduced,
    /// Exact three-state jump process.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialState {
    #[default]
    BrightGround,
    BrightExcited,
    Dark,
}

impl InitialState {
    pub fn to_state(self) -> ChargeState {
        match self {
            InitialState::BrightGround => ChargeState::BrightGround,
            InitialState::BrightExcited => ChargeState::BrightExcited,
            InitialState::Dark => ChargeState::Dark,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub repetitions: u64,
    /// Master seed; every stochastic draw in the sweep derives from it.
    pub seed: u64,
    #[serde(default = "defaults::bin_width_us")]
    pub bin_width_us: f64,
    #[serde(default)]
    pub mode: SimMode,
    #[serde(default)]
    pub initial: InitialState,
    #[serde(default = "defaults::out_dir")]
    pub out_dir: String,
}

/// Profiles file: versioned map of named calibrations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfilesFile {
    pub version: u32,
    pub profiles: BTreeMap<String, ChargeModelParams>,
}

pub fn parse_profiles(text: &str, path: &str) -> Result<ProfilesFile, ConfigError> {
    toml::from_str(text).map_err(|e| ConfigError::Parse { path: path.into(), source: Box::new(e) })
}

/// Axis values resolved for one run; `None` where the axis is not swept.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AxisValues {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub voltage_v: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power_uw: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau2_ms: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub near_resonant: Option<bool>,
}

impl AxisValues {
    /// Compact "axis=value" listing of the swept coordinates.
    pub fn describe(&self) -> String {
        let mut parts = Vec::new();
        if let Some(v) = self.voltage_v {
            parts.push(format!("voltage_v={v}"));
        }
        if let Some(p) = self.power_uw {
            parts.push(format!("power_uw={p}"));
        }
        if let Some(t) = self.tau2_ms {
            parts.push(format!("tau2_ms={t}"));
        }
        if let Some(nr) = self.near_resonant {
            parts.push(format!("near_resonant={nr}"));
        }
        if parts.is_empty() {
            "no swept axes".into()
        } else {
            parts.join(" ")
        }
    }
}

/// Windows and metadata the runner needs to summarize a run.
#[derive(Debug, Clone)]
pub enum RunShape {
    Decay { fit: Window, voltage_v: f64, power_uw: f64 },
    InitReadout { windows: protocols::InitReadoutWindows, voltage_v: f64, power_uw: f64 },
    Recovery { windows: protocols::RecoveryWindows, voltage_v: f64, tau2_ms: f64, near_resonant: bool, power_uw: f64 },
    Plain,
}

#[derive(Debug, Clone)]
pub enum RunKind {
    Time { sequence: PulseSequence, shape: RunShape },
    Scan { voltage_v: f64, power_uw: f64, detunings_mhz: Vec<f64>, sequences: Vec<PulseSequence> },
}

#[derive(Debug, Clone)]
pub struct RunPlan {
    pub index: usize,
    pub axis: AxisValues,
    pub kind: RunKind,
}

/// A parsed, semantically validated config with its expanded run plan.
#[derive(Debug, Clone)]
pub struct ValidatedConfig {
    pub config: ExperimentConfig,
    pub params: ChargeModelParams,
    pub detector: DetectorParams,
    pub runs: Vec<RunPlan>,
    pub bin_width_ns: u64,
    pub initial: ChargeState,
    pub mode: SimMode,
    pub repetitions: u64,
    pub seed: u64,
    pub out_dir: PathBuf,
}

/// Config text plus the profiles text it resolved against, for embedding in
/// the run manifest.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub path: String,
    pub text: String,
    pub profiles_text: String,
    pub config: ExperimentConfig,
}

fn invalid(path: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { path: path.into(), message: message.into() }
}

pub fn parse_config(text: &str, path: &str) -> Result<ExperimentConfig, ConfigError> {
    toml::from_str(text).map_err(|e| ConfigError::Parse { path: path.into(), source: Box::new(e) })
}

/// Reads a config file and the profiles file it refers to (explicit path,
/// else `profiles.toml` next to the config, else the embedded defaults).
pub fn load(path: &Path) -> Result<LoadedConfig, ConfigError> {
    let display = path.display().to_string();
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::Io { path: display.clone(), source: e })?;
    let config = parse_config(&text, &display)?;
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let profiles_text = match &config.model.profiles_file {
        Some(rel) => {
            let p = dir.join(rel);
            std::fs::read_to_string(&p)
                .map_err(|e| ConfigError::Io { path: p.display().to_string(), source: e })?
        }
        None => {
            let sibling = dir.join("profiles.toml");
            match std::fs::read_to_string(&sibling) {
                Ok(t) => t,
                Err(_) => DEFAULT_PROFILES.to_string(),
            }
        }
    };
    Ok(LoadedConfig { path: display, text, profiles_text, config })
}

/// Validates the config against the model/sequence invariants and expands
/// the sweep into the ordered run plan.
pub fn validate(loaded: &LoadedConfig) -> Result<ValidatedConfig, ConfigError> {
    let path = &loaded.path;
    let cfg = &loaded.config;
    let profiles = parse_profiles(&loaded.profiles_text, path)?;
    let base = profiles
        .profiles
        .get(&cfg.model.profile)
        .ok_or_else(|| {
            let known: Vec<&str> = profiles.profiles.keys().map(String::as_str).collect();
            invalid(path, format!("unknown profile '{}' (known: {})", cfg.model.profile, known.join(", ")))
        })?
        .clone();
    let params = cfg.model.overrides.apply(base);
    params.validate().map_err(|e| invalid(path, format!("model: {e}")))?;
    let detector = cfg.detector.to_params();
    detector.validate().map_err(|e| invalid(path, format!("detector: {e}")))?;
    if cfg.run.repetitions == 0 {
        return Err(invalid(path, "run.repetitions must be at least 1"));
    }
    if !(cfg.run.bin_width_us > 0.0) || !cfg.run.bin_width_us.is_finite() {
        return Err(invalid(path, "run.bin_width_us must be positive"));
    }
    for (name, axis_len) in [
        ("sweep.voltage_v", cfg.sweep.voltage_v.as_ref().map(Vec::len)),
        ("sweep.power_uw", cfg.sweep.power_uw.as_ref().map(Vec::len)),
        ("sweep.tau2_ms", cfg.sweep.tau2_ms.as_ref().map(Vec::len)),
        ("sweep.near_resonant", cfg.sweep.near_resonant.as_ref().map(Vec::len)),
    ] {
        if axis_len == Some(0) {
            return Err(invalid(path, format!("{name} must be a non-empty list")));
        }
    }
    check_axis_applicability(path, cfg)?;
    let runs = expand_runs(path, cfg)?;
    let bin_width_ns = (cfg.run.bin_width_us * 1e3).round() as u64;
    if bin_width_ns == 0 {
        return Err(invalid(path, "run.bin_width_us rounds to zero nanoseconds"));
    }
    Ok(ValidatedConfig {
        config: cfg.clone(),
        params,
        detector,
        runs,
        bin_width_ns,
        initial: cfg.run.initial.to_state(),
        mode: cfg.run.mode,
        repetitions: cfg.run.repetitions,
        seed: cfg.run.seed,
        out_dir: PathBuf::from(&cfg.run.out_dir),
    })
}

fn check_axis_applicability(path: &str, cfg: &ExperimentConfig) -> Result<(), ConfigError> {
    let kind = cfg.protocol.kind_name();
    let reject = |axis: &str| invalid(path, format!("sweep axis {axis} does not apply to protocol '{kind}'"));
    match cfg.protocol {
        ProtocolSection::Decay { .. } | ProtocolSection::InitReadout { .. } | ProtocolSection::Ple { .. } => {
            if cfg.sweep.tau2_ms.is_some() {
                return Err(reject("tau2_ms"));
            }
            if cfg.sweep.near_resonant.is_some() {
                return Err(reject("near_resonant"));
            }
        }
        ProtocolSection::Recovery { .. } => {}
        ProtocolSection::Segments { .. } => {
            if cfg.sweep.voltage_v.is_some()
                || cfg.sweep.power_uw.is_some()
                || cfg.sweep.tau2_ms.is_some()
                || cfg.sweep.near_resonant.is_some()
            {
                return Err(invalid(path, "sweep axes do not apply to an explicit segment list"));
            }
        }
    }
    Ok(())
}

fn expand_runs(path: &str, cfg: &ExperimentConfig) -> Result<Vec<RunPlan>, ConfigError> {
    let one = |v: Option<&Vec<f64>>| -> Vec<Option<f64>> {
        match v {
            Some(list) => list.iter().copied().map(Some).collect(),
            None => vec![None],
        }
    };
    let voltages = one(cfg.sweep.voltage_v.as_ref());
    let powers = one(cfg.sweep.power_uw.as_ref());
    let delays = one(cfg.sweep.tau2_ms.as_ref());
    let toggles: Vec<Option<bool>> = match cfg.sweep.near_resonant.as_ref() {
        Some(list) => list.iter().copied().map(Some).collect(),
        None => vec![None],
    };
    let mut runs = Vec::new();
    for &v in &voltages {
        for &p in &powers {
            for &d in &delays {
                for &nr in &toggles {
                    let axis = AxisValues { voltage_v: v, power_uw: p, tau2_ms: d, near_resonant: nr };
                    let index = runs.len();
                    let kind = build_run(path, cfg, axis)?;
                    runs.push(RunPlan { index, axis, kind });
                }
            }
        }
    }
    Ok(runs)
}

fn seq_err(path: &str, e: impl std::fmt::Display) -> ConfigError {
    invalid(path, format!("protocol: {e}"))
}

fn build_run(path: &str, cfg: &ExperimentConfig, axis: AxisValues) -> Result<RunKind, ConfigError> {
    let kind = match &cfg.protocol {
        ProtocolSection::Decay { readout_uw, duration_ms, voltage_v } => {
            let power = axis.power_uw.unwrap_or(*readout_uw);
            let voltage = axis.voltage_v.unwrap_or(*voltage_v);
            if !(*duration_ms > 0.0) || !duration_ms.is_finite() {
                return Err(invalid(path, "protocol.duration_ms must be positive"));
            }
            let duration_ns = (duration_ms * NS_PER_MS as f64).round() as u64;
            let sequence = PulseSequence {
                label: format!("decay readout={power} uW V={voltage} t={duration_ms} ms"),
                segments: vec![Segment::new(
                    duration_ns,
                    vec![LaserChannel::resonant(power, 0.0)],
                    voltage,
                )],
                repetitions: 1,
                voltage_stepped: false,
                inter_rep_gap_ns: 0,
            };
            RunKind::Time {
                shape: RunShape::Decay {
                    fit: Window::new(0, sequence.period_ns()),
                    voltage_v: voltage,
                    power_uw: power,
                },
                sequence,
            }
        }
        ProtocolSection::InitReadout { probe_uw, green_uw, readout_uw, voltage_v } => {
            let power = axis.power_uw.unwrap_or(*readout_uw);
            let voltage = axis.voltage_v.unwrap_or(*voltage_v);
            let sequence = protocols::init_readout_at(*probe_uw, *green_uw, power, voltage)
                .map_err(|e| seq_err(path, e))?;
            RunKind::Time {
                sequence,
                shape: RunShape::InitReadout {
                    windows: protocols::init_readout_windows(),
                    voltage_v: voltage,
                    power_uw: power,
                },
            }
        }
        ProtocolSection::Recovery {
            tau2_ms,
            near_resonant_on,
            voltage_v,
            resonant_uw,
            near_resonant_uw,
            green_uw,
        } => {
            let tau2 = axis.tau2_ms.unwrap_or(*tau2_ms);
            let nr_on = axis.near_resonant.unwrap_or(*near_resonant_on);
            let voltage = axis.voltage_v.unwrap_or(*voltage_v);
            let power = axis.power_uw.unwrap_or(*resonant_uw);
            let sequence =
                protocols::recovery_with(tau2, nr_on, voltage, power, *near_resonant_uw, *green_uw)
                    .map_err(|e| seq_err(path, e))?;
            let tau2_ns = (tau2 * NS_PER_MS as f64).round() as u64;
            RunKind::Time {
                sequence,
                shape: RunShape::Recovery {
                    windows: protocols::recovery_windows(tau2_ns),
                    voltage_v: voltage,
                    tau2_ms: tau2,
                    near_resonant: nr_on,
                    power_uw: power,
                },
            }
        }
        ProtocolSection::Ple { resonant_uw, green_uw, voltage_v, detunings_mhz } => {
            if detunings_mhz.is_empty() {
                return Err(invalid(path, "protocol.detunings_mhz must be non-empty"));
            }
            let power = axis.power_uw.unwrap_or(*resonant_uw);
            let voltage = axis.voltage_v.unwrap_or(*voltage_v);
            let mut sequences = Vec::with_capacity(detunings_mhz.len());
            for &d in detunings_mhz {
                sequences.push(
                    protocols::ple(power, d, *green_uw, voltage).map_err(|e| seq_err(path, e))?,
                );
            }
            RunKind::Scan {
                voltage_v: voltage,
                power_uw: power,
                detunings_mhz: detunings_mhz.clone(),
                sequences,
            }
        }
        ProtocolSection::Segments { segments, voltage_stepped } => {
            if segments.is_empty() {
                return Err(invalid(path, "protocol.segments must be non-empty"));
            }
            let built: Vec<Segment> = segments
                .iter()
                .map(|s| {
                    Segment::new(
                        (s.duration_ms * NS_PER_MS as f64).round() as u64,
                        s.channels.iter().map(ChannelSection::to_channel).collect(),
                        s.voltage_v,
                    )
                })
                .collect();
            let sequence = PulseSequence {
                label: "explicit segments".into(),
                segments: built,
                repetitions: 1,
                voltage_stepped: *voltage_stepped,
                inter_rep_gap_ns: 0,
            };
            RunKind::Time { sequence, shape: RunShape::Plain }
        }
    };
    // surface sequence-level violations as config diagnostics
    let seqs: Vec<&PulseSequence> = match &kind {
        RunKind::Time { sequence, .. } => vec![sequence],
        RunKind::Scan { sequences, .. } => sequences.iter().collect(),
    };
    for seq in seqs {
        let violations = seq.validate();
        if !violations.is_empty() {
            let msgs: Vec<String> = violations.iter().map(ToString::to_string).collect();
            return Err(invalid(path, format!("protocol '{}': {}", seq.label, msgs.join("; "))));
        }
    }
    Ok(kind)
}
