//! Charge-state model: states, laser channels, parameters, and transition rates.
//!
//! Units are fixed across the crate: rates in Hz, optical power in microwatts,
//! detuning in MHz, bias voltage in volts, time in nanoseconds.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Electronic configuration of the emitter. `Dark` is the charge state that
/// neither absorbs on the readout transition nor emits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChargeState {
    BrightGround,
    BrightExcited,
    Dark,
}

impl ChargeState {
    pub const ALL: [ChargeState; 3] = [
        ChargeState::BrightGround,
        ChargeState::BrightExcited,
        ChargeState::Dark,
    ];

    /// Index into population vectors: G = 0, E = 1, D = 2.
    #[must_use]
    pub fn index(self) -> usize {
        match self {
            ChargeState::BrightGround => 0,
            ChargeState::BrightExcited => 1,
            ChargeState::Dark => 2,
        }
    }

    #[must_use]
    pub fn is_bright(self) -> bool {
        !matches!(self, ChargeState::Dark)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LaserColor {
    Green,
    Resonant,
    NearResonant,
}

/// Default detuning of the near-resonant beam: 4.6 meV above the readout
/// transition, expressed in MHz.
pub const NEAR_RESONANT_DETUNING_MHZ: f64 = 1.1123e6;

/// One illumination channel within a sequence segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaserChannel {
    pub color: LaserColor,
    pub power_uw: f64,
    /// Detuning from the readout transition. Ignored for `Green`.
    #[serde(default)]
    pub detuning_mhz: f64,
}

impl LaserChannel {
    #[must_use]
    pub fn green(power_uw: f64) -> Self {
        LaserChannel { color: LaserColor::Green, power_uw, detuning_mhz: 0.0 }
    }

    #[must_use]
    pub fn resonant(power_uw: f64, detuning_mhz: f64) -> Self {
        LaserChannel { color: LaserColor::Resonant, power_uw, detuning_mhz }
    }

    #[must_use]
    pub fn near_resonant(power_uw: f64) -> Self {
        LaserChannel {
            color: LaserColor::NearResonant,
            power_uw,
            detuning_mhz: NEAR_RESONANT_DETUNING_MHZ,
        }
    }
}

/// Hole-generation yield per microwatt for each laser color, in arbitrary
/// flux units. Green dominates; the two narrowband beams are comparable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoleYields {
    pub green: f64,
    pub resonant: f64,
    pub near_resonant: f64,
}

impl HoleYields {
    #[must_use]
    pub fn for_color(&self, color: LaserColor) -> f64 {
        match color {
            LaserColor::Green => self.green,
            LaserColor::Resonant => self.resonant,
            LaserColor::NearResonant => self.near_resonant,
        }
    }
}

/// Full parameter set of the charge-dynamics model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChargeModelParams {
    /// Radiative decay rate of the bright excited state, Hz.
    pub gamma_rad_hz: f64,
    /// Fraction of emission into the zero-phonon line (filtered out by the
    /// detection band). Remainder goes to the phonon sideband.
    pub zpl_branching: f64,
    /// Natural linewidth (FWHM) of the readout transition, MHz.
    pub gamma_0_mhz: f64,
    /// Saturation power of the readout transition, microwatts.
    pub p_sat_uw: f64,
    /// Excitation rate prefactor, Hz. Kept well below `gamma_rad_hz` so the
    /// excited-state occupation stays small and the measured line keeps the
    /// power-broadened width `gamma_0 * sqrt(1 + s)`.
    pub r_max_hz: f64,
    /// Ionization rate out of the bright excited state, Hz.
    pub k_ion_hz: f64,
    /// Off-resonant pumping rate per microwatt of green, Hz/uW.
    pub green_exc_hz_per_uw: f64,
    pub hole_gen: HoleYields,
    /// Capture rate per unit hole flux, Hz.
    pub c_capture: f64,
    /// Voltage scale of the drift enhancement, volts.
    pub v_half_v: f64,
    /// Saturated drift enhancement factor, dimensionless, >= 1.
    pub f_max: f64,
    /// Threshold above which static-field ionization of the bright ground
    /// state switches on, volts.
    pub v_field_ion_v: f64,
    /// Field-ionization rate scale, Hz.
    pub k_field_ion_hz: f64,
}

impl ChargeModelParams {
    /// Reference emitter profile. Calibrated so that at the 13 uW working
    /// power the bright state decays in ~2 ms, a +50 V bias stabilizes the
    /// readout to a <10% drop, and delay-resolved recovery closes between
    /// 20 V and 120 V while failing at 0 V and 180 V.
    #[must_use]
    pub fn emitter_a() -> Self {
        ChargeModelParams {
            gamma_rad_hz: 5.8824e8,
            zpl_branching: 0.7,
            gamma_0_mhz: 220.0,
            p_sat_uw: 130.0,
            r_max_hz: 5.8824e6,
            k_ion_hz: 5.5e5,
            green_exc_hz_per_uw: 265.0,
            hole_gen: HoleYields { green: 5.0, resonant: 0.0072, near_resonant: 0.0044 },
            c_capture: 1.0,
            v_half_v: 15.0,
            f_max: 30000.0,
            v_field_ion_v: 120.0,
            k_field_ion_hz: 210.0,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let nonneg = [
            ("gamma_rad_hz", self.gamma_rad_hz),
            ("r_max_hz", self.r_max_hz),
            ("k_ion_hz", self.k_ion_hz),
            ("green_exc_hz_per_uw", self.green_exc_hz_per_uw),
            ("hole_gen.green", self.hole_gen.green),
            ("hole_gen.resonant", self.hole_gen.resonant),
            ("hole_gen.near_resonant", self.hole_gen.near_resonant),
            ("c_capture", self.c_capture),
            ("k_field_ion_hz", self.k_field_ion_hz),
        ];
        for (name, v) in nonneg {
            if !v.is_finite() || v < 0.0 {
                return Err(ModelError::InvalidParam { name, value: v });
            }
        }
        if !(0.0..=1.0).contains(&self.zpl_branching) {
            return Err(ModelError::InvalidParam { name: "zpl_branching", value: self.zpl_branching });
        }
        for (name, v) in [
            ("gamma_0_mhz", self.gamma_0_mhz),
            ("p_sat_uw", self.p_sat_uw),
            ("v_half_v", self.v_half_v),
            ("v_field_ion_v", self.v_field_ion_v),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(ModelError::InvalidParam { name, value: v });
            }
        }
        if !self.f_max.is_finite() || self.f_max < 1.0 {
            return Err(ModelError::InvalidParam { name: "f_max", value: self.f_max });
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("parameter {name} out of range: {value}")]
    InvalidParam { name: &'static str, value: f64 },
    #[error("negative power {power_uw} uW on {color:?} channel")]
    NegativePower { color: LaserColor, power_uw: f64 },
}

/// The five allowed transitions of the jump process, as rates in Hz.
/// Anything not listed is forbidden.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RateSet {
    /// BrightGround -> BrightExcited
    pub excitation: f64,
    /// BrightExcited -> BrightGround
    pub decay: f64,
    /// BrightExcited -> Dark
    pub photoionization: f64,
    /// BrightGround -> Dark
    pub field_ionization: f64,
    /// Dark -> BrightGround
    pub capture: f64,
}

impl RateSet {
    /// Rate of `from -> to`; zero for forbidden pairs.
    #[must_use]
    pub fn rate(&self, from: ChargeState, to: ChargeState) -> f64 {
        use ChargeState::*;
        match (from, to) {
            (BrightGround, BrightExcited) => self.excitation,
            (BrightExcited, BrightGround) => self.decay,
            (BrightExcited, Dark) => self.photoionization,
            (BrightGround, Dark) => self.field_ionization,
            (Dark, BrightGround) => self.capture,
            _ => 0.0,
        }
    }

    /// Total rate out of `from`.
    #[must_use]
    pub fn exit_rate(&self, from: ChargeState) -> f64 {
        use ChargeState::*;
        match from {
            BrightGround => self.excitation + self.field_ionization,
            BrightExcited => self.decay + self.photoionization,
            Dark => self.capture,
        }
    }

    #[must_use]
    pub fn is_zero(&self) -> bool {
        self.excitation == 0.0
            && self.decay == 0.0
            && self.photoionization == 0.0
            && self.field_ionization == 0.0
            && self.capture == 0.0
    }
}

/// Saturated Lorentzian excitation rate of the readout transition:
/// `r_max * s / (1 + s + (2*detuning/gamma_0)^2)` with `s = power/p_sat`.
#[must_use]
pub fn excitation_rate(power_uw: f64, detuning_mhz: f64, params: &ChargeModelParams) -> f64 {
    if power_uw <= 0.0 {
        return 0.0;
    }
    let s = power_uw / params.p_sat_uw;
    let d = 2.0 * detuning_mhz / params.gamma_0_mhz;
    params.r_max_hz * s / (1.0 + s + d * d)
}

/// Drift enhancement of the hole flux, `f(V) = 1 + (f_max - 1) * V+/(V+ + v_half)`
/// with `V+ = max(V, 0)`. Equals 1 at zero and negative bias.
#[must_use]
pub fn drift_enhancement(voltage_v: f64, params: &ChargeModelParams) -> f64 {
    let vp = voltage_v.max(0.0);
    1.0 + (params.f_max - 1.0) * vp / (vp + params.v_half_v)
}

/// Hole flux arriving at the emitter under the given illumination and bias,
/// in the same arbitrary units as `HoleYields`.
#[must_use]
pub fn hole_flux(channels: &[LaserChannel], voltage_v: f64, params: &ChargeModelParams) -> f64 {
    let raw: f64 = channels
        .iter()
        .map(|c| params.hole_gen.for_color(c.color) * c.power_uw.max(0.0))
        .sum();
    drift_enhancement(voltage_v, params) * raw
}

/// Static-field ionization rate of the bright ground state.
#[must_use]
pub fn field_ionization_rate(voltage_v: f64, params: &ChargeModelParams) -> f64 {
    params.k_field_ion_hz * (voltage_v - params.v_field_ion_v).max(0.0) / params.v_field_ion_v
}

/// Assemble the full rate set for one illumination condition.
///
/// The optical rates out of the bright manifold (decay, photoionization) are
/// tied to the optical drive: with no excitation the excited state is
/// unreachable and they are zeroed, which leaves every state absorbing in
/// the dark below the field-ionization threshold.
#[must_use]
pub fn build_rates(
    channels: &[LaserChannel],
    voltage_v: f64,
    params: &ChargeModelParams,
) -> RateSet {
    let mut excitation = 0.0;
    for c in channels {
        if c.power_uw <= 0.0 {
            continue;
        }
        excitation += match c.color {
            LaserColor::Green => params.green_exc_hz_per_uw * c.power_uw,
            LaserColor::Resonant | LaserColor::NearResonant => {
                excitation_rate(c.power_uw, c.detuning_mhz, params)
            }
        };
    }
    let lit = excitation > 0.0;
    RateSet {
        excitation,
        decay: if lit { params.gamma_rad_hz } else { 0.0 },
        photoionization: if lit { params.k_ion_hz } else { 0.0 },
        field_ionization: field_ionization_rate(voltage_v, params),
        capture: params.c_capture * hole_flux(channels, voltage_v, params),
    }
}

/// Quasi-steady occupation of the bright excited state given a total
/// excitation rate `r_exc`: `r / (r + gamma_rad + k_ion)`.
#[must_use]
pub fn excited_fraction(r_exc: f64, params: &ChargeModelParams) -> f64 {
    if r_exc <= 0.0 {
        return 0.0;
    }
    r_exc / (r_exc + params.gamma_rad_hz + params.k_ion_hz)
}

/// Effective bright-to-dark rate under resonant-only illumination with
/// capture ignored: `k_ion * pi_e`. Linear in power well below saturation.
#[must_use]
pub fn effective_bright_to_dark_rate(params: &ChargeModelParams, power_uw: f64) -> f64 {
    params.k_ion_hz * excited_fraction(excitation_rate(power_uw, 0.0, params), params)
}
