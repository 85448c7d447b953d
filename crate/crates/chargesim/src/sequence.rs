//! Pulse sequences: ordered segments of constant illumination and bias,
//! repeated many times, plus builders for the named measurement protocols.
//!
//! All times are integer nanoseconds so that periods stay exact over any
//! number of repetitions.

use crate::model::{LaserChannel, LaserColor};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const NS_PER_US: u64 = 1_000;
pub const NS_PER_MS: u64 = 1_000_000;

/// One interval of constant conditions: active laser channels and bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub duration_ns: u64,
    #[serde(default)]
    pub channels: Vec<LaserChannel>,
    #[serde(default)]
    pub voltage_v: f64,
}

impl Segment {
    #[must_use]
    pub fn new(duration_ns: u64, channels: Vec<LaserChannel>, voltage_v: f64) -> Self {
        Segment { duration_ns, channels, voltage_v }
    }

    #[must_use]
    pub fn dark(duration_ns: u64, voltage_v: f64) -> Self {
        Segment { duration_ns, channels: Vec::new(), voltage_v }
    }
}

/// An ordered list of segments executed `repetitions` times.
///
/// `voltage_stepped` declares that the bias intentionally changes at segment
/// boundaries; otherwise a voltage change is a validation error. The optional
/// inter-repetition gap is simulated as a dark interval (state evolves, no
/// detection) and is not part of the period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseSequence {
    pub label: String,
    pub segments: Vec<Segment>,
    pub repetitions: u32,
    #[serde(default)]
    pub voltage_stepped: bool,
    #[serde(default)]
    pub inter_rep_gap_ns: u64,
}

impl PulseSequence {
    /// Sum of segment durations, exact in integer nanoseconds.
    #[must_use]
    pub fn period_ns(&self) -> u64 {
        self.segments.iter().map(|s| s.duration_ns).sum()
    }

    /// Start offset of each segment plus the final period, ns.
    #[must_use]
    pub fn boundaries_ns(&self) -> Vec<u64> {
        let mut t = 0u64;
        let mut out = Vec::with_capacity(self.segments.len() + 1);
        out.push(0);
        for s in &self.segments {
            t += s.duration_ns;
            out.push(t);
        }
        out
    }

    /// Checks every invariant and returns the complete list of violations.
    /// An empty list means the sequence is valid.
    #[must_use]
    pub fn validate(&self) -> Vec<SequenceViolation> {
        let mut v = Vec::new();
        if self.segments.is_empty() {
            v.push(SequenceViolation::NoSegments);
        }
        if self.repetitions == 0 {
            v.push(SequenceViolation::ZeroRepetitions);
        }
        for (i, seg) in self.segments.iter().enumerate() {
            if seg.duration_ns == 0 {
                v.push(SequenceViolation::NonPositiveDuration { segment: i });
            }
            if !seg.voltage_v.is_finite() {
                v.push(SequenceViolation::NonFiniteVoltage { segment: i });
            }
            let mut seen: Vec<LaserColor> = Vec::new();
            for ch in &seg.channels {
                if seen.contains(&ch.color) {
                    v.push(SequenceViolation::DuplicateColor { segment: i, color: ch.color });
                } else {
                    seen.push(ch.color);
                }
                if !(ch.power_uw.is_finite() && ch.power_uw >= 0.0) {
                    v.push(SequenceViolation::NegativePower {
                        segment: i,
                        color: ch.color,
                        power_uw: ch.power_uw,
                    });
                }
                if !ch.detuning_mhz.is_finite() {
                    v.push(SequenceViolation::NonFiniteDetuning { segment: i, color: ch.color });
                }
            }
        }
        if !self.voltage_stepped {
            if let Some(first) = self.segments.first() {
                for (i, seg) in self.segments.iter().enumerate().skip(1) {
                    if seg.voltage_v != first.voltage_v {
                        v.push(SequenceViolation::UnmarkedVoltageStep {
                            segment: i,
                            voltage_v: seg.voltage_v,
                            first_v: first.voltage_v,
                        });
                    }
                }
            }
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SequenceViolation {
    #[error("segment {segment}: non-positive duration")]
    NonPositiveDuration { segment: usize },
    #[error("segment {segment}: duplicate color {color:?}")]
    DuplicateColor { segment: usize, color: LaserColor },
    #[error("segment {segment}: negative or non-finite power {power_uw} uW on {color:?}")]
    NegativePower { segment: usize, color: LaserColor, power_uw: f64 },
    #[error("segment {segment}: non-finite detuning on {color:?}")]
    NonFiniteDetuning { segment: usize, color: LaserColor },
    #[error("segment {segment}: non-finite voltage")]
    NonFiniteVoltage { segment: usize },
    #[error("segment {segment}: voltage {voltage_v} V differs from {first_v} V but sequence is not marked voltage-stepped")]
    UnmarkedVoltageStep { segment: usize, voltage_v: f64, first_v: f64 },
    #[error("sequence has no segments")]
    NoSegments,
    #[error("repetitions must be >= 1")]
    ZeroRepetitions,
}

#[derive(Debug, Error, PartialEq)]
pub enum SequenceError {
    #[error("negative power: {0} uW")]
    NegativePower(f64),
    #[error("negative delay: {0} ms")]
    NegativeDelay(f64),
    #[error("non-finite parameter: {0}")]
    NonFinite(&'static str),
}

/// Inclusive-start, exclusive-stop analysis window within one period, ns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub start_ns: u64,
    pub stop_ns: u64,
}

impl Window {
    #[must_use]
    pub fn new(start_ns: u64, stop_ns: u64) -> Self {
        Window { start_ns, stop_ns }
    }
}

/// Builders for the named measurement protocols and their analysis windows.
pub mod protocols {
    use super::*;

    /// Default resonant readout / probe power.
    pub const WORKING_POWER_UW: f64 = 13.0;
    /// Default green initialization power.
    pub const GREEN_POWER_UW: f64 = 300.0;
    /// Default resonant and near-resonant powers of the recovery protocol.
    pub const RECOVERY_POWER_UW: f64 = 4.0;

    fn check_power(p: f64) -> Result<f64, SequenceError> {
        if !p.is_finite() {
            return Err(SequenceError::NonFinite("power"));
        }
        if p < 0.0 {
            return Err(SequenceError::NegativePower(p));
        }
        Ok(p)
    }

    /// Green initialization with an embedded resonant probe, a dark gap, and
    /// a long resonant readout:
    /// green 2 ms | green+probe 1 ms | green 2 ms | dark 2 ms | resonant 38 ms.
    /// The probe window is centered in the 5 ms green pulse.
    pub fn init_readout(probe_uw: f64, green_uw: f64) -> Result<PulseSequence, SequenceError> {
        init_readout_at(probe_uw, green_uw, WORKING_POWER_UW, 0.0)
    }

    /// `init_readout` with explicit readout power and bias voltage.
    pub fn init_readout_at(
        probe_uw: f64,
        green_uw: f64,
        readout_uw: f64,
        voltage_v: f64,
    ) -> Result<PulseSequence, SequenceError> {
        let probe = check_power(probe_uw)?;
        let green = check_power(green_uw)?;
        let readout = check_power(readout_uw)?;
        if !voltage_v.is_finite() {
            return Err(SequenceError::NonFinite("voltage"));
        }
        let v = voltage_v;
        Ok(PulseSequence {
            label: format!("init_readout probe={probe} uW green={green} uW readout={readout} uW V={v}"),
            segments: vec![
                Segment::new(2 * NS_PER_MS, vec![LaserChannel::green(green)], v),
                Segment::new(
                    NS_PER_MS,
                    vec![LaserChannel::green(green), LaserChannel::resonant(probe, 0.0)],
                    v,
                ),
                Segment::new(2 * NS_PER_MS, vec![LaserChannel::green(green)], v),
                Segment::dark(2 * NS_PER_MS, v),
                Segment::new(38 * NS_PER_MS, vec![LaserChannel::resonant(readout, 0.0)], v),
            ],
            repetitions: 1,
            voltage_stepped: false,
            inter_rep_gap_ns: 0,
        })
    }

    /// Analysis windows of `init_readout`: the stabilized probe window, the
    /// dark-gap background window, and the first/last 1 ms of the readout.
    #[derive(Debug, Clone, Copy, PartialEq, Eq)]
    pub struct InitReadoutWindows {
        pub probe: Window,
        pub background: Window,
        pub readout: Window,
        pub readout_first_ms: Window,
        pub readout_last_ms: Window,
    }

    #[must_use]
    pub fn init_readout_windows() -> InitReadoutWindows {
        InitReadoutWindows {
            probe: Window::new(2 * NS_PER_MS, 3 * NS_PER_MS),
            background: Window::new(5 * NS_PER_MS, 7 * NS_PER_MS),
            readout: Window::new(7 * NS_PER_MS, 45 * NS_PER_MS),
            readout_first_ms: Window::new(7 * NS_PER_MS, 8 * NS_PER_MS),
            readout_last_ms: Window::new(44 * NS_PER_MS, 45 * NS_PER_MS),
        }
    }

    /// Pump-probe recovery protocol:
    /// green 5 ms | dark 2 ms | resonant 10 ms | delay tau2 | resonant 10 ms.
    /// With `near_resonant_on` the near-resonant beam runs in every segment.
    /// A zero delay merges nothing: the two resonant pulses simply abut
    /// (the delay segment is omitted to keep all durations positive).
    pub fn recovery(
        tau2_ms: f64,
        near_resonant_on: bool,
        voltage_v: f64,
    ) -> Result<PulseSequence, SequenceError> {
        recovery_with(
            tau2_ms,
            near_resonant_on,
            voltage_v,
            RECOVERY_POWER_UW,
            RECOVERY_POWER_UW,
            GREEN_POWER_UW,
        )
    }

    /// `recovery` with explicit powers.
    pub fn recovery_with(
        tau2_ms: f64,
        near_resonant_on: bool,
        voltage_v: f64,
        resonant_uw: f64,
        near_resonant_uw: f64,
        green_uw: f64,
    ) -> Result<PulseSequence, SequenceError> {
        if !tau2_ms.is_finite() {
            return Err(SequenceError::NonFinite("tau2"));
        }
        if tau2_ms < 0.0 {
            return Err(SequenceError::NegativeDelay(tau2_ms));
        }
        let res = check_power(resonant_uw)?;
        let nr = check_power(near_resonant_uw)?;
        let green = check_power(green_uw)?;
        if !voltage_v.is_finite() {
            return Err(SequenceError::NonFinite("voltage"));
        }
        let v = voltage_v;
        let tau2_ns = (tau2_ms * NS_PER_MS as f64).round() as u64;
        let with_nr = |mut ch: Vec<LaserChannel>| {
            if near_resonant_on {
                ch.push(LaserChannel::near_resonant(nr));
            }
            ch
        };
        let mut segments = vec![
            Segment::new(5 * NS_PER_MS, with_nr(vec![LaserChannel::green(green)]), v),
            Segment::new(2 * NS_PER_MS, with_nr(vec![]), v),
            Segment::new(10 * NS_PER_MS, with_nr(vec![LaserChannel::resonant(res, 0.0)]), v),
        ];
        if tau2_ns > 0 {
            segments.push(Segment::new(tau2_ns, with_nr(vec![]), v));
        }
        segments.push(Segment::new(10 * NS_PER_MS, with_nr(vec![LaserChannel::resonant(res, 0.0)]), v));
        Ok(PulseSequence {
            label: format!(
                "recovery tau2={tau2_ms} ms nr={} V={v}",
                if near_resonant_on { "on" } else { "off" }
            ),
            segments,
            repetitions: 1,
            voltage_stepped: false,
            inter_rep_gap_ns: 0,
        })
    }

    /// 1 ms intensity windows of the recovery protocol (first/last ms of each
    /// resonant pulse) plus the dark-gap background window.
    #[derive(Debug, Clone, Copy, PartialEq, Eq)]
    pub struct RecoveryWindows {
        pub i1_init: Window,
        pub i1_final: Window,
        pub i2_init: Window,
        pub i2_final: Window,
        pub background: Window,
    }

    #[must_use]
    pub fn recovery_windows(tau2_ns: u64) -> RecoveryWindows {
        let p1 = 7 * NS_PER_MS;
        let p2 = 17 * NS_PER_MS + tau2_ns;
        RecoveryWindows {
            i1_init: Window::new(p1, p1 + NS_PER_MS),
            i1_final: Window::new(p1 + 9 * NS_PER_MS, p1 + 10 * NS_PER_MS),
            i2_init: Window::new(p2, p2 + NS_PER_MS),
            i2_final: Window::new(p2 + 9 * NS_PER_MS, p2 + 10 * NS_PER_MS),
            background: Window::new(5 * NS_PER_MS, 7 * NS_PER_MS),
        }
    }

    /// Continuous-wave scan point for line spectroscopy: resonant beam at a
    /// fixed detuning plus a green stabilization beam, 20 ms per repetition.
    /// The green co-illumination keeps the capture flux detuning-independent
    /// so the detected line reproduces the bare power-broadened shape.
    pub fn ple(
        resonant_uw: f64,
        detuning_mhz: f64,
        green_uw: f64,
        voltage_v: f64,
    ) -> Result<PulseSequence, SequenceError> {
        let res = check_power(resonant_uw)?;
        let green = check_power(green_uw)?;
        if !detuning_mhz.is_finite() {
            return Err(SequenceError::NonFinite("detuning"));
        }
        if !voltage_v.is_finite() {
            return Err(SequenceError::NonFinite("voltage"));
        }
        let mut channels = vec![LaserChannel::resonant(res, detuning_mhz)];
        if green > 0.0 {
            channels.push(LaserChannel::green(green));
        }
        Ok(PulseSequence {
            label: format!("ple P={res} uW det={detuning_mhz} MHz green={green} uW V={voltage_v}"),
            segments: vec![Segment::new(20 * NS_PER_MS, channels, voltage_v)],
            repetitions: 1,
            voltage_stepped: false,
            inter_rep_gap_ns: 0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::NEAR_RESONANT_DETUNING_MHZ;
    use proptest::prelude::*;

    #[test]
    fn init_readout_shape() {
        let seq = protocols::init_readout(13.0, 300.0).unwrap();
        assert_eq!(seq.segments.len(), 5);
        assert_eq!(seq.period_ns(), 45 * NS_PER_MS);
        assert!(seq.validate().is_empty());
        let d: Vec<u64> = seq.segments.iter().map(|s| s.duration_ns).collect();
        assert_eq!(d, vec![2, 1, 2, 2, 38].iter().map(|m| m * NS_PER_MS).collect::<Vec<_>>());
        // Probe rides on top of green in the middle segment only.
        assert_eq!(seq.segments[1].channels.len(), 2);
        assert!(seq.segments[1].channels.iter().any(|c| c.color == LaserColor::Resonant));
        assert!(seq.segments[3].channels.is_empty());
        assert_eq!(seq.segments[4].channels.len(), 1);
        assert_eq!(seq.segments[4].channels[0].power_uw, 13.0);
        assert_eq!(seq.boundaries_ns().last().copied(), Some(seq.period_ns()));
    }

    #[test]
    fn init_readout_zero_probe_keeps_segment() {
        let seq = protocols::init_readout(0.0, 300.0).unwrap();
        assert_eq!(seq.segments.len(), 5);
        let probe = &seq.segments[1];
        let res = probe.channels.iter().find(|c| c.color == LaserColor::Resonant).unwrap();
        assert_eq!(res.power_uw, 0.0);
        assert!(seq.validate().is_empty());
    }

    #[test]
    fn init_readout_zero_green_valid() {
        let seq = protocols::init_readout(13.0, 0.0).unwrap();
        assert!(seq.validate().is_empty());
        assert_eq!(seq.period_ns(), 45 * NS_PER_MS);
    }

    #[test]
    fn init_readout_rejects_negative_power() {
        assert_eq!(
            protocols::init_readout(-1.0, 300.0),
            Err(SequenceError::NegativePower(-1.0))
        );
    }

    #[test]
    fn recovery_shape_and_windows() {
        let seq = protocols::recovery(10.0, true, 50.0).unwrap();
        assert_eq!(seq.segments.len(), 5);
        assert_eq!(seq.period_ns(), 37 * NS_PER_MS);
        assert!(seq.validate().is_empty());
        for seg in &seq.segments {
            let nr = seg
                .channels
                .iter()
                .find(|c| c.color == LaserColor::NearResonant)
                .expect("near-resonant channel in every segment");
            assert_eq!(nr.power_uw, protocols::RECOVERY_POWER_UW);
            assert_eq!(nr.detuning_mhz, NEAR_RESONANT_DETUNING_MHZ);
            assert_eq!(seg.voltage_v, 50.0);
        }
        let w = protocols::recovery_windows(10 * NS_PER_MS);
        assert_eq!(w.i1_init, Window::new(7 * NS_PER_MS, 8 * NS_PER_MS));
        assert_eq!(w.i1_final, Window::new(16 * NS_PER_MS, 17 * NS_PER_MS));
        assert_eq!(w.i2_init, Window::new(27 * NS_PER_MS, 28 * NS_PER_MS));
        assert_eq!(w.i2_final, Window::new(36 * NS_PER_MS, 37 * NS_PER_MS));
    }

    #[test]
    fn recovery_zero_delay_abuts_pulses() {
        let seq = protocols::recovery(0.0, false, 0.0).unwrap();
        assert_eq!(seq.segments.len(), 4);
        assert_eq!(seq.period_ns(), 27 * NS_PER_MS);
        // Same resonant conditions across the join.
        assert_eq!(seq.segments[2].channels, seq.segments[3].channels);
        assert!(seq.validate().is_empty());
    }

    #[test]
    fn recovery_off_matches_on_with_zero_nr_power() {
        let on = protocols::recovery_with(10.0, true, 0.0, 4.0, 0.0, 300.0).unwrap();
        let off = protocols::recovery(10.0, false, 0.0).unwrap();
        assert_eq!(on.segments.len(), off.segments.len());
        for (a, b) in on.segments.iter().zip(&off.segments) {
            let a_active: Vec<_> = a.channels.iter().filter(|c| c.power_uw > 0.0).collect();
            let b_active: Vec<_> = b.channels.iter().filter(|c| c.power_uw > 0.0).collect();
            assert_eq!(a_active, b_active);
        }
    }

    #[test]
    fn recovery_rejects_negative_delay() {
        assert_eq!(
            protocols::recovery(-0.5, true, 50.0),
            Err(SequenceError::NegativeDelay(-0.5))
        );
    }

    #[test]
    fn ple_single_segment() {
        let seq = protocols::ple(130.0, -220.0, 300.0, 50.0).unwrap();
        assert_eq!(seq.segments.len(), 1);
        assert_eq!(seq.period_ns(), 20 * NS_PER_MS);
        assert!(seq.validate().is_empty());
        let seg = &seq.segments[0];
        assert_eq!(seg.channels.len(), 2);
        assert_eq!(seg.channels[0].detuning_mhz, -220.0);
    }

    #[test]
    fn validate_reports_all_violations() {
        let seq = PulseSequence {
            label: "bad".into(),
            segments: vec![
                Segment::new(0, vec![], 0.0),
                Segment::new(
                    1000,
                    vec![LaserChannel::resonant(5.0, 0.0), LaserChannel::resonant(7.0, 10.0)],
                    0.0,
                ),
                Segment::new(1000, vec![LaserChannel::green(-2.0)], 30.0),
            ],
            repetitions: 0,
            voltage_stepped: false,
            inter_rep_gap_ns: 0,
        };
        let v = seq.validate();
        let texts: Vec<String> = v.iter().map(|x| x.to_string()).collect();
        assert!(texts.iter().any(|t| t.contains("non-positive duration")), "{texts:?}");
        assert!(texts.iter().any(|t| t.contains("duplicate color")), "{texts:?}");
        assert!(texts.iter().any(|t| t.contains("negative or non-finite power")), "{texts:?}");
        assert!(texts.iter().any(|t| t.contains("not marked voltage-stepped")), "{texts:?}");
        assert!(texts.iter().any(|t| t.contains("repetitions")), "{texts:?}");
        assert_eq!(v.len(), 5);
    }

    #[test]
    fn voltage_step_allowed_when_marked() {
        let mut seq = PulseSequence {
            label: "stepped".into(),
            segments: vec![Segment::dark(1000, 0.0), Segment::dark(1000, 50.0)],
            repetitions: 1,
            voltage_stepped: true,
            inter_rep_gap_ns: 0,
        };
        assert!(seq.validate().is_empty());
        seq.voltage_stepped = false;
        assert_eq!(seq.validate().len(), 1);
    }

    fn channel_strategy() -> impl Strategy<Value = LaserChannel> {
        (0u8..3, 0.0..500.0f64, -1e6..1e6f64).prop_map(|(c, p, d)| LaserChannel {
            color: match c {
                0 => LaserColor::Green,
                1 => LaserColor::Resonant,
                _ => LaserColor::NearResonant,
            },
            power_uw: p,
            detuning_mhz: d,
        })
    }

    fn sequence_strategy() -> impl Strategy<Value = PulseSequence> {
        (
            "[a-z0-9 _=.-]{0,24}",
            proptest::collection::vec(
                (1u64..2_000_000_000, proptest::collection::vec(channel_strategy(), 0..3)),
                1..6,
            ),
            1u32..1000,
            -100.0..300.0f64,
            0u64..1_000_000,
        )
            .prop_map(|(label, segs, reps, v, gap)| PulseSequence {
                label,
                segments: segs
                    .into_iter()
                    .map(|(d, ch)| Segment::new(d, ch, v))
                    .collect(),
                repetitions: reps,
                voltage_stepped: false,
                inter_rep_gap_ns: gap,
            })
    }

    proptest! {
        #[test]
        fn toml_round_trip(seq in sequence_strategy()) {
            let text = toml::to_string(&seq).unwrap();
            let back: PulseSequence = toml::from_str(&text).unwrap();
            prop_assert_eq!(back, seq);
        }

        #[test]
        fn period_is_sum_of_durations(seq in sequence_strategy()) {
            let total: u64 = seq.segments.iter().map(|s| s.duration_ns).sum();
            prop_assert_eq!(seq.period_ns(), total);
            let b = seq.boundaries_ns();
            prop_assert_eq!(b.len(), seq.segments.len() + 1);
            prop_assert_eq!(b[b.len() - 1], total);
        }

        #[test]
        fn builders_always_validate(probe in 0.0..100.0f64, green in 0.0..500.0f64,
                                    tau2 in 0.0..50.0f64, v in -50.0..250.0f64, on in any::<bool>()) {
            let a = protocols::init_readout_at(probe, green, 13.0, v).unwrap();
            prop_assert!(a.validate().is_empty());
            let b = protocols::recovery(tau2, on, v).unwrap();
            prop_assert!(b.validate().is_empty());
            prop_assert_eq!(b.period_ns(), 27 * NS_PER_MS + (tau2 * 1e6).round() as u64);
        }
    }
}
