//! Trajectory simulation and the analytic master-equation propagator.
//!
//! Two independent realizations of the same jump process live here: an exact
//! stochastic simulation (`simulate_trajectory`) and a matrix-exponential
//! solution of the master equation (`propagate_populations`). They share only
//! the rate model, so each serves as an oracle for the other. A reduced
//! two-state mode for ms-scale work lives in [`reduced`].

pub mod reduced;
pub mod rng;

use crate::model::{build_rates, ChargeModelParams, ChargeState, LaserChannel, ModelError, RateSet};
use crate::photonics::DetectorParams;
use crate::sequence::{PulseSequence, SequenceViolation};
use nalgebra::{Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Band {
    Zpl,
    Psb,
}

/// One stochastic realization over a single sequence period.
///
/// Jump and emission times are in integer nanoseconds since the period start.
/// The simulation keeps an f64 cursor internally; recorded times are rounded
/// up (so a jump recorded at time n always happened at real time <= n, which
/// keeps `state_at` exact at integer checkpoints) and, on a collision, bumped
/// forward 1 ns to stay strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub initial_state: ChargeState,
    pub jumps: Vec<(u64, ChargeState)>,
    pub emissions: Vec<(u64, Band)>,
    pub period_ns: u64,
}

impl Trajectory {
    /// State occupied at time `t_ns` (the new state exactly at a jump time).
    #[must_use]
    pub fn state_at(&self, t_ns: u64) -> ChargeState {
        let idx = self.jumps.partition_point(|&(jt, _)| jt <= t_ns);
        if idx == 0 {
            self.initial_state
        } else {
            self.jumps[idx - 1].1
        }
    }

    #[must_use]
    pub fn is_bright_at(&self, t_ns: u64) -> bool {
        self.state_at(t_ns).is_bright()
    }
}

/// Occupation probabilities over (BrightGround, BrightExcited, Dark).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PopulationVector {
    p: [f64; 3],
}

impl PopulationVector {
    /// Validates entries in [0, 1] and normalization within 1e-9.
    pub fn new(p: [f64; 3]) -> Result<Self, EngineError> {
        for e in p {
            if !(-1e-12..=1.0 + 1e-12).contains(&e) || !e.is_finite() {
                return Err(EngineError::PopulationOutOfRange(e));
            }
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(EngineError::NotNormalized(sum));
        }
        Ok(PopulationVector { p: p.map(|e| e.clamp(0.0, 1.0)) })
    }

    #[must_use]
    pub fn pure(state: ChargeState) -> Self {
        let mut p = [0.0; 3];
        p[state.index()] = 1.0;
        PopulationVector { p }
    }

    /// Accepts a propagated vector, clamping rounding-level negatives.
    fn from_linear(v: Vector3<f64>) -> Self {
        PopulationVector { p: [v[0].clamp(0.0, 1.0), v[1].clamp(0.0, 1.0), v[2].clamp(0.0, 1.0)] }
    }

    #[must_use]
    pub fn get(&self, state: ChargeState) -> f64 {
        self.p[state.index()]
    }

    #[must_use]
    pub fn as_array(&self) -> [f64; 3] {
        self.p
    }

    #[must_use]
    pub fn bright(&self) -> f64 {
        self.p[0] + self.p[1]
    }

    #[must_use]
    pub fn sum(&self) -> f64 {
        self.p.iter().sum()
    }

    fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.p[0], self.p[1], self.p[2])
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid sequence: {0:?}")]
    InvalidSequence(Vec<SequenceViolation>),
    #[error("invalid model parameters: {0}")]
    Model(#[from] ModelError),
    #[error("population entry out of [0, 1]: {0}")]
    PopulationOutOfRange(f64),
    #[error("populations not normalized: sum = {0}")]
    NotNormalized(f64),
    #[error("grid step must be positive")]
    ZeroGridStep,
    #[error("detector efficiency out of [0, 1]: {0}")]
    InvalidEfficiency(f64),
    #[error("checkpoint times must be sorted")]
    UnsortedTimes,
    #[error("checkpoint {time_ns} ns beyond period {period_ns} ns")]
    TimeBeyondPeriod { time_ns: u64, period_ns: u64 },
}

fn check_inputs(seq: &PulseSequence, params: &ChargeModelParams) -> Result<(), EngineError> {
    params.validate()?;
    let violations = seq.validate();
    if !violations.is_empty() {
        return Err(EngineError::InvalidSequence(violations));
    }
    Ok(())
}

/// Transposed generator M = Q^T of the jump process: dp/dt = M p, rates in Hz.
/// Columns sum to zero.
fn generator(rates: &RateSet) -> Matrix3<f64> {
    let e = rates.excitation;
    let d = rates.decay;
    let i = rates.photoionization;
    let f = rates.field_ionization;
    let c = rates.capture;
    Matrix3::new(
        -(e + f), d,        c,   //
        e,        -(d + i), 0.0, //
        f,        i,        -c,
    )
}

/// exp(M dt). The exact exponential of a generator is a stochastic matrix;
/// renormalizing each column to unit sum removes the scaling-and-squaring
/// drift (~1e-10 over stiff segments), keeping probability conserved.
fn transition(m: &Matrix3<f64>, dt_s: f64) -> Matrix3<f64> {
    let mut t = (m * dt_s).exp();
    for c in 0..3 {
        let s: f64 = t.column(c).sum();
        if s > 0.0 {
            for r in 0..3 {
                t[(r, c)] /= s;
            }
        }
    }
    t
}

/// Populations at the given sorted checkpoint times (ns, within one period),
/// by exact matrix exponentiation of the piecewise-constant generator.
pub fn populations_at(
    seq: &PulseSequence,
    params: &ChargeModelParams,
    initial: &PopulationVector,
    times_ns: &[u64],
) -> Result<Vec<PopulationVector>, EngineError> {
    check_inputs(seq, params)?;
    if times_ns.windows(2).any(|w| w[1] < w[0]) {
        return Err(EngineError::UnsortedTimes);
    }
    let period_ns = seq.period_ns();
    if let Some(&last) = times_ns.last() {
        if last > period_ns {
            return Err(EngineError::TimeBeyondPeriod { time_ns: last, period_ns });
        }
    }
    let mut out = Vec::with_capacity(times_ns.len());
    let mut p = initial.as_vector();
    let mut idx = 0;
    while idx < times_ns.len() && times_ns[idx] == 0 {
        out.push(PopulationVector::from_linear(p));
        idx += 1;
    }
    let mut seg_start = 0u64;
    for seg in &seq.segments {
        let seg_end = seg_start + seg.duration_ns;
        let m = generator(&build_rates(&seg.channels, seg.voltage_v, params));
        while idx < times_ns.len() && times_ns[idx] <= seg_end {
            let dt_s = (times_ns[idx] - seg_start) as f64 * 1e-9;
            out.push(PopulationVector::from_linear(transition(&m, dt_s) * p));
            idx += 1;
        }
        let dt_s = seg.duration_ns as f64 * 1e-9;
        p = transition(&m, dt_s) * p;
        seg_start = seg_end;
    }
    Ok(out)
}

/// Population time series on a regular grid over one period; the final point
/// at the period end is always included.
pub fn propagate_populations(
    seq: &PulseSequence,
    params: &ChargeModelParams,
    initial: &PopulationVector,
    grid_step_ns: u64,
) -> Result<Vec<(u64, PopulationVector)>, EngineError> {
    if grid_step_ns == 0 {
        return Err(EngineError::ZeroGridStep);
    }
    let period_ns = seq.period_ns();
    let mut times: Vec<u64> = (0..=period_ns / grid_step_ns).map(|k| k * grid_step_ns).collect();
    if *times.last().unwrap_or(&0) != period_ns {
        times.push(period_ns);
    }
    let pops = populations_at(seq, params, initial, &times)?;
    Ok(times.into_iter().zip(pops).collect())
}

/// Exact stochastic simulation of one sequence period: exponential waiting
/// times per segment, truncated and redrawn at segment boundaries
/// (memorylessness makes that exact for the piecewise-constant process).
/// Every BrightExcited -> BrightGround jump records an emission, assigned ZPL
/// with probability `zpl_branching`, else PSB. Deterministic in `seed`.
pub fn simulate_trajectory(
    seq: &PulseSequence,
    params: &ChargeModelParams,
    initial: ChargeState,
    seed: u64,
) -> Result<Trajectory, EngineError> {
    check_inputs(seq, params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut jumps: Vec<(u64, ChargeState)> = Vec::new();
    let mut emissions: Vec<(u64, Band)> = Vec::new();
    let mut state = initial;
    let mut t = 0.0f64;
    let mut seg_start = 0u64;
    for seg in &seq.segments {
        let seg_end = seg_start + seg.duration_ns;
        let end_f = seg_end as f64;
        let rates = build_rates(&seg.channels, seg.voltage_v, params);
        loop {
            let exit = rates.exit_rate(state);
            if exit <= 0.0 {
                break;
            }
            let t_next = t + rng::exp_wait_ns(&mut rng, exit);
            if t_next >= end_f {
                break;
            }
            t = t_next;
            // Branch draw is always consumed for two-exit states so the
            // stream layout is positional.
            let (next, emitted) = match state {
                ChargeState::BrightGround => {
                    let u = rng::uniform01(&mut rng) * exit;
                    if u < rates.excitation {
                        (ChargeState::BrightExcited, false)
                    } else {
                        (ChargeState::Dark, false)
                    }
                }
                ChargeState::BrightExcited => {
                    let u = rng::uniform01(&mut rng) * exit;
                    if u < rates.decay {
                        (ChargeState::BrightGround, true)
                    } else {
                        (ChargeState::Dark, false)
                    }
                }
                ChargeState::Dark => (ChargeState::BrightGround, false),
            };
            let mut t_ns = t.ceil() as u64;
            if let Some(&(last, _)) = jumps.last() {
                if t_ns <= last {
                    t_ns = last + 1;
                }
            }
            jumps.push((t_ns, next));
            if emitted {
                let band = if rng::uniform01(&mut rng) < params.zpl_branching {
                    Band::Zpl
                } else {
                    Band::Psb
                };
                emissions.push((t_ns, band));
            }
            state = next;
        }
        t = end_f;
        seg_start = seg_end;
    }
    Ok(Trajectory { initial_state: initial, jumps, emissions, period_ns: seg_start })
}

/// Mean detected rate for given populations: PSB-only detection of the
/// radiative decay, plus detector dark counts. The channel list is accepted
/// for interface completeness; detection is illumination-independent.
#[must_use]
pub fn expected_count_rate(
    p: &PopulationVector,
    _channels: &[LaserChannel],
    params: &ChargeModelParams,
    det: &DetectorParams,
) -> f64 {
    det.efficiency * params.gamma_rad_hz * (1.0 - params.zpl_branching)
        * p.get(ChargeState::BrightExcited)
        + det.dark_rate_hz
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LaserChannel;
    use crate::sequence::{protocols, PulseSequence, Segment, NS_PER_MS};
    use approx::assert_relative_eq;
    use rand::RngCore;

    fn emitter() -> ChargeModelParams {
        ChargeModelParams::emitter_a()
    }

    /// Microsecond-scale profile: same formulas, charge rates boosted so all
    /// five transitions act within a 6 us sequence.
    fn fast_params() -> ChargeModelParams {
        ChargeModelParams {
            k_ion_hz: 5.0e7,
            c_capture: 700.0,
            k_field_ion_hz: 5.0e7,
            ..emitter()
        }
    }

    fn fast_sequence() -> PulseSequence {
        PulseSequence {
            label: "fast exercise".into(),
            segments: vec![
                Segment::new(2_000, vec![LaserChannel::resonant(130.0, 0.0)], 0.0),
                Segment::new(2_000, vec![LaserChannel::green(300.0)], 50.0),
                Segment::dark(2_000, 180.0),
            ],
            repetitions: 1,
            voltage_stepped: true,
            inter_rep_gap_ns: 0,
        }
    }

    #[test]
    fn absorbing_dark_sequence_has_no_events() {
        let seq = PulseSequence {
            label: "dark".into(),
            segments: vec![Segment::dark(10 * NS_PER_MS, 60.0)],
            repetitions: 1,
            voltage_stepped: false,
            inter_rep_gap_ns: 0,
        };
        for initial in ChargeState::ALL {
            let traj = simulate_trajectory(&seq, &emitter(), initial, 1234).unwrap();
            assert!(traj.jumps.is_empty());
            assert!(traj.emissions.is_empty());
            assert_eq!(traj.state_at(9 * NS_PER_MS), initial);
        }
    }

    #[test]
    fn trajectory_deterministic_in_seed() {
        let seq = protocols::init_readout(13.0, 300.0).unwrap();
        let a = simulate_trajectory(&seq, &emitter(), ChargeState::BrightGround, 77).unwrap();
        let b = simulate_trajectory(&seq, &emitter(), ChargeState::BrightGround, 77).unwrap();
        assert_eq!(a, b);
        let c = simulate_trajectory(&seq, &emitter(), ChargeState::BrightGround, 78).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn jump_and_emission_times_strictly_increasing_and_legal() {
        let params = fast_params();
        let seq = fast_sequence();
        for seed in 0..50 {
            let traj = simulate_trajectory(&seq, &params, ChargeState::BrightGround, seed).unwrap();
            let mut prev_state = traj.initial_state;
            let mut last_t = None;
            for &(t, next) in &traj.jumps {
                assert!(last_t.map_or(true, |lt| t > lt), "times not strictly increasing");
                last_t = Some(t);
                // every jump must be an allowed transition
                let allowed = matches!(
                    (prev_state, next),
                    (ChargeState::BrightGround, ChargeState::BrightExcited)
                        | (ChargeState::BrightExcited, ChargeState::BrightGround)
                        | (ChargeState::BrightExcited, ChargeState::Dark)
                        | (ChargeState::BrightGround, ChargeState::Dark)
                        | (ChargeState::Dark, ChargeState::BrightGround)
                );
                assert!(allowed, "illegal jump {prev_state:?} -> {next:?}");
                prev_state = next;
            }
            let mut last_e = None;
            for &(t, _) in &traj.emissions {
                assert!(last_e.map_or(true, |lt| t > lt));
                last_e = Some(t);
            }
        }
    }

    #[test]
    fn rejects_invalid_inputs() {
        let bad_seq = PulseSequence {
            label: "bad".into(),
            segments: vec![Segment::dark(0, 0.0)],
            repetitions: 1,
            voltage_stepped: false,
            inter_rep_gap_ns: 0,
        };
        assert!(matches!(
            simulate_trajectory(&bad_seq, &emitter(), ChargeState::Dark, 1),
            Err(EngineError::InvalidSequence(_))
        ));
        assert!(matches!(
            PopulationVector::new([0.6, 0.3, 0.2]),
            Err(EngineError::NotNormalized(_))
        ));
        assert!(matches!(
            PopulationVector::new([1.2, -0.2, 0.0]),
            Err(EngineError::PopulationOutOfRange(_))
        ));
        let seq = protocols::init_readout(13.0, 300.0).unwrap();
        assert!(matches!(
            propagate_populations(&seq, &emitter(), &PopulationVector::pure(ChargeState::Dark), 0),
            Err(EngineError::ZeroGridStep)
        ));
        assert!(matches!(
            populations_at(
                &seq,
                &emitter(),
                &PopulationVector::pure(ChargeState::Dark),
                &[46 * NS_PER_MS]
            ),
            Err(EngineError::TimeBeyondPeriod { .. })
        ));
    }

    #[test]
    fn zero_generator_keeps_populations_constant() {
        let seq = PulseSequence {
            label: "dark".into(),
            segments: vec![Segment::dark(5 * NS_PER_MS, 0.0)],
            repetitions: 1,
            voltage_stepped: false,
            inter_rep_gap_ns: 0,
        };
        let p0 = PopulationVector::new([0.25, 0.35, 0.4]).unwrap();
        let series = propagate_populations(&seq, &emitter(), &p0, NS_PER_MS).unwrap();
        for (_, p) in series {
            for s in ChargeState::ALL {
                assert_relative_eq!(p.get(s), p0.get(s), max_relative = 1e-14);
            }
        }
    }

    #[test]
    fn two_state_analytic_steady_state() {
        // Pure bright<->dark exchange: p_bright(inf) = b / (a + b).
        let rates = RateSet {
            field_ionization: 300.0, // a: G -> D
            capture: 700.0,          // b: D -> G
            ..RateSet::default()
        };
        let m = generator(&rates);
        let t_s = 50.0 / 300.0; // 50 time constants of the slower rate
        let p = (m * t_s).exp() * Vector3::new(1.0, 0.0, 0.0);
        assert_relative_eq!(p[0], 0.7, max_relative = 1e-9);
        assert_relative_eq!(p[2], 0.3, max_relative = 1e-9);
        assert!(p[1].abs() < 1e-15);
    }

    #[test]
    fn propagator_conserves_probability_over_stiff_sequence() {
        // gamma_rad at 5.9e8 Hz against charge rates of ~1e2 Hz, 45 ms period.
        let seq = protocols::init_readout_at(13.0, 300.0, 13.0, 50.0).unwrap();
        let series = propagate_populations(
            &seq,
            &emitter(),
            &PopulationVector::pure(ChargeState::BrightGround),
            NS_PER_MS / 2,
        )
        .unwrap();
        for (t, p) in series {
            assert!(
                (p.sum() - 1.0).abs() < 1e-10,
                "conservation violated at {t} ns: sum = {}",
                p.sum()
            );
        }
    }

    #[test]
    fn propagator_frozen_checkpoints() {
        // Two-segment run: resonant 13 uW at 50 V for 2 ms, then dark 1 ms.
        // Expected values computed independently with a scipy expm solver.
        let seq = PulseSequence {
            label: "checkpoint".into(),
            segments: vec![
                Segment::new(2 * NS_PER_MS, vec![LaserChannel::resonant(13.0, 0.0)], 50.0),
                Segment::dark(NS_PER_MS, 50.0),
            ],
            repetitions: 1,
            voltage_stepped: false,
            inter_rep_gap_ns: 0,
        };
        let params = emitter();
        let times = [NS_PER_MS, 3 * NS_PER_MS];
        let from_g = populations_at(
            &seq,
            &params,
            &PopulationVector::pure(ChargeState::BrightGround),
            &times,
        )
        .unwrap();
        let mid = from_g[0].as_array();
        assert_relative_eq!(mid[0], 8.247_038_54e-1, max_relative = 1e-8);
        assert_relative_eq!(mid[1], 7.490_304_93e-4, max_relative = 1e-8);
        assert_relative_eq!(mid[2], 1.745_471_15e-1, max_relative = 1e-8);
        let end = from_g[1].as_array();
        assert_relative_eq!(end[0], 8.124_946_73e-1, max_relative = 1e-8);
        assert_relative_eq!(end[1], 7.379_415_55e-4, max_relative = 1e-8);
        assert_relative_eq!(end[2], 1.867_673_85e-1, max_relative = 1e-8);
        // The dark segment below threshold freezes the state exactly.
        let frozen = populations_at(
            &seq,
            &params,
            &PopulationVector::pure(ChargeState::BrightGround),
            &[2 * NS_PER_MS],
        )
        .unwrap();
        for s in ChargeState::ALL {
            assert_relative_eq!(frozen[0].get(s), from_g[1].get(s), max_relative = 1e-12);
        }
        let from_d = populations_at(
            &seq,
            &params,
            &PopulationVector::pure(ChargeState::Dark),
            &[3 * NS_PER_MS],
        )
        .unwrap();
        let d = from_d[0].as_array();
        assert_relative_eq!(d[0], 8.075_975_83e-1, max_relative = 1e-8);
        assert_relative_eq!(d[1], 7.334_937_93e-4, max_relative = 1e-8);
        assert_relative_eq!(d[2], 1.916_689_24e-1, max_relative = 1e-8);
    }

    #[test]
    fn first_wait_is_exponential_ks() {
        // From BrightGround under 13 uW resonant drive the first wait is
        // Exp(excitation rate). Kolmogorov-Smirnov at alpha = 0.01.
        let params = emitter();
        let seq = PulseSequence {
            label: "ks".into(),
            segments: vec![Segment::new(NS_PER_MS, vec![LaserChannel::resonant(13.0, 0.0)], 0.0)],
            repetitions: 1,
            voltage_stepped: false,
            inter_rep_gap_ns: 0,
        };
        let rate = crate::model::excitation_rate(13.0, 0.0, &params);
        let n = 10_000usize;
        let mut waits: Vec<f64> = (0..n)
            .map(|seed| {
                let traj =
                    simulate_trajectory(&seq, &params, ChargeState::BrightGround, seed as u64)
                        .unwrap();
                traj.jumps[0].0 as f64 * 1e-9
            })
            .collect();
        waits.sort_by(f64::total_cmp);
        let mut d = 0.0f64;
        for (i, w) in waits.iter().enumerate() {
            let cdf = 1.0 - (-rate * w).exp();
            d = d.max((cdf - i as f64 / n as f64).abs());
            d = d.max(((i + 1) as f64 / n as f64 - cdf).abs());
        }
        let n_f = n as f64;
        let stat = d * (n_f.sqrt() + 0.12 + 0.11 / n_f.sqrt());
        assert!(stat < 1.628, "KS statistic {stat} rejects exponential law");
    }

    #[test]
    fn emission_band_split_matches_branching() {
        let params = emitter();
        let seq = PulseSequence {
            label: "bands".into(),
            segments: vec![Segment::new(
                NS_PER_MS / 2,
                vec![LaserChannel::resonant(130.0, 0.0)],
                0.0,
            )],
            repetitions: 1,
            voltage_stepped: false,
            inter_rep_gap_ns: 0,
        };
        let mut zpl = 0u64;
        let mut total = 0u64;
        for seed in 0..200 {
            let traj = simulate_trajectory(&seq, &params, ChargeState::BrightGround, seed).unwrap();
            total += traj.emissions.len() as u64;
            zpl += traj.emissions.iter().filter(|(_, b)| *b == Band::Zpl).count() as u64;
        }
        let frac = zpl as f64 / total as f64;
        let sigma = (params.zpl_branching * (1.0 - params.zpl_branching) / total as f64).sqrt();
        assert!(
            (frac - params.zpl_branching).abs() < 4.0 * sigma,
            "ZPL fraction {frac} vs {} (n = {total})",
            params.zpl_branching
        );
    }

    #[test]
    fn mc_matches_propagator_on_fast_sequence() {
        let params = fast_params();
        let seq = fast_sequence();
        let n = 5_000usize;
        let times: Vec<u64> = (1..=12).map(|k| k * 500).collect();
        let mut bright = vec![0u32; times.len()];
        for seed in 0..n {
            let traj = simulate_trajectory(&seq, &params, ChargeState::BrightGround, seed as u64)
                .unwrap();
            for (i, &t) in times.iter().enumerate() {
                if traj.is_bright_at(t) {
                    bright[i] += 1;
                }
            }
        }
        let pops = populations_at(
            &seq,
            &params,
            &PopulationVector::pure(ChargeState::BrightGround),
            &times,
        )
        .unwrap();
        for (i, p) in pops.iter().enumerate() {
            let expect = p.bright();
            let got = bright[i] as f64 / n as f64;
            let sigma = (expect * (1.0 - expect) / n as f64).sqrt().max(1e-4);
            assert!(
                (got - expect).abs() < 5.0 * sigma,
                "t = {} ns: MC {got} vs propagator {expect} (sigma {sigma})",
                times[i]
            );
        }
    }

    #[test]
    fn brute_force_fixed_step_agrees_with_both() {
        // Third, independent realization: first-order fixed-step chain with
        // exact per-step exit probability. Compared on all three states.
        let params = fast_params();
        let seq = fast_sequence();
        let dt_ns = 0.1;
        let n = 4_000usize;
        let times: Vec<u64> = vec![1_000, 2_500, 4_000, 5_500];
        let mut occupancy = vec![[0u32; 3]; times.len()];
        let seg_rates: Vec<(u64, RateSet)> = {
            let mut acc = 0u64;
            seq.segments
                .iter()
                .map(|s| {
                    acc += s.duration_ns;
                    (acc, build_rates(&s.channels, s.voltage_v, &params))
                })
                .collect()
        };
        for rep in 0..n {
            let mut rng = rng::trajectory_rng(2024, 1, rep as u64);
            let mut state = ChargeState::BrightGround;
            let mut t = 0.0f64;
            let mut check = 0usize;
            let period = seq.period_ns() as f64;
            while t < period && check < times.len() {
                let seg = seg_rates.iter().find(|(end, _)| t < *end as f64).unwrap();
                let rates = &seg.1;
                let exit = rates.exit_rate(state);
                if exit > 0.0 {
                    let p_leave = 1.0 - (-exit * dt_ns * 1e-9).exp();
                    if rng::uniform01(&mut rng) < p_leave {
                        let u = rng::uniform01(&mut rng) * exit;
                        state = match state {
                            ChargeState::BrightGround => {
                                if u < rates.excitation {
                                    ChargeState::BrightExcited
                                } else {
                                    ChargeState::Dark
                                }
                            }
                            ChargeState::BrightExcited => {
                                if u < rates.decay {
                                    ChargeState::BrightGround
                                } else {
                                    ChargeState::Dark
                                }
                            }
                            ChargeState::Dark => ChargeState::BrightGround,
                        };
                    }
                }
                t += dt_ns;
                while check < times.len() && t >= times[check] as f64 {
                    occupancy[check][state.index()] += 1;
                    check += 1;
                }
            }
        }
        let pops = populations_at(
            &seq,
            &params,
            &PopulationVector::pure(ChargeState::BrightGround),
            &times,
        )
        .unwrap();
        for (i, p) in pops.iter().enumerate() {
            for s in ChargeState::ALL {
                let expect = p.get(s);
                let got = occupancy[i][s.index()] as f64 / n as f64;
                let sigma = (expect * (1.0 - expect) / n as f64).sqrt().max(2e-4);
                assert!(
                    (got - expect).abs() < 5.0 * sigma,
                    "t = {} ns, {s:?}: brute {got} vs propagator {expect}",
                    times[i]
                );
            }
        }
    }

    #[test]
    fn expected_count_rate_trivials() {
        let params = emitter();
        let det = DetectorParams { efficiency: 0.18, dark_rate_hz: 700.0, dead_time_ns: 0 };
        let dark_only = PopulationVector::pure(ChargeState::Dark);
        assert_eq!(expected_count_rate(&dark_only, &[], &params, &det), 700.0);
        let p = PopulationVector::new([0.99, 0.01, 0.0]).unwrap();
        let blind = DetectorParams { efficiency: 0.0, dark_rate_hz: 700.0, dead_time_ns: 0 };
        assert_eq!(expected_count_rate(&p, &[], &params, &blind), 700.0);
        let rate = expected_count_rate(&p, &[], &params, &det);
        assert_relative_eq!(
            rate,
            0.18 * params.gamma_rad_hz * 0.3 * 0.01 + 700.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn population_accessors() {
        let p = PopulationVector::new([0.5, 0.25, 0.25]).unwrap();
        assert_eq!(p.get(ChargeState::BrightGround), 0.5);
        assert_eq!(p.bright(), 0.75);
        assert_eq!(p.sum(), 1.0);
        let pure = PopulationVector::pure(ChargeState::BrightExcited);
        assert_eq!(pure.get(ChargeState::BrightExcited), 1.0);
        assert_eq!(pure.bright(), 1.0);
    }

    #[test]
    fn rng_smoke_independent_streams() {
        let mut a = rng::trajectory_rng(5, 0, 0);
        let mut b = rng::trajectory_rng(5, 0, 1);
        let same = (0..16).filter(|_| a.next_u64() == b.next_u64()).count();
        assert_eq!(same, 0);
    }
}
