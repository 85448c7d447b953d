//! Adiabatically eliminated two-state mode.
//!
//! The optical cycle (ns scale) is ~10^6 times faster than the charge
//! dynamics (ms scale), so the full jump process spends almost all its events
//! on ground<->excited cycling. This mode folds the excited state into a
//! quasi-steady occupation pi_e and simulates only Bright<->Dark transitions,
//! emitting *detected* photons directly as an inhomogeneous Poisson process
//! at efficiency * gamma_rad * (1 - zpl_branching) * pi_e while bright.
//! Detector dark counts and dead time are applied downstream, as for the
//! full mode.

use super::{rng, EngineError};
use crate::model::{build_rates, excited_fraction, ChargeModelParams, ChargeState, LaserChannel};
use crate::sequence::PulseSequence;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Effective two-state rates of one segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveRates {
    /// k_ion * pi_e + field_ionization * (1 - pi_e).
    pub bright_to_dark_hz: f64,
    /// Capture rate (acts on the dark state only).
    pub dark_to_bright_hz: f64,
    /// Detected-photon rate while bright, detector efficiency folded in.
    pub detected_rate_hz: f64,
    pub excited_fraction: f64,
}

#[must_use]
pub fn effective_rates(
    channels: &[LaserChannel],
    voltage_v: f64,
    params: &ChargeModelParams,
    efficiency: f64,
) -> EffectiveRates {
    let r = build_rates(channels, voltage_v, params);
    let pi = excited_fraction(r.excitation, params);
    EffectiveRates {
        bright_to_dark_hz: r.photoionization * pi + r.field_ionization * (1.0 - pi),
        dark_to_bright_hz: r.capture,
        detected_rate_hz: efficiency * params.gamma_rad_hz * (1.0 - params.zpl_branching) * pi,
        excited_fraction: pi,
    }
}

/// One reduced-mode realization over a single sequence period. Jump times are
/// strictly increasing; tag times are non-decreasing (floored to ns).
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedTrajectory {
    pub initial_bright: bool,
    /// (time ns, is_bright after the jump)
    pub jumps: Vec<(u64, bool)>,
    /// Detected-photon times, ns since period start.
    pub tags_ns: Vec<u64>,
    pub period_ns: u64,
}

impl ReducedTrajectory {
    #[must_use]
    pub fn is_bright_at(&self, t_ns: u64) -> bool {
        let idx = self.jumps.partition_point(|&(jt, _)| jt <= t_ns);
        if idx == 0 {
            self.initial_bright
        } else {
            self.jumps[idx - 1].1
        }
    }
}

/// Simulates one period in reduced mode. `initial` collapses to bright/dark
/// (BrightExcited counts as bright). Deterministic in `seed`; stream layout:
/// per dwell interval one jump wait, then the photon gaps of that interval.
pub fn simulate_reduced(
    seq: &PulseSequence,
    params: &ChargeModelParams,
    efficiency: f64,
    initial: ChargeState,
    seed: u64,
) -> Result<ReducedTrajectory, EngineError> {
    super::check_inputs(seq, params)?;
    if !(0.0..=1.0).contains(&efficiency) {
        return Err(EngineError::InvalidEfficiency(efficiency));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bright = initial.is_bright();
    let mut jumps: Vec<(u64, bool)> = Vec::new();
    let mut tags_ns: Vec<u64> = Vec::new();
    let mut t = 0.0f64;
    let mut seg_start = 0u64;
    for seg in &seq.segments {
        let seg_end = seg_start + seg.duration_ns;
        let end_f = seg_end as f64;
        let eff = effective_rates(&seg.channels, seg.voltage_v, params, efficiency);
        loop {
            let exit = if bright { eff.bright_to_dark_hz } else { eff.dark_to_bright_hz };
            let t_jump = if exit > 0.0 {
                t + rng::exp_wait_ns(&mut rng, exit)
            } else {
                f64::INFINITY
            };
            let t_stop = t_jump.min(end_f);
            if bright && eff.detected_rate_hz > 0.0 {
                let mut s = t + rng::exp_wait_ns(&mut rng, eff.detected_rate_hz);
                while s < t_stop {
                    tags_ns.push(s as u64);
                    s += rng::exp_wait_ns(&mut rng, eff.detected_rate_hz);
                }
            }
            if t_jump >= end_f {
                break; // truncate at the boundary, redraw under the new rates
            }
            t = t_jump;
            bright = !bright;
            // round up so `is_bright_at` is exact at integer checkpoints
            let mut t_ns = t.ceil() as u64;
            if let Some(&(last, _)) = jumps.last() {
                if t_ns <= last {
                    t_ns = last + 1;
                }
            }
            jumps.push((t_ns, bright));
        }
        t = end_f;
        seg_start = seg_end;
    }
    Ok(ReducedTrajectory { initial_bright: initial.is_bright(), jumps, tags_ns, period_ns: seg_start })
}

/// Analytic bright-state occupancy of the reduced model at sorted checkpoint
/// times: piecewise-exponential relaxation toward each segment's steady state.
pub fn reduced_bright_analytic(
    seq: &PulseSequence,
    params: &ChargeModelParams,
    initial: ChargeState,
    times_ns: &[u64],
) -> Result<Vec<f64>, EngineError> {
    super::check_inputs(seq, params)?;
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
    let mut p_b = if initial.is_bright() { 1.0 } else { 0.0 };
    let mut idx = 0;
    while idx < times_ns.len() && times_ns[idx] == 0 {
        out.push(p_b);
        idx += 1;
    }
    let mut seg_start = 0u64;
    for seg in &seq.segments {
        let seg_end = seg_start + seg.duration_ns;
        let eff = effective_rates(&seg.channels, seg.voltage_v, params, 0.0);
        let total = eff.bright_to_dark_hz + eff.dark_to_bright_hz;
        let relax = |p0: f64, dt_ns: u64| -> f64 {
            if total <= 0.0 {
                p0
            } else {
                let pss = eff.dark_to_bright_hz / total;
                pss + (p0 - pss) * (-total * dt_ns as f64 * 1e-9).exp()
            }
        };
        while idx < times_ns.len() && times_ns[idx] <= seg_end {
            out.push(relax(p_b, times_ns[idx] - seg_start));
            idx += 1;
        }
        p_b = relax(p_b, seg.duration_ns);
        seg_start = seg_end;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{populations_at, PopulationVector};
    use crate::sequence::{protocols, PulseSequence, Segment, NS_PER_MS};

    fn emitter() -> ChargeModelParams {
        ChargeModelParams::emitter_a()
    }

    #[test]
    fn dark_sequence_is_frozen() {
        let seq = PulseSequence {
            label: "dark".into(),
            segments: vec![Segment::dark(20 * NS_PER_MS, 100.0)],
            repetitions: 1,
            voltage_stepped: false,
            inter_rep_gap_ns: 0,
        };
        for initial in ChargeState::ALL {
            let traj = simulate_reduced(&seq, &emitter(), 0.18, initial, 5).unwrap();
            assert!(traj.jumps.is_empty());
            assert!(traj.tags_ns.is_empty());
            assert_eq!(traj.is_bright_at(19 * NS_PER_MS), initial.is_bright());
        }
    }

    #[test]
    fn excited_initial_collapses_to_bright() {
        let seq = protocols::init_readout(13.0, 300.0).unwrap();
        let traj =
            simulate_reduced(&seq, &emitter(), 0.0, ChargeState::BrightExcited, 3).unwrap();
        assert!(traj.initial_bright);
    }

    #[test]
    fn deterministic_in_seed() {
        let seq = protocols::init_readout_at(13.0, 300.0, 13.0, 50.0).unwrap();
        let a = simulate_reduced(&seq, &emitter(), 0.18, ChargeState::BrightGround, 41).unwrap();
        let b = simulate_reduced(&seq, &emitter(), 0.18, ChargeState::BrightGround, 41).unwrap();
        assert_eq!(a, b);
        let c = simulate_reduced(&seq, &emitter(), 0.18, ChargeState::BrightGround, 42).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_bad_efficiency() {
        let seq = protocols::init_readout(13.0, 300.0).unwrap();
        assert!(matches!(
            simulate_reduced(&seq, &emitter(), 1.5, ChargeState::BrightGround, 0),
            Err(EngineError::InvalidEfficiency(_))
        ));
    }

    #[test]
    fn tag_times_sorted_and_within_period() {
        let seq = protocols::init_readout_at(13.0, 300.0, 13.0, 50.0).unwrap();
        for seed in 0..20 {
            let traj =
                simulate_reduced(&seq, &emitter(), 0.18, ChargeState::BrightGround, seed).unwrap();
            let mut last = 0u64;
            for &t in &traj.tags_ns {
                assert!(t >= last && t < traj.period_ns);
                last = t;
            }
            let mut last_jump = None;
            for &(t, _) in &traj.jumps {
                assert!(last_jump.map_or(true, |lt| t > lt));
                last_jump = Some(t);
            }
        }
    }

    #[test]
    fn tags_are_poisson_while_pinned_bright() {
        // Ionization and field ionization off: the emitter stays bright and
        // tags form a homogeneous Poisson process.
        let params = ChargeModelParams { k_ion_hz: 0.0, ..emitter() };
        let seq = PulseSequence {
            label: "pinned".into(),
            segments: vec![Segment::new(
                10 * NS_PER_MS,
                vec![LaserChannel::resonant(13.0, 0.0)],
                0.0,
            )],
            repetitions: 1,
            voltage_stepped: false,
            inter_rep_gap_ns: 0,
        };
        let eff = effective_rates(&seq.segments[0].channels, 0.0, &params, 0.18);
        assert_eq!(eff.bright_to_dark_hz, 0.0);
        let lambda = eff.detected_rate_hz * 0.010;
        let n = 400usize;
        let counts: Vec<f64> = (0..n)
            .map(|seed| {
                simulate_reduced(&seq, &params, 0.18, ChargeState::BrightGround, seed as u64)
                    .unwrap()
                    .tags_ns
                    .len() as f64
            })
            .collect();
        let mean = counts.iter().sum::<f64>() / n as f64;
        let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        let sigma_mean = (lambda / n as f64).sqrt();
        assert!(
            (mean - lambda).abs() < 4.0 * sigma_mean,
            "mean {mean} vs lambda {lambda}"
        );
        // index of dispersion for a Poisson law is 1
        let dispersion = var / mean;
        let sigma_disp = (2.0 / (n as f64 - 1.0)).sqrt();
        assert!(
            (dispersion - 1.0).abs() < 4.0 * sigma_disp,
            "dispersion {dispersion}"
        );
    }

    #[test]
    fn reduced_analytic_matches_full_propagator_within_1pct() {
        // ms-scale observables of the reduced model vs the exact 3-state
        // propagator, across the init/readout protocol at 50 V.
        let params = emitter();
        let seq = protocols::init_readout_at(13.0, 300.0, 13.0, 50.0).unwrap();
        let times: Vec<u64> = [1u64, 2, 3, 4, 5, 6, 7, 8, 12, 20, 30, 44, 45]
            .iter()
            .map(|m| m * NS_PER_MS)
            .collect();
        let full = populations_at(
            &seq,
            &params,
            &PopulationVector::pure(ChargeState::BrightGround),
            &times,
        )
        .unwrap();
        let red =
            reduced_bright_analytic(&seq, &params, ChargeState::BrightGround, &times).unwrap();
        for (i, p) in full.iter().enumerate() {
            let diff = (p.bright() - red[i]).abs();
            assert!(
                diff < 0.01,
                "t = {} ns: full {} vs reduced {} (diff {diff})",
                times[i],
                p.bright(),
                red[i]
            );
        }
    }

    #[test]
    fn reduced_mc_matches_reduced_analytic() {
        let params = emitter();
        let seq = protocols::init_readout_at(13.0, 300.0, 13.0, 50.0).unwrap();
        let times: Vec<u64> =
            [2u64, 6, 9, 15, 27, 44].iter().map(|m| m * NS_PER_MS + NS_PER_MS / 2).collect();
        let n = 3_000usize;
        let mut bright = vec![0u32; times.len()];
        for rep in 0..n {
            let traj = simulate_reduced(
                &seq,
                &params,
                0.0, // no tags needed; charge dynamics only
                ChargeState::BrightGround,
                rng::derive_seed(7, 0, rep as u64),
            )
            .unwrap();
            for (i, &t) in times.iter().enumerate() {
                if traj.is_bright_at(t) {
                    bright[i] += 1;
                }
            }
        }
        let expect =
            reduced_bright_analytic(&seq, &params, ChargeState::BrightGround, &times).unwrap();
        for (i, e) in expect.iter().enumerate() {
            let got = bright[i] as f64 / n as f64;
            let sigma = (e * (1.0 - e) / n as f64).sqrt().max(1e-4);
            assert!(
                (got - e).abs() < 5.0 * sigma,
                "t = {} ns: MC {got} vs analytic {e}",
                times[i]
            );
        }
    }
}
