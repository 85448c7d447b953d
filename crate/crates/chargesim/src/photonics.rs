//! Detection layer: emissions -> detected time tags -> sequence-synchronized
//! TCSPC histograms and windowed intensities.
//!
//! Detection is PSB-only: ZPL photons are filtered out upstream of the
//! detector. Background subtraction is deliberately not done here; analysis
//! owns it.

use crate::engine::reduced::ReducedTrajectory;
use crate::engine::rng;
use crate::engine::{Band, Trajectory};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorParams {
    /// Collection x filter x quantum efficiency over the PSB band.
    pub efficiency: f64,
    pub dark_rate_hz: f64,
    #[serde(default)]
    pub dead_time_ns: u64,
}

impl Default for DetectorParams {
    fn default() -> Self {
        DetectorParams { efficiency: 0.18, dark_rate_hz: 700.0, dead_time_ns: 0 }
    }
}

impl DetectorParams {
    pub fn validate(&self) -> Result<(), PhotonicsError> {
        if !(0.0..=1.0).contains(&self.efficiency) || !self.efficiency.is_finite() {
            return Err(PhotonicsError::InvalidDetector {
                field: "efficiency",
                value: self.efficiency,
            });
        }
        if !self.dark_rate_hz.is_finite() || self.dark_rate_hz < 0.0 {
            return Err(PhotonicsError::InvalidDetector {
                field: "dark_rate_hz",
                value: self.dark_rate_hz,
            });
        }
        Ok(())
    }
}

/// Detected tags of one or more repetitions. Tag times are nanoseconds since
/// the start of the tag's own repetition, strictly less than the period.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeTagStream {
    pub period_ns: u64,
    /// (tag time ns, repetition index), non-decreasing in time per repetition.
    pub tags: Vec<(u64, u64)>,
    pub total_repetitions: u64,
}

impl TimeTagStream {
    /// Relabels a single-repetition stream with its global repetition index.
    #[must_use]
    pub fn with_repetition(mut self, rep: u64) -> Self {
        for tag in &mut self.tags {
            tag.1 = rep;
        }
        self
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum PhotonicsError {
    #[error("invalid detector parameter {field}: {value}")]
    InvalidDetector { field: &'static str, value: f64 },
    #[error("stream period {got} ns does not match histogram period {expected} ns")]
    PeriodMismatch { expected: u64, got: u64 },
    #[error("bin width must be positive")]
    BadBinWidth,
    #[error("tag at {tag_ns} ns outside period {period_ns} ns")]
    TagOutOfRange { tag_ns: u64, period_ns: u64 },
    #[error("empty window [{start_ns}, {stop_ns})")]
    EmptyWindow { start_ns: u64, stop_ns: u64 },
    #[error("window [{start_ns}, {stop_ns}) outside period {period_ns} ns")]
    WindowOutOfRange { start_ns: u64, stop_ns: u64, period_ns: u64 },
}

/// Merges a sorted signal-tag list with detector dark counts and applies the
/// dead time. Tags closer than `dead_time_ns` to the previous accepted tag
/// are removed; at equal times the signal tag precedes the dark tag.
fn detector_pass(
    signal: Vec<u64>,
    period_ns: u64,
    det: &DetectorParams,
    rng: &mut ChaCha8Rng,
) -> Vec<u64> {
    let mut dark: Vec<u64> = Vec::new();
    if det.dark_rate_hz > 0.0 {
        let mut t = rng::exp_wait_ns(rng, det.dark_rate_hz);
        while t < period_ns as f64 {
            dark.push(t as u64);
            t += rng::exp_wait_ns(rng, det.dark_rate_hz);
        }
    }
    // merge two sorted lists, signal first on ties
    let mut merged = Vec::with_capacity(signal.len() + dark.len());
    let (mut i, mut j) = (0, 0);
    while i < signal.len() && j < dark.len() {
        if signal[i] <= dark[j] {
            merged.push(signal[i]);
            i += 1;
        } else {
            merged.push(dark[j]);
            j += 1;
        }
    }
    merged.extend_from_slice(&signal[i..]);
    merged.extend_from_slice(&dark[j..]);
    if det.dead_time_ns == 0 {
        return merged;
    }
    let mut kept: Vec<u64> = Vec::with_capacity(merged.len());
    for t in merged {
        if kept.last().map_or(true, |&last| t - last >= det.dead_time_ns) {
            kept.push(t);
        }
    }
    kept
}

/// Detects one full-mode repetition: each PSB emission survives with
/// probability `efficiency` (one thinning draw per PSB emission), dark counts
/// arrive as a homogeneous Poisson process over the period, and the dead time
/// prunes the merged stream. Deterministic in `seed`.
pub fn detect(
    traj: &Trajectory,
    det: &DetectorParams,
    seed: u64,
) -> Result<TimeTagStream, PhotonicsError> {
    det.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut signal = Vec::new();
    for &(t, band) in &traj.emissions {
        if band == Band::Psb && rng::uniform01(&mut rng) < det.efficiency {
            signal.push(t);
        }
    }
    let tags = detector_pass(signal, traj.period_ns, det, &mut rng);
    Ok(TimeTagStream {
        period_ns: traj.period_ns,
        tags: tags.into_iter().map(|t| (t, 0)).collect(),
        total_repetitions: 1,
    })
}

/// Detects one reduced-mode repetition. The efficiency is already folded into
/// the reduced emission rate, so only dark counts and dead time apply here.
pub fn detect_reduced(
    traj: &ReducedTrajectory,
    det: &DetectorParams,
    seed: u64,
) -> Result<TimeTagStream, PhotonicsError> {
    det.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tags = detector_pass(traj.tags_ns.clone(), traj.period_ns, det, &mut rng);
    Ok(TimeTagStream {
        period_ns: traj.period_ns,
        tags: tags.into_iter().map(|t| (t, 0)).collect(),
        total_repetitions: 1,
    })
}

/// Counts per time bin over one sequence period, accumulated over
/// repetitions. Bins tile the period exactly; the last bin may be short.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_width_ns: u64,
    pub period_ns: u64,
    pub counts: Vec<u64>,
    pub total_repetitions: u64,
}

impl Histogram {
    pub fn new(period_ns: u64, bin_width_ns: u64) -> Result<Self, PhotonicsError> {
        if bin_width_ns == 0 || period_ns == 0 {
            return Err(PhotonicsError::BadBinWidth);
        }
        let n_bins = period_ns.div_ceil(bin_width_ns) as usize;
        Ok(Histogram { bin_width_ns, period_ns, counts: vec![0; n_bins], total_repetitions: 0 })
    }

    /// Width of bin `b` in ns (the last bin may be truncated by the period).
    #[must_use]
    pub fn bin_duration_ns(&self, b: usize) -> u64 {
        let start = b as u64 * self.bin_width_ns;
        (self.period_ns - start).min(self.bin_width_ns)
    }

    pub fn add_stream(&mut self, stream: &TimeTagStream) -> Result<(), PhotonicsError> {
        if stream.period_ns != self.period_ns {
            return Err(PhotonicsError::PeriodMismatch {
                expected: self.period_ns,
                got: stream.period_ns,
            });
        }
        for &(t, _) in &stream.tags {
            if t >= self.period_ns {
                return Err(PhotonicsError::TagOutOfRange { tag_ns: t, period_ns: self.period_ns });
            }
            self.counts[(t / self.bin_width_ns) as usize] += 1;
        }
        self.total_repetitions += stream.total_repetitions;
        Ok(())
    }

    /// Commutative, associative merge of partial histograms.
    pub fn merge(&mut self, other: &Histogram) -> Result<(), PhotonicsError> {
        if other.period_ns != self.period_ns || other.bin_width_ns != self.bin_width_ns {
            return Err(PhotonicsError::PeriodMismatch {
                expected: self.period_ns,
                got: other.period_ns,
            });
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total_repetitions += other.total_repetitions;
        Ok(())
    }

    #[must_use]
    pub fn total_counts(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Mean rate of bin `b` in Hz.
    #[must_use]
    pub fn bin_rate_hz(&self, b: usize) -> f64 {
        let t_s = self.bin_duration_ns(b) as f64 * 1e-9 * self.total_repetitions as f64;
        self.counts[b] as f64 / t_s
    }

    /// Poisson standard error of `bin_rate_hz`.
    #[must_use]
    pub fn bin_rate_err_hz(&self, b: usize) -> f64 {
        let t_s = self.bin_duration_ns(b) as f64 * 1e-9 * self.total_repetitions as f64;
        (self.counts[b] as f64).sqrt() / t_s
    }

    /// CSV export: bin_start_ns,counts,rate_hz,rate_err_hz.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "bin_start_ns,counts,rate_hz,rate_err_hz")?;
        for b in 0..self.counts.len() {
            writeln!(
                w,
                "{},{},{:.6},{:.6}",
                b as u64 * self.bin_width_ns,
                self.counts[b],
                self.bin_rate_hz(b),
                self.bin_rate_err_hz(b)
            )?;
        }
        Ok(())
    }
}

/// Accumulates repetition streams into one histogram.
pub fn accumulate(
    streams: &[TimeTagStream],
    bin_width_ns: u64,
) -> Result<Histogram, PhotonicsError> {
    let period = streams.first().map_or(0, |s| s.period_ns);
    let mut hist = Histogram::new(period, bin_width_ns)?;
    for s in streams {
        hist.add_stream(s)?;
    }
    Ok(hist)
}

/// Background-uncorrected mean rate over `[start, stop)` with its Poisson
/// standard error. Bins partially covered by the window contribute with
/// their overlap fraction.
pub fn window_intensity(
    h: &Histogram,
    start_ns: u64,
    stop_ns: u64,
) -> Result<(f64, f64), PhotonicsError> {
    if start_ns >= stop_ns {
        return Err(PhotonicsError::EmptyWindow { start_ns, stop_ns });
    }
    if stop_ns > h.period_ns {
        return Err(PhotonicsError::WindowOutOfRange {
            start_ns,
            stop_ns,
            period_ns: h.period_ns,
        });
    }
    let b0 = (start_ns / h.bin_width_ns) as usize;
    let b1 = ((stop_ns - 1) / h.bin_width_ns) as usize;
    let mut weighted = 0.0f64;
    let mut variance = 0.0f64;
    for b in b0..=b1 {
        let bin_start = b as u64 * h.bin_width_ns;
        let bin_stop = bin_start + h.bin_duration_ns(b);
        let overlap = bin_stop.min(stop_ns).saturating_sub(bin_start.max(start_ns));
        let f = overlap as f64 / h.bin_duration_ns(b) as f64;
        weighted += f * h.counts[b] as f64;
        variance += f * f * h.counts[b] as f64;
    }
    let t_s = (stop_ns - start_ns) as f64 * 1e-9 * h.total_repetitions as f64;
    Ok((weighted / t_s, variance.sqrt() / t_s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::Band;
    use crate::sequence::NS_PER_MS;
    use approx::assert_relative_eq;

    fn fake_trajectory(psb_times: &[u64], zpl_times: &[u64], period_ns: u64) -> Trajectory {
        let mut emissions: Vec<(u64, Band)> = psb_times
            .iter()
            .map(|&t| (t, Band::Psb))
            .chain(zpl_times.iter().map(|&t| (t, Band::Zpl)))
            .collect();
        emissions.sort_by_key(|e| e.0);
        Trajectory {
            initial_state: crate::model::ChargeState::BrightGround,
            jumps: Vec::new(),
            emissions,
            period_ns,
        }
    }

    #[test]
    fn identity_detection_keeps_psb_exactly() {
        let traj = fake_trajectory(&[10, 400, 900, 5000], &[20, 450], 10_000);
        let det = DetectorParams { efficiency: 1.0, dark_rate_hz: 0.0, dead_time_ns: 0 };
        let stream = detect(&traj, &det, 99).unwrap();
        let times: Vec<u64> = stream.tags.iter().map(|t| t.0).collect();
        assert_eq!(times, vec![10, 400, 900, 5000]);
    }

    #[test]
    fn zpl_always_filtered() {
        let traj = fake_trajectory(&[], &[5, 10, 15], 1_000);
        let det = DetectorParams { efficiency: 1.0, dark_rate_hz: 0.0, dead_time_ns: 0 };
        assert!(detect(&traj, &det, 1).unwrap().tags.is_empty());
    }

    #[test]
    fn dark_count_mean_over_45ms() {
        // 700 Hz x 45 ms = 31.5 expected dark tags per repetition.
        let traj = fake_trajectory(&[], &[], 45 * NS_PER_MS);
        let det = DetectorParams::default();
        let n = 1_000usize;
        let total: usize = (0..n)
            .map(|seed| detect(&traj, &det, seed as u64).unwrap().tags.len())
            .sum();
        let mean = total as f64 / n as f64;
        let sigma = (31.5 / n as f64).sqrt();
        assert!((mean - 31.5).abs() < 4.0 * sigma, "mean {mean}");
    }

    #[test]
    fn dark_histogram_flat_chi_square() {
        let traj = fake_trajectory(&[], &[], 45 * NS_PER_MS);
        let det = DetectorParams::default();
        let mut hist = Histogram::new(45 * NS_PER_MS, NS_PER_MS).unwrap();
        for seed in 0..1_000u64 {
            hist.add_stream(&detect(&traj, &det, seed).unwrap()).unwrap();
        }
        let expected = 700.0 * 1e-3 * 1_000.0;
        let chi2: f64 =
            hist.counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // 45 bins; chi-square 0.999 quantile of df = 45 is ~80.1
        assert!(chi2 < 80.1, "chi2 = {chi2}");
        for b in 0..hist.counts.len() {
            assert!((hist.bin_rate_hz(b) - 700.0).abs() < 5.0 * hist.bin_rate_err_hz(b));
        }
    }

    #[test]
    fn thinning_is_binomial_chi_square() {
        // 100 PSB emissions at efficiency 0.5; per-repetition accepted counts
        // follow Binomial(100, 0.5). Chi-square over pooled categories.
        use statrs::distribution::{Binomial, Discrete};
        let times: Vec<u64> = (0..100).map(|i| 100 + i * 50).collect();
        let traj = fake_trajectory(&times, &[], 10_000);
        let det = DetectorParams { efficiency: 0.5, dark_rate_hz: 0.0, dead_time_ns: 0 };
        let n = 2_000usize;
        let mut freq = [0u32; 101];
        for seed in 0..n {
            let k = detect(&traj, &det, seed as u64).unwrap().tags.len();
            freq[k] += 1;
        }
        let law = Binomial::new(0.5, 100).unwrap();
        // pool k into categories with expected count >= 5
        let mut chi2 = 0.0f64;
        let mut df = -1i32;
        let mut obs_acc = 0.0f64;
        let mut exp_acc = 0.0f64;
        for k in 0..=100usize {
            obs_acc += f64::from(freq[k]);
            exp_acc += n as f64 * law.pmf(k as u64);
            if exp_acc >= 5.0 {
                chi2 += (obs_acc - exp_acc).powi(2) / exp_acc;
                df += 1;
                obs_acc = 0.0;
                exp_acc = 0.0;
            }
        }
        if exp_acc > 0.0 {
            chi2 += (obs_acc - exp_acc).powi(2) / exp_acc;
            df += 1;
        }
        // alpha = 0.01: compare against the 0.99 chi-square quantile
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let crit = ChiSquared::new(f64::from(df)).unwrap().inverse_cdf(0.99);
        assert!(chi2 < crit, "chi2 = {chi2}, crit = {crit} (df = {df})");
    }

    #[test]
    fn dead_time_prunes_close_tags() {
        let traj = fake_trajectory(&[0, 50, 120, 180, 400], &[], 1_000);
        let det = DetectorParams { efficiency: 1.0, dark_rate_hz: 0.0, dead_time_ns: 100 };
        let stream = detect(&traj, &det, 0).unwrap();
        let times: Vec<u64> = stream.tags.iter().map(|t| t.0).collect();
        assert_eq!(times, vec![0, 120, 400]);
    }

    #[test]
    fn count_conservation_and_single_tag_binning() {
        let traj = fake_trajectory(&[0], &[], 4_000);
        let det = DetectorParams { efficiency: 1.0, dark_rate_hz: 0.0, dead_time_ns: 0 };
        let stream = detect(&traj, &det, 7).unwrap();
        let hist = accumulate(std::slice::from_ref(&stream), 1_000).unwrap();
        assert_eq!(hist.counts, vec![1, 0, 0, 0]);
        assert_eq!(hist.total_counts(), 1);
    }

    #[test]
    fn accumulate_rejects_mismatched_periods() {
        let a = TimeTagStream { period_ns: 1_000, tags: vec![], total_repetitions: 1 };
        let b = TimeTagStream { period_ns: 2_000, tags: vec![], total_repetitions: 1 };
        assert!(matches!(
            accumulate(&[a, b], 100),
            Err(PhotonicsError::PeriodMismatch { .. })
        ));
    }

    #[test]
    fn bin_doubling_merges_adjacent_counts() {
        let period = 8_000u64;
        let tags: Vec<u64> = vec![10, 950, 1_001, 2_500, 3_999, 4_000, 7_999, 7_999];
        let stream = TimeTagStream {
            period_ns: period,
            tags: tags.into_iter().map(|t| (t, 0)).collect(),
            total_repetitions: 1,
        };
        let fine = accumulate(std::slice::from_ref(&stream), 1_000).unwrap();
        let coarse = accumulate(std::slice::from_ref(&stream), 2_000).unwrap();
        assert_eq!(fine.counts.len(), 8);
        assert_eq!(coarse.counts.len(), 4);
        for b in 0..coarse.counts.len() {
            assert_eq!(coarse.counts[b], fine.counts[2 * b] + fine.counts[2 * b + 1]);
        }
    }

    #[test]
    fn last_short_bin_tiles_period() {
        let hist = Histogram::new(4_500, 1_000).unwrap();
        assert_eq!(hist.counts.len(), 5);
        assert_eq!(hist.bin_duration_ns(4), 500);
        let mut h = hist.clone();
        h.add_stream(&TimeTagStream {
            period_ns: 4_500,
            tags: vec![(4_499, 0)],
            total_repetitions: 1,
        })
        .unwrap();
        assert_eq!(h.counts[4], 1);
        // short bin rate uses the actual 500 ns duration
        assert_relative_eq!(h.bin_rate_hz(4), 1.0 / 500e-9, max_relative = 1e-12);
    }

    #[test]
    fn window_intensity_whole_period_and_fractions() {
        let stream = TimeTagStream {
            period_ns: 4_000,
            tags: vec![(500, 0), (1_500, 0), (2_500, 0), (3_500, 0)],
            total_repetitions: 2,
        };
        let h = accumulate(std::slice::from_ref(&stream), 1_000).unwrap();
        let (rate, err) = window_intensity(&h, 0, 4_000).unwrap();
        assert_relative_eq!(rate, 4.0 / (2.0 * 4_000e-9), max_relative = 1e-12);
        assert_relative_eq!(err, 2.0 / (2.0 * 4_000e-9), max_relative = 1e-12);
        // half-bin overlap picks up half of each boundary bin's counts
        let (rate_half, _) = window_intensity(&h, 500, 1_500).unwrap();
        assert_relative_eq!(rate_half, 1.0 / (2.0 * 1_000e-9), max_relative = 1e-12);
        assert!(matches!(
            window_intensity(&h, 1_000, 1_000),
            Err(PhotonicsError::EmptyWindow { .. })
        ));
        assert!(matches!(
            window_intensity(&h, 3_000, 5_000),
            Err(PhotonicsError::WindowOutOfRange { .. })
        ));
    }

    #[test]
    fn detector_validation() {
        let bad = DetectorParams { efficiency: 1.5, dark_rate_hz: 700.0, dead_time_ns: 0 };
        assert!(bad.validate().is_err());
        let bad2 = DetectorParams { efficiency: 0.5, dark_rate_hz: -1.0, dead_time_ns: 0 };
        assert!(bad2.validate().is_err());
        assert!(DetectorParams::default().validate().is_ok());
    }

    #[test]
    fn csv_format() {
        let stream = TimeTagStream {
            period_ns: 2_000,
            tags: vec![(100, 0), (1_100, 0)],
            total_repetitions: 4,
        };
        let h = accumulate(std::slice::from_ref(&stream), 1_000).unwrap();
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("bin_start_ns,counts,rate_hz,rate_err_hz"));
        assert_eq!(lines.next(), Some("0,1,250000.000000,250000.000000"));
        assert_eq!(lines.next(), Some("1000,1,250000.000000,250000.000000"));
        assert_eq!(lines.next(), None);
    }
}
