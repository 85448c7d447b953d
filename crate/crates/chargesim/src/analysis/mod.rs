//! Fitting and summary extraction for binned count data.
//!
//! Rates are Hz throughout; times on the fit axis are milliseconds and
//! detunings are MHz, matching the histogram and scan producers.

pub mod lm;

use nalgebra::{SVector, Vector3, Vector4};
use serde::Serialize;
use thiserror::Error;

use crate::photonics::{window_intensity, Histogram, PhotonicsError};
use crate::sequence::Window;
use lm::{fit, LmOptions};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("no decay signal in window")]
    NoDecaySignal,
    #[error("no line detected")]
    NoLineDetected,
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("scan span {span:.3} must cover at least two estimated linewidths ({fwhm:.3})")]
    SpanTooNarrow { span: f64, fwhm: f64 },
    #[error("no loss to normalize: initial intensity {initial:.3} <= final {final_:.3}")]
    NoLossToNormalize { initial: f64, final_: f64 },
    #[error("inconsistent protocols across runs")]
    InconsistentProtocols,
    #[error(transparent)]
    Photonics(#[from] PhotonicsError),
}

#[derive(Debug, Clone, Serialize)]
pub struct FitParameter {
    pub name: &'static str,
    pub value: f64,
    /// One standard error from the curvature at the optimum; zero when the
    /// fit did not converge.
    pub std_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitResult {
    pub parameters: Vec<FitParameter>,
    pub reduced_chi2: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl FitResult {
    pub fn parameter(&self, name: &str) -> Option<&FitParameter> {
        self.parameters.iter().find(|p| p.name == name)
    }

    /// Panics if the parameter is absent; fit constructors fix the name set.
    pub fn value(&self, name: &str) -> f64 {
        self.parameter(name).expect("unknown fit parameter").value
    }

    pub fn std_error(&self, name: &str) -> f64 {
        self.parameter(name).expect("unknown fit parameter").std_error
    }

    fn from_outcome<const P: usize>(
        names: [&'static str; P],
        out: &lm::LmOutcome<P>,
        n_points: usize,
    ) -> FitResult {
        let dof = n_points.saturating_sub(P).max(1) as f64;
        let parameters = names
            .iter()
            .enumerate()
            .map(|(j, &name)| FitParameter {
                name,
                value: out.params[j],
                std_error: if out.converged {
                    out.covariance[(j, j)].max(0.0).sqrt()
                } else {
                    0.0
                },
            })
            .collect();
        FitResult {
            parameters,
            reduced_chi2: out.chi2 / dof,
            converged: out.converged,
            iterations: out.iterations,
        }
    }
}

/// Fits rate(t) = amplitude * exp(-t / tau) + background to (t_ms, rate_hz,
/// err_hz) points. Parameter names: `amplitude_hz`, `tau_ms`, `background_hz`.
/// The amplitude refers to t = 0 on the supplied axis.
///
/// Starting values come from the data: background from the mean of the last
/// tenth of the points, amplitude from the first point above that, tau from
/// the first crossing of background + amplitude / e.
pub fn fit_exponential_points(points: &[(f64, f64, f64)]) -> Result<FitResult, AnalysisError> {
    if points.len() < 5 {
        return Err(AnalysisError::TooFewPoints { needed: 5, got: points.len() });
    }
    let first = points[0];
    let last = points[points.len() - 1];
    if (last.1 - first.1).abs() <= 1e-12 * first.1.abs()
        && points.iter().all(|p| (p.1 - first.1).abs() <= 1e-12 * first.1.abs().max(1.0))
    {
        return Err(AnalysisError::NoDecaySignal);
    }
    let tail = points.len().div_ceil(10);
    let background0: f64 =
        points[points.len() - tail..].iter().map(|p| p.1).sum::<f64>() / tail as f64;
    let excess0 = first.1 - background0;
    if excess0 <= 0.0 {
        return Err(AnalysisError::NoDecaySignal);
    }
    let threshold = background0 + excess0 / std::f64::consts::E;
    let tau0 = points
        .iter()
        .find(|p| p.1 <= threshold)
        .map(|p| (p.0 - first.0).max(f64::EPSILON))
        .unwrap_or((last.0 - first.0) / 3.0);
    // extrapolate the first point's excess back to t = 0
    let amplitude0 = excess0 * (first.0 / tau0).min(50.0).exp();
    let data: Vec<(f64, f64, f64)> =
        points.iter().map(|&(t, y, e)| (t, y, 1.0 / (e * e).max(1e-300))).collect();
    let model = |t: f64, p: &SVector<f64, 3>| {
        let e = (-t / p[1]).exp();
        let dv_dtau = p[0] * e * t / (p[1] * p[1]);
        (p[0] * e + p[2], Vector3::new(e, dv_dtau, 1.0))
    };
    let out = fit(model, &data, Vector3::new(amplitude0, tau0, background0), &LmOptions::default());
    Ok(FitResult::from_outcome(["amplitude_hz", "tau_ms", "background_hz"], &out, data.len()))
}

/// Fits an exponential decay to the histogram bins fully inside `window`.
/// Bin centers become the time axis, in ms relative to the window start;
/// Poisson weights use a variance of max(counts, 1) per bin.
pub fn fit_exponential(h: &Histogram, window: Window) -> Result<FitResult, AnalysisError> {
    let points = bins_in_window(h, window)?;
    if points.iter().map(|p| p.3).sum::<u64>() == 0 {
        return Err(AnalysisError::NoDecaySignal);
    }
    fit_exponential_points(&points.iter().map(|&(t, y, e, _)| (t, y, e)).collect::<Vec<_>>())
}

/// (t_ms_from_window_start, rate_hz, err_hz, counts) for bins inside the window.
fn bins_in_window(
    h: &Histogram,
    window: Window,
) -> Result<Vec<(f64, f64, f64, u64)>, AnalysisError> {
    if window.stop_ns <= window.start_ns || window.stop_ns > h.period_ns {
        return Err(AnalysisError::Photonics(PhotonicsError::WindowOutOfRange {
            start_ns: window.start_ns,
            stop_ns: window.stop_ns,
            period_ns: h.period_ns,
        }));
    }
    let mut points = Vec::new();
    for b in 0..h.counts.len() {
        let start = b as u64 * h.bin_width_ns;
        let stop = start + h.bin_duration_ns(b);
        if start < window.start_ns || stop > window.stop_ns {
            continue;
        }
        let center_ms = (start + stop) as f64 / 2.0 * 1e-6 - window.start_ns as f64 * 1e-6;
        let counts = h.counts[b];
        let scale = 1e9 / (h.bin_duration_ns(b) as f64 * h.total_repetitions as f64);
        points.push((center_ms, counts as f64 * scale, (counts.max(1) as f64).sqrt() * scale, counts));
    }
    Ok(points)
}

/// Fits rate(d) = amplitude * (w/2)^2 / ((d - center)^2 + (w/2)^2) + background
/// to (detuning_mhz, rate_hz, err_hz) scan points. Parameter names:
/// `amplitude_hz`, `center_mhz`, `fwhm_mhz`, `background_hz`.
///
/// Requires at least 7 points and a scan span of at least two estimated
/// linewidths; a scan with no contrast is rejected as "no line detected".
pub fn fit_lorentzian(points: &[(f64, f64, f64)]) -> Result<FitResult, AnalysisError> {
    if points.len() < 7 {
        return Err(AnalysisError::TooFewPoints { needed: 7, got: points.len() });
    }
    let mut sorted: Vec<(f64, f64, f64)> = points.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (peak_idx, &(peak_x, peak_y, _)) = sorted
        .iter()
        .enumerate()
        .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .expect("non-empty scan");
    let background0 = sorted.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let amplitude0 = peak_y - background0;
    let typical_err = sorted.iter().map(|p| p.2.abs()).sum::<f64>() / sorted.len() as f64;
    if amplitude0 <= 3.0 * typical_err.max(1e-12 * peak_y.abs()).max(f64::MIN_POSITIVE) {
        return Err(AnalysisError::NoLineDetected);
    }
    let half = background0 + amplitude0 / 2.0;
    // linear interpolation to the half-maximum crossings on each flank
    let mut left = None;
    for i in (0..peak_idx).rev() {
        if sorted[i].1 <= half {
            let (x0, y0, _) = sorted[i];
            let (x1, y1, _) = sorted[i + 1];
            left = Some(x0 + (half - y0) / (y1 - y0) * (x1 - x0));
            break;
        }
    }
    let mut right = None;
    for i in peak_idx + 1..sorted.len() {
        if sorted[i].1 <= half {
            let (x0, y0, _) = sorted[i - 1];
            let (x1, y1, _) = sorted[i];
            right = Some(x0 + (half - y0) / (y1 - y0) * (x1 - x0));
            break;
        }
    }
    let span = sorted[sorted.len() - 1].0 - sorted[0].0;
    let fwhm0 = match (left, right) {
        (Some(l), Some(r)) if r > l => r - l,
        (Some(l), None) => 2.0 * (peak_x - l),
        (None, Some(r)) => 2.0 * (r - peak_x),
        _ => span / 4.0,
    };
    if span < 2.0 * fwhm0 {
        return Err(AnalysisError::SpanTooNarrow { span, fwhm: fwhm0 });
    }
    let data: Vec<(f64, f64, f64)> =
        sorted.iter().map(|&(x, y, e)| (x, y, 1.0 / (e * e).max(1e-300))).collect();
    let model = |x: f64, p: &SVector<f64, 4>| {
        let u = x - p[1];
        let hw = p[2] / 2.0;
        let h = hw * hw;
        let denom = u * u + h;
        let shape = h / denom;
        let dv_da = shape;
        let dv_dc = p[0] * h * 2.0 * u / (denom * denom);
        let dv_dw = p[0] * u * u / (denom * denom) * hw;
        (p[0] * shape + p[3], Vector4::new(dv_da, dv_dc, dv_dw, 1.0))
    };
    let out = fit(
        model,
        &data,
        Vector4::new(amplitude0, peak_x, fwhm0, background0),
        &LmOptions::default(),
    );
    Ok(FitResult::from_outcome(
        ["amplitude_hz", "center_mhz", "fwhm_mhz", "background_hz"],
        &out,
        data.len(),
    ))
}

/// (i2_initial - i1_final) / (i1_initial - i1_final): 1 when the second pulse
/// opens at the first pulse's initial intensity, 0 when no recovery happened.
pub fn normalized_recovery(
    i1_initial: f64,
    i1_final: f64,
    i2_initial: f64,
) -> Result<f64, AnalysisError> {
    if i1_initial <= i1_final {
        return Err(AnalysisError::NoLossToNormalize { initial: i1_initial, final_: i1_final });
    }
    Ok((i2_initial - i1_final) / (i1_initial - i1_final))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Intensity {
    pub rate_hz: f64,
    pub err_hz: f64,
}

impl Intensity {
    pub fn new(rate_hz: f64, err_hz: f64) -> Self {
        Intensity { rate_hz, err_hz }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RecoveryPoint {
    pub tau2_ms: f64,
    pub i1_initial: Intensity,
    pub i1_final: Intensity,
    pub i2_initial: Intensity,
    pub i2_final: Intensity,
    pub recovery: f64,
    /// First-order propagated standard error of `recovery`.
    pub recovery_err: f64,
}

/// Builds a recovery point from the four windowed intensities, propagating
/// their errors through the normalization to first order.
pub fn recovery_point(
    tau2_ms: f64,
    i1_initial: Intensity,
    i1_final: Intensity,
    i2_initial: Intensity,
    i2_final: Intensity,
) -> Result<RecoveryPoint, AnalysisError> {
    let r = normalized_recovery(i1_initial.rate_hz, i1_final.rate_hz, i2_initial.rate_hz)?;
    let span = i1_initial.rate_hz - i1_final.rate_hz;
    // dr/d(i1i) = -r/span, dr/d(i1f) = (r-1)/span, dr/d(i2i) = 1/span
    let var = (r * i1_initial.err_hz).powi(2)
        + ((1.0 - r) * i1_final.err_hz).powi(2)
        + i2_initial.err_hz.powi(2);
    Ok(RecoveryPoint {
        tau2_ms,
        i1_initial,
        i1_final,
        i2_initial,
        i2_final,
        recovery: r,
        recovery_err: var.sqrt() / span,
    })
}

/// Windows a sweep run needs summarized. `stabilized` is the probe window of
/// an init/readout protocol and is absent for protocols without one.
#[derive(Debug, Clone, Copy)]
pub struct SummaryWindows {
    pub stabilized: Option<Window>,
    pub background: Window,
    pub initial: Window,
    pub final_: Window,
}

#[derive(Debug, Clone)]
pub struct SweepEntry<'a> {
    pub axis: f64,
    pub histogram: &'a Histogram,
    pub windows: SummaryWindows,
    /// Fit or recovery metric computed upstream, with its error.
    pub metric: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub axis: f64,
    pub background_hz: f64,
    /// Background-subtracted rates.
    pub stabilized: Option<Intensity>,
    pub initial: Intensity,
    pub final_: Intensity,
    pub metric: Option<(f64, f64)>,
}

/// Summarizes one row per run: window rates with the dark-gap background
/// subtracted, plus the per-run metric. All runs must share the protocol
/// shape (same bin width and window durations); only the axis may differ.
pub fn sweep_summary(entries: &[SweepEntry]) -> Result<Vec<SweepRow>, AnalysisError> {
    let Some(first) = entries.first() else {
        return Ok(Vec::new());
    };
    let shape = |e: &SweepEntry| {
        (
            e.histogram.bin_width_ns,
            e.windows.stabilized.map(|w| w.stop_ns - w.start_ns),
            e.windows.background.stop_ns - e.windows.background.start_ns,
            e.windows.initial.stop_ns - e.windows.initial.start_ns,
            e.windows.final_.stop_ns - e.windows.final_.start_ns,
        )
    };
    if entries.iter().any(|e| shape(e) != shape(first)) {
        return Err(AnalysisError::InconsistentProtocols);
    }
    let mut rows = Vec::with_capacity(entries.len());
    for e in entries {
        let (bg, bg_err) =
            window_intensity(e.histogram, e.windows.background.start_ns, e.windows.background.stop_ns)?;
        let subtracted = |w: Window| -> Result<Intensity, AnalysisError> {
            let (rate, err) = window_intensity(e.histogram, w.start_ns, w.stop_ns)?;
            Ok(Intensity::new(rate - bg, err.hypot(bg_err)))
        };
        let stabilized = match e.windows.stabilized {
            Some(w) => Some(subtracted(w)?),
            None => None,
        };
        rows.push(SweepRow {
            axis: e.axis,
            background_hz: bg,
            stabilized,
            initial: subtracted(e.windows.initial)?,
            final_: subtracted(e.windows.final_)?,
            metric: e.metric,
        });
    }
    Ok(rows)
}
