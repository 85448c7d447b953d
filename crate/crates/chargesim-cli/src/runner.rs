//! Sweep execution: turns a validated config into artifacts on disk.
//!
//! Runs execute concurrently on a worker pool; each run's repetition loop is
//! sequential and seeded by (master seed, run key, repetition), so outputs
//! are byte-identical for any worker count. Results are merged and written
//! in run-plan (axis) order.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use chargesim::analysis::{
    fit_exponential, fit_lorentzian, recovery_point, sweep_summary, FitResult, Intensity,
    RecoveryPoint, SummaryWindows, SweepEntry,
};
use chargesim::engine::reduced::simulate_reduced;
use chargesim::engine::rng::derive_seed;
use chargesim::engine::simulate_trajectory;
use chargesim::photonics::{detect, detect_reduced, window_intensity, Histogram};
use chargesim::sequence::{protocols, PulseSequence, Window};

use crate::config::{AxisValues, RunKind, RunPlan, RunShape, SimMode, ValidatedConfig};

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path, source: std::io::Error) -> RunnerError {
    RunnerError::Io { path: path.display().to_string(), source }
}

/// One output file, hashed over the exact bytes written.
#[derive(Debug, Clone, Serialize)]
pub struct WrittenArtifact {
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Clone)]
pub enum RunStatus {
    Ok,
    Failed(String),
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub index: usize,
    pub axis: AxisValues,
    pub label: String,
    pub status: RunStatus,
    pub artifacts: Vec<WrittenArtifact>,
}

/// Per-run analysis results kept in memory for the sweep summary.
#[derive(Debug, Clone)]
pub enum RunSummary {
    Decay {
        voltage_v: f64,
        power_uw: f64,
        fit: Result<FitResult, String>,
    },
    InitReadout {
        voltage_v: f64,
        power_uw: f64,
        histogram: Histogram,
        windows: protocols::InitReadoutWindows,
        fit: Result<FitResult, String>,
    },
    Recovery {
        voltage_v: f64,
        tau2_ms: f64,
        near_resonant: bool,
        power_uw: f64,
        point: Result<RecoveryPoint, String>,
    },
    Scan {
        voltage_v: f64,
        power_uw: f64,
        points: Vec<(f64, f64, f64)>,
        fit: Result<FitResult, String>,
    },
    Plain,
}

#[derive(Debug)]
pub struct ExecutedSweep {
    pub out_dir: PathBuf,
    pub runs: Vec<RunReport>,
    /// Summaries of successful runs, in run order.
    pub summaries: Vec<(usize, RunSummary)>,
    pub summary_artifacts: Vec<WrittenArtifact>,
    pub failed: usize,
}

struct RunResult {
    label: String,
    outcome: Result<(Vec<(String, Vec<u8>)>, RunSummary), String>,
}

/// Executes the full run plan and writes all artifacts under `out_dir`.
pub fn execute(
    v: &ValidatedConfig,
    out_dir: &Path,
    workers: usize,
) -> Result<ExecutedSweep, RunnerError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("worker pool");
    let results: Vec<RunResult> =
        pool.install(|| v.runs.par_iter().map(|plan| execute_run(v, plan)).collect());

    std::fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    let mut runs = Vec::with_capacity(results.len());
    let mut summaries = Vec::new();
    let mut failed = 0;
    for (plan, result) in v.runs.iter().zip(results) {
        let report = match result.outcome {
            Ok((artifacts, summary)) => {
                let mut written = Vec::with_capacity(artifacts.len());
                for (name, bytes) in artifacts {
                    let path = out_dir.join(&name);
                    std::fs::write(&path, &bytes).map_err(|e| io_err(&path, e))?;
                    written.push(WrittenArtifact { name, sha256: crate::manifest::sha256_hex(&bytes) });
                }
                summaries.push((plan.index, summary));
                RunReport {
                    index: plan.index,
                    axis: plan.axis,
                    label: result.label,
                    status: RunStatus::Ok,
                    artifacts: written,
                }
            }
            Err(msg) => {
                failed += 1;
                RunReport {
                    index: plan.index,
                    axis: plan.axis,
                    label: result.label,
                    status: RunStatus::Failed(msg),
                    artifacts: Vec::new(),
                }
            }
        };
        runs.push(report);
    }

    let mut summary_artifacts = Vec::new();
    if let Some(bytes) = summary_csv(&summaries)? {
        let path = out_dir.join("sweep_summary.csv");
        std::fs::write(&path, &bytes).map_err(|e| io_err(&path, e))?;
        summary_artifacts.push(WrittenArtifact {
            name: "sweep_summary.csv".into(),
            sha256: crate::manifest::sha256_hex(&bytes),
        });
    }
    Ok(ExecutedSweep { out_dir: out_dir.to_path_buf(), runs, summaries, summary_artifacts, failed })
}

/// Simulates one repetition stack into a histogram. `run_key` feeds the seed
/// derivation: plain runs use index << 32, scan points add 1 + point index.
fn simulate_histogram(
    v: &ValidatedConfig,
    seq: &PulseSequence,
    run_key: u64,
) -> Result<Histogram, String> {
    let mut hist = Histogram::new(seq.period_ns(), v.bin_width_ns).map_err(|e| e.to_string())?;
    for rep in 0..v.repetitions {
        let traj_seed = derive_seed(v.seed, run_key, 2 * rep);
        let det_seed = derive_seed(v.seed, run_key, 2 * rep + 1);
        let stream = match v.mode {
            SimMode::Reduced => {
                let traj =
                    simulate_reduced(seq, &v.params, v.detector.efficiency, v.initial, traj_seed)
                        .map_err(|e| e.to_string())?;
                detect_reduced(&traj, &v.detector, det_seed).map_err(|e| e.to_string())?
            }
            SimMode::Full => {
                let traj = simulate_trajectory(seq, &v.params, v.initial, traj_seed)
                    .map_err(|e| e.to_string())?;
                detect(&traj, &v.detector, det_seed).map_err(|e| e.to_string())?
            }
        };
        hist.add_stream(&stream).map_err(|e| e.to_string())?;
    }
    Ok(hist)
}

fn execute_run(v: &ValidatedConfig, plan: &RunPlan) -> RunResult {
    match &plan.kind {
        RunKind::Time { sequence, shape } => {
            let label = sequence.label.clone();
            let outcome = execute_time_run(v, plan, sequence, shape);
            RunResult { label, outcome }
        }
        RunKind::Scan { voltage_v, power_uw, detunings_mhz, sequences } => {
            let label = format!("ple scan P={power_uw} uW V={voltage_v}");
            let outcome = execute_scan_run(v, plan, *voltage_v, *power_uw, detunings_mhz, sequences);
            RunResult { label, outcome }
        }
    }
}

#[derive(Serialize)]
struct WindowReport {
    name: &'static str,
    start_ns: u64,
    stop_ns: u64,
    rate_hz: f64,
    err_hz: f64,
}

#[derive(Serialize)]
struct FitReport<'a> {
    run: usize,
    protocol: &'a str,
    axis: &'a AxisValues,
    #[serde(skip_serializing_if = "Option::is_none")]
    windows: Option<Vec<WindowReport>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    fit: Option<&'a FitResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    fit_error: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    recovery: Option<&'a RecoveryPoint>,
}

fn fit_report_bytes(report: &FitReport) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(report).expect("fit report serializes");
    bytes.push(b'\n');
    bytes
}

fn intensity_at(h: &Histogram, w: Window) -> Result<Intensity, String> {
    let (rate, err) = window_intensity(h, w.start_ns, w.stop_ns).map_err(|e| e.to_string())?;
    Ok(Intensity::new(rate, err))
}

type RunPayload = (Vec<(String, Vec<u8>)>, RunSummary);

fn execute_time_run(
    v: &ValidatedConfig,
    plan: &RunPlan,
    sequence: &PulseSequence,
    shape: &RunShape,
) -> Result<RunPayload, String> {
    let hist = simulate_histogram(v, sequence, (plan.index as u64) << 32)?;
    let mut csv = Vec::new();
    hist.write_csv(&mut csv).map_err(|e| e.to_string())?;
    let mut artifacts = vec![(format!("run{:03}_histogram.csv", plan.index), csv)];

    let (summary, report) = match shape {
        RunShape::Plain => (RunSummary::Plain, None),
        RunShape::Decay { fit, voltage_v, power_uw } => {
            let res = fit_exponential(&hist, *fit).map_err(|e| e.to_string());
            let report = FitReport {
                run: plan.index,
                protocol: &sequence.label,
                axis: &plan.axis,
                windows: None,
                fit: res.as_ref().ok(),
                fit_error: res.as_ref().err().map(String::as_str),
                recovery: None,
            };
            let bytes = fit_report_bytes(&report);
            (
                RunSummary::Decay { voltage_v: *voltage_v, power_uw: *power_uw, fit: res },
                Some(bytes),
            )
        }
        RunShape::InitReadout { windows, voltage_v, power_uw } => {
            let res = fit_exponential(&hist, windows.readout).map_err(|e| e.to_string());
            let report_windows = vec![
                window_report("probe", &hist, windows.probe)?,
                window_report("background", &hist, windows.background)?,
                window_report("readout_first_ms", &hist, windows.readout_first_ms)?,
                window_report("readout_last_ms", &hist, windows.readout_last_ms)?,
            ];
            let report = FitReport {
                run: plan.index,
                protocol: &sequence.label,
                axis: &plan.axis,
                windows: Some(report_windows),
                fit: res.as_ref().ok(),
                fit_error: res.as_ref().err().map(String::as_str),
                recovery: None,
            };
            let bytes = fit_report_bytes(&report);
            (
                RunSummary::InitReadout {
                    voltage_v: *voltage_v,
                    power_uw: *power_uw,
                    histogram: hist,
                    windows: *windows,
                    fit: res,
                },
                Some(bytes),
            )
        }
        RunShape::Recovery { windows, voltage_v, tau2_ms, near_resonant, power_uw } => {
            let i1i = intensity_at(&hist, windows.i1_init)?;
            let i1f = intensity_at(&hist, windows.i1_final)?;
            let i2i = intensity_at(&hist, windows.i2_init)?;
            let i2f = intensity_at(&hist, windows.i2_final)?;
            let point = recovery_point(*tau2_ms, i1i, i1f, i2i, i2f).map_err(|e| e.to_string());
            let report_windows = vec![
                window_report("background", &hist, windows.background)?,
                window_report("i1_init", &hist, windows.i1_init)?,
                window_report("i1_final", &hist, windows.i1_final)?,
                window_report("i2_init", &hist, windows.i2_init)?,
                window_report("i2_final", &hist, windows.i2_final)?,
            ];
            let report = FitReport {
                run: plan.index,
                protocol: &sequence.label,
                axis: &plan.axis,
                windows: Some(report_windows),
                fit: None,
                fit_error: point.as_ref().err().map(String::as_str),
                recovery: point.as_ref().ok(),
            };
            let bytes = fit_report_bytes(&report);
            (
                RunSummary::Recovery {
                    voltage_v: *voltage_v,
                    tau2_ms: *tau2_ms,
                    near_resonant: *near_resonant,
                    power_uw: *power_uw,
                    point,
                },
                Some(bytes),
            )
        }
    };
    if let Some(bytes) = report {
        artifacts.push((format!("run{:03}_fit.json", plan.index), bytes));
    }
    Ok((artifacts, summary))
}

fn window_report(name: &'static str, h: &Histogram, w: Window) -> Result<WindowReport, String> {
    let i = intensity_at(h, w)?;
    Ok(WindowReport { name, start_ns: w.start_ns, stop_ns: w.stop_ns, rate_hz: i.rate_hz, err_hz: i.err_hz })
}

fn execute_scan_run(
    v: &ValidatedConfig,
    plan: &RunPlan,
    voltage_v: f64,
    power_uw: f64,
    detunings_mhz: &[f64],
    sequences: &[PulseSequence],
) -> Result<RunPayload, String> {
    let points: Vec<(f64, f64, f64)> = detunings_mhz
        .par_iter()
        .zip(sequences.par_iter())
        .enumerate()
        .map(|(d, (&detuning, seq))| -> Result<(f64, f64, f64), String> {
            let run_key = ((plan.index as u64) << 32) | (d as u64 + 1);
            let period_s = seq.period_ns() as f64 * 1e-9;
            let mut total: u64 = 0;
            for rep in 0..v.repetitions {
                let traj_seed = derive_seed(v.seed, run_key, 2 * rep);
                let det_seed = derive_seed(v.seed, run_key, 2 * rep + 1);
                let tags = match v.mode {
                    SimMode::Reduced => {
                        let traj = simulate_reduced(
                            seq,
                            &v.params,
                            v.detector.efficiency,
                            v.initial,
                            traj_seed,
                        )
                        .map_err(|e| e.to_string())?;
                        detect_reduced(&traj, &v.detector, det_seed).map_err(|e| e.to_string())?
                    }
                    SimMode::Full => {
                        let traj = simulate_trajectory(seq, &v.params, v.initial, traj_seed)
                            .map_err(|e| e.to_string())?;
                        detect(&traj, &v.detector, det_seed).map_err(|e| e.to_string())?
                    }
                };
                total += tags.tags.len() as u64;
            }
            let denom = v.repetitions as f64 * period_s;
            Ok((detuning, total as f64 / denom, (total.max(1) as f64).sqrt() / denom))
        })
        .collect::<Result<Vec<_>, String>>()?;

    let mut csv = Vec::new();
    csv.extend_from_slice(b"detuning_mhz,rate_hz,rate_err_hz\n");
    for &(d, r, e) in &points {
        writeln!(csv, "{d:.6},{r:.6},{e:.6}").map_err(|e| e.to_string())?;
    }
    let fit = fit_lorentzian(&points).map_err(|e| e.to_string());
    let report = FitReport {
        run: plan.index,
        protocol: "ple scan",
        axis: &plan.axis,
        windows: None,
        fit: fit.as_ref().ok(),
        fit_error: fit.as_ref().err().map(String::as_str),
        recovery: None,
    };
    let bytes = fit_report_bytes(&report);
    let artifacts = vec![
        (format!("run{:03}_scan.csv", plan.index), csv),
        (format!("run{:03}_fit.json", plan.index), bytes),
    ];
    Ok((artifacts, RunSummary::Scan { voltage_v, power_uw, points, fit }))
}

fn fmt(x: f64) -> String {
    format!("{x:.6}")
}

fn fit_value(fit: &Result<FitResult, String>, name: &str) -> (String, String) {
    match fit {
        Ok(f) => (fmt(f.value(name)), fmt(f.std_error(name))),
        Err(_) => (String::new(), String::new()),
    }
}

/// Renders the sweep summary table; rows follow run order. Returns None when
/// the protocol has no summary (explicit segment lists).
fn summary_csv(summaries: &[(usize, RunSummary)]) -> Result<Option<Vec<u8>>, RunnerError> {
    let mut out = Vec::new();
    let mut rows = 0usize;
    for (_, s) in summaries {
        match s {
            RunSummary::Decay { voltage_v, power_uw, fit } => {
                if rows == 0 {
                    out.extend_from_slice(
                        b"voltage_v,power_uw,tau_ms,tau_err_ms,decay_rate_hz,decay_rate_err_hz,amplitude_hz,background_hz,converged,note\n",
                    );
                }
                let (tau, tau_err) = fit_value(fit, "tau_ms");
                let (rate, rate_err, amp, bg, conv) = match fit {
                    Ok(f) => {
                        let t = f.value("tau_ms");
                        let te = f.std_error("tau_ms");
                        (
                            fmt(1000.0 / t),
                            fmt(1000.0 * te / (t * t)),
                            fmt(f.value("amplitude_hz")),
                            fmt(f.value("background_hz")),
                            f.converged.to_string(),
                        )
                    }
                    Err(_) => Default::default(),
                };
                let note = fit.as_ref().err().cloned().unwrap_or_default();
                writeln!(
                    out,
                    "{},{},{tau},{tau_err},{rate},{rate_err},{amp},{bg},{conv},{note}",
                    fmt(*voltage_v),
                    fmt(*power_uw),
                )
                .expect("write to vec");
                rows += 1;
            }
            RunSummary::InitReadout { .. } => {
                // handled below as one batch through sweep_summary
            }
            RunSummary::Recovery { voltage_v, tau2_ms, near_resonant, power_uw, point } => {
                if rows == 0 {
                    out.extend_from_slice(
                        b"voltage_v,tau2_ms,near_resonant,resonant_uw,i1_init_hz,i1_init_err_hz,i1_final_hz,i1_final_err_hz,i2_init_hz,i2_init_err_hz,i2_final_hz,i2_final_err_hz,recovery,recovery_err,note\n",
                    );
                }
                let cells = match point {
                    Ok(p) => [
                        fmt(p.i1_initial.rate_hz),
                        fmt(p.i1_initial.err_hz),
                        fmt(p.i1_final.rate_hz),
                        fmt(p.i1_final.err_hz),
                        fmt(p.i2_initial.rate_hz),
                        fmt(p.i2_initial.err_hz),
                        fmt(p.i2_final.rate_hz),
                        fmt(p.i2_final.err_hz),
                        fmt(p.recovery),
                        fmt(p.recovery_err),
                        String::new(),
                    ],
                    Err(e) => {
                        let mut c: [String; 11] = Default::default();
                        c[10] = e.clone();
                        c
                    }
                };
                writeln!(
                    out,
                    "{},{},{},{},{}",
                    fmt(*voltage_v),
                    fmt(*tau2_ms),
                    near_resonant,
                    fmt(*power_uw),
                    cells.join(","),
                )
                .expect("write to vec");
                rows += 1;
            }
            RunSummary::Scan { voltage_v, power_uw, fit, .. } => {
                if rows == 0 {
                    out.extend_from_slice(
                        b"power_uw,voltage_v,center_mhz,center_err_mhz,fwhm_mhz,fwhm_err_mhz,amplitude_hz,amplitude_err_hz,background_hz,background_err_hz,converged,note\n",
                    );
                }
                let (c, ce) = fit_value(fit, "center_mhz");
                let (w, we) = fit_value(fit, "fwhm_mhz");
                let (a, ae) = fit_value(fit, "amplitude_hz");
                let (b, be) = fit_value(fit, "background_hz");
                let conv = fit.as_ref().map(|f| f.converged.to_string()).unwrap_or_default();
                let note = fit.as_ref().err().cloned().unwrap_or_default();
                writeln!(
                    out,
                    "{},{},{c},{ce},{w},{we},{a},{ae},{b},{be},{conv},{note}",
                    fmt(*power_uw),
                    fmt(*voltage_v),
                )
                .expect("write to vec");
                rows += 1;
            }
            RunSummary::Plain => {}
        }
    }
    // init-readout sweeps go through the shared sweep summary so background
    // subtraction and shape checks live in one place
    let init_rows: Vec<&RunSummary> = summaries
        .iter()
        .map(|(_, s)| s)
        .filter(|s| matches!(s, RunSummary::InitReadout { .. }))
        .collect();
    if !init_rows.is_empty() {
        let entries: Vec<SweepEntry> = init_rows
            .iter()
            .map(|s| match s {
                RunSummary::InitReadout { voltage_v, histogram, windows, fit, .. } => SweepEntry {
                    axis: *voltage_v,
                    histogram,
                    windows: SummaryWindows {
                        stabilized: Some(windows.probe),
                        background: windows.background,
                        initial: windows.readout_first_ms,
                        final_: windows.readout_last_ms,
                    },
                    metric: fit.as_ref().ok().map(|f| (f.value("tau_ms"), f.std_error("tau_ms"))),
                },
                _ => unreachable!(),
            })
            .collect();
        let table = sweep_summary(&entries).map_err(|e| RunnerError::Io {
            path: "sweep_summary.csv".into(),
            source: std::io::Error::other(e.to_string()),
        })?;
        out.extend_from_slice(
            b"voltage_v,readout_uw,stabilized_hz,stabilized_err_hz,initial_hz,initial_err_hz,final_hz,final_err_hz,background_hz,tau_ms,tau_err_ms,note\n",
        );
        for (row, s) in table.iter().zip(&init_rows) {
            let (power, note) = match s {
                RunSummary::InitReadout { power_uw, fit, .. } => {
                    (*power_uw, fit.as_ref().err().cloned().unwrap_or_default())
                }
                _ => unreachable!(),
            };
            let stab = row.stabilized.expect("probe window always present");
            let (tau, tau_err) = match row.metric {
                Some((t, e)) => (fmt(t), fmt(e)),
                None => (String::new(), String::new()),
            };
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{tau},{tau_err},{note}",
                fmt(row.axis),
                fmt(power),
                fmt(stab.rate_hz),
                fmt(stab.err_hz),
                fmt(row.initial.rate_hz),
                fmt(row.initial.err_hz),
                fmt(row.final_.rate_hz),
                fmt(row.final_.err_hz),
                fmt(row.background_hz),
            )
            .expect("write to vec");
            rows += 1;
        }
    }
    Ok(if rows == 0 { None } else { Some(out) })
}

/// Convenience accessor used by the acceptance checks.
pub fn summaries_of(sweep: &ExecutedSweep) -> Vec<&RunSummary> {
    sweep.summaries.iter().map(|(_, s)| s).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{load, parse_config, validate, LoadedConfig, DEFAULT_PROFILES};
    use std::path::PathBuf;

    fn tmp_dir(tag: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("chargesim-runner-{tag}-{}", std::process::id()));
        let _ = std::fs::remove_dir_all(&dir);
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }

    fn small_decay_config() -> LoadedConfig {
        let text = "[model]\nprofile = \"emitter_a\"\n[model.overrides]\nc_capture = 0.0\n[protocol]\nkind = \"decay\"\nduration_ms = 8.0\n[sweep]\npower_uw = [6.6, 13.0]\n[run]\nrepetitions = 60\nseed = 42\n";
        LoadedConfig {
            path: "small.toml".into(),
            text: text.into(),
            profiles_text: DEFAULT_PROFILES.into(),
            config: parse_config(text, "small.toml").unwrap(),
        }
    }

    #[test]
    fn decay_sweep_writes_expected_artifacts() {
        let v = validate(&small_decay_config()).unwrap();
        let dir = tmp_dir("artifacts");
        let sweep = execute(&v, &dir, 2).unwrap();
        assert_eq!(sweep.failed, 0);
        assert_eq!(sweep.runs.len(), 2);
        for (i, run) in sweep.runs.iter().enumerate() {
            assert_eq!(run.artifacts[0].name, format!("run{i:03}_histogram.csv"));
            assert_eq!(run.artifacts[1].name, format!("run{i:03}_fit.json"));
            for a in &run.artifacts {
                assert!(dir.join(&a.name).exists());
            }
        }
        assert_eq!(sweep.summary_artifacts[0].name, "sweep_summary.csv");
        let summary = std::fs::read_to_string(dir.join("sweep_summary.csv")).unwrap();
        assert!(summary.starts_with("voltage_v,power_uw,tau_ms"), "{summary}");
        assert_eq!(summary.lines().count(), 3);
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn execution_is_deterministic_across_worker_counts() {
        let v = validate(&small_decay_config()).unwrap();
        let mut digests = Vec::new();
        for workers in [1usize, 4] {
            let dir = tmp_dir(&format!("workers{workers}"));
            let sweep = execute(&v, &dir, workers).unwrap();
            let mut all: Vec<(String, String)> = sweep
                .runs
                .iter()
                .flat_map(|r| r.artifacts.iter().map(|a| (a.name.clone(), a.sha256.clone())))
                .chain(sweep.summary_artifacts.iter().map(|a| (a.name.clone(), a.sha256.clone())))
                .collect();
            all.sort();
            digests.push(all);
            std::fs::remove_dir_all(&dir).unwrap();
        }
        assert_eq!(digests[0], digests[1]);
    }

    #[test]
    fn different_seed_changes_artifacts() {
        let loaded = small_decay_config();
        let v1 = validate(&loaded).unwrap();
        let mut cfg2 = loaded.clone();
        cfg2.config.run.seed = 43;
        let v2 = validate(&cfg2).unwrap();
        let d1 = tmp_dir("seed1");
        let d2 = tmp_dir("seed2");
        let s1 = execute(&v1, &d1, 1).unwrap();
        let s2 = execute(&v2, &d2, 1).unwrap();
        assert_ne!(s1.runs[0].artifacts[0].sha256, s2.runs[0].artifacts[0].sha256);
        std::fs::remove_dir_all(&d1).unwrap();
        std::fs::remove_dir_all(&d2).unwrap();
    }

    #[test]
    fn shipped_configs_load() {
        let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs");
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.file_name().unwrap() == "profiles.toml" {
                continue;
            }
            let loaded = load(&path).unwrap();
            validate(&loaded).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        }
    }
}
