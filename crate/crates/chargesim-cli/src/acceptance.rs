//! Built-in acceptance suite: one check per release criterion, each printing
//! a single pass/fail line. Exercised by `chargesim run --check` and by the
//! `acceptance` integration test.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use chargesim::analysis::{fit_exponential_points, fit_lorentzian};
use chargesim::engine::reduced::simulate_reduced;
use chargesim::engine::rng::derive_seed;
use chargesim::engine::{populations_at, simulate_trajectory, PopulationVector};
use chargesim::model::ChargeState;
use chargesim::photonics::{detect, detect_reduced, window_intensity};
use chargesim::sequence::{protocols, PulseSequence, Segment};

use crate::config::{self, LoadedConfig};
use crate::manifest;
use crate::runner::{self, RunSummary};

#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

pub fn format_line(c: &Check) -> String {
    let verdict = if c.passed { "pass" } else { "FAIL" };
    format!("{:<42} {verdict}  ({})", c.name, c.detail)
}

/// Locates the shipped configs: `configs/` under the current directory, else
/// the repository layout this binary was built from.
pub fn find_configs_dir() -> Option<PathBuf> {
    let cwd = PathBuf::from("configs");
    if cwd.join("profiles.toml").is_file() {
        return Some(cwd);
    }
    let built = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    if built.join("profiles.toml").is_file() {
        return Some(built);
    }
    None
}

/// Runs every check; the report is deterministic for a fixed tree.
pub fn run_all(configs_dir: &Path, workers: usize) -> Vec<Check> {
    let checks: Vec<(&'static str, Box<dyn FnOnce() -> Result<String, String>>)> = vec![
        ("occupancy matches propagator", Box::new(move || occupancy_matches_propagator(workers))),
        ("decay rate linear in power", {
            let d = configs_dir.to_path_buf();
            Box::new(move || decay_rate_linear_in_power(&d, workers))
        }),
        ("readout stabilizes under bias", {
            let d = configs_dir.to_path_buf();
            Box::new(move || readout_stabilizes_under_bias(&d, workers))
        }),
        ("refill beam restores recovery", {
            let d = configs_dir.to_path_buf();
            Box::new(move || refill_beam_restores_recovery(&d, workers))
        }),
        ("recovery voltage window", {
            let d = configs_dir.to_path_buf();
            Box::new(move || recovery_voltage_window(&d, workers))
        }),
        ("line width follows power broadening", {
            let d = configs_dir.to_path_buf();
            Box::new(move || line_width_follows_power_broadening(&d, workers))
        }),
        ("fit round-trip and coverage", Box::new(fit_round_trip_and_coverage)),
        ("byte-identical replay across worker counts", {
            let d = configs_dir.to_path_buf();
            Box::new(move || byte_identical_replay(&d))
        }),
        ("dark state holds without light", Box::new(dark_state_holds)),
    ];
    checks
        .into_iter()
        .map(|(name, f)| match f() {
            Ok(detail) => Check { name, passed: true, detail },
            Err(detail) => Check { name, passed: false, detail },
        })
        .collect()
}

struct TempDir(PathBuf);

impl TempDir {
    fn new(tag: &str) -> Result<Self, String> {
        let dir = std::env::temp_dir().join(format!("chargesim-check-{tag}-{}", std::process::id()));
        let _ = std::fs::remove_dir_all(&dir);
        std::fs::create_dir_all(&dir).map_err(|e| format!("{}: {e}", dir.display()))?;
        Ok(TempDir(dir))
    }

    fn path(&self) -> &Path {
        &self.0
    }
}

impl Drop for TempDir {
    fn drop(&mut self) {
        let _ = std::fs::remove_dir_all(&self.0);
    }
}

fn load_shipped(configs_dir: &Path, name: &str) -> Result<LoadedConfig, String> {
    config::load(&configs_dir.join(name)).map_err(|e| e.to_string())
}

fn run_shipped(
    configs_dir: &Path,
    name: &str,
    repetitions: Option<u64>,
    workers: usize,
    tag: &str,
) -> Result<(runner::ExecutedSweep, TempDir), String> {
    let mut loaded = load_shipped(configs_dir, name)?;
    if let Some(reps) = repetitions {
        loaded.config.run.repetitions = reps;
    }
    let v = config::validate(&loaded).map_err(|e| e.to_string())?;
    let dir = TempDir::new(tag)?;
    let sweep = runner::execute(&v, dir.path(), workers).map_err(|e| e.to_string())?;
    if sweep.failed > 0 {
        return Err(format!("{name}: {} runs failed", sweep.failed));
    }
    Ok((sweep, dir))
}

const OCCUPANCY_SEED: u64 = 0x0A11_CE5E_D00D_0001;
const OCCUPANCY_TRAJECTORIES: u64 = 100_000;

/// Bright-state occupancy from full-model trajectories must agree with the
/// matrix-exponential propagator at ten checkpoints per shipped protocol,
/// within four binomial standard errors.
fn occupancy_matches_propagator(workers: usize) -> Result<String, String> {
    let params = chargesim::model::ChargeModelParams::emitter_a();
    let cases: Vec<(&str, PulseSequence)> = vec![
        (
            "readout at zero bias",
            protocols::init_readout(13.0, 300.0).map_err(|e| e.to_string())?,
        ),
        (
            "readout at stabilizing bias",
            protocols::init_readout_at(13.0, 300.0, 13.0, 50.0).map_err(|e| e.to_string())?,
        ),
        ("two-pulse recovery", protocols::recovery(10.0, true, 50.0).map_err(|e| e.to_string())?),
    ];
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| e.to_string())?;
    let n = OCCUPANCY_TRAJECTORIES;
    let mut worst_z = 0.0f64;
    let mut worst_at = String::new();
    for (case_idx, (case_name, seq)) in cases.iter().enumerate() {
        let period = seq.period_ns();
        let checkpoints: Vec<u64> = (1..=10).map(|i| i * period / 10).collect();
        let expected: Vec<f64> =
            populations_at(seq, &params, &PopulationVector::pure(ChargeState::BrightGround), &checkpoints)
                .map_err(|e| e.to_string())?
                .iter()
                .map(PopulationVector::bright)
                .collect();
        let counts: Vec<u64> = pool.install(|| {
            (0..n)
                .into_par_iter()
                .try_fold(
                    || vec![0u64; checkpoints.len()],
                    |mut acc, rep| -> Result<Vec<u64>, String> {
                        let traj = simulate_trajectory(
                            seq,
                            &params,
                            ChargeState::BrightGround,
                            derive_seed(OCCUPANCY_SEED, case_idx as u64, rep),
                        )
                        .map_err(|e| e.to_string())?;
                        for (k, &t) in checkpoints.iter().enumerate() {
                            if traj.state_at(t).is_bright() {
                                acc[k] += 1;
                            }
                        }
                        Ok(acc)
                    },
                )
                .try_reduce(
                    || vec![0u64; checkpoints.len()],
                    |mut a, b| {
                        for (x, y) in a.iter_mut().zip(b) {
                            *x += y;
                        }
                        Ok(a)
                    },
                )
        })?;
        for (k, (&c, &p)) in counts.iter().zip(&expected).enumerate() {
            let observed = c as f64 / n as f64;
            let sigma = (p * (1.0 - p) / n as f64).sqrt().max(1e-9);
            let z = (observed - p).abs() / sigma;
            if z > worst_z {
                worst_z = z;
                worst_at = format!("{case_name} t={} ms", checkpoints[k] as f64 / 1e6);
            }
            if z > 4.0 {
                return Err(format!(
                    "{case_name}: occupancy {observed:.6} vs propagator {p:.6} at t={} ms is {z:.1} sigma",
                    checkpoints[k] as f64 / 1e6
                ));
            }
        }
    }
    Ok(format!(
        "3 protocols x 10 checkpoints, {n} trajectories each; worst {worst_z:.2} sigma at {worst_at}"
    ))
}

fn linear_r2(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let sx: f64 = points.iter().map(|p| p.0).sum();
    let sy: f64 = points.iter().map(|p| p.1).sum();
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let intercept = (sy - slope * sx) / n;
    let mean = sy / n;
    let ss_res: f64 = points.iter().map(|&(x, y)| (y - slope * x - intercept).powi(2)).sum();
    let ss_tot: f64 = points.iter().map(|&(_, y)| (y - mean).powi(2)).sum();
    1.0 - ss_res / ss_tot
}

/// Fitted decay rates over one power decade must regress linearly with
/// R^2 >= 0.99, and the working-power lifetime must land in [1, 2.5] ms.
fn decay_rate_linear_in_power(configs_dir: &Path, workers: usize) -> Result<String, String> {
    let (sweep, _dir) = run_shipped(configs_dir, "decay_vs_power.toml", None, workers, "decay")?;
    let mut points = Vec::new();
    let mut tau_at_working = None;
    for s in runner::summaries_of(&sweep) {
        let RunSummary::Decay { power_uw, fit, .. } = s else {
            return Err("unexpected run summary kind".into());
        };
        let fit = fit.as_ref().map_err(|e| format!("fit failed at {power_uw} uW: {e}"))?;
        if !fit.converged {
            return Err(format!("fit did not converge at {power_uw} uW"));
        }
        let tau_ms = fit.value("tau_ms");
        points.push((*power_uw, 1000.0 / tau_ms));
        if (*power_uw - 13.0).abs() < 1e-9 {
            tau_at_working = Some(tau_ms);
        }
    }
    let r2 = linear_r2(&points);
    let tau = tau_at_working.ok_or("no 13 uW point in sweep")?;
    if r2 < 0.99 {
        return Err(format!("rate-vs-power R^2 {r2:.5} < 0.99"));
    }
    if !(1.0..=2.5).contains(&tau) {
        return Err(format!("tau at 13 uW is {tau:.3} ms, outside [1, 2.5] ms"));
    }
    Ok(format!("R^2 {r2:.5} over {} powers; tau(13 uW) {tau:.3} ms", points.len()))
}

/// Under bias the windowed readout rate may drop at most 10% over the pulse;
/// at zero bias the final window must sit within 3 sigma of background.
fn readout_stabilizes_under_bias(configs_dir: &Path, workers: usize) -> Result<String, String> {
    let (sweep, _dir) =
        run_shipped(configs_dir, "stability_vs_voltage.toml", None, workers, "stability")?;
    let mut drop_pct = None;
    let mut remnant = None;
    for s in runner::summaries_of(&sweep) {
        let RunSummary::InitReadout { voltage_v, histogram, windows, .. } = s else {
            return Err("unexpected run summary kind".into());
        };
        let rate = |w: chargesim::sequence::Window| {
            window_intensity(histogram, w.start_ns, w.stop_ns).map_err(|e| e.to_string())
        };
        let (bg, bg_err) = rate(windows.background)?;
        let (first, _) = rate(windows.readout_first_ms)?;
        let (last, last_err) = rate(windows.readout_last_ms)?;
        if (*voltage_v - 50.0).abs() < 1e-9 {
            let drop = ((first - bg) - (last - bg)) / (first - bg);
            if drop > 0.10 {
                return Err(format!("windowed rate drop {:.1}% > 10% at 50 V", drop * 100.0));
            }
            drop_pct = Some(drop * 100.0);
        } else if voltage_v.abs() < 1e-9 {
            let sigma = last_err.hypot(bg_err);
            let dev = (last - bg).abs();
            if dev > 3.0 * sigma {
                return Err(format!(
                    "final window at 0 V is {dev:.1} Hz from background ({:.1} sigma)",
                    dev / sigma
                ));
            }
            remnant = Some(dev / sigma);
        }
    }
    match (drop_pct, remnant) {
        (Some(d), Some(r)) => {
            Ok(format!("drop {d:.2}% at 50 V; 0 V final window {r:.2} sigma from background"))
        }
        _ => Err("sweep missing the 0 V or 50 V run".into()),
    }
}

/// With the near-resonant beam on, recovery at the 10 ms delay must reach
/// 0.9; with it off, recovery stays within 0.1 of zero at every delay.
fn refill_beam_restores_recovery(configs_dir: &Path, workers: usize) -> Result<String, String> {
    let (sweep, _dir) =
        run_shipped(configs_dir, "recovery_vs_delay.toml", Some(100_000), workers, "recovery-delay")?;
    let mut on_at_10 = None;
    let mut worst_off = 0.0f64;
    for s in runner::summaries_of(&sweep) {
        let RunSummary::Recovery { tau2_ms, near_resonant, point, .. } = s else {
            return Err("unexpected run summary kind".into());
        };
        let p = point.as_ref().map_err(|e| format!("tau2={tau2_ms} ms: {e}"))?;
        if *near_resonant {
            if (*tau2_ms - 10.0).abs() < 1e-9 {
                on_at_10 = Some(p.recovery);
            }
        } else {
            if p.recovery.abs() > 0.1 {
                return Err(format!(
                    "recovery {:.3} at tau2={tau2_ms} ms without the refill beam exceeds 0.1",
                    p.recovery
                ));
            }
            worst_off = worst_off.max(p.recovery.abs());
        }
    }
    let on = on_at_10.ok_or("no refill-on run at tau2 = 10 ms")?;
    if on < 0.9 {
        return Err(format!("recovery {on:.3} at tau2=10 ms with refill beam is below 0.9"));
    }
    Ok(format!("refill on: {on:.3} at 10 ms; refill off: |recovery| <= {worst_off:.3}"))
}

/// Recovery must exceed 0.9 across the drift window {20, 50, 80, 120} V and
/// collapse below 0.5 at 0 V and 180 V.
fn recovery_voltage_window(configs_dir: &Path, workers: usize) -> Result<String, String> {
    let (sweep, _dir) = run_shipped(
        configs_dir,
        "recovery_vs_voltage.toml",
        Some(200_000),
        workers,
        "recovery-voltage",
    )?;
    let mut inside = Vec::new();
    let mut outside = Vec::new();
    for s in runner::summaries_of(&sweep) {
        let RunSummary::Recovery { voltage_v, point, .. } = s else {
            return Err("unexpected run summary kind".into());
        };
        let p = point.as_ref().map_err(|e| format!("V={voltage_v}: {e}"))?;
        let v = *voltage_v;
        if [20.0, 50.0, 80.0, 120.0].contains(&v) {
            if p.recovery < 0.9 {
                return Err(format!("recovery {:.3} at {v} V is below 0.9", p.recovery));
            }
            inside.push(p.recovery);
        } else if v == 0.0 || v == 180.0 {
            if p.recovery >= 0.5 {
                return Err(format!("recovery {:.3} at {v} V should be below 0.5", p.recovery));
            }
            outside.push(p.recovery);
        }
    }
    if inside.len() != 4 || outside.len() != 2 {
        return Err("voltage sweep missing expected points".into());
    }
    let min_in = inside.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_out = outside.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(format!("min {min_in:.3} inside 20..120 V; max {max_out:.3} at 0/180 V"))
}

/// Fitted line widths must follow FWHM = gamma_0 sqrt(1+s) within 3% at
/// s = 0.1, 1, 3.
fn line_width_follows_power_broadening(configs_dir: &Path, workers: usize) -> Result<String, String> {
    let loaded = load_shipped(configs_dir, "ple_power_broadening.toml")?;
    let v = config::validate(&loaded).map_err(|e| e.to_string())?;
    let gamma0 = v.params.gamma_0_mhz;
    let p_sat = v.params.p_sat_uw;
    let dir = TempDir::new("ple")?;
    let sweep = runner::execute(&v, dir.path(), workers).map_err(|e| e.to_string())?;
    if sweep.failed > 0 {
        return Err(format!("{} scan runs failed", sweep.failed));
    }
    let mut details = Vec::new();
    for s in runner::summaries_of(&sweep) {
        let RunSummary::Scan { power_uw, fit, .. } = s else {
            return Err("unexpected run summary kind".into());
        };
        let fit = fit.as_ref().map_err(|e| format!("P={power_uw} uW: {e}"))?;
        if !fit.converged {
            return Err(format!("line fit did not converge at {power_uw} uW"));
        }
        let s_par = power_uw / p_sat;
        let expected = gamma0 * (1.0 + s_par).sqrt();
        let width = fit.value("fwhm_mhz");
        let rel = (width - expected).abs() / expected;
        if rel > 0.03 {
            return Err(format!(
                "FWHM {width:.1} MHz at s={s_par:.1} deviates {:.1}% from {expected:.1} MHz",
                rel * 100.0
            ));
        }
        details.push(format!("s={s_par:.1}: {width:.1}/{expected:.1} MHz ({:+.2}%)", 100.0 * (width - expected) / expected));
    }
    Ok(details.join("; "))
}

/// Noiseless fits must round-trip to 1e-6 relative over 100 random draws, and
/// the 1-sigma band must cover the truth in at least 60 of 100 Poisson
/// resamples.
fn fit_round_trip_and_coverage() -> Result<String, String> {
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    use rand_distr::{Distribution, Poisson};

    let mut rng = StdRng::seed_from_u64(0xF17_C0FE);
    for draw in 0..100 {
        let a = rng.random_range(1e3..1e5);
        let tau = rng.random_range(0.3..10.0);
        let b = rng.random_range(10.0..5e3);
        let n = rng.random_range(40..160);
        let dt = rng.random_range(4.0 * tau..8.0 * tau) / n as f64;
        let pts: Vec<(f64, f64, f64)> = (0..n)
            .map(|i| {
                let t = i as f64 * dt;
                let y = a * (-t / tau).exp() + b;
                (t, y, y.sqrt())
            })
            .collect();
        let fit = fit_exponential_points(&pts).map_err(|e| format!("draw {draw}: {e}"))?;
        for (name, truth) in [("amplitude_hz", a), ("tau_ms", tau), ("background_hz", b)] {
            let rel = (fit.value(name) - truth).abs() / truth;
            if rel > 1e-6 {
                return Err(format!("draw {draw}: {name} off by {rel:.2e}"));
            }
        }

        let amp = rng.random_range(1e3..1e5);
        let center = rng.random_range(-100.0..100.0);
        let width = rng.random_range(80.0..600.0);
        let base = rng.random_range(10.0..5e3);
        let m = rng.random_range(21..81);
        let half_span = rng.random_range(1.5 * width..4.0 * width);
        let step = 2.0 * half_span / (m - 1) as f64;
        let scan: Vec<(f64, f64, f64)> = (0..m)
            .map(|i| {
                let x = center - half_span + i as f64 * step;
                let h = (width / 2.0) * (width / 2.0);
                let y = amp * h / ((x - center) * (x - center) + h) + base;
                (x, y, y.sqrt())
            })
            .collect();
        let fit = fit_lorentzian(&scan).map_err(|e| format!("line draw {draw}: {e}"))?;
        for (name, truth) in [("amplitude_hz", amp), ("fwhm_mhz", width), ("background_hz", base)] {
            let rel = (fit.value(name) - truth).abs() / truth;
            if rel > 1e-6 {
                return Err(format!("line draw {draw}: {name} off by {rel:.2e}"));
            }
        }
        let center_err = (fit.value("center_mhz") - center).abs() / (center.abs() + width);
        if center_err > 1e-6 {
            return Err(format!("line draw {draw}: center off by {center_err:.2e}"));
        }
    }

    let truth_tau = 1.8;
    let (a, b) = (3.0e4, 700.0);
    let exposure = 2.0; // counts per Hz per bin
    let mut covered = 0;
    let mut taus = Vec::new();
    for _ in 0..100 {
        let pts: Vec<(f64, f64, f64)> = (0..120)
            .map(|i| {
                let t = i as f64 * 0.1;
                let lambda = (a * (-t / truth_tau).exp() + b) * exposure;
                let counts: f64 = Poisson::new(lambda).unwrap().sample(&mut rng);
                (t, counts / exposure, counts.max(1.0).sqrt() / exposure)
            })
            .collect();
        let fit = fit_exponential_points(&pts).map_err(|e| e.to_string())?;
        let tau = fit.value("tau_ms");
        taus.push(tau);
        if (tau - truth_tau).abs() <= fit.std_error("tau_ms") {
            covered += 1;
        }
    }
    let mean_tau = taus.iter().sum::<f64>() / taus.len() as f64;
    let bias = (mean_tau - truth_tau).abs() / truth_tau;
    if bias > 0.02 {
        return Err(format!("mean fitted tau biased by {:.2}%", bias * 100.0));
    }
    if covered < 60 {
        return Err(format!("1-sigma coverage {covered}/100 below 60"));
    }
    Ok(format!("200 noiseless round-trips <= 1e-6; coverage {covered}/100; tau bias {:.2}%", bias * 100.0))
}

/// Every shipped example must replay byte-identically across 1, 4, and 8
/// workers, verified through the manifest replay path.
fn byte_identical_replay(configs_dir: &Path) -> Result<String, String> {
    let mut names: Vec<String> = std::fs::read_dir(configs_dir)
        .map_err(|e| format!("{}: {e}", configs_dir.display()))?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".toml") && n != "profiles.toml")
        .collect();
    names.sort();
    if names.is_empty() {
        return Err("no shipped configs found".into());
    }
    let mut artifacts_total = 0usize;
    for name in &names {
        let loaded = load_shipped(configs_dir, name)?;
        let v = config::validate(&loaded).map_err(|e| e.to_string())?;
        let base_dir = TempDir::new(&format!("replay-base-{name}"))?;
        let sweep = runner::execute(&v, base_dir.path(), 1).map_err(|e| e.to_string())?;
        if sweep.failed > 0 {
            return Err(format!("{name}: {} runs failed", sweep.failed));
        }
        let m = manifest::build(&loaded, v.seed, &sweep);
        for workers in [4usize, 8] {
            let replay_dir = TempDir::new(&format!("replay-{workers}-{name}"))?;
            let report =
                manifest::replay(&m, replay_dir.path(), workers).map_err(|e| e.to_string())?;
            if !report.identical() {
                let d = &report.divergences[0];
                return Err(format!(
                    "{name} diverged with {workers} workers: {} expected {} got {:?}",
                    d.path, d.expected_sha256, d.actual_sha256
                ));
            }
            artifacts_total += report.artifacts_checked;
        }
    }
    Ok(format!("{} configs x workers {{1,4,8}}; {artifacts_total} artifact comparisons", names.len()))
}

/// With no lasers and the bias below the field-ionization threshold, every
/// state is absorbing for 1000 simulated seconds and the detector sees dark
/// counts only, at the configured 700 Hz within 3 sigma.
fn dark_state_holds() -> Result<String, String> {
    let params = chargesim::model::ChargeModelParams::emitter_a();
    let det = chargesim::photonics::DetectorParams::default();
    let hold_s = 1_000u64;
    let seq = PulseSequence {
        label: "dark hold".into(),
        segments: vec![Segment::dark(hold_s * 1_000_000_000, 50.0)],
        repetitions: 1,
        voltage_stepped: false,
        inter_rep_gap_ns: 0,
    };
    let expected = det.dark_rate_hz * hold_s as f64;
    let sigma = expected.sqrt();
    let mut max_z = 0.0f64;
    for (i, initial) in ChargeState::ALL.iter().enumerate() {
        let traj = simulate_trajectory(&seq, &params, *initial, 0xDA12_0000 + i as u64)
            .map_err(|e| e.to_string())?;
        if !traj.jumps.is_empty() {
            return Err(format!("{} jumps from initial state {initial:?} in the dark", traj.jumps.len()));
        }
        if traj.state_at(seq.period_ns()) != *initial {
            return Err(format!("state drifted from {initial:?} in the dark"));
        }
        if !traj.emissions.is_empty() {
            return Err(format!("{} emissions in the dark", traj.emissions.len()));
        }
        let tags = detect(&traj, &det, 0xDA12_1000 + i as u64).map_err(|e| e.to_string())?;
        let n = tags.tags.len() as f64;
        let z = (n - expected).abs() / sigma;
        if z > 3.0 {
            return Err(format!(
                "dark-count total {n} over {hold_s} s is {z:.1} sigma from {expected}"
            ));
        }
        max_z = max_z.max(z);

        let reduced = simulate_reduced(&seq, &params, det.efficiency, *initial, 0xDA12_2000 + i as u64)
            .map_err(|e| e.to_string())?;
        if !reduced.jumps.is_empty() || !reduced.tags_ns.is_empty() {
            return Err(format!("reduced mode produced events in the dark from {initial:?}"));
        }
        let tags = detect_reduced(&reduced, &det, 0xDA12_3000 + i as u64).map_err(|e| e.to_string())?;
        let z = (tags.tags.len() as f64 - expected).abs() / sigma;
        if z > 3.0 {
            return Err(format!("reduced-mode dark-count rate off by {z:.1} sigma"));
        }
        max_z = max_z.max(z);
    }
    Ok(format!(
        "3 initial states x {hold_s} s, full and reduced modes; no events, dark counts within {max_z:.2} sigma"
    ))
}
