use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use chargesim_cli::config::{self, LoadedConfig, ValidatedConfig};
use chargesim_cli::runner::{self, ExecutedSweep, RunStatus, RunSummary};
use chargesim_cli::{acceptance, manifest};

#[derive(Parser)]
#[command(
    name = "chargesim",
    version,
    about = "Charge-state dynamics simulator for optically pumped color centers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute an experiment config: simulate the sweep, fit, write artifacts
    Run(RunArgs),
    /// Re-execute a manifest and verify outputs are byte-identical
    Replay(ReplayArgs),
    /// Parse and validate a config without simulating
    Validate {
        /// Experiment config to check
        #[arg(long)]
        config: PathBuf,
    },
    /// List model profiles with their key parameters
    ListProfiles {
        /// Profiles file (defaults to the built-in calibration table)
        #[arg(long)]
        profiles: Option<PathBuf>,
    },
    /// Run a detuning-scan config and fit the line in one step
    Ple(SweepArgs),
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    sweep: SweepArgs,
    /// Run the built-in acceptance suite instead of a config
    #[arg(long)]
    check: bool,
}

#[derive(Args)]
struct SweepArgs {
    /// Experiment config (TOML)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed (overrides the config)
    #[arg(long)]
    seed: Option<u64>,
    /// Concurrent runs (defaults to the available cores)
    #[arg(long)]
    workers: Option<usize>,
    /// Model profile name (overrides the config)
    #[arg(long)]
    profile: Option<String>,
}

enum Failure {
    /// Exit code 2: the inputs are wrong.
    Config(String),
    /// Exit code 3: the simulation or its outputs went wrong.
    Simulation(String),
    /// Exit code 4: acceptance checks failed.
    Checks(usize),
}

impl Failure {
    fn report(&self) -> ExitCode {
        match self {
            Failure::Config(msg) => {
                eprintln!("config error: {msg}");
                ExitCode::from(2)
            }
            Failure::Simulation(msg) => {
                eprintln!("simulation error: {msg}");
                ExitCode::from(3)
            }
            Failure::Checks(n) => {
                eprintln!("{n} acceptance check(s) failed");
                ExitCode::from(4)
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Replay(args) => cmd_replay(args),
        Command::Validate { config } => cmd_validate(&config),
        Command::ListProfiles { profiles } => cmd_list_profiles(profiles.as_deref()),
        Command::Ple(args) => cmd_ple(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => f.report(),
    }
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

/// Loads a config and applies CLI overrides. Overridden configs are
/// re-serialized so the manifest captures what actually ran.
fn load_with_overrides(args: &SweepArgs) -> Result<LoadedConfig, Failure> {
    let path = args
        .config
        .as_ref()
        .ok_or_else(|| Failure::Config("--config is required".into()))?;
    let mut loaded = config::load(path).map_err(|e| Failure::Config(e.to_string()))?;
    let mut overridden = false;
    if let Some(profile) = &args.profile {
        loaded.config.model.profile = profile.clone();
        overridden = true;
    }
    if let Some(seed) = args.seed {
        loaded.config.run.seed = seed;
        overridden = true;
    }
    if overridden {
        loaded.text = toml::to_string_pretty(&loaded.config)
            .map_err(|e| Failure::Config(format!("cannot re-serialize overridden config: {e}")))?;
    }
    Ok(loaded)
}

fn execute_loaded(
    loaded: &LoadedConfig,
    args: &SweepArgs,
) -> Result<(ValidatedConfig, ExecutedSweep, PathBuf), Failure> {
    let v = config::validate(loaded).map_err(|e| Failure::Config(e.to_string()))?;
    let out_dir = args.out.clone().unwrap_or_else(|| v.out_dir.clone());
    let workers = args.workers.unwrap_or_else(default_workers);
    let sweep = runner::execute(&v, &out_dir, workers)
        .map_err(|e| Failure::Simulation(e.to_string()))?;
    Ok((v, sweep, out_dir))
}

fn print_sweep(loaded: &LoadedConfig, sweep: &ExecutedSweep, out_dir: &Path, seed: u64) {
    println!("config  {}  (seed {seed})", loaded.path);
    for run in &sweep.runs {
        let status = match &run.status {
            RunStatus::Ok => "ok".to_string(),
            RunStatus::Failed(reason) => format!("FAILED: {reason}"),
        };
        println!("  run {:03}  {:<40} {status}", run.index, run.label);
    }
    for artifact in &sweep.summary_artifacts {
        println!("  wrote {}", out_dir.join(&artifact.name).display());
    }
}

fn finish_sweep(
    loaded: &LoadedConfig,
    v: &ValidatedConfig,
    sweep: &ExecutedSweep,
    out_dir: &Path,
) -> Result<(), Failure> {
    let m = manifest::build(loaded, v.seed, sweep);
    let path = manifest::write(&m, out_dir).map_err(|e| Failure::Simulation(e.to_string()))?;
    println!("  wrote {}", path.display());
    if sweep.failed > 0 {
        return Err(Failure::Simulation(format!(
            "{} of {} runs failed; details in the manifest",
            sweep.failed,
            sweep.runs.len()
        )));
    }
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<(), Failure> {
    if args.check {
        return cmd_check(&args.sweep);
    }
    let loaded = load_with_overrides(&args.sweep)?;
    let (v, sweep, out_dir) = execute_loaded(&loaded, &args.sweep)?;
    print_sweep(&loaded, &sweep, &out_dir, v.seed);
    finish_sweep(&loaded, &v, &sweep, &out_dir)
}

fn cmd_check(args: &SweepArgs) -> Result<(), Failure> {
    let configs_dir = acceptance::find_configs_dir().ok_or_else(|| {
        Failure::Config("cannot locate the shipped configs/ directory; run from the repository root".into())
    })?;
    let workers = args.workers.unwrap_or_else(default_workers);
    println!("acceptance suite ({} workers, configs from {})", workers, configs_dir.display());
    let checks = acceptance::run_all(&configs_dir, workers);
    for check in &checks {
        println!("{}", acceptance::format_line(check));
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        return Err(Failure::Checks(failed));
    }
    println!("all {} checks passed", checks.len());
    Ok(())
}

fn cmd_ple(args: SweepArgs) -> Result<(), Failure> {
    let loaded = load_with_overrides(&args)?;
    let (v, sweep, out_dir) = execute_loaded(&loaded, &args)?;
    let mut rows = Vec::new();
    for summary in runner::summaries_of(&sweep) {
        if let RunSummary::Scan { voltage_v, power_uw, fit, .. } = summary {
            rows.push((*voltage_v, *power_uw, fit.clone()));
        }
    }
    if rows.is_empty() {
        return Err(Failure::Config(
            "config does not use a detuning-scan protocol; use `run` for pulsed protocols".into(),
        ));
    }
    print_sweep(&loaded, &sweep, &out_dir, v.seed);
    println!();
    println!(
        "{:>10}  {:>10}  {:>12}  {:>18}  {:>12}",
        "power_uw", "voltage_v", "center_mhz", "fwhm_mhz", "peak_hz"
    );
    for (voltage, power, fit) in &rows {
        match fit {
            Ok(f) => println!(
                "{:>10.3}  {:>10.1}  {:>12.2}  {:>9.2} +- {:<6.2}  {:>12.0}",
                power,
                voltage,
                f.value("center_mhz"),
                f.value("fwhm_mhz"),
                f.std_error("fwhm_mhz"),
                f.value("amplitude_hz")
            ),
            Err(reason) => {
                println!("{:>10.3}  {:>10.1}  no line fit: {reason}", power, voltage)
            }
        }
    }
    finish_sweep(&loaded, &v, &sweep, &out_dir)
}

fn cmd_replay(args: ReplayArgs) -> Result<(), Failure> {
    let m = manifest::read(&args.manifest).map_err(|e| Failure::Config(e.to_string()))?;
    let keep_dir = args.out.clone();
    let out_dir = match &keep_dir {
        Some(dir) => dir.clone(),
        None => std::env::temp_dir().join(format!("chargesim-replay-{}", std::process::id())),
    };
    let workers = args.workers.unwrap_or_else(default_workers);
    let result = manifest::replay(&m, &out_dir, workers);
    if keep_dir.is_none() {
        let _ = std::fs::remove_dir_all(&out_dir);
    }
    let report = result.map_err(|e| match e {
        manifest::ManifestError::VersionMismatch { .. } => Failure::Config(e.to_string()),
        other => Failure::Simulation(other.to_string()),
    })?;
    if report.identical() {
        println!(
            "replay of {} ({} artifacts): byte-identical",
            m.config_path, report.artifacts_checked
        );
        Ok(())
    } else {
        for d in &report.divergences {
            match &d.actual_sha256 {
                Some(actual) => eprintln!(
                    "divergence: {}  expected sha256 {}  got {}",
                    d.path, d.expected_sha256, actual
                ),
                None => eprintln!("divergence: {}  missing from replay", d.path),
            }
        }
        Err(Failure::Simulation(format!(
            "{} of {} artifacts diverged",
            report.divergences.len(),
            report.artifacts_checked
        )))
    }
}

#[derive(Args)]
struct ReplayArgs {
    /// Manifest from a prior run
    #[arg(long)]
    manifest: PathBuf,
    /// Directory for the re-executed artifacts (temporary if omitted)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Concurrent runs (defaults to the available cores)
    #[arg(long)]
    workers: Option<usize>,
}

fn cmd_validate(path: &Path) -> Result<(), Failure> {
    let loaded = config::load(path).map_err(|e| Failure::Config(e.to_string()))?;
    let v = config::validate(&loaded).map_err(|e| Failure::Config(e.to_string()))?;
    println!(
        "{}: valid; profile {}, {} run(s), {} repetition(s) each, seed {}",
        loaded.path,
        loaded.config.model.profile,
        v.runs.len(),
        v.repetitions,
        v.seed
    );
    for run in &v.runs {
        println!("  run {:03}  {}", run.index, run.axis.describe());
    }
    Ok(())
}

fn cmd_list_profiles(path: Option<&Path>) -> Result<(), Failure> {
    let (text, source) = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?;
            (text, p.display().to_string())
        }
        None => (config::DEFAULT_PROFILES.to_string(), "built-in".to_string()),
    };
    let profiles =
        config::parse_profiles(&text, &source).map_err(|e| Failure::Config(e.to_string()))?;
    println!("profiles ({source}, version {}):", profiles.version);
    for (name, p) in &profiles.profiles {
        println!("  {name}");
        println!("    optical:  gamma_rad {:.3e} Hz, zpl fraction {:.2}, gamma_0 {} MHz, p_sat {} uW", p.gamma_rad_hz, p.zpl_branching, p.gamma_0_mhz, p.p_sat_uw);
        println!("    charge:   k_ion {:.3e} Hz, capture gain {:.2}, v_half {} V, field ionization {} Hz above {} V", p.k_ion_hz, p.c_capture, p.v_half_v, p.k_field_ion_hz, p.v_field_ion_v);
    }
    Ok(())
}
