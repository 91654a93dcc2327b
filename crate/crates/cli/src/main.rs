//! `qbmaser`: run, sweep and cross-check the maser battery simulator.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::{info, LevelFilter};
use serde_json::{json, Value};

use qbmaser::analysis::{pulse_metrics, write_metrics_csv};
use qbmaser::config::{apply_override, RunConfig};
use qbmaser::oracle::{oracle_check, ORACLE_RK4_DT_S, ORACLE_TOLERANCE};
use qbmaser::simulation::calibrate_kappa0;
use qbmaser::sweep::{run_sweep, write_sweep_csv, SweepSpec};
use qbmaser::{ConfigError, Scheme, SimulationError};

const PRESETS: [(&str, &str); 5] = [
    ("default", include_str!("../../../presets/default.json")),
    ("fig4-tau2", include_str!("../../../presets/fig4-tau2.json")),
    ("fig4-kappa", include_str!("../../../presets/fig4-kappa.json")),
    ("fig5", include_str!("../../../presets/fig5.json")),
    ("fig6", include_str!("../../../presets/fig6.json")),
];

#[derive(Parser, Debug)]
#[command(name = "qbmaser", version, about = "Mean-field pentacene maser battery simulator")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Run configuration (simulate, oracle-check, calibrate) or sweep spec
    /// (sweep). A manifest.json from an earlier run is accepted too.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Dotted-path override, e.g. `schedule.termination.fixed=440e-9`.
    /// Repeatable; applied in order after the file is read.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out", global = true)]
    out: PathBuf,
    /// Worker threads for sweeps (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Only print warnings and errors.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate one run and write trajectory, phase log, metrics and manifest.
    Simulate {
        /// Shorthand for `--set schedule.scheme=...`.
        #[arg(long)]
        scheme: Option<Scheme>,
    },
    /// Run a parameter sweep from a spec file or a shipped preset.
    Sweep {
        /// Shipped template: fig4-tau2, fig4-kappa, fig5 or fig6.
        #[arg(long, conflicts_with = "config")]
        preset: Option<String>,
        /// Also write each point's trajectory.
        #[arg(long)]
        trajectories: bool,
    },
    /// Compare the adaptive solver with fixed-step RK4 over the first pulse.
    OracleCheck {
        /// Reference step, s.
        #[arg(long, default_value_t = ORACLE_RK4_DT_S)]
        dt: f64,
        /// Largest accepted relative photon-number deviation.
        #[arg(long, default_value_t = ORACLE_TOLERANCE)]
        tolerance: f64,
    },
    /// Fit the internal loss κ₀ so the unmodulated device at κ_low peaks at
    /// the target output power.
    Calibrate {
        /// Target peak output power, W.
        #[arg(long, default_value_t = 1.44)]
        target_power: f64,
        /// Tolerance scale applied to the solver for this fit.
        #[arg(long, default_value_t = 0.1)]
        tolerance_scale: f64,
    },
}

/// Failure of the oracle comparison itself (as opposed to a crashed run).
#[derive(Debug)]
struct OracleDisagreement(String);

impl std::fmt::Display for OracleDisagreement {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for OracleDisagreement {}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<ConfigError>() {
            return 1;
        }
        if cause.is::<SimulationError>() {
            return 2;
        }
        if cause.is::<OracleDisagreement>() {
            return 3;
        }
    }
    1
}

/// Joins the cause chain, skipping causes whose text the parent already
/// includes.
fn describe(err: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if !out.contains(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = if cli.global.quiet { LevelFilter::Warn } else { LevelFilter::Info };
    env_logger::Builder::new().filter_level(level).format_target(false).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    match &cli.command {
        Command::Simulate { scheme } => simulate(g, *scheme),
        Command::Sweep { preset, trajectories } => sweep(g, preset.as_deref(), *trajectories),
        Command::OracleCheck { dt, tolerance } => oracle(g, *dt, *tolerance),
        Command::Calibrate { target_power, tolerance_scale } => calibrate(g, *target_power, *tolerance_scale),
    }
}

fn preset(name: &str) -> Result<&'static str, ConfigError> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, text)| *text).ok_or_else(|| {
        let known: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
        ConfigError::Invalid(vec![format!("unknown preset `{name}` (known: {})", known.join(", "))])
    })
}

fn load_run_config(g: &Global, extra: &[String]) -> Result<RunConfig> {
    let mut overrides = g.overrides.clone();
    overrides.extend_from_slice(extra);
    let cfg = match &g.config {
        Some(path) => RunConfig::load(path, &overrides)?,
        None => RunConfig::from_str_with_overrides(preset("default")?, "preset default", &overrides)?,
    };
    Ok(cfg)
}

/// Writes `path` through a temporary file in the same directory, so a
/// failed run never leaves a truncated file behind.
fn write_atomic(path: &Path, fill: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating temp file in {}", dir.display()))?;
    {
        let mut buf = std::io::BufWriter::new(tmp.as_file_mut());
        fill(&mut buf)?;
        buf.flush()?;
    }
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)?;
        Ok(())
    })
}

fn out_dir(g: &Global) -> Result<&Path> {
    std::fs::create_dir_all(&g.out).with_context(|| format!("creating {}", g.out.display()))?;
    Ok(&g.out)
}

fn simulate(g: &Global, scheme: Option<Scheme>) -> Result<()> {
    let extra: Vec<String> = scheme.iter().map(|s| format!("schedule.scheme={s}")).collect();
    let cfg = load_run_config(g, &extra)?;
    let run = cfg.resolve()?;
    info!("simulating {} scheme, {} cycles", run.schedule.scheme, run.schedule.n_cycles);
    let started = std::time::Instant::now();
    let traj = qbmaser::run_simulation_from(&run.params, &run.schedule, &run.solver, &run.initial)?;
    let metrics = pulse_metrics(&traj).unwrap_or_default();
    info!(
        "{} samples, {} pulses, trace drift {:.1e}, {:.2?}",
        traj.samples.len(),
        metrics.len(),
        traj.max_trace_drift(),
        started.elapsed()
    );

    let dir = out_dir(g)?;
    if cfg.output.trajectory_csv {
        write_atomic(&dir.join("trajectory.csv"), |w| Ok(traj.write_csv(w)?))?;
    }
    if cfg.output.phase_log {
        write_atomic(&dir.join("phase_log.jsonl"), |w| Ok(traj.write_phase_log(w)?))?;
    }
    write_atomic(&dir.join("metrics.csv"), |w| Ok(write_metrics_csv(&metrics, w)?))?;
    write_json(&dir.join("metrics.json"), &metrics)?;
    write_json(
        &dir.join("manifest.json"),
        &json!({
            "command": "simulate",
            "version": env!("CARGO_PKG_VERSION"),
            "config": cfg.to_value(),
            "run": traj.manifest,
        }),
    )?;
    for m in &metrics {
        info!(
            "pulse {:>2}: n_max {:.3e}  P_out max {:.3e} W  fwhm(n) {}  eta_work {:.3e}",
            m.cycle_index + 1,
            m.n_ph_max,
            m.p_out_max_w,
            m.fwhm_nph_s.map_or("-".into(), |v| format!("{v:.3e} s")),
            m.eta_work
        );
    }
    info!("wrote {}", dir.display());
    Ok(())
}

fn load_sweep_spec(g: &Global, preset_name: Option<&str>) -> Result<SweepSpec> {
    let (text, label) = match (preset_name, &g.config) {
        (Some(name), _) => (preset(name)?.to_string(), format!("preset {name}")),
        (None, Some(path)) => (
            std::fs::read_to_string(path).map_err(|e| ConfigError::Io(path.display().to_string(), e))?,
            path.display().to_string(),
        ),
        (None, None) => bail!(ConfigError::Invalid(vec!["sweep needs --preset or --config".into()])),
    };
    let parse = |source| ConfigError::Parse { path: label.clone(), source };
    let mut value: Value = serde_json::from_str(&text).map_err(parse)?;
    // A sweep manifest wraps the spec under `spec`.
    if value.get("command") == Some(&json!("sweep")) {
        value = value["spec"].take();
    }
    for o in &g.overrides {
        apply_override(&mut value, o)?;
    }
    Ok(serde_json::from_value(value).map_err(parse)?)
}

fn sweep(g: &Global, preset_name: Option<&str>, trajectories: bool) -> Result<()> {
    let mut spec = load_sweep_spec(g, preset_name)?;
    spec.export_trajectories |= trajectories;
    let workers = g.workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    info!("sweeping {} over {} scheme(s) on {workers} worker(s)", spec.axis, spec.schemes.len());
    let result = run_sweep(&spec, workers)?;
    let failed = result.rows.iter().filter(|r| r.error.is_some()).count();

    let dir = out_dir(g)?;
    write_atomic(&dir.join("sweep.csv"), |w| Ok(write_sweep_csv(&result.rows, w)?))?;
    write_json(&dir.join("sweep.json"), &result)?;
    if spec.export_trajectories {
        let tdir = dir.join("trajectories");
        std::fs::create_dir_all(&tdir)?;
        for (row, traj) in result.rows.iter().zip(&result.trajectories) {
            if let Some(traj) = traj {
                let name = format!("{}_{}_{:e}.csv", row.scheme, row.axis, row.value);
                write_atomic(&tdir.join(name), |w| Ok(traj.write_csv(w)?))?;
            }
        }
    }
    write_json(
        &dir.join("manifest.json"),
        &json!({
            "command": "sweep",
            "version": env!("CARGO_PKG_VERSION"),
            "workers": workers,
            "spec": spec,
        }),
    )?;
    info!("{} rows ({failed} failed), wrote {}", result.rows.len(), dir.display());
    Ok(())
}

fn oracle(g: &Global, dt: f64, tolerance: f64) -> Result<()> {
    let cfg = load_run_config(g, &[])?;
    let run = cfg.resolve()?;
    let report = oracle_check(&run.params, &run.schedule, &run.solver, &run.initial, dt, tolerance)?;
    println!(
        "oracle-check: max relative n_ph deviation {:.3e} at t = {:.4e} s over {} samples (tolerance {:.0e}): {}",
        report.max_rel_deviation,
        report.t_at_max_s,
        report.compared_samples,
        report.tolerance,
        if report.passed { "PASS" } else { "FAIL" }
    );
    let dir = out_dir(g)?;
    write_json(&dir.join("oracle.json"), &report)?;
    if !report.passed {
        bail!(OracleDisagreement(format!(
            "adaptive and RK4 runs disagree by {:.3e} (tolerance {:.0e})",
            report.max_rel_deviation, report.tolerance
        )));
    }
    Ok(())
}

fn calibrate(g: &Global, target_power: f64, tolerance_scale: f64) -> Result<()> {
    let cfg = load_run_config(g, &[])?;
    let run = cfg.resolve()?;
    let solver = run.solver.with_tolerance_scale(tolerance_scale);
    let cal = calibrate_kappa0(&run.params, run.schedule.kappa_low, target_power, &solver)?;
    println!(
        "kappa0/2pi = {:.6e} Hz (n_ph peak {:.6e} at {:.6e} s)",
        cal.kappa0_over_2pi_hz, cal.n_ph_max, cal.t_peak_s
    );
    write_json(&out_dir(g)?.join("calibration.json"), &cal)?;
    Ok(())
}
