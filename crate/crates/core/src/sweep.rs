//! One-dimensional parameter sweeps over τ₂, κ_low or τ₁.

use std::collections::BTreeMap;
use std::fmt;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::analysis::{pulse_metrics, PulseMetrics};
use crate::config::{set_path, RunConfig};
use crate::error::{ConfigError, ExportError};
use crate::protocol::Scheme;
use crate::simulation::run_simulation_from;
use crate::trajectory::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    /// Fixed modulation window length, s.
    #[serde(rename = "tau_2")]
    Tau2,
    /// κ_low/2π, Hz.
    KappaLow,
    /// Delay at κ_high, s.
    #[serde(rename = "tau_1")]
    Tau1,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Tau2 => "tau_2",
            Axis::KappaLow => "kappa_low",
            Axis::Tau1 => "tau_1",
        }
    }

    /// Writes `v` into the config tree.
    fn apply(self, cfg: &mut Value, v: f64) -> Result<(), String> {
        match self {
            Axis::Tau2 => set_path(cfg, "schedule.termination", serde_json::json!({ "fixed": v })),
            Axis::KappaLow => set_path(cfg, "schedule.kappa_low_over_2pi_hz", v.into()),
            Axis::Tau1 => set_path(cfg, "schedule.tau_1_s", v.into()),
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One piece of a grid: a single value, `{"range": [start, stop, step]}`
/// (stop excluded) or `{"logspace": [start, stop, count]}` (both ends
/// included).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridPiece {
    Value(f64),
    Range { range: [f64; 3] },
    Logspace { logspace: (f64, f64, usize) },
}

/// Rounds away accumulated binary noise so grid labels read cleanly.
fn tidy(v: f64) -> f64 {
    format!("{v:.12e}").parse().unwrap_or(v)
}

pub fn expand_grid(pieces: &[GridPiece]) -> Result<Vec<f64>, ConfigError> {
    let mut out = Vec::new();
    for p in pieces {
        match *p {
            GridPiece::Value(v) => out.push(v),
            GridPiece::Range { range: [start, stop, step] } => {
                if !(step > 0.0 && stop > start) {
                    return Err(ConfigError::Invalid(vec![format!(
                        "grid: range [{start}, {stop}, {step}] needs stop > start and step > 0"
                    )]));
                }
                let mut k = 0u64;
                loop {
                    let v = tidy(start + k as f64 * step);
                    if v >= stop - 1e-9 * step {
                        break;
                    }
                    out.push(v);
                    k += 1;
                }
            }
            GridPiece::Logspace { logspace: (start, stop, count) } => {
                if !(start > 0.0 && stop > start && count >= 2) {
                    return Err(ConfigError::Invalid(vec![format!(
                        "grid: logspace [{start}, {stop}, {count}] needs 0 < start < stop and count >= 2"
                    )]));
                }
                let (a, b) = (start.ln(), stop.ln());
                for k in 0..count {
                    let v = if k + 1 == count { stop } else { (a + (b - a) * k as f64 / (count - 1) as f64).exp() };
                    out.push(if k == 0 { start } else { tidy(v) });
                }
            }
        }
    }
    if out.is_empty() {
        return Err(ConfigError::Invalid(vec!["grid: empty".into()]));
    }
    if let Some(w) = out.windows(2).find(|w| !(w[1] > w[0])) {
        return Err(ConfigError::Invalid(vec![format!("grid: not strictly increasing at {} -> {}", w[0], w[1])]));
    }
    Ok(out)
}

fn default_target_cycle() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub axis: Axis,
    pub grid: Vec<GridPiece>,
    pub schemes: Vec<Scheme>,
    pub base: RunConfig,
    /// 1-based pulse whose metrics are reported; also the number of cycles run.
    #[serde(default = "default_target_cycle")]
    pub target_cycle: usize,
    /// Per-scheme dotted-path overrides applied before the axis value,
    /// e.g. a scheme-specific τ₂ for a κ_low sweep.
    #[serde(default)]
    pub scheme_overrides: BTreeMap<Scheme, BTreeMap<String, Value>>,
    /// Keep every point's trajectory in the result.
    #[serde(default)]
    pub export_trajectories: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// One grid point for one scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub scheme: Scheme,
    pub axis: Axis,
    pub value: f64,
    /// Failure marker; `None` for a successful point.
    pub error: Option<String>,
    pub metrics: Option<PulseMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub spec: SweepSpec,
    pub rows: Vec<SweepRow>,
    /// Per-point trajectories (same order as `rows`) when requested.
    #[serde(skip)]
    pub trajectories: Vec<Option<Trajectory>>,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<Vec<f64>, ConfigError> {
        let grid = expand_grid(&self.grid)?;
        let mut issues = Vec::new();
        if self.schemes.is_empty() {
            issues.push("schemes: at least one scheme required".to_string());
        }
        if self.target_cycle == 0 {
            issues.push("target_cycle: pulses are numbered from 1".to_string());
        }
        for scheme in &self.schemes {
            if let Err(e) = self.point_config(*scheme, grid[0]) {
                issues.push(format!("{scheme} at {}: {e}", grid[0]));
            }
        }
        if issues.is_empty() {
            Ok(grid)
        } else {
            Err(ConfigError::Invalid(issues))
        }
    }

    /// Complete run configuration of one grid point. Structural problems
    /// (unknown keys, bad overrides) are reported here; physical validity is
    /// left to [`RunConfig::resolve`] so one bad point does not sink the
    /// sweep.
    pub fn point_config(&self, scheme: Scheme, value: f64) -> Result<RunConfig, ConfigError> {
        let mut cfg = self.base.to_value();
        let bad = |e: String| ConfigError::Invalid(vec![e]);
        set_path(&mut cfg, "schedule.scheme", serde_json::to_value(scheme).expect("scheme serializes")).map_err(bad)?;
        if let Some(over) = self.scheme_overrides.get(&scheme) {
            for (path, v) in over {
                set_path(&mut cfg, path, v.clone()).map_err(bad)?;
            }
        }
        self.axis.apply(&mut cfg, value).map_err(bad)?;
        set_path(&mut cfg, "schedule.n_cycles", self.target_cycle.into()).map_err(bad)?;
        RunConfig::from_value(cfg)
    }
}

/// Simulates one grid point and extracts the target pulse.
pub fn run_point(spec: &SweepSpec, scheme: Scheme, value: f64) -> (SweepRow, Option<Trajectory>) {
    let row = |error: Option<String>, metrics| SweepRow { scheme, axis: spec.axis, value, error, metrics };
    let run = match spec.point_config(scheme, value).and_then(|c| c.resolve()) {
        Ok(r) => r,
        Err(e) => return (row(Some(e.to_string()), None), None),
    };
    let traj = match run_simulation_from(&run.params, &run.schedule, &run.solver, &run.initial) {
        Ok(t) => t,
        Err(e) => return (row(Some(e.to_string()), None), None),
    };
    let out = match pulse_metrics(&traj) {
        Ok(m) => match m.into_iter().find(|m| m.cycle_index + 1 == spec.target_cycle) {
            Some(m) => row(None, Some(m)),
            None => row(Some(format!("pulse {} not found", spec.target_cycle)), None),
        },
        Err(e) => row(Some(e.to_string()), None),
    };
    (out, spec.export_trajectories.then_some(traj))
}

/// Runs every (scheme, value) point on a pool of `workers` threads. Rows come
/// back ordered by scheme (as listed) then grid value, independent of
/// scheduling.
pub fn run_sweep(spec: &SweepSpec, workers: usize) -> Result<SweepResult, ConfigError> {
    let grid = spec.validate()?;
    let points: Vec<(Scheme, f64)> =
        spec.schemes.iter().flat_map(|s| grid.iter().map(move |v| (*s, *v))).collect();
    let total = points.len();
    let done = std::sync::atomic::AtomicUsize::new(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| ConfigError::Invalid(vec![format!("workers: {e}")]))?;
    let results: Vec<(SweepRow, Option<Trajectory>)> = pool.install(|| {
        points
            .par_iter()
            .map(|&(scheme, v)| {
                let r = run_point(spec, scheme, v);
                let k = done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1;
                match &r.0.error {
                    None => info!("[{k}/{total}] {scheme} {}={v:e} ok", spec.axis),
                    Some(e) => info!("[{k}/{total}] {scheme} {}={v:e} failed: {e}", spec.axis),
                }
                r
            })
            .collect()
    });
    let (rows, trajectories) = results.into_iter().unzip();
    Ok(SweepResult { spec: spec.clone(), rows, trajectories })
}

/// Metric columns of the long-format sweep table, in order.
pub const METRIC_COLUMNS: [&str; 17] = [
    "cycle_index",
    "t_tau2_start_s",
    "n_ph_max",
    "t_peak_nph_s",
    "fwhm_nph_s",
    "fwhm_pout_s",
    "p_out_max_w",
    "t_peak_pout_s",
    "kappa_at_pout_max_rad_s",
    "n_ph_at_pout_max",
    "p_ins_at_pout_max_w",
    "eta_work",
    "eta_work_battery_gained",
    "eta_power_max",
    "tau_low_realized_s",
    "n_ph_at_tau2_start",
    "kappa_at_tau_up_start_rad_s",
];

fn cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Long-format CSV: `scheme, axis, value, error`, then the metric columns.
/// Empty cells mark failures, unresolved widths and undefined ratios.
pub fn write_sweep_csv<W: std::io::Write>(rows: &[SweepRow], w: W) -> Result<(), ExportError> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["scheme", "axis", "value", "error"];
    header.extend(METRIC_COLUMNS);
    out.write_record(&header)?;
    for r in rows {
        let metrics = r.metrics.map(|m| serde_json::to_value(m).expect("metrics serialize"));
        let mut rec = vec![r.scheme.name().to_string(), r.axis.name().to_string(), Value::from(r.value).to_string()];
        rec.push(r.error.clone().unwrap_or_default());
        for col in METRIC_COLUMNS {
            rec.push(metrics.as_ref().map(|m| cell(&m[col])).unwrap_or_default());
        }
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_sweep_csv<R: std::io::Read>(r: R) -> Result<Vec<SweepRow>, ExportError> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let fmt_err = |message: String| ExportError::Format { line, message };
        let field = |k: usize| rec.get(k).ok_or_else(|| fmt_err(format!("missing column {k}")));
        let scheme: Scheme = field(0)?.parse().map_err(fmt_err)?;
        let axis: Axis = serde_json::from_value(Value::String(field(1)?.to_string()))?;
        let value: f64 = field(2)?.parse().map_err(|e| fmt_err(format!("value: {e}")))?;
        let error = Some(field(3)?.to_string()).filter(|s| !s.is_empty());
        let cells: Vec<&str> = (0..METRIC_COLUMNS.len()).map(|k| field(4 + k)).collect::<Result<_, _>>()?;
        let metrics = if cells.iter().all(|c| c.is_empty()) {
            None
        } else {
            let mut map = serde_json::Map::new();
            for (col, c) in METRIC_COLUMNS.iter().zip(&cells) {
                let v = if c.is_empty() { Value::Null } else { serde_json::from_str(c)? };
                map.insert((*col).to_string(), v);
            }
            Some(serde_json::from_value(Value::Object(map))?)
        };
        rows.push(SweepRow { scheme, axis, value, error, metrics });
    }
    Ok(rows)
}
