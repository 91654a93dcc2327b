//! Per-pulse figures of merit extracted from a sampled trajectory.
//!
//! Each modulation cycle gets a window running from the start of its
//! modulation window (the first descending or low phase) to the start of the
//! next cycle's, or to the end of the run. Every metric is computed inside
//! that window.

use serde::{Deserialize, Serialize};

use crate::error::AnalysisError;
use crate::params::PhysicalParameters;
use crate::protocol::Phase;
use crate::trajectory::{PhaseLogEntry, Sample, Trajectory};

/// Below this |P_ins| (W) the power ratio is reported as undefined.
pub const P_INS_FLOOR_W: f64 = 1e-30;

/// Half-maximum crossings are refined to this time resolution, s.
pub const FWHM_TIME_TOL_S: f64 = 1e-13;

/// Sample range `[start, end)` of one cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleWindow {
    pub cycle_index: usize,
    pub start: usize,
    pub end: usize,
}

pub fn segment_cycles(trajectory: &Trajectory) -> Result<Vec<CycleWindow>, AnalysisError> {
    windows_from_log(&trajectory.phase_log, trajectory.samples.len())
}

fn windows_from_log(log: &[PhaseLogEntry], n_samples: usize) -> Result<Vec<CycleWindow>, AnalysisError> {
    if log.is_empty() {
        return Err(AnalysisError::EmptyPhaseLog);
    }
    let mut starts: Vec<(usize, usize)> = Vec::new();
    for e in log {
        let opens = matches!(e.phase, Phase::Descending | Phase::Low);
        if opens && starts.last().map(|s| s.0) != Some(e.cycle_index) {
            starts.push((e.cycle_index, e.sample_index));
        }
    }
    Ok(starts
        .iter()
        .enumerate()
        .map(|(k, &(cycle_index, start))| CycleWindow {
            cycle_index,
            start,
            end: starts.get(k + 1).map_or(n_samples, |s| s.1),
        })
        .collect())
}

/// Full width at half maximum; `None` when the half level is never reached
/// on one side (a truncated pulse) or the maximum sits on the window edge.
pub fn fwhm(t: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(t.len(), y.len());
    let n = y.len();
    if n < 3 {
        return None;
    }
    let i_max = argmax(y);
    if i_max == 0 || i_max == n - 1 {
        return None;
    }
    let half = 0.5 * refined_peak(t, y, i_max);
    if !(half > 0.0) {
        return None;
    }
    let slopes = pchip_slopes(t, y);
    let left = (0..i_max).rev().find(|&j| y[j] <= half)?;
    let right = (i_max + 1..n).find(|&j| y[j] <= half)?;
    let t_left = crossing(t, y, &slopes, left, left + 1, half);
    let t_right = crossing(t, y, &slopes, right - 1, right, half);
    Some(t_right - t_left)
}

/// Index of the first largest element.
pub fn argmax(y: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in y.iter().enumerate() {
        if *v > y[best] {
            best = i;
        }
    }
    best
}

/// Vertex of the parabola through the discrete maximum and its neighbours,
/// if it is a maximum lying between them; otherwise the sample value.
fn refined_peak(t: &[f64], y: &[f64], i: usize) -> f64 {
    let (t0, t1, t2) = (t[i - 1], t[i], t[i + 1]);
    let (y0, y1, y2) = (y[i - 1], y[i], y[i + 1]);
    if !(t0 < t1 && t1 < t2) {
        return y1;
    }
    // Newton form: y = y0 + d1 (x − t0) + a (x − t0)(x − t1)
    let d1 = (y1 - y0) / (t1 - t0);
    let d2 = (y2 - y1) / (t2 - t1);
    let a = (d2 - d1) / (t2 - t0);
    if !(a < 0.0) {
        return y1;
    }
    let tv = 0.5 * (t0 + t1) - d1 / (2.0 * a);
    if !(tv > t0 && tv < t2) {
        return y1;
    }
    let yv = y0 + d1 * (tv - t0) + a * (tv - t0) * (tv - t1);
    yv.max(y1)
}

/// Fritsch–Carlson monotone node slopes. Zero-length intervals (a κ jump
/// recorded as two samples at one time) split the series into independent
/// pieces.
fn pchip_slopes(t: &[f64], y: &[f64]) -> Vec<f64> {
    let n = t.len();
    let secant = |k: usize| -> Option<f64> {
        let h = t[k + 1] - t[k];
        (h > 0.0).then(|| (y[k + 1] - y[k]) / h)
    };
    (0..n)
        .map(|k| {
            let left = if k > 0 { secant(k - 1) } else { None };
            let right = if k + 1 < n { secant(k) } else { None };
            match (left, right) {
                (Some(dl), Some(dr)) => {
                    if dl * dr <= 0.0 {
                        0.0
                    } else {
                        let hl = t[k] - t[k - 1];
                        let hr = t[k + 1] - t[k];
                        let w1 = 2.0 * hr + hl;
                        let w2 = hr + 2.0 * hl;
                        (w1 + w2) / (w1 / dl + w2 / dr)
                    }
                }
                (Some(d), None) | (None, Some(d)) => d,
                (None, None) => 0.0,
            }
        })
        .collect()
}

fn hermite(t: &[f64], y: &[f64], d: &[f64], a: usize, b: usize, x: f64) -> f64 {
    let h = t[b] - t[a];
    let s = (x - t[a]) / h;
    let s2 = s * s;
    let s3 = s2 * s;
    y[a] * (2.0 * s3 - 3.0 * s2 + 1.0)
        + h * d[a] * (s3 - 2.0 * s2 + s)
        + y[b] * (-2.0 * s3 + 3.0 * s2)
        + h * d[b] * (s3 - s2)
}

/// Time at which the interpolant between samples `a` and `b = a + 1`
/// passes `level`. One endpoint is at or below the level, the other above.
fn crossing(t: &[f64], y: &[f64], d: &[f64], a: usize, b: usize, level: f64) -> f64 {
    if t[b] <= t[a] {
        return t[a];
    }
    let rising = y[b] > y[a];
    let (mut lo, mut hi) = (t[a], t[b]);
    while hi - lo > FWHM_TIME_TOL_S {
        let mid = 0.5 * (lo + hi);
        let above = hermite(t, y, d, a, b, mid) > level;
        if above == rising {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// η_work over a window that starts at the modulation-window start: photon
/// energy gained divided by battery energy released, up to the photon peak.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkEfficiency {
    pub value: f64,
    /// The battery gained energy over the interval (pump-dominated); the
    /// signed ratio is kept.
    pub battery_gained: bool,
}

pub fn work_extraction_efficiency(window: &[Sample], params: &PhysicalParameters) -> WorkEfficiency {
    let start = &window[0];
    let n: Vec<f64> = window.iter().map(|s| s.state.n_ph).collect();
    let peak = &window[argmax(&n)];
    let photon_gain = params.photon_energy() * (peak.state.n_ph - start.state.n_ph);
    let released = start.obs.energy - peak.obs.energy;
    WorkEfficiency { value: photon_gain / released, battery_gained: !(released > 0.0) }
}

/// Power compression at the output-power maximum of a window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerCompression {
    /// P_out / |P_ins|; `None` when |P_ins| is below [`P_INS_FLOOR_W`].
    pub ratio: Option<f64>,
    pub t: f64,
    pub p_out: f64,
    pub p_ins: f64,
    pub kappa: f64,
    pub n_ph: f64,
}

pub fn power_compression(window: &[Sample]) -> PowerCompression {
    let p: Vec<f64> = window.iter().map(|s| s.obs.p_out).collect();
    let s = &window[argmax(&p)];
    let ratio = (s.obs.p_ins.abs() >= P_INS_FLOOR_W).then(|| s.obs.p_out / s.obs.p_ins.abs());
    PowerCompression { ratio, t: s.t, p_out: s.obs.p_out, p_ins: s.obs.p_ins, kappa: s.kappa, n_ph: s.state.n_ph }
}

/// One row of the per-cycle metrics table. `None` marks an unresolved FWHM
/// or an undefined power ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseMetrics {
    pub cycle_index: usize,
    pub t_tau2_start_s: f64,
    pub n_ph_max: f64,
    pub t_peak_nph_s: f64,
    pub fwhm_nph_s: Option<f64>,
    pub fwhm_pout_s: Option<f64>,
    pub p_out_max_w: f64,
    pub t_peak_pout_s: f64,
    pub kappa_at_pout_max_rad_s: f64,
    pub n_ph_at_pout_max: f64,
    /// Signed dE/dt at the output peak.
    pub p_ins_at_pout_max_w: f64,
    pub eta_work: f64,
    pub eta_work_battery_gained: bool,
    pub eta_power_max: Option<f64>,
    pub tau_low_realized_s: f64,
    pub n_ph_at_tau2_start: f64,
    /// κ when the ascent began; `None` when the cycle had no ascent.
    pub kappa_at_tau_up_start_rad_s: Option<f64>,
}

fn cycle_phase_stats(log: &[PhaseLogEntry], cycle: usize) -> (f64, Option<f64>) {
    let mut tau_low = 0.0;
    let mut kappa_up = None;
    for (k, e) in log.iter().enumerate() {
        if e.cycle_index != cycle {
            continue;
        }
        match e.phase {
            Phase::Low => {
                if let Some(next) = log.get(k + 1) {
                    tau_low += next.t - e.t;
                }
            }
            Phase::Ascending if kappa_up.is_none() => kappa_up = Some(e.kappa),
            _ => {}
        }
    }
    (tau_low, kappa_up)
}

pub fn window_metrics(
    window: &[Sample],
    cycle_index: usize,
    log: &[PhaseLogEntry],
    params: &PhysicalParameters,
) -> PulseMetrics {
    let t: Vec<f64> = window.iter().map(|s| s.t).collect();
    let n: Vec<f64> = window.iter().map(|s| s.state.n_ph).collect();
    let p: Vec<f64> = window.iter().map(|s| s.obs.p_out).collect();
    let i_n = argmax(&n);
    let work = work_extraction_efficiency(window, params);
    let power = power_compression(window);
    let (tau_low, kappa_up) = cycle_phase_stats(log, cycle_index);
    PulseMetrics {
        cycle_index,
        t_tau2_start_s: t[0],
        n_ph_max: n[i_n],
        t_peak_nph_s: t[i_n],
        fwhm_nph_s: fwhm(&t, &n),
        fwhm_pout_s: fwhm(&t, &p),
        p_out_max_w: power.p_out,
        t_peak_pout_s: power.t,
        kappa_at_pout_max_rad_s: power.kappa,
        n_ph_at_pout_max: power.n_ph,
        p_ins_at_pout_max_w: power.p_ins,
        eta_work: work.value,
        eta_work_battery_gained: work.battery_gained,
        eta_power_max: power.ratio,
        tau_low_realized_s: tau_low,
        n_ph_at_tau2_start: n[0],
        kappa_at_tau_up_start_rad_s: kappa_up,
    }
}

/// Metrics for every cycle, in cycle order.
pub fn pulse_metrics(trajectory: &Trajectory) -> Result<Vec<PulseMetrics>, AnalysisError> {
    metrics_from_parts(&trajectory.samples, &trajectory.phase_log, &trajectory.manifest.params)
}

/// Same as [`pulse_metrics`] for samples and a phase log held separately,
/// e.g. after reading them back from disk.
pub fn metrics_from_parts(
    samples: &[Sample],
    log: &[PhaseLogEntry],
    params: &PhysicalParameters,
) -> Result<Vec<PulseMetrics>, AnalysisError> {
    Ok(windows_from_log(log, samples.len())?
        .iter()
        .map(|w| window_metrics(&samples[w.start..w.end], w.cycle_index, log, params))
        .collect())
}

/// Flat CSV mirror of the metrics table. Empty cells are the `None` markers.
pub fn write_metrics_csv<W: std::io::Write>(rows: &[PulseMetrics], w: W) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_metrics_csv<R: std::io::Read>(r: R) -> Result<Vec<PulseMetrics>, csv::Error> {
    csv::Reader::from_reader(r).deserialize().collect()
}
