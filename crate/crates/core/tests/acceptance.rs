//! Acceptance suite: one line per criterion, non-zero exit if any fails.
//!
//! Runs as a plain binary (`harness = false`) so the report is printed even
//! when test output is captured.

mod common;

use std::f64::consts::{FRAC_PI_8, TAU};
use std::sync::OnceLock;
use std::time::Instant;

use common::{default_run, preset_path, rel};

use qbmaser::analysis::{pulse_metrics, work_extraction_efficiency, PulseMetrics};
use qbmaser::integrator::{integrate_segment, Sampling, StepControl};
use qbmaser::model::{rhs, MeanFieldState, StateVector};
use qbmaser::oracle::{oracle_check, ORACLE_RK4_DT_S, ORACLE_TOLERANCE};
use qbmaser::protocol::{advance, kappa_at, ChargeTime, Phase, PhaseEvent, PhaseState, ScheduleConfig};
use qbmaser::sweep::{run_sweep, SweepRow, SweepSpec};
use qbmaser::{run_simulation, run_simulation_from, IntegrationError, Sample, Scheme};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn workers() -> usize {
    std::thread::available_parallelism().map_or(2, |n| n.get())
}

fn sweep(name: &str) -> &'static [SweepRow] {
    static CACHE: OnceLock<std::sync::Mutex<Vec<(String, &'static [SweepRow])>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some((_, rows)) = cache.lock().unwrap().iter().find(|(n, _)| n == name) {
        return rows;
    }
    let text = std::fs::read_to_string(preset_path(name)).unwrap();
    let spec: SweepSpec = serde_json::from_str(&text).unwrap();
    let rows: &'static [SweepRow] = Box::leak(run_sweep(&spec, workers()).unwrap().rows.into_boxed_slice());
    cache.lock().unwrap().push((name.to_string(), rows));
    rows
}

/// (axis value, metrics) of one scheme, failed points skipped.
fn series(rows: &[SweepRow], scheme: Scheme) -> Vec<(f64, PulseMetrics)> {
    rows.iter().filter(|r| r.scheme == scheme).filter_map(|r| r.metrics.map(|m| (r.value, m))).collect()
}

fn threshold_metrics(scheme: Scheme) -> &'static [PulseMetrics] {
    static CELLS: [OnceLock<Vec<PulseMetrics>>; 3] = [OnceLock::new(), OnceLock::new(), OnceLock::new()];
    let k = Scheme::ALL.iter().position(|s| *s == scheme).unwrap();
    CELLS[k].get_or_init(|| {
        let run = default_run(&[&format!("schedule.scheme={scheme}")]);
        let traj = run_simulation(&run.params, &run.schedule, &run.solver).unwrap();
        pulse_metrics(&traj).unwrap()
    })
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn within_decade(x: f64, target: f64) -> bool {
    x >= target / 10.0 && x <= target * 10.0
}

fn c1_trace() -> Outcome {
    let run = default_run(&[]);
    let started = Instant::now();
    let traj = run_simulation(&run.params, &run.schedule, &run.solver).map_err(|e| e.to_string())?;
    let secs = started.elapsed().as_secs_f64();
    let drift = traj.max_trace_drift();
    let cycles = pulse_metrics(&traj).map_err(|e| e.to_string())?.len();
    check(drift < 1e-9 && secs < 300.0 && cycles == 20, format!("max |sum p - 1| = {drift:.2e} over {cycles} cycles in {secs:.2} s"))
}

fn c2_decay() -> Outcome {
    let mut worst: f64 = 0.0;
    for kappa_hz in [1.45e9, 9.55e6] {
        let run = default_run(&[
            "params.g_35_over_2pi_hz=0",
            "params.pump_power_w=0",
            "schedule.n_cycles=0",
            &format!("schedule.kappa_high_over_2pi_hz={kappa_hz}"),
            "schedule.kappa_low_over_2pi_hz=1e6",
        ]);
        let kappa = TAU * kappa_hz;
        let mut schedule = run.schedule;
        schedule.t_charge = ChargeTime::Seconds(10.0 / kappa);
        let mut initial = MeanFieldState::ground();
        initial.n_ph = 1e8;
        let traj = run_simulation_from(&run.params, &schedule, &run.solver, &initial).map_err(|e| e.to_string())?;
        for s in &traj.samples {
            worst = worst.max(rel(s.state.n_ph, 1e8 * (-kappa * s.t).exp()));
        }
    }
    check(worst < 1e-6, format!("worst relative error vs exp(-kappa t) over 10/kappa: {worst:.2e}"))
}

fn c3_oracle() -> Outcome {
    let run = default_run(&[]);
    let r = oracle_check(&run.params, &run.schedule, &run.solver, &run.initial, ORACLE_RK4_DT_S, ORACLE_TOLERANCE)
        .map_err(|e| e.to_string())?;
    check(
        r.passed,
        format!("max relative n_ph deviation {:.2e} over {} shared samples (RK4 dt = 1e-12 s)", r.max_rel_deviation, r.compared_samples),
    )
}

fn c4_scheme_formulas() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut notes = Vec::new();
    for scheme in [Scheme::Linear, Scheme::Sinusoidal] {
        let cfg: ScheduleConfig = default_run(&[&format!("schedule.scheme={scheme}")]).schedule;
        let (hi, lo, td) = (cfg.kappa_high, cfg.kappa_low, cfg.tau_down);
        let start = 0.0;
        let delay = advance(&PhaseState::charging(), PhaseEvent::Elapsed { t: start }, &cfg).unwrap();
        let down = advance(&delay, PhaseEvent::Elapsed { t: start }, &cfg).unwrap();
        assert_eq!(down.phase, Phase::Descending);
        let shape = |x: f64| match scheme {
            Scheme::Linear => x,
            _ => (std::f64::consts::FRAC_PI_2 * x).sin().powi(2),
        };
        let expect = |x: f64| hi - (hi - lo) * shape(x);
        let exact_ends = kappa_at(&down, start, &cfg) == hi && kappa_at(&down, start + td, &cfg) == lo;
        let low = advance(&down, PhaseEvent::Elapsed { t: td }, &cfg).unwrap();
        let up = advance(&low, PhaseEvent::Elapsed { t: td + 1e-7 }, &cfg).unwrap();
        let t_up = td + 1e-7;
        let exact_up = kappa_at(&up, t_up, &cfg) == lo && kappa_at(&up, t_up + cfg.tau_up, &cfg) == hi;
        let mid = kappa_at(&down, start + 0.5 * td, &cfg);
        worst = worst.max(rel(mid, 0.5 * (hi + lo)));
        worst = worst.max(rel(mid, expect(0.5)));
        if scheme == Scheme::Sinusoidal {
            let quarter = kappa_at(&down, start + 0.25 * td, &cfg);
            worst = worst.max(rel(quarter, hi - (hi - lo) * FRAC_PI_8.sin().powi(2)));
        }
        worst = worst.max(rel(kappa_at(&up, t_up + 0.5 * cfg.tau_up, &cfg), 0.5 * (hi + lo)));
        if !(exact_ends && exact_up) {
            notes.push(format!("{scheme} endpoints not exact"));
        }
    }
    check(
        worst < 1e-14 && notes.is_empty(),
        format!("endpoints exact, worst midpoint/quarter-point relative error {worst:.1e} {}", notes.join("; ")),
    )
}

fn c5_lossless() -> Outcome {
    let mut q = default_run(&[]).params;
    q.xi = 0.0;
    q.k_sp = 0.0;
    for r in [
        &mut q.k_23, &mut q.k_24, &mut q.k_25, &mut q.k_31, &mut q.k_41, &mut q.k_51, &mut q.k_34, &mut q.k_43,
        &mut q.k_35, &mut q.k_53, &mut q.k_45, &mut q.k_54, &mut q.chi_34, &mut q.chi_35, &mut q.chi_45,
    ] {
        *r = 0.0;
    }
    q.kappa_0 = 0.0;
    let mut start = MeanFieldState::ground();
    start.p = [0.0, 0.0, 0.0, 0.0, 1.0];
    let ctl = StepControl {
        rel_tol: 1e-11,
        abs_tol: [1e-16, 1e-16, 1e-16, 1e-16, 1e-16, 1e-9, 1e-22, 1e-22, 1e-30],
        max_step: 1e-9,
        stiff_rate: 0.0,
        event_time_tol: 1e-16,
    };
    let guard = |_: f64, _: &StateVector| -> Result<(), IntegrationError> { Ok(()) };
    let out = integrate_segment(
        |_, y: &StateVector| rhs(y, 0.0, &q),
        0.0,
        start.to_vector(),
        2e-6,
        1e-12,
        &ctl,
        &Sampling { grid_dt: 1e-10, record_steps: true },
        None,
        &guard,
    )
    .map_err(|e| e.to_string())?;
    let mut samples = vec![Sample::new(0.0, 0.0, &start.to_vector(), &q).map_err(|e| e.to_string())?];
    for (t, y) in &out.samples {
        samples.push(Sample::new(*t, 0.0, y, &q).map_err(|e| e.to_string())?);
    }
    let eta = work_extraction_efficiency(&samples, &q);
    check((eta.value - 1.0).abs() < 1e-6, format!("eta_work = 1 + {:.2e}", eta.value - 1.0))
}

/// Metrics shown in the window sweeps. Absolute peak timing is left out:
/// the finite ramps of the linear and sinusoidal schemes shift the pulse by
/// a fixed fraction of the ramp time.
const COMPARED: [(&str, fn(&PulseMetrics) -> Option<f64>); 5] = [
    ("n_ph_max", |m| Some(m.n_ph_max)),
    ("p_out_max", |m| Some(m.p_out_max_w)),
    ("fwhm_nph", |m| m.fwhm_nph_s),
    ("eta_work", |m| Some(m.eta_work)),
    ("eta_power_max", |m| m.eta_power_max),
];

fn c6_convergence() -> Outcome {
    let metrics: Vec<PulseMetrics> = Scheme::ALL
        .iter()
        .map(|s| {
            let run = default_run(&[
                &format!("schedule.scheme={s}"),
                "schedule.termination.fixed=2e-6",
                "schedule.n_cycles=1",
            ]);
            let traj = run_simulation(&run.params, &run.schedule, &run.solver).unwrap();
            pulse_metrics(&traj).unwrap()[0]
        })
        .collect();
    let mut worst = (0.0, "");
    for (name, get) in COMPARED {
        let v: Vec<f64> = metrics.iter().map(|m| get(m).unwrap_or(f64::NAN)).collect();
        for a in &v {
            for b in &v {
                let d = rel(*a, *b);
                if !(d <= worst.0) {
                    worst = (d, name);
                }
            }
        }
    }
    check(worst.0 < 0.01, format!("worst pairwise difference at tau_2 = 2 us: {:.2}% ({})", 100.0 * worst.0, worst.1))
}

fn c7_instantaneous_train() -> Outcome {
    let m = threshold_metrics(Scheme::Instantaneous);
    let first = m[0].fwhm_nph_s.unwrap_or(f64::NAN);
    let late: Vec<f64> = m[15..].iter().map(|p| p.fwhm_nph_s.unwrap_or(f64::NAN)).collect();
    let late_max = late.iter().copied().fold(0.0, f64::max);
    let (lo, hi) = m.iter().map(|p| p.n_ph_max).fold((f64::INFINITY, 0.0_f64), |(a, b), v| (a.min(v), b.max(v)));
    let ok = (first - 8e-9).abs() <= 0.3 * 8e-9
        && late.iter().all(|w| *w < 2e-9)
        && lo >= 0.5e10
        && hi <= 2e10
        && m.len() == 20;
    check(
        ok,
        format!("first FWHM {:.2} ns, pulses 16-20 FWHM <= {:.2} ns, n_ph_max in [{lo:.3e}, {hi:.3e}]", first * 1e9, late_max * 1e9),
    )
}

fn c8_linear_sinusoidal_train() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for (scheme, target) in [(Scheme::Linear, 10usize), (Scheme::Sinusoidal, 4)] {
        let m = threshold_metrics(scheme);
        let n: Vec<f64> = m.iter().map(|p| p.n_ph_max).collect();
        let peak = qbmaser::analysis::argmax(&n) + 1;
        let settled = n[n.len() - 5..].iter().sum::<f64>() / 5.0;
        ok &= peak.abs_diff(target) <= 2 && (settled - 1.4e10).abs() <= 0.3 * 1.4e10;
        parts.push(format!("{scheme}: peak at pulse {peak} ({:.3e}), settles at {settled:.3e}", n[peak - 1]));
    }
    check(ok, parts.join("; "))
}

fn c9_non_optimal_regime() -> Outcome {
    let m = threshold_metrics(Scheme::Instantaneous);
    let eta_work = median(m.iter().map(|p| p.eta_work).collect());
    let eta_power = median(m.iter().filter_map(|p| p.eta_power_max).collect());
    check(
        within_decade(eta_work, 1e-3) && within_decade(eta_power, 1e-2),
        format!("median over 20 pulses: eta_work {eta_work:.2e}, eta_power_max {eta_power:.2e}"),
    )
}

fn c10_saturation() -> Outcome {
    let rows = sweep("fig4-tau2");
    let mut parts = Vec::new();
    let mut ok = true;
    for scheme in Scheme::ALL {
        let s = series(rows, scheme);
        let plateau = s.iter().map(|(_, m)| m.n_ph_max).fold(0.0, f64::max);
        // Non-decreasing (to solver tolerance) until the plateau is reached.
        let reach = s.iter().position(|(_, m)| m.n_ph_max >= 0.99 * plateau).unwrap();
        let monotone = s[..=reach].windows(2).all(|w| w[1].1.n_ph_max >= w[0].1.n_ph_max * (1.0 - 1e-6));
        let flat = s[reach..].iter().all(|(_, m)| m.n_ph_max >= 0.99 * plateau);
        ok &= within_decade(plateau, 1e16) && monotone && flat;
        parts.push(format!("{scheme} {plateau:.3e} from {:.0} ns", s[reach].0 * 1e9));
    }
    check(ok, format!("n_ph_max plateau: {}", parts.join(", ")))
}

fn c11_output_power() -> Outcome {
    let rows = sweep("fig4-tau2");
    let mut parts = Vec::new();
    let mut ok = true;
    for (scheme, tau_opt, p_target) in
        [(Scheme::Instantaneous, 440e-9, 100.0), (Scheme::Linear, 505e-9, 10.0), (Scheme::Sinusoidal, 500e-9, 10.0)]
    {
        let s = series(rows, scheme);
        let (tau, best) = s.iter().map(|(v, m)| (*v, m.p_out_max_w)).fold((0.0, 0.0), |a, b| if b.1 > a.1 { b } else { a });
        let tail = s.last().unwrap().1.p_out_max_w;
        ok &= within_decade(best, p_target) && (tau - tau_opt).abs() <= 0.1 * tau_opt && (tail - 1.44).abs() <= 0.3 * 1.44;
        parts.push(format!("{scheme} {best:.3e} W at {:.0} ns, {tail:.3} W at 2 us", tau * 1e9));
    }
    check(ok, parts.join("; "))
}

fn c12_power_compression() -> Outcome {
    let rows = sweep("fig5");
    let mut parts = Vec::new();
    let mut ok = true;
    for (scheme, target) in [(Scheme::Instantaneous, 1e3), (Scheme::Linear, 1e2), (Scheme::Sinusoidal, 1e2)] {
        let s = series(rows, scheme);
        let (tau, best) =
            s.iter().filter_map(|(v, m)| m.eta_power_max.map(|e| (*v, e))).fold((0.0, 0.0), |a, b| if b.1 > a.1 { b } else { a });
        ok &= within_decade(best, target);
        parts.push(format!("{scheme} {best:.3e} at {:.0} ns", tau * 1e9));
    }
    // The ratio diverges where P_ins changes sign along the τ₂ axis, so the
    // maximum depends on how close a grid point lands to that crossing.
    check(ok, format!("best eta_power_max on the 5 ns grid: {}", parts.join(", ")))
}

fn c13_work_efficiency() -> Outcome {
    let rows = sweep("fig5");
    let mut parts = Vec::new();
    let mut ok = true;
    for scheme in Scheme::ALL {
        let s = series(rows, scheme);
        let (tau, best) = s.iter().map(|(v, m)| (*v, m.eta_work)).fold((0.0, f64::MIN), |a, b| if b.1 > a.1 { b } else { a });
        let tail: Vec<f64> = s.iter().filter(|(v, _)| *v >= 1e-6).map(|(_, m)| m.eta_work).collect();
        let stable = tail.iter().all(|e| (e - 0.45).abs() <= 0.15);
        let last = *tail.last().unwrap();
        ok &= (best - 0.6).abs() <= 0.15 && stable && best > last;
        parts.push(format!("{scheme} rises to {best:.3} at {:.0} ns, {last:.3} beyond 1 us", tau * 1e9));
    }
    check(ok, parts.join("; "))
}

fn c14_kappa_low() -> Outcome {
    let rows = sweep("fig4-kappa");
    let mut parts = Vec::new();
    let mut ok = true;
    for scheme in Scheme::ALL {
        let s = series(rows, scheme);
        let at = |hz: f64| s.iter().find(|(v, _)| *v == hz).unwrap().1;
        let n_opt = at(9.55e6).n_ph_max;
        let n_last = s.last().unwrap().1.n_ph_max;
        let w_before = at(7.96e6).fwhm_nph_s.unwrap_or(f64::NAN);
        let w_after = s
            .iter()
            .filter(|(v, _)| *v > 9.55e6)
            .filter_map(|(_, m)| m.fwhm_nph_s)
            .fold(f64::INFINITY, f64::min);
        ok &= n_opt / n_last > 10.0 && (w_before - 30e-9).abs() <= 9e-9 && (w_after - 10e-9).abs() <= 3e-9;
        parts.push(format!(
            "{scheme}: n_ph_max /{:.1e}, FWHM {:.1} -> {:.1} ns",
            n_opt / n_last,
            w_before * 1e9,
            w_after * 1e9
        ));
    }
    check(ok, parts.join("; "))
}

fn c15_linear_ascent_start() -> Outcome {
    let m = threshold_metrics(Scheme::Linear);
    let kappa_low = default_run(&[]).schedule.kappa_low;
    let at_low: Vec<bool> = m.iter().map(|p| p.kappa_at_tau_up_start_rad_s == Some(kappa_low)).collect();
    let k = at_low.iter().take_while(|b| **b).count();
    let afterwards = m[k..].iter().all(|p| p.kappa_at_tau_up_start_rad_s.is_some_and(|v| v > kappa_low));
    check(
        k.abs_diff(10) <= 2 && afterwards,
        format!("ascent starts at kappa_low for the first {k} cycles, above it for the remaining {}", m.len() - k),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 15] = [
        ("trace conservation, 20-cycle default run", c1_trace),
        ("decoupled photon decay", c2_decay),
        ("adaptive vs RK4 oracle", c3_oracle),
        ("scheme formula values", c4_scheme_formulas),
        ("lossless exchange eta_work", c5_lossless),
        ("large tau_2 scheme convergence", c6_convergence),
        ("instantaneous pulse train", c7_instantaneous_train),
        ("linear/sinusoidal pulse trains", c8_linear_sinusoidal_train),
        ("non-optimal regime efficiencies", c9_non_optimal_regime),
        ("tau_2 sweep photon saturation", c10_saturation),
        ("tau_2 sweep output power", c11_output_power),
        ("optimized power compression", c12_power_compression),
        ("work efficiency across tau_2", c13_work_efficiency),
        ("kappa_low sweep collapse", c14_kappa_low),
        ("linear ascent start kappa", c15_linear_ascent_start),
    ];
    let started = Instant::now();
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {:>2} {tag} [{name}] {detail} ({:.1} s)", k + 1, t.elapsed().as_secs_f64());
    }
    println!("acceptance: {} of {} criteria passed in {:.1} s", criteria.len() - failed, criteria.len(), started.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
