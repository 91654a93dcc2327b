//! Whole-run checks against closed forms and against the reference stepper.

mod common;

use common::{default_config, default_run, rel};

use qbmaser::analysis::{metrics_from_parts, pulse_metrics, work_extraction_efficiency};
use qbmaser::integrator::{integrate_segment, rk4_reference, rk4_reference_from, Sampling, StepControl};
use qbmaser::model::{rhs, MeanFieldState, StateVector};
use qbmaser::protocol::{ChargeTime, Phase, Termination};
use qbmaser::{run_simulation, run_simulation_from, IntegrationError, Sample, Trajectory};

fn no_guard(_: f64, _: &StateVector) -> Result<(), IntegrationError> {
    Ok(())
}

fn tight_control() -> StepControl<9> {
    StepControl {
        rel_tol: 1e-11,
        abs_tol: [1e-16, 1e-16, 1e-16, 1e-16, 1e-16, 1e-9, 1e-22, 1e-22, 1e-30],
        max_step: 1e-9,
        stiff_rate: 0.0,
        event_time_tol: 1e-16,
    }
}

#[test]
fn decoupled_cavity_decays_exponentially() {
    // Coupling and pump off, 10⁶ photons, κ_high for ten decay times.
    let cfg = default_run(&["params.g_35_over_2pi_hz=0", "params.pump_power_w=0", "schedule.n_cycles=0"]);
    let kappa = cfg.schedule.kappa_high;
    let mut schedule = cfg.schedule;
    schedule.t_charge = ChargeTime::Seconds(10.0 / kappa);
    let mut initial = MeanFieldState::ground();
    initial.n_ph = 1e6;
    let traj = run_simulation_from(&cfg.params, &schedule, &cfg.solver, &initial).unwrap();
    assert!(traj.samples.len() > 5);
    let worst = traj
        .samples
        .iter()
        .map(|s| rel(s.state.n_ph, 1e6 * (-kappa * s.t).exp()))
        .fold(0.0, f64::max);
    assert!(worst < 1e-6, "worst relative error {worst:e}");
    assert!((traj.last().t - 10.0 / kappa).abs() < 1e-20);
}

#[test]
fn pump_only_two_level_closed_form() {
    // With ISC and coupling removed the pump shuttles population between
    // |1⟩ and |2⟩: p2(t) = ξ/(2ξ + k_sp)·(1 − e^{−(2ξ + k_sp)t}).
    let mut q = default_run(&[]).params;
    q.g_35 = 0.0;
    q.k_23 = 0.0;
    q.k_24 = 0.0;
    q.k_25 = 0.0;
    let rate = 2.0 * q.xi + q.k_sp;
    let horizon = 5.0 / rate;
    let out = integrate_segment(
        |_, y: &StateVector| rhs(y, 1e9, &q),
        0.0,
        MeanFieldState::ground().to_vector(),
        horizon,
        1e-12,
        &tight_control(),
        &Sampling { grid_dt: horizon / 50.0, record_steps: false },
        None,
        &no_guard,
    )
    .unwrap();
    for (t, y) in out.samples.iter().chain(std::iter::once(&(out.t_end, out.y_end))) {
        let p2 = q.xi / rate * (1.0 - (-rate * t).exp());
        assert!((y[1] - p2).abs() < 1e-10, "t = {t:e}: {} vs {p2}", y[1]);
        assert!((y[0] + y[1] - 1.0).abs() < 1e-12);
    }
}

/// Charging only (no cycles) up to `t_end`, with an explicit duration.
fn charging_only(t_end: f64) -> (qbmaser::config::ResolvedRun, qbmaser::ScheduleConfig) {
    let run = default_run(&["schedule.n_cycles=0"]);
    let mut schedule = run.schedule;
    schedule.t_charge = ChargeTime::Seconds(t_end);
    (run, schedule)
}

#[test]
fn rk4_reference_is_fourth_order() {
    // Cavity decay at κ_high over ten decay times, against the closed form.
    let run = default_run(&["params.g_35_over_2pi_hz=0", "params.pump_power_w=0", "schedule.n_cycles=0"]);
    let kappa = run.schedule.kappa_high;
    let t_end = 10.0 / kappa;
    let mut schedule = run.schedule;
    schedule.t_charge = ChargeTime::Seconds(t_end);
    let mut initial = MeanFieldState::ground();
    initial.n_ph = 1e6;
    let err = |dt: f64| {
        let traj = rk4_reference_from(&run.params, &schedule, dt, dt, &initial).unwrap();
        rel(traj.last().state.n_ph, 1e6 * (-kappa * t_end).exp())
    };
    let (e1, e2, e3) = (err(1e-11), err(5e-12), err(2.5e-12));
    let (r1, r2) = (e1 / e2, e2 / e3);
    assert!((13.0..19.0).contains(&r1) && (13.0..19.0).contains(&r2), "ratios {r1} {r2} ({e1:e} {e2:e} {e3:e})");
}

#[test]
fn rk4_rejects_unresolved_step() {
    let (run, schedule) = charging_only(1e-8);
    let err = rk4_reference(&run.params, &schedule, 1e-9, 1e-9).unwrap_err();
    assert!(err.to_string().contains("does not resolve"), "{err}");
}

fn first_pulse(overrides: &[&str], tol_scale: f64) -> qbmaser::analysis::PulseMetrics {
    let mut all = vec!["schedule.n_cycles=1"];
    all.extend_from_slice(overrides);
    let run = default_run(&all);
    let solver = run.solver.with_tolerance_scale(tol_scale);
    let traj = run_simulation(&run.params, &run.schedule, &solver).unwrap();
    pulse_metrics(&traj).unwrap()[0]
}

#[test]
fn first_pulse_metrics_converge_with_tolerance() {
    for over in [&["schedule.termination.fixed=440e-9"][..], &["schedule.scheme=linear"][..]] {
        let coarse = first_pulse(over, 10.0);
        let fine = first_pulse(over, 0.01);
        assert!(rel(coarse.n_ph_max, fine.n_ph_max) < 1e-4, "{over:?}");
        assert!(rel(coarse.p_out_max_w, fine.p_out_max_w) < 1e-4, "{over:?}");
        assert!(rel(coarse.fwhm_nph_s.unwrap(), fine.fwhm_nph_s.unwrap()) < 1e-3, "{over:?}");
        assert!(rel(coarse.eta_work, fine.eta_work) < 1e-3, "{over:?}");
    }
}

fn threshold_run(scheme: &str, cycles: usize) -> Trajectory {
    let run = default_run(&[&format!("schedule.scheme={scheme}"), &format!("schedule.n_cycles={cycles}")]);
    run_simulation(&run.params, &run.schedule, &run.solver).unwrap()
}

#[test]
fn threshold_events_land_on_the_threshold() {
    for scheme in ["instantaneous", "linear", "sinusoidal"] {
        let traj = threshold_run(scheme, 6);
        let Termination::Threshold(n_thr) = traj.manifest.schedule.termination else { unreachable!() };
        let mut crossings = 0;
        // A window phase that hands over to the ascent or the next delay was
        // cut by the threshold; elapsed descents hand over to Low instead.
        for pair in traj.phase_log.windows(2) {
            let (prev, e) = (pair[0], pair[1]);
            let cut = matches!(prev.phase, Phase::Descending | Phase::Low)
                && matches!(e.phase, Phase::Ascending | Phase::Delay);
            if cut {
                let n = traj.samples[e.sample_index].state.n_ph;
                assert!(rel(n, n_thr) < 1e-6, "{scheme}: n = {n:e} at t = {:e}", e.t);
                crossings += 1;
            }
        }
        assert_eq!(crossings, 6, "{scheme}");
        for w in traj.samples.windows(2) {
            assert!(w[1].t >= w[0].t, "{scheme}: time went backwards");
        }
    }
}

#[test]
fn runs_are_deterministic() {
    let a = threshold_run("sinusoidal", 3);
    let b = threshold_run("sinusoidal", 3);
    assert_eq!(a, b);
}

#[test]
fn phase_log_points_at_samples() {
    let traj = threshold_run("linear", 3);
    for e in &traj.phase_log {
        let s = traj.samples[e.sample_index];
        assert_eq!(s.t, e.t);
        assert_eq!(s.kappa, e.kappa);
    }
}

#[test]
fn work_efficiency_survives_csv_round_trip() {
    let traj = threshold_run("instantaneous", 4);
    let mut csv = Vec::new();
    traj.write_csv(&mut csv).unwrap();
    let mut log = Vec::new();
    traj.write_phase_log(&mut log).unwrap();
    let samples = Trajectory::read_csv(csv.as_slice(), traj.manifest.params.kappa_0).unwrap();
    let entries = Trajectory::read_phase_log(log.as_slice()).unwrap();
    assert_eq!(samples.len(), traj.samples.len());
    assert_eq!(entries, traj.phase_log);
    let before = pulse_metrics(&traj).unwrap();
    let after = metrics_from_parts(&samples, &entries, &traj.manifest.params).unwrap();
    assert_eq!(before.len(), after.len());
    for (a, b) in before.iter().zip(&after) {
        assert!(rel(a.eta_work, b.eta_work) < 1e-12, "{} vs {}", a.eta_work, b.eta_work);
        assert_eq!(a.n_ph_max, b.n_ph_max);
        assert_eq!(a.fwhm_nph_s, b.fwhm_nph_s);
    }
}

#[test]
fn lossless_exchange_has_unit_work_efficiency() {
    // Coupling only: no cavity loss, no pump, no relaxation. Every photon
    // created removes one spin quantum, so η_work = 1.
    let mut q = default_run(&[]).params;
    q.xi = 0.0;
    q.k_sp = 0.0;
    for r in [&mut q.k_23, &mut q.k_24, &mut q.k_25, &mut q.k_31, &mut q.k_41, &mut q.k_51] {
        *r = 0.0;
    }
    for r in [&mut q.k_34, &mut q.k_43, &mut q.k_35, &mut q.k_53, &mut q.k_45, &mut q.k_54] {
        *r = 0.0;
    }
    q.chi_34 = 0.0;
    q.chi_35 = 0.0;
    q.chi_45 = 0.0;
    q.kappa_0 = 0.0;
    let mut start = MeanFieldState::ground();
    start.p = [0.0, 0.0, 0.0, 0.0, 1.0];
    let horizon = 2e-6;
    let out = integrate_segment(
        |_, y: &StateVector| rhs(y, 0.0, &q),
        0.0,
        start.to_vector(),
        horizon,
        1e-12,
        &tight_control(),
        &Sampling { grid_dt: 1e-10, record_steps: true },
        None,
        &no_guard,
    )
    .unwrap();
    let mut samples = vec![Sample::new(0.0, 0.0, &start.to_vector(), &q).unwrap()];
    for (t, y) in &out.samples {
        samples.push(Sample::new(*t, 0.0, y, &q).unwrap());
    }
    let peak = samples.iter().map(|s| s.state.n_ph).fold(0.0, f64::max);
    assert!(peak > 1e15, "exchange barely started: peak {peak:e}");
    let eta = work_extraction_efficiency(&samples, &q);
    assert!(!eta.battery_gained);
    assert!((eta.value - 1.0).abs() < 1e-6, "eta_work = {}", eta.value);
}

#[test]
fn manifest_config_reproduces_run() {
    let cfg = default_config(&["schedule.n_cycles=2"]);
    let run = cfg.resolve().unwrap();
    let a = run_simulation(&run.params, &run.schedule, &run.solver).unwrap();
    let again = qbmaser::config::RunConfig::from_value(cfg.to_value()).unwrap().resolve().unwrap();
    let b = run_simulation(&again.params, &again.schedule, &again.solver).unwrap();
    assert_eq!(a, b);
}
